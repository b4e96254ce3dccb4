import init, { ToyDemo, superpixels, segmentEdges, maskPrompts } from "./pkg/ctxseg_wasm.js";

const $ = (id) => document.getElementById(id);
let demo;
let paintMask;
let clicks = { positive: [], negative: [] };

function draw(canvas, side, pixel) {
  canvas.width = side;
  canvas.height = side;
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(side, side);
  for (let i = 0; i < side * side; i++) {
    const [r, g, b] = pixel(i);
    img.data.set([r, g, b, 255], 4 * i);
  }
  ctx.putImageData(img, 0, 0);
  return ctx;
}

const gray = (v) => Math.round(255 * v);

function lambdaValue() {
  return Math.round(Math.exp(Math.log(2000) * $("lambda").value / 100));
}

function renderSuperpixels() {
  const side = demo.resolution;
  const image = demo.image(0);
  const lambda = lambdaValue();
  const labels = superpixels(image, side, side, lambda);
  const edges = segmentEdges(labels, side, side);
  $("lambda-out").value = lambda;
  $("sp-count").value = `${Math.max(...labels)} segments`;
  draw($("sp"), side, (i) => (edges[i] ? [230, 40, 40] : [gray(image[i]), gray(image[i]), gray(image[i])]));
}

function renderPaint(prompts) {
  const side = demo.resolution;
  const ctx = draw($("paint"), side, (i) => {
    if (prompts && prompts.positiveScribble[i]) return [40, 200, 60];
    if (prompts && prompts.negativeScribble[i]) return [220, 50, 50];
    return paintMask[i] ? [120, 160, 255] : [20, 20, 20];
  });
  if (prompts) {
    const [r0, c0, r1, c1] = prompts.boundingBox;
    ctx.strokeStyle = "#ffd400";
    ctx.lineWidth = 0.5;
    ctx.strokeRect(c0 + 0.25, r0 + 0.25, c1 - c0 + 0.5, r1 - r0 + 0.5);
    ctx.fillStyle = "#fff";
    ctx.fillRect(prompts.clickCol, prompts.clickRow, 1, 1);
    $("prompt-info").value = `click (${prompts.clickRow}, ${prompts.clickCol}), box [${r0}, ${c0}, ${r1}, ${c1}]`;
  }
}

function paintAt(event) {
  const side = demo.resolution;
  const rect = $("paint").getBoundingClientRect();
  const col = Math.floor(((event.clientX - rect.left) / rect.width) * side);
  const row = Math.floor(((event.clientY - rect.top) / rect.height) * side);
  for (let dr = -2; dr <= 2; dr++) {
    for (let dc = -2; dc <= 2; dc++) {
      const r = row + dr, c = col + dc;
      if (r >= 0 && c >= 0 && r < side && c < side && dr * dr + dc * dc <= 5) {
        paintMask[r * side + c] = event.shiftKey ? 0 : 1;
      }
    }
  }
  renderPaint();
}

function renderThumbs() {
  const side = demo.resolution;
  const n = Number($("ctx").value);
  $("ctx-out").value = n;
  const box = $("thumbs");
  box.replaceChildren();
  for (let k = 1; k <= n; k++) {
    const image = demo.image(k);
    const label = demo.label(k);
    const c = document.createElement("canvas");
    draw(c, side, (i) => (label[i] ? [gray(image[i]), gray(image[i]) / 2 + 100, 255] : [gray(image[i]), gray(image[i]), gray(image[i])]));
    box.appendChild(c);
  }
}

function renderTarget() {
  const side = demo.resolution;
  const image = demo.image(0);
  let probs = null;
  $("dice").value = "";
  if (demo.hasModel) {
    try {
      probs = demo.predict(Number($("ctx").value), Uint32Array.from(clicks.positive.flat()), Uint32Array.from(clicks.negative.flat()));
      $("dice").value = `Dice ${demo.dice(probs).toFixed(3)}`;
    } catch (e) {
      $("status").textContent = e.message ?? String(e);
    }
  }
  const ctx = draw($("target"), side, (i) => {
    const g = gray(image[i]);
    return probs && probs[i] >= 0.5 ? [g / 2, g / 2 + 110, g / 2] : [g, g, g];
  });
  for (const [sign, color] of [["positive", "#3c3"], ["negative", "#e33"]]) {
    ctx.fillStyle = color;
    for (const [r, c] of clicks[sign]) ctx.fillRect(c, r, 1, 1);
  }
}

function refresh() {
  paintMask = new Uint8Array(demo.resolution * demo.resolution);
  clicks = { positive: [], negative: [] };
  $("prompt-info").value = "";
  renderSuperpixels();
  renderPaint();
  renderThumbs();
  renderTarget();
}

async function main() {
  await init();
  demo = new ToyDemo(Number($("seed").value), 64);
  refresh();
  $("reseed").onclick = () => {
    $("seed").value = Number($("seed").value) + 1;
    demo.setFamily(Number($("seed").value));
    refresh();
  };
  $("seed").onchange = () => { demo.setFamily(Number($("seed").value)); refresh(); };
  $("lambda").oninput = renderSuperpixels;
  $("derive").onclick = () => {
    try {
      $("status").textContent = "";
      renderPaint(maskPrompts(paintMask, demo.resolution, demo.resolution));
    } catch (e) {
      $("status").textContent = e.message ?? String(e);
    }
  };
  $("clear").onclick = () => { paintMask.fill(0); $("prompt-info").value = ""; renderPaint(); };
  $("paint").onmousedown = (e) => { paintAt(e); $("paint").onmousemove = paintAt; };
  window.onmouseup = () => { $("paint").onmousemove = null; };
  $("ctx").oninput = () => { renderThumbs(); renderTarget(); };
  $("reset-clicks").onclick = () => { clicks = { positive: [], negative: [] }; renderTarget(); };
  $("target").onclick = (e) => {
    const side = demo.resolution;
    const rect = $("target").getBoundingClientRect();
    const col = Math.floor(((e.clientX - rect.left) / rect.width) * side);
    const row = Math.floor(((e.clientY - rect.top) / rect.height) * side);
    clicks[e.shiftKey ? "negative" : "positive"].push([row, col]);
    renderTarget();
  };
  $("ckpt").onchange = async () => {
    const file = $("ckpt").files[0];
    if (!file) return;
    try {
      demo.loadCheckpoint(new Uint8Array(await file.arrayBuffer()));
      $("status").textContent = "";
      refresh();
    } catch (e) {
      $("status").textContent = e.message ?? String(e);
    }
  };
}

main();
