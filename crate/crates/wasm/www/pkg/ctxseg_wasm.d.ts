/* tslint:disable */
/* eslint-disable */

/**
 * Prompts derived from a drawn mask: the centre click, the positive and
 * negative centerline scribbles and the bounding box.
 */
export class MaskPrompts {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * `[r0, c0, r1, c1]`, inclusive.
     */
    readonly boundingBox: Uint32Array;
    readonly clickCol: number;
    readonly clickRow: number;
    readonly negativeScribble: Uint8Array;
    readonly positiveScribble: Uint8Array;
}

/**
 * A toy task family plus an optional model, for in-context prediction.
 */
export class ToyDemo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Dice of the thresholded probabilities against the target's label.
     */
    dice(probs: Float32Array): number;
    image(index: number): Float32Array;
    label(index: number): Uint8Array;
    loadCheckpoint(bytes: Uint8Array): void;
    constructor(seed: number, resolution: number);
    predict(context_size: number, positive: Uint32Array, negative: Uint32Array): Float32Array;
    /**
     * Switches to another task family, keeping the loaded model.
     */
    setFamily(seed: number): void;
    readonly hasModel: boolean;
    readonly resolution: number;
}

export function maskPrompts(mask: Uint8Array, height: number, width: number): MaskPrompts;

export function segmentEdges(labels: Uint32Array, height: number, width: number): Uint8Array;

export function superpixels(pixels: Float32Array, height: number, width: number, lambda: number): Uint32Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_maskprompts_free: (a: number, b: number) => void;
    readonly __wbg_toydemo_free: (a: number, b: number) => void;
    readonly maskPrompts: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly maskprompts_boundingBox: (a: number) => [number, number];
    readonly maskprompts_clickCol: (a: number) => number;
    readonly maskprompts_clickRow: (a: number) => number;
    readonly maskprompts_negativeScribble: (a: number) => [number, number];
    readonly maskprompts_positiveScribble: (a: number) => [number, number];
    readonly segmentEdges: (a: number, b: number, c: number, d: number) => [number, number];
    readonly superpixels: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly toydemo_dice: (a: number, b: number, c: number) => [number, number, number];
    readonly toydemo_hasModel: (a: number) => number;
    readonly toydemo_image: (a: number, b: number) => [number, number];
    readonly toydemo_label: (a: number, b: number) => [number, number];
    readonly toydemo_loadCheckpoint: (a: number, b: number, c: number) => [number, number];
    readonly toydemo_new: (a: number, b: number) => number;
    readonly toydemo_predict: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly toydemo_resolution: (a: number) => number;
    readonly toydemo_setFamily: (a: number, b: number) => void;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
