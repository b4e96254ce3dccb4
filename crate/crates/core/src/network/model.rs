//! CrossBlock encoder-decoder.
//!
//! The target stream `q` (image, prompts, previous prediction) and the
//! context stream `V` (one `[image, label]` stack per context entry) are
//! processed together by CrossBlocks at every scale:
//!
//! ```text
//! z_i = LN(A(Conv(q; θ_z1) + Conv(v_i; θ_z2)))
//! q'  = LN(A(Conv(mean_i z_i; θ_q)))
//! v'_i = LN(A(Conv(z_i; θ_v)))
//! ```
//!
//! The context features only ever interact with the target through the mean
//! over entries, so predictions do not depend on the order of the context.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::ops::{
    act_norm_backward, act_norm_forward, add_assign, concat_channels, conv_backward, conv_forward, cross_conv_partitioned, resize_backward,
    resize_forward, split_channels, Maps, NormCache,
};
use super::scalar::Scalar;
use crate::error::{ensure_shape, Error, Result};
use crate::types::{ContextSet, SegMask, TargetStack, CONTEXT_CHANNELS, TARGET_CHANNELS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub resolution: usize,
    pub features: usize,
    pub encoder_stages: usize,
    pub decoder_stages: usize,
    pub kernel_size: usize,
    pub leaky_slope: f64,
    pub skip_connections: bool,
    pub dummy_context_value: f32,
    pub norm_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::full_scale()
    }
}

impl ModelConfig {
    /// 5 encoder and 4 decoder stages of 256 features at 128x128.
    pub fn full_scale() -> Self {
        Self {
            resolution: 128,
            features: 256,
            encoder_stages: 5,
            decoder_stages: 4,
            kernel_size: 3,
            leaky_slope: 0.01,
            skip_connections: true,
            dummy_context_value: 0.5,
            norm_eps: 1e-5,
        }
    }

    /// Desk-scale model for 64x64 inputs.
    pub fn desk() -> Self {
        Self {
            resolution: 64,
            features: 16,
            encoder_stages: 4,
            decoder_stages: 3,
            ..Self::full_scale()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.features == 0 {
            return Err(Error::Config("features must be positive".into()));
        }
        if self.encoder_stages == 0 || self.decoder_stages + 1 != self.encoder_stages {
            return Err(Error::Config(format!(
                "decoder_stages ({}) must equal encoder_stages ({}) - 1",
                self.decoder_stages, self.encoder_stages
            )));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::Config("kernel_size must be odd".into()));
        }
        let factor = 1usize << (self.encoder_stages - 1);
        if self.resolution == 0 || !self.resolution.is_multiple_of(factor) {
            return Err(Error::Config(format!(
                "resolution {} not divisible by {factor}",
                self.resolution
            )));
        }
        if !(0.0..=1.0).contains(&self.dummy_context_value) {
            return Err(Error::Config("dummy_context_value must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Name, shape and position of one parameter tensor in the flat vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Clone, Debug)]
struct NormLayout {
    gamma: Range<usize>,
    beta: Range<usize>,
}

#[derive(Clone, Debug)]
struct BlockLayout {
    in_q: usize,
    in_v: usize,
    z_target_w: Range<usize>,
    z_bias: Range<usize>,
    z_context_w: Range<usize>,
    z_norm: NormLayout,
    q_w: Range<usize>,
    q_b: Range<usize>,
    q_norm: NormLayout,
    /// Absent for the final block, whose context output is never read.
    v: Option<(Range<usize>, Range<usize>, NormLayout)>,
}

struct LayoutBuilder {
    specs: Vec<ParamSpec>,
    offset: usize,
}

impl LayoutBuilder {
    fn add(&mut self, name: String, shape: Vec<usize>) -> Range<usize> {
        let spec = ParamSpec {
            name,
            shape,
            offset: self.offset,
        };
        self.offset += spec.len();
        let r = spec.range();
        self.specs.push(spec);
        r
    }

    fn norm(&mut self, prefix: &str, c: usize) -> NormLayout {
        NormLayout {
            gamma: self.add(format!("{prefix}.gamma"), vec![c]),
            beta: self.add(format!("{prefix}.beta"), vec![c]),
        }
    }

    fn block(&mut self, name: &str, in_q: usize, in_v: usize, c: usize, k: usize, has_v: bool) -> BlockLayout {
        let z_target_w = self.add(format!("{name}.cross.target_weight"), vec![c, in_q, k, k]);
        let z_bias = self.add(format!("{name}.cross.bias"), vec![c]);
        let z_context_w = self.add(format!("{name}.cross.context_weight"), vec![c, in_v, k, k]);
        let z_norm = self.norm(&format!("{name}.cross.norm"), c);
        let q_w = self.add(format!("{name}.target.weight"), vec![c, c, k, k]);
        let q_b = self.add(format!("{name}.target.bias"), vec![c]);
        let q_norm = self.norm(&format!("{name}.target.norm"), c);
        let v = has_v.then(|| {
            let w = self.add(format!("{name}.context.weight"), vec![c, c, k, k]);
            let b = self.add(format!("{name}.context.bias"), vec![c]);
            let n = self.norm(&format!("{name}.context.norm"), c);
            (w, b, n)
        });
        BlockLayout {
            in_q,
            in_v,
            z_target_w,
            z_bias,
            z_context_w,
            z_norm,
            q_w,
            q_b,
            q_norm,
            v,
        }
    }
}

/// Static structure of the network for one [`ModelConfig`].
#[derive(Clone, Debug)]
pub struct Network {
    config: ModelConfig,
    specs: Vec<ParamSpec>,
    encoder: Vec<BlockLayout>,
    decoder: Vec<BlockLayout>,
    out_w: Range<usize>,
    out_b: Range<usize>,
    num_params: usize,
}

pub fn count_params(config: &ModelConfig) -> Result<usize> {
    Ok(Network::new(config)?.num_params())
}

impl Network {
    pub fn new(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = config.features;
        let k = config.kernel_size;
        let (e, d) = (config.encoder_stages, config.decoder_stages);
        let mut b = LayoutBuilder {
            specs: Vec::new(),
            offset: 0,
        };
        let mut encoder = Vec::with_capacity(e);
        for s in 0..e {
            let (iq, iv) = if s == 0 { (TARGET_CHANNELS, CONTEXT_CHANNELS) } else { (c, c) };
            let last = d == 0 && s == e - 1;
            encoder.push(b.block(&format!("encoder.{s}"), iq, iv, c, k, !last));
        }
        let skip = if config.skip_connections { c } else { 0 };
        let mut decoder = Vec::with_capacity(d);
        for s in 0..d {
            decoder.push(b.block(&format!("decoder.{s}"), c + skip, c + skip, c, k, s + 1 != d));
        }
        let out_w = b.add("head.weight".into(), vec![1, c, 1, 1]);
        let out_b = b.add("head.bias".into(), vec![1]);
        Ok(Self {
            config: config.clone(),
            num_params: b.offset,
            specs: b.specs,
            encoder,
            decoder,
            out_w,
            out_b,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    /// He-normal convolution weights, zero biases, unit norm scales.
    pub fn init_params<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let mut values = vec![T::zero(); self.num_params];
        for spec in &self.specs {
            let r = spec.range();
            if spec.name.ends_with("gamma") {
                values[r].fill(T::one());
            } else if spec.shape.len() == 4 {
                let fan_in = if spec.name.contains(".cross.") {
                    // Both halves of the cross convolution feed one output.
                    let blk = self.block_for(&spec.name);
                    (blk.in_q + blk.in_v) * self.config.kernel_size * self.config.kernel_size
                } else {
                    spec.shape[1] * spec.shape[2] * spec.shape[3]
                };
                let std = (2.0 / fan_in as f64).sqrt();
                let normal = Normal::new(0.0, std).expect("valid std");
                for v in &mut values[r] {
                    *v = T::lit(normal.sample(rng));
                }
            }
        }
        values
    }

    fn block_for(&self, name: &str) -> &BlockLayout {
        let mut parts = name.split('.');
        let stream = parts.next().unwrap_or_default();
        let idx: usize = parts.next().and_then(|s| s.parse().ok()).unwrap_or(0);
        if stream == "encoder" {
            &self.encoder[idx]
        } else {
            &self.decoder[idx]
        }
    }

    fn slope<T: Scalar>(&self) -> T {
        T::lit(self.config.leaky_slope)
    }

    fn block_forward<T: Scalar>(&self, p: &[T], b: &BlockLayout, q: Maps<T>, v: Maps<T>) -> (Maps<T>, Option<Maps<T>>, BlockCache<T>) {
        let c = self.config.features;
        let k = self.config.kernel_size;
        let slope = self.slope::<T>();
        let eps = T::lit(self.config.norm_eps);
        let pre_z = cross_conv_partitioned(
            &q,
            &v,
            &p[b.z_target_w.clone()],
            &p[b.z_context_w.clone()],
            &p[b.z_bias.clone()],
            c,
            k,
        );
        let (z, z_norm) = act_norm_forward(&pre_z, slope, &p[b.z_norm.gamma.clone()], &p[b.z_norm.beta.clone()], eps);
        // Summing in f64 is exact for single-precision inputs at practical
        // context sizes, so the mean does not depend on entry order.
        let mut acc = vec![0.0f64; z.entry_len()];
        for e in 0..z.n {
            for (dst, s) in acc.iter_mut().zip(z.entry(e)) {
                *dst += s.as_f64();
            }
        }
        let inv_n = 1.0 / z.n as f64;
        let zbar = Maps::from_vec(1, c, z.h, z.w, acc.into_iter().map(|s| T::lit(s * inv_n)).collect());
        let pre_q = conv_forward(&zbar, &p[b.q_w.clone()], Some(&p[b.q_b.clone()]), c, k);
        let (q_out, q_norm) = act_norm_forward(&pre_q, slope, &p[b.q_norm.gamma.clone()], &p[b.q_norm.beta.clone()], eps);
        let (v_out, v_cache) = match &b.v {
            Some((w, bias, norm)) => {
                let pre_v = conv_forward(&z, &p[w.clone()], Some(&p[bias.clone()]), c, k);
                let (out, cache) = act_norm_forward(&pre_v, slope, &p[norm.gamma.clone()], &p[norm.beta.clone()], eps);
                (Some(out), Some((pre_v, cache)))
            }
            None => (None, None),
        };
        let cache = BlockCache {
            q_in: q,
            v_in: v,
            pre_z,
            z_norm,
            z,
            zbar,
            pre_q,
            q_norm,
            v: v_cache,
        };
        (q_out, v_out, cache)
    }

    #[allow(clippy::too_many_arguments)]
    fn block_backward<T: Scalar>(
        &self,
        p: &[T],
        grads: &mut [T],
        b: &BlockLayout,
        cache: &BlockCache<T>,
        dq_out: &Maps<T>,
        dv_out: Option<&Maps<T>>,
        need_input_grads: bool,
    ) -> (Option<Maps<T>>, Option<Maps<T>>) {
        let k = self.config.kernel_size;
        let slope = self.slope::<T>();
        let (dgamma, dbeta) = pair_mut(grads, &b.q_norm.gamma, &b.q_norm.beta);
        let dpre_q = act_norm_backward(&cache.pre_q, &cache.q_norm, dq_out, slope, &p[b.q_norm.gamma.clone()], dgamma, dbeta);
        let (dw, db) = pair_mut(grads, &b.q_w, &b.q_b);
        let dzbar = conv_backward(&cache.zbar, &p[b.q_w.clone()], &dpre_q, k, dw, Some(db), true).expect("input grad");
        let n = cache.z.n;
        let inv_n = T::one() / T::from_usize(n).unwrap();
        let mut dz = Maps::zeros(n, cache.z.c, cache.z.h, cache.z.w);
        for e in 0..n {
            for (d, s) in dz.entry_mut(e).iter_mut().zip(&dzbar.data) {
                *d = *s * inv_n;
            }
        }
        if let (Some((w, bias, norm)), Some((pre_v, v_norm)), Some(dv)) = (&b.v, &cache.v, dv_out) {
            let (dgamma, dbeta) = pair_mut(grads, &norm.gamma, &norm.beta);
            let dpre_v = act_norm_backward(pre_v, v_norm, dv, slope, &p[norm.gamma.clone()], dgamma, dbeta);
            let (dw, db) = pair_mut(grads, w, bias);
            let dz_v = conv_backward(&cache.z, &p[w.clone()], &dpre_v, k, dw, Some(db), true).expect("input grad");
            add_assign(&mut dz, &dz_v);
        }
        let (dgamma, dbeta) = pair_mut(grads, &b.z_norm.gamma, &b.z_norm.beta);
        let dpre_z = act_norm_backward(&cache.pre_z, &cache.z_norm, &dz, slope, &p[b.z_norm.gamma.clone()], dgamma, dbeta);
        let mut dzq = Maps::zeros(1, dpre_z.c, dpre_z.h, dpre_z.w);
        for e in 0..n {
            for (d, s) in dzq.data.iter_mut().zip(dpre_z.entry(e)) {
                *d += *s;
            }
        }
        let (dw, db) = pair_mut(grads, &b.z_target_w, &b.z_bias);
        let dq_in = conv_backward(&cache.q_in, &p[b.z_target_w.clone()], &dzq, k, dw, Some(db), need_input_grads);
        let dv_in = conv_backward(
            &cache.v_in,
            &p[b.z_context_w.clone()],
            &dpre_z,
            k,
            &mut grads[b.z_context_w.clone()],
            None,
            need_input_grads,
        );
        (dq_in, dv_in)
    }

    /// Runs the network on raw input stacks and records what the backward
    /// pass needs. `target` is `1×5×H×W`, `context` is `n×2×H×W` with `n ≥ 1`.
    pub fn forward_maps<T: Scalar>(&self, params: &[T], target: Maps<T>, context: Maps<T>) -> (Vec<T>, Tape<T>) {
        assert_eq!(params.len(), self.num_params, "parameter count");
        assert!(context.n >= 1, "the context stream needs at least one entry");
        let mut q = target;
        let mut v = context;
        let mut enc = Vec::with_capacity(self.encoder.len());
        let mut skips: Vec<(Maps<T>, Maps<T>)> = Vec::new();
        let mut level_sizes = Vec::new();
        for (s, block) in self.encoder.iter().enumerate() {
            if s > 0 {
                let (h, w) = (q.h / 2, q.w / 2);
                q = resize_forward(&q, h, w);
                v = resize_forward(&v, h, w);
            }
            level_sizes.push((q.h, q.w));
            let (qo, vo, cache) = self.block_forward(params, block, q, v);
            enc.push(cache);
            q = qo;
            v = vo.unwrap_or_else(|| Maps::zeros(0, 0, 0, 0));
            if s + 1 < self.encoder.len() && self.config.skip_connections {
                skips.push((q.clone(), v.clone()));
            }
        }
        let mut dec = Vec::with_capacity(self.decoder.len());
        for (d, block) in self.decoder.iter().enumerate() {
            let level = self.encoder.len() - 2 - d;
            let (h, w) = level_sizes[level];
            q = resize_forward(&q, h, w);
            v = resize_forward(&v, h, w);
            if let Some((sq, sv)) = skips.pop() {
                q = concat_channels(&q, &sq);
                v = concat_channels(&v, &sv);
            }
            let (qo, vo, cache) = self.block_forward(params, block, q, v);
            dec.push(cache);
            q = qo;
            v = vo.unwrap_or_else(|| Maps::zeros(0, 0, 0, 0));
        }
        let logits = conv_forward(&q, &params[self.out_w.clone()], Some(&params[self.out_b.clone()]), 1, 1);
        let tape = Tape {
            enc,
            dec,
            level_sizes,
            head_input: q,
        };
        (logits.data, tape)
    }

    /// Accumulates `d loss / d params` into `grads` given `d loss / d logits`.
    pub fn backward<T: Scalar>(&self, params: &[T], tape: &Tape<T>, dlogits: &[T], grads: &mut [T]) {
        assert_eq!(grads.len(), self.num_params, "gradient buffer size");
        let head = &tape.head_input;
        let dl = Maps::from_vec(1, 1, head.h, head.w, dlogits.to_vec());
        let (dw, db) = pair_mut(grads, &self.out_w, &self.out_b);
        let mut dq = conv_backward(head, &params[self.out_w.clone()], &dl, 1, dw, Some(db), true).expect("input grad");
        let mut dv: Option<Maps<T>> = None;
        let c = self.config.features;
        let mut skip_grads: Vec<Option<(Maps<T>, Maps<T>)>> = vec![None; self.encoder.len()];
        for d in (0..self.decoder.len()).rev() {
            let level = self.encoder.len() - 2 - d;
            let (dq_in, dv_in) =
                self.block_backward(params, grads, &self.decoder[d], &tape.dec[d], &dq, dv.as_ref(), true);
            let (mut dq_up, mut dv_up) = (dq_in.expect("input grad"), dv_in.expect("input grad"));
            if self.config.skip_connections {
                let (a, sq) = split_channels(&dq_up, c);
                let (b, sv) = split_channels(&dv_up, c);
                skip_grads[level] = Some((sq, sv));
                dq_up = a;
                dv_up = b;
            }
            let (h, w) = tape.level_sizes[level + 1];
            dq = resize_backward(&dq_up, h, w);
            dv = Some(resize_backward(&dv_up, h, w));
        }
        for s in (0..self.encoder.len()).rev() {
            if let Some((sq, sv)) = skip_grads[s].take() {
                add_assign(&mut dq, &sq);
                match dv.as_mut() {
                    Some(d) => add_assign(d, &sv),
                    None => dv = Some(sv),
                }
            }
            let need = s > 0;
            let (dq_in, dv_in) = self.block_backward(params, grads, &self.encoder[s], &tape.enc[s], &dq, dv.as_ref(), need);
            if need {
                let (h, w) = tape.level_sizes[s - 1];
                dq = resize_backward(&dq_in.expect("input grad"), h, w);
                dv = Some(resize_backward(&dv_in.expect("input grad"), h, w));
            }
        }
    }

    /// Target stack as a `1×5×H×W` map stack.
    pub fn target_maps<T: Scalar>(&self, target: &TargetStack) -> Result<Maps<T>> {
        let (h, w) = target.shape();
        self.check_resolution((h, w))?;
        Ok(Maps::from_vec(1, TARGET_CHANNELS, h, w, target.data().iter().map(|&v| T::lit(v as f64)).collect()))
    }

    /// Context entries as `n×2×H×W`; an empty context becomes one dummy
    /// entry filled with `dummy_context_value`.
    pub fn context_maps<T: Scalar>(&self, context: &ContextSet) -> Result<Maps<T>> {
        let r = self.config.resolution;
        if context.is_empty() {
            let fill = T::lit(self.config.dummy_context_value as f64);
            return Ok(Maps::from_vec(1, CONTEXT_CHANNELS, r, r, vec![fill; CONTEXT_CHANNELS * r * r]));
        }
        let shape = context.shape().expect("nonempty");
        self.check_resolution(shape)?;
        let mut data = Vec::with_capacity(context.len() * CONTEXT_CHANNELS * r * r);
        for (x, y) in context.iter() {
            data.extend(x.pixels().iter().map(|&v| T::lit(v as f64)));
            data.extend(y.pixels().iter().map(|&v| T::lit(v as f64)));
        }
        Ok(Maps::from_vec(context.len(), CONTEXT_CHANNELS, r, r, data))
    }

    fn check_resolution(&self, shape: (usize, usize)) -> Result<()> {
        let r = self.config.resolution;
        ensure_shape((r, r), shape)
    }

    /// Inference in single precision.
    pub fn predict(&self, params: &[f32], target: &TargetStack, context: &ContextSet) -> Result<Prediction> {
        if params.len() != self.num_params {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                self.num_params,
                params.len()
            )));
        }
        let t = self.target_maps::<f32>(target)?;
        let c = self.context_maps::<f32>(context)?;
        let (logits, _) = self.forward_maps(params, t, c);
        Ok(Prediction::from_logits(self.config.resolution, logits))
    }
}

fn pair_mut<'a, T>(buf: &'a mut [T], a: &Range<usize>, b: &Range<usize>) -> (&'a mut [T], &'a mut [T]) {
    assert!(a.end <= b.start || b.end <= a.start, "ranges overlap");
    if a.start < b.start {
        let (lo, hi) = buf.split_at_mut(b.start);
        (&mut lo[a.clone()], &mut hi[..b.len()])
    } else {
        let (lo, hi) = buf.split_at_mut(a.start);
        (&mut hi[..a.len()], &mut lo[b.clone()])
    }
}

#[derive(Clone, Debug)]
struct BlockCache<T> {
    q_in: Maps<T>,
    v_in: Maps<T>,
    pre_z: Maps<T>,
    z_norm: NormCache<T>,
    z: Maps<T>,
    zbar: Maps<T>,
    pre_q: Maps<T>,
    q_norm: NormCache<T>,
    v: Option<(Maps<T>, NormCache<T>)>,
}

/// Activations recorded by [`Network::forward_maps`].
#[derive(Clone, Debug)]
pub struct Tape<T> {
    enc: Vec<BlockCache<T>>,
    dec: Vec<BlockCache<T>>,
    level_sizes: Vec<(usize, usize)>,
    head_input: Maps<T>,
}

/// Logit map and its sigmoid.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub logits: Vec<f32>,
    pub probs: SegMask,
}

impl Prediction {
    pub fn from_logits(resolution: usize, logits: Vec<f32>) -> Self {
        let probs = logits.iter().map(|&l| sigmoid(l as f64) as f32).collect();
        Self {
            probs: SegMask::soft(resolution, resolution, probs).expect("sigmoid lies in [0, 1]"),
            logits,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Learned weights together with the configuration they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub values: Vec<f32>,
}

impl ModelParams {
    pub fn init<R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Result<Self> {
        let net = Network::new(config)?;
        Ok(Self {
            config: config.clone(),
            values: net.init_params(rng),
        })
    }

    pub fn network(&self) -> Result<Network> {
        Network::new(&self.config)
    }
}

/// Soft segmentation of `target` given the context set.
pub fn forward(params: &ModelParams, target: &TargetStack, context: &ContextSet) -> Result<Prediction> {
    params.network()?.predict(&params.values, target, context)
}

/// A network together with its weights, ready for inference.
#[derive(Clone, Debug)]
pub struct Model {
    network: Network,
    params: ModelParams,
}

impl Model {
    pub fn new(params: ModelParams) -> Result<Self> {
        let network = params.network()?;
        if params.values.len() != network.num_params() {
            return Err(Error::Config(format!(
                "expected {} parameters, got {}",
                network.num_params(),
                params.values.len()
            )));
        }
        Ok(Self { network, params })
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn config(&self) -> &ModelConfig {
        &self.params.config
    }

    pub fn predict(&self, target: &TargetStack, context: &ContextSet) -> Result<Prediction> {
        self.network.predict(&self.params.values, target, context)
    }
}
