//! The sequence-regression network.
//!
//! ```text
//! frames ─ patches ─ linear+pos ─ GELU ─ projection ─┐
//! prior box ───────────────────── linear ────────────┤
//! prior angle ─────────────────── linear ────────────┤
//!                       [CLS, F_1..F_N, B, A] + pos ─┴─ pre-LN encoder × L
//!                                  CLS ─ LayerNorm ─┬─ box head   → B̂
//!                                                   └─ angle head → Â
//! ```

use std::sync::Arc;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{FrameTokens, ModelConfig};
use super::ops::{
    attention, attention_backward, gelu, gelu_backward, layer_norm, layer_norm_backward, linear, linear_backward,
    linear_backward_params, NormCache,
};
use super::params::{view1, view1_mut, view2, view2_mut, GroupKind, Layout, LinearIdx, ParamGroup};
use super::{ModelError, Regression};
use crate::imaging::GrayFrame;

/// One model-ready window: `N` preprocessed frames plus the prior state in
/// normalised units.
#[derive(Debug, Clone)]
pub struct ModelInput {
    pub images: Vec<Arc<Array2<f64>>>,
    pub prior_box: [f64; 4],
    pub prior_angle: Vec<f64>,
}

/// Area-resamples a frame to `size × size` model input.
pub fn prepare_frame(frame: &GrayFrame, size: usize) -> Arc<Array2<f64>> {
    let r = frame.resize(size, size);
    Arc::new(Array2::from_shape_vec((size, size), r.data.iter().map(|&v| v as f64).collect()).expect("square frame"))
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    layout: Layout,
    params: Vec<f64>,
}

struct FrameCache {
    patches: Array2<f64>,
    pre: Array2<f64>,
    act: Array2<f64>,
}

struct BlockCache {
    ln1: NormCache,
    y1: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Vec<Array2<f64>>,
    heads_out: Array2<f64>,
    ln2: NormCache,
    y2: Array2<f64>,
    h_pre: Array2<f64>,
    h: Array2<f64>,
}

struct HeadCache {
    inputs: Vec<Array2<f64>>,
    pres: Vec<Array2<f64>>,
}

struct ForwardCache {
    frames: Vec<FrameCache>,
    prior_box: Array2<f64>,
    prior_angle: Array2<f64>,
    dropout: Option<Array2<f64>>,
    blocks: Vec<BlockCache>,
    final_norm: NormCache,
    box_head: HeadCache,
    angle_head: HeadCache,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let params = layout.init(&config, &mut rng);
        Ok(Self { config, layout, params })
    }

    /// Rebuilds a model from stored parameters.
    pub fn from_parts(config: ModelConfig, params: Vec<f64>) -> Result<Self, ModelError> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.len {
            return Err(ModelError::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                layout.len,
                params.len()
            )));
        }
        Ok(Self { config, layout, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_groups(&self) -> &[ParamGroup] {
        &self.layout.groups
    }

    pub fn n_params(&self) -> usize {
        self.layout.len
    }

    pub fn check_finite(&self) -> Result<(), ModelError> {
        if let Some(g) = self
            .layout
            .groups
            .iter()
            .find(|g| self.params[g.range()].iter().any(|v| !v.is_finite()))
        {
            return Err(ModelError::NonFiniteParameters(g.name.clone()));
        }
        Ok(())
    }

    /// Resizes a frame to the encoder's input size.
    pub fn preprocess(&self, frame: &GrayFrame) -> Arc<Array2<f64>> {
        prepare_frame(frame, self.config.encoder.input_size)
    }

    fn check_input(&self, input: &ModelInput) -> Result<(), ModelError> {
        let s = self.config.encoder.input_size;
        if input.images.len() != self.config.n_frames {
            return Err(ModelError::ShapeMismatch(format!(
                "expected {} frames, got {}",
                self.config.n_frames,
                input.images.len()
            )));
        }
        if let Some(img) = input.images.iter().find(|i| i.dim() != (s, s)) {
            return Err(ModelError::ShapeMismatch(format!(
                "expected {s}×{s} frames, got {:?}",
                img.dim()
            )));
        }
        if input.prior_angle.len() != self.config.angle_dim() {
            return Err(ModelError::ShapeMismatch(format!(
                "expected {} prior angle values, got {}",
                self.config.angle_dim(),
                input.prior_angle.len()
            )));
        }
        Ok(())
    }

    fn patches(&self, image: &ArrayView2<f64>) -> Array2<f64> {
        let p = self.config.encoder.patch_size;
        let side = self.config.encoder.patches_per_side();
        let mut out = Array2::zeros((side * side, p * p));
        for py in 0..side {
            for px in 0..side {
                let block = image.slice(s![py * p..(py + 1) * p, px * p..(px + 1) * p]);
                let mut row = out.row_mut(py * side + px);
                for (dst, src) in row.iter_mut().zip(block.iter()) {
                    *dst = *src;
                }
            }
        }
        out
    }

    fn encode_frame(&self, image: &ArrayView2<f64>) -> (Array2<f64>, FrameCache) {
        let e = &self.config.encoder;
        let l = &self.layout;
        let patches = self.patches(image);
        let mut pre = linear(&self.params, &l.patch, &patches.view());
        pre += &view2(&self.params, l.patch_pos, e.n_patches(), e.patch_dim);
        let act = pre.mapv(gelu);
        let tokens = match self.config.frame_tokens {
            FrameTokens::Pooled => {
                let flat = act
                    .view()
                    .into_shape_with_order((1, e.n_patches() * e.patch_dim))
                    .expect("contiguous");
                linear(&self.params, &l.frame_proj, &flat)
            }
            FrameTokens::PerPatch => linear(&self.params, &l.frame_proj, &act.view()),
        };
        (tokens, FrameCache { patches, pre, act })
    }

    /// Feature tokens for `N` frames, `tokens_per_frame` rows each.
    pub fn encode_images(&self, images: &[ArrayView2<f64>]) -> Result<Array2<f64>, ModelError> {
        let s = self.config.encoder.input_size;
        if let Some(img) = images.iter().find(|i| i.dim() != (s, s)) {
            return Err(ModelError::ShapeMismatch(format!(
                "expected {s}×{s} frames, got {:?}",
                img.dim()
            )));
        }
        let tpf = self.config.tokens_per_frame();
        let mut out = Array2::zeros((images.len() * tpf, self.config.embed_dim()));
        for (i, img) in images.iter().enumerate() {
            let (tok, _) = self.encode_frame(img);
            out.slice_mut(s![i * tpf..(i + 1) * tpf, ..]).assign(&tok);
        }
        Ok(out)
    }

    /// The two prior-state tokens (box, angle).
    pub fn embed_prior(&self, prior_box: &[f64; 4], prior_angle: &[f64]) -> Array2<f64> {
        let (b, a) = self.prior_inputs(prior_box, prior_angle);
        let mut out = Array2::zeros((2, self.config.embed_dim()));
        out.row_mut(0)
            .assign(&linear(&self.params, &self.layout.prior_box, &b.view()).row(0));
        out.row_mut(1)
            .assign(&linear(&self.params, &self.layout.prior_angle, &a.view()).row(0));
        out
    }

    fn prior_inputs(&self, prior_box: &[f64; 4], prior_angle: &[f64]) -> (Array2<f64>, Array2<f64>) {
        (
            Array2::from_shape_vec((1, 4), prior_box.to_vec()).expect("4"),
            Array2::from_shape_vec((1, prior_angle.len()), prior_angle.to_vec()).expect("angle"),
        )
    }

    fn assemble(&self, frame_tokens: &[Array2<f64>], prior: &Array2<f64>) -> Array2<f64> {
        let c = &self.config;
        let (t, d) = (c.token_count(), c.embed_dim());
        let mut x = Array2::zeros((t, d));
        x.row_mut(0).assign(&view1(&self.params, self.layout.cls, d));
        let tpf = c.tokens_per_frame();
        for (i, tok) in frame_tokens.iter().enumerate() {
            x.slice_mut(s![1 + i * tpf..1 + (i + 1) * tpf, ..]).assign(tok);
        }
        x.slice_mut(s![t - 2.., ..]).assign(prior);
        let pos = view2(&self.params, self.layout.token_pos, t, d);
        let first = if c.pos_on_cls { 0 } else { 1 };
        let mut body = x.slice_mut(s![first.., ..]);
        body += &pos.slice(s![first.., ..]);
        x
    }

    /// Embedded token sequence `[CLS, F_I, B, A]` with positions added.
    pub fn embed_tokens(&self, input: &ModelInput) -> Result<Array2<f64>, ModelError> {
        self.check_input(input)?;
        let frames: Vec<Array2<f64>> = input.images.iter().map(|i| self.encode_frame(&i.view()).0).collect();
        let prior = self.embed_prior(&input.prior_box, &input.prior_angle);
        Ok(self.assemble(&frames, &prior))
    }

    fn block_forward(&self, b: usize, x: Array2<f64>) -> (Array2<f64>, BlockCache) {
        let idx = &self.layout.blocks[b];
        let p = &self.params;
        let (y1, ln1) = layer_norm(p, &idx.ln1, &x.view());
        let q = linear(p, &idx.q, &y1.view());
        let k = linear(p, &idx.k, &y1.view());
        let v = linear(p, &idx.v, &y1.view());
        let (heads_out, attn) = attention(&q, &k, &v, self.config.n_heads);
        let x1 = &x + &linear(p, &idx.o, &heads_out.view());
        let (y2, ln2) = layer_norm(p, &idx.ln2, &x1.view());
        let h_pre = linear(p, &idx.fc1, &y2.view());
        let h = h_pre.mapv(gelu);
        let out = &x1 + &linear(p, &idx.fc2, &h.view());
        let cache = BlockCache {
            ln1,
            y1,
            q,
            k,
            v,
            attn,
            heads_out,
            ln2,
            y2,
            h_pre,
            h,
        };
        (out, cache)
    }

    fn block_backward(&self, b: usize, cache: &BlockCache, dout: Array2<f64>, g: &mut [f64]) -> Array2<f64> {
        let idx = &self.layout.blocks[b];
        let p = &self.params;
        let dh = linear_backward(p, g, &idx.fc2, &cache.h.view(), &dout.view());
        let dh_pre = gelu_backward(&cache.h_pre, &dh.view());
        let dy2 = linear_backward(p, g, &idx.fc1, &cache.y2.view(), &dh_pre.view());
        let dx1 = dout + layer_norm_backward(p, g, &idx.ln2, &cache.ln2, &dy2.view());
        let dheads = linear_backward(p, g, &idx.o, &cache.heads_out.view(), &dx1.view());
        let (dq, dk, dv) = attention_backward(&cache.q, &cache.k, &cache.v, &cache.attn, &dheads.view());
        let mut dy1 = linear_backward(p, g, &idx.q, &cache.y1.view(), &dq.view());
        dy1 += &linear_backward(p, g, &idx.k, &cache.y1.view(), &dk.view());
        dy1 += &linear_backward(p, g, &idx.v, &cache.y1.view(), &dv.view());
        dx1 + layer_norm_backward(p, g, &idx.ln1, &cache.ln1, &dy1.view())
    }

    /// Runs the encoder stack over an embedded token sequence and returns
    /// the normalised CLS output.
    pub fn encode_tokens(&self, tokens: &Array2<f64>) -> Array1<f64> {
        let mut x = tokens.clone();
        for b in 0..self.config.n_layers {
            x = self.block_forward(b, x).0;
        }
        let cls = x.slice(s![0..1, ..]);
        layer_norm(&self.params, &self.layout.final_norm, &cls)
            .0
            .row(0)
            .to_owned()
    }

    fn head_forward(&self, layers: &[LinearIdx], cls: &Array2<f64>) -> (Array1<f64>, HeadCache) {
        let mut cache = HeadCache {
            inputs: Vec::with_capacity(layers.len()),
            pres: Vec::with_capacity(layers.len()),
        };
        let mut x = cls.clone();
        for (i, l) in layers.iter().enumerate() {
            let pre = linear(&self.params, l, &x.view());
            cache.inputs.push(x);
            x = if i + 1 < layers.len() {
                pre.mapv(gelu)
            } else {
                pre.clone()
            };
            cache.pres.push(pre);
        }
        (x.row(0).to_owned(), cache)
    }

    fn head_backward(&self, layers: &[LinearIdx], cache: &HeadCache, dout: Array2<f64>, g: &mut [f64]) -> Array2<f64> {
        let mut d = dout;
        for i in (0..layers.len()).rev() {
            if i + 1 < layers.len() {
                d = gelu_backward(&cache.pres[i], &d.view());
            }
            d = linear_backward(&self.params, g, &layers[i], &cache.inputs[i].view(), &d.view());
        }
        d
    }

    /// Raw head outputs for a normalised CLS vector, without any residual
    /// prior.
    pub fn heads(&self, cls: &Array1<f64>) -> Regression {
        let cls = cls.view().insert_axis(Axis(0)).to_owned();
        let (b, _) = self.head_forward(&self.layout.box_head, &cls);
        let (a, _) = self.head_forward(&self.layout.angle_head, &cls);
        Regression {
            bbox: [b[0], b[1], b[2], b[3]],
            angle: a.to_vec(),
        }
    }

    fn forward_cached(&self, input: &ModelInput, dropout_seed: Option<u64>) -> (Regression, ForwardCache) {
        let mut frames = Vec::with_capacity(input.images.len());
        let mut frame_tokens = Vec::with_capacity(input.images.len());
        for img in &input.images {
            let (tok, cache) = self.encode_frame(&img.view());
            frame_tokens.push(tok);
            frames.push(cache);
        }
        let (pb, pa) = self.prior_inputs(&input.prior_box, &input.prior_angle);
        let mut prior = Array2::zeros((2, self.config.embed_dim()));
        prior
            .row_mut(0)
            .assign(&linear(&self.params, &self.layout.prior_box, &pb.view()).row(0));
        prior
            .row_mut(1)
            .assign(&linear(&self.params, &self.layout.prior_angle, &pa.view()).row(0));
        let mut x = self.assemble(&frame_tokens, &prior);

        let dropout = match dropout_seed {
            Some(seed) if self.config.dropout > 0.0 => {
                let keep = 1.0 - self.config.dropout;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mask = Array2::from_shape_fn(x.dim(), |_| if rng.random_bool(keep) { 1.0 / keep } else { 0.0 });
                x *= &mask;
                Some(mask)
            }
            _ => None,
        };

        let mut blocks = Vec::with_capacity(self.config.n_layers);
        for b in 0..self.config.n_layers {
            let (out, cache) = self.block_forward(b, x);
            blocks.push(cache);
            x = out;
        }
        let (cls, final_norm) = layer_norm(&self.params, &self.layout.final_norm, &x.slice(s![0..1, ..]));
        let (b, box_head) = self.head_forward(&self.layout.box_head, &cls);
        let (a, angle_head) = self.head_forward(&self.layout.angle_head, &cls);
        let mut out = Regression {
            bbox: [b[0], b[1], b[2], b[3]],
            angle: a.to_vec(),
        };
        if self.config.residual_prior {
            out.bbox.iter_mut().zip(&input.prior_box).for_each(|(o, p)| *o += p);
            out.angle.iter_mut().zip(&input.prior_angle).for_each(|(o, p)| *o += p);
        }
        let cache = ForwardCache {
            frames,
            prior_box: pb,
            prior_angle: pa,
            dropout,
            blocks,
            final_norm,
            box_head,
            angle_head,
        };
        (out, cache)
    }

    pub fn forward(&self, input: &ModelInput) -> Result<Regression, ModelError> {
        self.check_finite()?;
        self.check_input(input)?;
        Ok(self.forward_cached(input, None).0)
    }

    /// Independent forward passes over a batch, evaluated in parallel.
    pub fn forward_batch(&self, inputs: &[ModelInput]) -> Result<Vec<Regression>, ModelError> {
        self.check_finite()?;
        inputs.iter().try_for_each(|i| self.check_input(i))?;
        Ok(inputs.par_iter().map(|i| self.forward_cached(i, None).0).collect())
    }

    /// Loss of one sample; its gradient, multiplied by `scale`, is added to
    /// `grad`. `dropout_seed` enables dropout for this pass.
    pub fn loss_and_grad(
        &self,
        input: &ModelInput,
        target: &Regression,
        scale: f64,
        dropout_seed: Option<u64>,
        grad: &mut [f64],
    ) -> Result<f64, ModelError> {
        self.check_input(input)?;
        if grad.len() != self.layout.len {
            return Err(ModelError::ShapeMismatch("gradient buffer has the wrong length".into()));
        }
        let (pred, cache) = self.forward_cached(input, dropout_seed);
        let value = super::loss(&pred, target)?;
        let (dbox, dangle) = super::loss_grad(&pred, target);
        self.backward(
            &cache,
            &dbox.map(|v| v * scale),
            &dangle.iter().map(|v| v * scale).collect::<Vec<_>>(),
            grad,
        );
        Ok(value)
    }

    fn backward(&self, cache: &ForwardCache, dbox: &[f64; 4], dangle: &[f64], g: &mut [f64]) {
        let c = &self.config;
        let l = &self.layout;
        let p = &self.params;
        let (t, d) = (c.token_count(), c.embed_dim());

        let db = Array2::from_shape_vec((1, 4), dbox.to_vec()).expect("4");
        let da = Array2::from_shape_vec((1, dangle.len()), dangle.to_vec()).expect("angle");
        let mut dcls = self.head_backward(&l.box_head, &cache.box_head, db, g);
        dcls += &self.head_backward(&l.angle_head, &cache.angle_head, da, g);
        let dcls_in = layer_norm_backward(p, g, &l.final_norm, &cache.final_norm, &dcls.view());

        let mut dx = Array2::zeros((t, d));
        dx.row_mut(0).assign(&dcls_in.row(0));
        for b in (0..c.n_layers).rev() {
            dx = self.block_backward(b, &cache.blocks[b], dx, g);
        }
        if let Some(mask) = &cache.dropout {
            dx *= mask;
        }

        {
            let first = if c.pos_on_cls { 0 } else { 1 };
            let mut dpos = view2_mut(g, l.token_pos, t, d);
            let mut body = dpos.slice_mut(s![first.., ..]);
            body += &dx.slice(s![first.., ..]);
        }
        {
            let mut dcls_tok = view1_mut(g, l.cls, d);
            dcls_tok += &dx.row(0);
        }
        linear_backward_params(
            g,
            &l.prior_box,
            &cache.prior_box.view(),
            &dx.slice(s![t - 2..t - 1, ..]),
        );
        linear_backward_params(
            g,
            &l.prior_angle,
            &cache.prior_angle.view(),
            &dx.slice(s![t - 1..t, ..]),
        );

        let e = &c.encoder;
        let tpf = c.tokens_per_frame();
        for (i, fc) in cache.frames.iter().enumerate() {
            let dtok = dx.slice(s![1 + i * tpf..1 + (i + 1) * tpf, ..]);
            let dact = match c.frame_tokens {
                FrameTokens::Pooled => {
                    let flat = fc
                        .act
                        .view()
                        .into_shape_with_order((1, e.n_patches() * e.patch_dim))
                        .expect("contiguous");
                    linear_backward(p, g, &l.frame_proj, &flat, &dtok)
                        .into_shape_with_order((e.n_patches(), e.patch_dim))
                        .expect("contiguous")
                }
                FrameTokens::PerPatch => linear_backward(p, g, &l.frame_proj, &fc.act.view(), &dtok),
            };
            let dpre = gelu_backward(&fc.pre, &dact.view());
            {
                let mut dpos = view2_mut(g, l.patch_pos, e.n_patches(), e.patch_dim);
                dpos += &dpre;
            }
            linear_backward_params(g, &l.patch, &fc.patches.view(), &dpre.view());
        }
    }

    /// Zeroes the gradient entries of every group of `kind`.
    pub fn zero_group_grads(&self, kind: GroupKind, grad: &mut [f64]) {
        for g in self.layout.groups.iter().filter(|g| g.kind == kind) {
            grad[g.range()].fill(0.0);
        }
    }
}
