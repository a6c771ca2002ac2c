//! Flat parameter storage.
//!
//! All parameters live in one `Vec<f64>`; every tensor is a named, contiguous
//! row-major slice. Gradients use the same layout, which keeps the optimiser,
//! gradient checks and checkpoints trivial.

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{FrameTokens, ModelConfig};

/// Coarse grouping used by the frozen-encoder mode and gradient reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupKind {
    Encoder,
    Prior,
    Tokens,
    Transformer,
    Heads,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub kind: GroupKind,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl ParamGroup {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LinearIdx {
    pub w: usize,
    pub b: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NormIdx {
    pub gamma: usize,
    pub beta: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BlockIdx {
    pub ln1: NormIdx,
    pub q: LinearIdx,
    pub k: LinearIdx,
    pub v: LinearIdx,
    pub o: LinearIdx,
    pub ln2: NormIdx,
    pub fc1: LinearIdx,
    pub fc2: LinearIdx,
}

/// Offsets of every tensor in the flat buffer.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub groups: Vec<ParamGroup>,
    pub len: usize,
    pub patch: LinearIdx,
    pub patch_pos: usize,
    pub frame_proj: LinearIdx,
    pub prior_box: LinearIdx,
    pub prior_angle: LinearIdx,
    pub cls: usize,
    pub token_pos: usize,
    pub blocks: Vec<BlockIdx>,
    pub final_norm: NormIdx,
    pub box_head: Vec<LinearIdx>,
    pub angle_head: Vec<LinearIdx>,
}

struct Builder {
    groups: Vec<ParamGroup>,
    len: usize,
}

impl Builder {
    fn tensor(&mut self, name: String, kind: GroupKind, shape: Vec<usize>) -> usize {
        let offset = self.len;
        self.len += shape.iter().product::<usize>();
        self.groups.push(ParamGroup {
            name,
            kind,
            offset,
            shape,
        });
        offset
    }

    fn linear(&mut self, name: &str, kind: GroupKind, fan_in: usize, fan_out: usize) -> LinearIdx {
        LinearIdx {
            w: self.tensor(format!("{name}.weight"), kind, vec![fan_in, fan_out]),
            b: self.tensor(format!("{name}.bias"), kind, vec![fan_out]),
            fan_in,
            fan_out,
        }
    }

    fn norm(&mut self, name: &str, kind: GroupKind, dim: usize) -> NormIdx {
        NormIdx {
            gamma: self.tensor(format!("{name}.gamma"), kind, vec![dim]),
            beta: self.tensor(format!("{name}.beta"), kind, vec![dim]),
            dim,
        }
    }

    fn head(&mut self, name: &str, d: usize, hidden: &[usize], out: usize) -> Vec<LinearIdx> {
        let mut widths = vec![d];
        widths.extend_from_slice(hidden);
        widths.push(out);
        widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| self.linear(&format!("{name}.{i}"), GroupKind::Heads, w[0], w[1]))
            .collect()
    }
}

impl Layout {
    pub fn new(config: &ModelConfig) -> Self {
        let e = &config.encoder;
        let d = e.embed_dim;
        let np = e.n_patches();
        let mut b = Builder {
            groups: Vec::new(),
            len: 0,
        };
        let patch = b.linear(
            "encoder.patch",
            GroupKind::Encoder,
            e.patch_size * e.patch_size,
            e.patch_dim,
        );
        let patch_pos = b.tensor("encoder.patch_pos".into(), GroupKind::Encoder, vec![np, e.patch_dim]);
        let proj_in = match config.frame_tokens {
            FrameTokens::Pooled => np * e.patch_dim,
            FrameTokens::PerPatch => e.patch_dim,
        };
        let frame_proj = b.linear("encoder.proj", GroupKind::Encoder, proj_in, d);
        let prior_box = b.linear("prior.box", GroupKind::Prior, 4, d);
        let prior_angle = b.linear("prior.angle", GroupKind::Prior, config.angle_dim(), d);
        let cls = b.tensor("tokens.cls".into(), GroupKind::Tokens, vec![d]);
        let token_pos = b.tensor("tokens.pos".into(), GroupKind::Tokens, vec![config.token_count(), d]);
        let hidden = d * config.mlp_ratio;
        let blocks = (0..config.n_layers)
            .map(|l| {
                let n = |s: &str| format!("block{l}.{s}");
                BlockIdx {
                    ln1: b.norm(&n("ln1"), GroupKind::Transformer, d),
                    q: b.linear(&n("attn.q"), GroupKind::Transformer, d, d),
                    k: b.linear(&n("attn.k"), GroupKind::Transformer, d, d),
                    v: b.linear(&n("attn.v"), GroupKind::Transformer, d, d),
                    o: b.linear(&n("attn.o"), GroupKind::Transformer, d, d),
                    ln2: b.norm(&n("ln2"), GroupKind::Transformer, d),
                    fc1: b.linear(&n("mlp.fc1"), GroupKind::Transformer, d, hidden),
                    fc2: b.linear(&n("mlp.fc2"), GroupKind::Transformer, hidden, d),
                }
            })
            .collect();
        let final_norm = b.norm("final_norm", GroupKind::Transformer, d);
        let box_head = b.head("head.box", d, &config.head_hidden, 4);
        let angle_head = b.head("head.angle", d, &config.head_hidden, config.angle_dim());
        Layout {
            groups: b.groups,
            len: b.len,
            patch,
            patch_pos,
            frame_proj,
            prior_box,
            prior_angle,
            cls,
            token_pos,
            blocks,
            final_norm,
            box_head,
            angle_head,
        }
    }

    /// Initial parameters: scaled Gaussian weights, zero biases, unit norms.
    pub fn init(&self, config: &ModelConfig, rng: &mut impl Rng) -> Vec<f64> {
        let mut p = vec![0.0; self.len];
        let residual_scale = 1.0 / (2.0 * config.n_layers as f64).sqrt();
        for g in &self.groups {
            let r = g.range();
            let name = g.name.as_str();
            if name.ends_with(".gamma") {
                p[r].fill(1.0);
            } else if name.ends_with(".bias") || name.ends_with(".beta") {
                // zero
            } else if name.ends_with("pos") || name == "tokens.cls" {
                fill_normal(&mut p[r], 0.02, rng);
            } else {
                let fan_in = g.shape[0] as f64;
                let mut std = fan_in.powf(-0.5);
                if name.ends_with("attn.o.weight") || name.ends_with("mlp.fc2.weight") {
                    std *= residual_scale;
                }
                if name.starts_with("head.") {
                    std *= 0.1;
                }
                fill_normal(&mut p[r], std, rng);
            }
        }
        if config.frame_tokens == FrameTokens::PerPatch {
            self.add_grid_positions(config, &mut p);
        }
        p
    }

    /// Adds a 2D sinusoidal code of each patch's row and column to the
    /// per-patch token positions, so location is linearly readable from the
    /// start of training. Every frame gets the same code.
    fn add_grid_positions(&self, config: &ModelConfig, p: &mut [f64]) {
        const SCALE: f64 = 0.5;
        let d = config.embed_dim();
        let side = config.encoder.patches_per_side();
        let np = config.encoder.n_patches();
        for frame in 0..config.n_frames {
            for patch in 0..np {
                let (row, col) = ((patch / side) as f64 + 0.5, (patch % side) as f64 + 0.5);
                let token = 1 + frame * np + patch;
                let dst = &mut p[self.token_pos + token * d..self.token_pos + (token + 1) * d];
                for (k, chunk) in dst.chunks_exact_mut(4).enumerate() {
                    let w = std::f64::consts::PI * (k + 1) as f64 / side as f64;
                    chunk[0] += SCALE * (w * row).sin();
                    chunk[1] += SCALE * (w * row).cos();
                    chunk[2] += SCALE * (w * col).sin();
                    chunk[3] += SCALE * (w * col).cos();
                }
            }
        }
    }
}

fn fill_normal(dst: &mut [f64], std: f64, rng: &mut impl Rng) {
    let n = Normal::new(0.0, std).expect("finite std");
    dst.iter_mut().for_each(|v| *v = n.sample(rng));
}

pub(crate) fn view2(p: &[f64], off: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((rows, cols), &p[off..off + rows * cols]).expect("layout")
}

pub(crate) fn view1(p: &[f64], off: usize, n: usize) -> ArrayView1<'_, f64> {
    ArrayView1::from(&p[off..off + n])
}

pub(crate) fn view2_mut(p: &mut [f64], off: usize, rows: usize, cols: usize) -> ArrayViewMut2<'_, f64> {
    ArrayViewMut2::from_shape((rows, cols), &mut p[off..off + rows * cols]).expect("layout")
}

pub(crate) fn view1_mut(p: &mut [f64], off: usize, n: usize) -> ArrayViewMut1<'_, f64> {
    ArrayViewMut1::from(&mut p[off..off + n])
}
