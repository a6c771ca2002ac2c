use serde::{Deserialize, Serialize};

use super::ModelError;

/// How each frame enters the transformer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameTokens {
    /// One token per frame: the patch grid is pooled by a learned projection.
    Pooled,
    /// One token per patch.
    PerPatch,
}

/// Encoding of the incident angle in the regression target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleEncoding {
    /// `[a_entry / 90, a_rot / 180]`.
    Linear,
    /// `[a_entry / 90, sin a_rot, cos a_rot]`. Removes the ±180° seam; not
    /// part of the reference formulation.
    SinCos,
}

impl AngleEncoding {
    pub fn dim(self) -> usize {
        match self {
            Self::Linear => 2,
            Self::SinCos => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Square input side; frames are resized to this.
    pub input_size: usize,
    pub patch_size: usize,
    /// Width of the per-patch features before pooling.
    pub patch_dim: usize,
    /// Model width `d`.
    pub embed_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            input_size: 224,
            patch_size: 16,
            patch_dim: 32,
            embed_dim: 96,
        }
    }
}

impl EncoderConfig {
    pub fn patches_per_side(&self) -> usize {
        self.input_size / self.patch_size
    }

    pub fn n_patches(&self) -> usize {
        self.patches_per_side().pow(2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub n_frames: usize,
    pub encoder: EncoderConfig,
    pub n_layers: usize,
    pub n_heads: usize,
    pub mlp_ratio: usize,
    /// Dropout on the embedded token sequence during training.
    pub dropout: f64,
    /// Hidden widths of the regression heads; empty means a single affine map.
    pub head_hidden: Vec<usize>,
    pub frame_tokens: FrameTokens,
    pub angle_encoding: AngleEncoding,
    /// Whether the CLS token also receives a positional embedding.
    pub pos_on_cls: bool,
    /// Heads predict a correction that is added to the prior state.
    pub residual_prior: bool,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    /// Transformer depth and head count of the reference network.
    fn default() -> Self {
        Self {
            n_frames: 5,
            encoder: EncoderConfig::default(),
            n_layers: 8,
            n_heads: 6,
            mlp_ratio: 4,
            dropout: 0.0,
            head_hidden: Vec::new(),
            frame_tokens: FrameTokens::Pooled,
            angle_encoding: AngleEncoding::Linear,
            pos_on_cls: true,
            residual_prior: false,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    /// Small CPU-friendly configuration.
    pub fn tiny(input_size: usize) -> Self {
        Self {
            n_frames: 5,
            encoder: EncoderConfig {
                input_size,
                patch_size: 8,
                patch_dim: 16,
                embed_dim: 32,
            },
            n_layers: 2,
            n_heads: 2,
            mlp_ratio: 2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let e = &self.encoder;
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if e.patch_size == 0 || e.input_size == 0 || !e.input_size.is_multiple_of(e.patch_size) {
            return bad(format!(
                "input_size {} must be a positive multiple of patch_size {}",
                e.input_size, e.patch_size
            ));
        }
        if e.embed_dim < 8 || !e.embed_dim.is_multiple_of(2) {
            return bad(format!("embed_dim must be even and at least 8, got {}", e.embed_dim));
        }
        if e.patch_dim == 0 {
            return bad("patch_dim must be positive".into());
        }
        if self.n_heads == 0 || !e.embed_dim.is_multiple_of(self.n_heads) {
            return bad(format!(
                "embed_dim {} not divisible by n_heads {}",
                e.embed_dim, self.n_heads
            ));
        }
        if self.n_frames < 2 {
            return bad("n_frames must be at least 2".into());
        }
        if self.n_layers == 0 || self.mlp_ratio == 0 {
            return bad("n_layers and mlp_ratio must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)".into());
        }
        if self.head_hidden.contains(&0) {
            return bad("head_hidden widths must be positive".into());
        }
        Ok(())
    }

    pub fn embed_dim(&self) -> usize {
        self.encoder.embed_dim
    }

    pub fn head_dim(&self) -> usize {
        self.encoder.embed_dim / self.n_heads
    }

    pub fn tokens_per_frame(&self) -> usize {
        match self.frame_tokens {
            FrameTokens::Pooled => 1,
            FrameTokens::PerPatch => self.encoder.n_patches(),
        }
    }

    /// `1 (CLS) + N · tokens_per_frame + 2 (prior box, prior angle)`.
    pub fn token_count(&self) -> usize {
        1 + self.n_frames * self.tokens_per_frame() + 2
    }

    pub fn angle_dim(&self) -> usize {
        self.angle_encoding.dim()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_shape() {
        let c = ModelConfig::default();
        assert_eq!((c.n_layers, c.n_heads, c.n_frames), (8, 6, 5));
        assert_eq!(c.encoder.input_size, 224);
        c.validate().unwrap();
        assert_eq!(c.token_count(), 1 + 5 + 2);
    }

    #[test]
    fn token_count_per_patch() {
        let mut c = ModelConfig::tiny(32);
        c.frame_tokens = FrameTokens::PerPatch;
        for n in 2..7 {
            c.n_frames = n;
            assert_eq!(c.token_count(), 1 + n * 16 + 2);
        }
    }

    #[test]
    fn invalid_configs() {
        let mut c = ModelConfig::tiny(32);
        c.encoder.patch_size = 5;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::tiny(32);
        c.n_heads = 3;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::tiny(32);
        c.encoder.embed_dim = 6;
        c.n_heads = 1;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::tiny(32);
        c.n_frames = 1;
        assert!(c.validate().is_err());
    }
}
