use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Dagan,
    Kigan,
    ReconRefine,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Dagan => "dagan",
            Family::Kigan => "kigan",
            Family::ReconRefine => "recon_refine",
        })
    }
}

/// Architecture hyperparameters shared by the three families.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: Family,
    /// Encoder stages (stride-2 downsamplings) per generator.
    pub depth: usize,
    pub base_channels: usize,
    /// Height and width of the (square) input images.
    pub image_size: usize,
}

impl ModelSpec {
    /// Published depths: 8 for DAGAN, 5 for KIGAN, 4 blocks for ReconGAN/RefineGAN.
    pub fn full_scale(family: Family) -> Self {
        let depth = match family {
            Family::Dagan => 8,
            Family::Kigan => 5,
            Family::ReconRefine => 4,
        };
        Self {
            family,
            depth,
            base_channels: 64,
            image_size: 256,
        }
    }

    /// Small configuration used by tests and the toy benchmark.
    pub fn test_scale(family: Family) -> Self {
        let depth = match family {
            Family::ReconRefine => 2,
            _ => 3,
        };
        Self {
            family,
            depth,
            base_channels: 8,
            image_size: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.base_channels == 0 {
            return Err(Error::Spec("depth and base_channels must be positive".into()));
        }
        if self.depth >= usize::BITS as usize - 1 || self.image_size % (1 << self.depth) != 0 {
            return Err(Error::Spec(format!(
                "image size {} is not divisible by 2^{}",
                self.image_size, self.depth
            )));
        }
        Ok(())
    }

    /// Width of encoder stage `i`: base·2^i capped at 8·base.
    pub fn width(&self, stage: usize) -> usize {
        self.base_channels << stage.min(3)
    }
}
