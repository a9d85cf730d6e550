use serde::{Deserialize, Serialize};

use crate::error::NetError;

/// Model variant: the plain decoupled network, or the U-Net-like ablation
/// that adds couple connections from each motion-concentration level into the
/// matching decoder block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "pclnet")]
    PclNet,
    #[serde(rename = "pclnetc")]
    PclNetC,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::PclNet => write!(f, "PCLNet"),
            Variant::PclNetC => write!(f, "PCLNetC"),
        }
    }
}

/// Architecture hyperparameters. `desk()` is small enough to train on a CPU;
/// `paper_scale()` mirrors the ResNet18-based configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Pyramid channel counts at strides 4/8/16/32. Must strictly increase.
    pub channels: [usize; 4],
    /// Reduced motion-feature channels (c_m).
    pub motion_channels: usize,
    /// ConvLSTM kernel edge (odd).
    pub lstm_kernel: usize,
    /// SPP bin edges.
    pub spp_bins: Vec<usize>,
    /// Widths of the three convolutions inside each OFE block.
    pub ofe_widths: [usize; 3],
    /// Context block widths; the last entry must be 2 (the flow residual).
    pub context_widths: Vec<usize>,
    /// Context block dilations, same length as `context_widths`.
    pub context_dilations: Vec<usize>,
    /// Negative slope of the leaky rectifier.
    pub leaky_slope: f64,
    pub variant: Variant,
}

impl ModelConfig {
    pub fn desk() -> Self {
        ModelConfig {
            channels: [16, 32, 64, 96],
            motion_channels: 16,
            lstm_kernel: 3,
            spp_bins: vec![1, 2, 4],
            ofe_widths: [96, 64, 32],
            context_widths: vec![32, 32, 32, 24, 16, 8, 2],
            context_dilations: vec![1, 2, 4, 8, 16, 1, 1],
            leaky_slope: 0.1,
            variant: Variant::PclNet,
        }
    }

    /// ResNet18-like widths; retained for documentation, not CPU-trainable in
    /// reasonable time.
    pub fn paper_scale() -> Self {
        ModelConfig {
            channels: [64, 128, 256, 512],
            motion_channels: 32,
            ofe_widths: [128, 96, 64],
            context_widths: vec![128, 128, 128, 96, 64, 32, 2],
            ..Self::desk()
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if !self.channels.windows(2).all(|p| p[0] < p[1]) {
            return Err(NetError::Config(format!(
                "pyramid channels {:?} must strictly increase",
                self.channels
            )));
        }
        if self.lstm_kernel % 2 == 0 || self.lstm_kernel == 0 {
            return Err(NetError::Config(format!("lstm kernel {} must be odd", self.lstm_kernel)));
        }
        if self.spp_bins.is_empty() || self.spp_bins.iter().any(|&b| b == 0) {
            return Err(NetError::Config(format!("spp bins {:?} must be positive", self.spp_bins)));
        }
        if self.context_widths.len() != 7 {
            return Err(NetError::Config(format!(
                "context block has {} layers, expected 7",
                self.context_widths.len()
            )));
        }
        if self.context_widths.len() != self.context_dilations.len() {
            return Err(NetError::StackLenMismatch {
                dilations: self.context_dilations.len(),
                channels: self.context_widths.len(),
            });
        }
        if *self.context_widths.last().unwrap() != 2 {
            return Err(NetError::Config("context block must end in 2 channels".into()));
        }
        Ok(())
    }

    /// ConvLSTM input channels at `level` (0-based): the pyramid features,
    /// plus the refined features passed down from the previous (finer) level.
    pub fn lstm_in_channels(&self, level: usize) -> usize {
        if level == 0 {
            self.channels[0]
        } else {
            self.channels[level] + self.channels[level - 1]
        }
    }

    /// Channels of the dense motion-feature map: the reduced hidden map
    /// concatenated with one broadcast plane per SPP bin.
    pub fn motion_dense_channels(&self) -> usize {
        self.motion_channels * (1 + self.spp_bins.len())
    }
}
