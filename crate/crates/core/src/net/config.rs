use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Baseline,
    MlArgmax,
    Correlation,
    NoBottleneck,
    Small,
    Tiny,
    SingleTower,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Baseline,
        Variant::MlArgmax,
        Variant::Correlation,
        Variant::NoBottleneck,
        Variant::Small,
        Variant::Tiny,
        Variant::SingleTower,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::MlArgmax => "ml_argmax",
            Variant::Correlation => "correlation",
            Variant::NoBottleneck => "no_bottleneck",
            Variant::Small => "small",
            Variant::Tiny => "tiny",
            Variant::SingleTower => "single_tower",
        }
    }

    /// Required divisor of H, W and D.
    pub fn divisor(self) -> usize {
        match self {
            Variant::Small | Variant::Tiny => 8,
            Variant::NoBottleneck => 2,
            _ => 32,
        }
    }

    pub fn uses_correlation(self) -> bool {
        self == Variant::Correlation
    }

    pub fn uses_ml_argmax(self) -> bool {
        self == Variant::MlArgmax
    }

    pub fn has_right_output(self) -> bool {
        self != Variant::SingleTower
    }

    /// Residual feature tower (layers 1–10) versus the plain five-layer one.
    pub fn residual_features(self) -> bool {
        !matches!(self, Variant::Small | Variant::Tiny)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    pub variant: Variant,
    pub height: usize,
    pub width: usize,
    pub max_disparity: usize,
    pub channels: usize,
    pub features: usize,
}

impl ModelConfig {
    /// RGB input with 32 base features.
    pub fn new(variant: Variant, height: usize, width: usize, max_disparity: usize) -> Self {
        Self {
            variant,
            height,
            width,
            max_disparity,
            channels: 3,
            features: 32,
        }
    }

    pub fn with_features(mut self, features: usize) -> Self {
        self.features = features;
        self
    }

    pub fn with_channels(mut self, channels: usize) -> Self {
        self.channels = channels;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let div = self.variant.divisor();
        for (axis, value) in [
            ("height", self.height),
            ("width", self.width),
            ("max_disparity", self.max_disparity),
        ] {
            if value == 0 || value % div != 0 {
                return Err(Error::Config(format!(
                    "{axis} = {value} must be a positive multiple of {div} for variant {}",
                    self.variant
                )));
            }
        }
        if self.max_disparity < 2 {
            return Err(Error::Config(format!(
                "max_disparity = {} must be at least 2",
                self.max_disparity
            )));
        }
        if self.max_disparity > self.width {
            return Err(Error::Config(format!(
                "max_disparity = {} exceeds width = {}",
                self.max_disparity, self.width
            )));
        }
        if self.channels == 0 {
            return Err(Error::Config("channels must be positive".into()));
        }
        if self.features < 2 || !self.features.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "features = {} must be a positive even number",
                self.features
            )));
        }
        Ok(())
    }
}
