use std::fmt;
use std::str::FromStr;

use crate::kv::{KeyValues, KvError};

/// Which block parameters are reused across upsampling stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ShareMode {
    /// Every (stage, position) owns its spatial and channel mixing sets.
    None,
    /// Whole blocks are reused across stages.
    Full,
    /// Channel mixing is reused across stages; spatial mixing stays per-stage.
    Hybrid,
}

impl ShareMode {
    pub const ALL: [ShareMode; 3] = [ShareMode::None, ShareMode::Full, ShareMode::Hybrid];

    pub fn code(self) -> u16 {
        match self {
            ShareMode::None => 0,
            ShareMode::Full => 1,
            ShareMode::Hybrid => 2,
        }
    }

    pub fn from_code(code: u16) -> Option<Self> {
        match code {
            0 => Some(ShareMode::None),
            1 => Some(ShareMode::Full),
            2 => Some(ShareMode::Hybrid),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ShareMode::None => "none",
            ShareMode::Full => "full",
            ShareMode::Hybrid => "hybrid",
        }
    }

    pub fn shares_spatial(self) -> bool {
        self == ShareMode::Full
    }

    pub fn shares_channel(self) -> bool {
        self != ShareMode::None
    }
}

impl fmt::Display for ShareMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ShareMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(ShareMode::None),
            "full" => Ok(ShareMode::Full),
            "hybrid" => Ok(ShareMode::Hybrid),
            other => Err(format!("unknown share mode `{other}` (none|full|hybrid)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid model config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Kv(#[from] KvError),
}

/// Architectural hyperparameters of one generator.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ModelConfig {
    /// Number of x2 upsampling stages.
    pub stages: usize,
    /// Blocks applied after each upsample.
    pub blocks: usize,
    /// Feature width, constant across stages.
    pub channels: usize,
    /// Depthwise kernel size (odd).
    pub kernel: usize,
    /// Hidden expansion of the channel-mixing FFN.
    pub ffn_ratio: usize,
    pub grid_t: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub grid_c: usize,
    pub share_mode: ShareMode,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl ModelConfig {
    /// A config whose output size is derived from the grid geometry.
    #[allow(clippy::too_many_arguments)]
    pub fn dyadic(
        stages: usize,
        blocks: usize,
        channels: usize,
        grid: (usize, usize, usize, usize),
        frames: usize,
        share_mode: ShareMode,
    ) -> Self {
        let (grid_t, grid_h, grid_w, grid_c) = grid;
        Self {
            stages,
            blocks,
            channels,
            kernel: 3,
            ffn_ratio: 4,
            grid_t,
            grid_h,
            grid_w,
            grid_c,
            share_mode,
            frames,
            height: grid_h << stages,
            width: grid_w << stages,
        }
    }

    pub fn hidden(&self) -> usize {
        self.channels * self.ffn_ratio
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let positive = [
            ("stages", self.stages),
            ("blocks", self.blocks),
            ("channels", self.channels),
            ("kernel", self.kernel),
            ("ffn_ratio", self.ffn_ratio),
            ("grid_t", self.grid_t),
            ("grid_h", self.grid_h),
            ("grid_w", self.grid_w),
            ("grid_c", self.grid_c),
            ("frames", self.frames),
        ];
        for (name, v) in positive {
            if v == 0 {
                return bad(format!("{name} must be >= 1"));
            }
        }
        if self.stages > 12 {
            return bad(format!("stages = {} exceeds 12", self.stages));
        }
        if self.kernel % 2 == 0 {
            return bad(format!("kernel = {} must be odd", self.kernel));
        }
        if self.grid_t > self.frames {
            return bad(format!(
                "grid_t = {} exceeds frame count {}",
                self.grid_t, self.frames
            ));
        }
        let (h, w) = (self.grid_h << self.stages, self.grid_w << self.stages);
        if h != self.height || w != self.width {
            return bad(format!(
                "output {}x{} is not grid {}x{} upsampled by 2^{} ({}x{})",
                self.height, self.width, self.grid_h, self.grid_w, self.stages, h, w
            ));
        }
        Ok(())
    }

    /// Consumes model keys from `kv`, filling anything absent from `base`.
    pub fn from_kv(kv: &mut KeyValues, base: &ModelConfig) -> Result<Self, ConfigError> {
        let mut c = base.clone();
        c.stages = kv.take_or("stages", c.stages)?;
        c.blocks = kv.take_or("blocks", c.blocks)?;
        c.channels = kv.take_or("channels", c.channels)?;
        c.kernel = kv.take_or("kernel", c.kernel)?;
        c.ffn_ratio = kv.take_or("ffn_ratio", c.ffn_ratio)?;
        c.grid_t = kv.take_or("grid_t", c.grid_t)?;
        c.grid_h = kv.take_or("grid_h", c.grid_h)?;
        c.grid_w = kv.take_or("grid_w", c.grid_w)?;
        c.grid_c = kv.take_or("grid_c", c.grid_c)?;
        c.share_mode = kv.take_or("share_mode", c.share_mode)?;
        c.frames = kv.take_or("frames", c.frames)?;
        c.height = kv.take_or("height", c.height)?;
        c.width = kv.take_or("width", c.width)?;
        Ok(c)
    }

    pub fn parse_text(text: &str, base: &ModelConfig) -> Result<Self, ConfigError> {
        let mut kv = KeyValues::parse(text)?;
        let c = Self::from_kv(&mut kv, base)?;
        kv.finish()?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_text(&self) -> String {
        format!(
            "stages = {}\nblocks = {}\nchannels = {}\nkernel = {}\nffn_ratio = {}\n\
             grid_t = {}\ngrid_h = {}\ngrid_w = {}\ngrid_c = {}\nshare_mode = {}\n\
             frames = {}\nheight = {}\nwidth = {}\n",
            self.stages,
            self.blocks,
            self.channels,
            self.kernel,
            self.ffn_ratio,
            self.grid_t,
            self.grid_h,
            self.grid_w,
            self.grid_c,
            self.share_mode,
            self.frames,
            self.height,
            self.width
        )
    }

    /// Fixed-order little-endian block:
    /// `M:u16 L:u16 C:u32 K:u16 r:u16 gT:u32 gH:u32 gW:u32 gC:u32 share:u16 T:u32 H:u32 W:u32`.
    pub fn write_binary(&self, out: &mut Vec<u8>) {
        let u16s = |v: usize| (v.min(u16::MAX as usize) as u16).to_le_bytes();
        let u32s = |v: usize| (v.min(u32::MAX as usize) as u32).to_le_bytes();
        out.extend(u16s(self.stages));
        out.extend(u16s(self.blocks));
        out.extend(u32s(self.channels));
        out.extend(u16s(self.kernel));
        out.extend(u16s(self.ffn_ratio));
        out.extend(u32s(self.grid_t));
        out.extend(u32s(self.grid_h));
        out.extend(u32s(self.grid_w));
        out.extend(u32s(self.grid_c));
        out.extend(self.share_mode.code().to_le_bytes());
        out.extend(u32s(self.frames));
        out.extend(u32s(self.height));
        out.extend(u32s(self.width));
    }

    pub const BINARY_LEN: usize = 2 + 2 + 4 + 2 + 2 + 4 * 4 + 2 + 4 * 3;

    /// Inverse of [`ModelConfig::write_binary`]; `None` on an unknown share
    /// mode. The caller validates geometry.
    pub fn read_binary(b: &[u8; Self::BINARY_LEN]) -> Option<Self> {
        let u16at = |at: usize| u16::from_le_bytes([b[at], b[at + 1]]) as usize;
        let u32at =
            |at: usize| u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]]) as usize;
        Some(Self {
            stages: u16at(0),
            blocks: u16at(2),
            channels: u32at(4),
            kernel: u16at(8),
            ffn_ratio: u16at(10),
            grid_t: u32at(12),
            grid_h: u32at(16),
            grid_w: u32at(20),
            grid_c: u32at(24),
            share_mode: ShareMode::from_code(u16at(28) as u16)?,
            frames: u32at(30),
            height: u32at(34),
            width: u32at(38),
        })
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::dyadic(3, 2, 16, (4, 4, 4, 8), 4, ShareMode::Hybrid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_catches_geometry() {
        let mut c = ModelConfig::default();
        c.validate().unwrap();
        c.height += 1;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.kernel = 4;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::default();
        c.grid_t = c.frames + 1;
        assert!(c.validate().is_err());
    }

    #[test]
    fn text_and_binary_forms_roundtrip() {
        let c = ModelConfig::dyadic(2, 3, 12, (3, 5, 6, 7), 9, ShareMode::Full);
        let back = ModelConfig::parse_text(&c.to_text(), &ModelConfig::default()).unwrap();
        assert_eq!(back, c);
        let mut buf = Vec::new();
        c.write_binary(&mut buf);
        assert_eq!(buf.len(), ModelConfig::BINARY_LEN);
        let arr: [u8; ModelConfig::BINARY_LEN] = buf.try_into().unwrap();
        assert_eq!(ModelConfig::read_binary(&arr).unwrap(), c);
    }

    #[test]
    fn text_rejects_unknown_keys() {
        let e = ModelConfig::parse_text("stages = 2\nfoo = 1\n", &ModelConfig::default());
        assert!(matches!(e, Err(ConfigError::Kv(KvError::Unknown(_)))));
    }
}
