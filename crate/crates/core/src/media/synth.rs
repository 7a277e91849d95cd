use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::VideoTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SynthKind {
    StaticBgMovingSquare,
    TextGrid,
    SmoothGradientPan,
}

impl SynthKind {
    pub const ALL: [SynthKind; 3] = [
        SynthKind::StaticBgMovingSquare,
        SynthKind::TextGrid,
        SynthKind::SmoothGradientPan,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SynthKind::StaticBgMovingSquare => "static_bg_moving_square",
            SynthKind::TextGrid => "text_grid",
            SynthKind::SmoothGradientPan => "smooth_gradient_pan",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SynthKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown synth kind `{s}`"))
    }
}

/// Recipe for a synthetic clip. Only the fields relevant to `kind` matter.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    /// Side of the moving square in pixels.
    pub square_size: usize,
    /// Square displacement per frame `(dx, dy)`, wrapping at the borders.
    pub velocity: (isize, isize),
    /// Side of one glyph cell in pixels.
    pub cell_size: usize,
    /// Frames between glyph re-randomizations.
    pub scene_interval: usize,
    /// Gradient translation in pixels per frame.
    pub pan_speed: f64,
}

impl SynthSpec {
    pub fn new(kind: SynthKind, frames: usize, height: usize, width: usize, seed: u64) -> Self {
        Self {
            kind,
            frames,
            height,
            width,
            seed,
            square_size: (height.min(width) / 4).max(1),
            velocity: (2, 1),
            cell_size: 4,
            scene_interval: 4,
            pan_speed: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.frames == 0 || self.height == 0 || self.width == 0 {
            return Err("synth dimensions must be positive".into());
        }
        if self.square_size == 0 || self.square_size > self.height.min(self.width) {
            return Err(format!("square size {} does not fit", self.square_size));
        }
        if self.cell_size == 0 || self.scene_interval == 0 {
            return Err("cell size and scene interval must be positive".into());
        }
        if !self.pan_speed.is_finite() {
            return Err("pan speed must be finite".into());
        }
        Ok(())
    }
}

/// Deterministic in `spec`; panics on an invalid spec.
pub fn synth_video(spec: &SynthSpec) -> VideoTensor {
    spec.validate().expect("invalid synth spec");
    let mut video = VideoTensor::zeros(spec.frames, spec.height, spec.width);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.kind {
        SynthKind::StaticBgMovingSquare => moving_square(spec, &mut rng, video.data_mut()),
        SynthKind::TextGrid => text_grid(spec, &mut rng, video.data_mut()),
        SynthKind::SmoothGradientPan => gradient_pan(spec, &mut rng, video.data_mut()),
    }
    video
}

/// Top-left corner of the square in frame `t`.
pub(crate) fn square_origin(spec: &SynthSpec, start: (usize, usize), t: usize) -> (usize, usize) {
    let wrap = |p: usize, v: isize, n: usize| -> usize {
        (p as i64 + v as i64 * t as i64).rem_euclid(n as i64) as usize
    };
    (
        wrap(start.0, spec.velocity.1, spec.height),
        wrap(start.1, spec.velocity.0, spec.width),
    )
}

/// Square position in frame 0, drawn from its own stream so the background
/// recipe can change without moving the square.
pub(crate) fn square_start(spec: &SynthSpec) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5351_5541_5245);
    (
        rng.random_range(0..spec.height),
        rng.random_range(0..spec.width),
    )
}

fn moving_square(spec: &SynthSpec, rng: &mut ChaCha8Rng, out: &mut [f32]) {
    let (h, w) = (spec.height, spec.width);
    // background: a few random low-frequency waves per channel
    let waves: Vec<[f64; 4]> = (0..9)
        .map(|_| {
            [
                rng.random_range(1.0..4.0),
                rng.random_range(1.0..4.0),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.05..0.12),
            ]
        })
        .collect();
    let mut bg = vec![0f32; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut v = 0.5;
                for [fx, fy, ph, amp] in &waves[c * 3..c * 3 + 3] {
                    let arg = std::f64::consts::TAU
                        * (fx * x as f64 / w as f64 + fy * y as f64 / h as f64);
                    v += amp * (arg + ph).sin();
                }
                bg[(y * w + x) * 3 + c] = v.clamp(0.0, 1.0) as f32;
            }
        }
    }
    let color: [f32; 3] = std::array::from_fn(|_| {
        if rng.random_bool(0.5) {
            rng.random_range(0.85..1.0)
        } else {
            rng.random_range(0.0..0.15)
        }
    });
    let start = square_start(spec);
    let n = h * w * 3;
    for t in 0..spec.frames {
        let frame = &mut out[t * n..(t + 1) * n];
        frame.copy_from_slice(&bg);
        let (oy, ox) = square_origin(spec, start, t);
        for dy in 0..spec.square_size {
            for dx in 0..spec.square_size {
                let (y, x) = ((oy + dy) % h, (ox + dx) % w);
                frame[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&color);
            }
        }
    }
}

fn text_grid(spec: &SynthSpec, rng: &mut ChaCha8Rng, out: &mut [f32]) {
    let (h, w, cell) = (spec.height, spec.width, spec.cell_size);
    let (rows, cols) = (h.div_ceil(cell), w.div_ceil(cell));
    let n = h * w * 3;
    let mut glyphs = vec![false; rows * cols];
    for t in 0..spec.frames {
        if t % spec.scene_interval == 0 {
            glyphs.iter_mut().for_each(|g| *g = rng.random_bool(0.5));
        }
        let frame = &mut out[t * n..(t + 1) * n];
        for y in 0..h {
            for x in 0..w {
                let ink = glyphs[(y / cell) * cols + x / cell];
                let v = if ink { 0.0 } else { 1.0 };
                frame[(y * w + x) * 3..(y * w + x) * 3 + 3].fill(v);
            }
        }
    }
}

fn gradient_pan(spec: &SynthSpec, rng: &mut ChaCha8Rng, out: &mut [f32]) {
    let (h, w) = (spec.height, spec.width);
    let phase: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..std::f64::consts::TAU));
    let tilt = rng.random_range(0.3..0.7);
    let n = h * w * 3;
    for t in 0..spec.frames {
        let shift = spec.pan_speed * t as f64;
        let frame = &mut out[t * n..(t + 1) * n];
        for y in 0..h {
            for x in 0..w {
                // one period across the frame, so panning wraps seamlessly
                let u = (x as f64 + shift) / w as f64 + tilt * y as f64 / h as f64;
                for c in 0..3 {
                    let v = 0.5 + 0.35 * (std::f64::consts::TAU * u + phase[c]).sin();
                    frame[(y * w + x) * 3 + c] = v as f32;
                }
            }
        }
    }
}
