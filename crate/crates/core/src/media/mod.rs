//! Video frames in memory, on disk, and synthesized.

mod io;
mod synth;

pub use io::{load_video, save_video, MediaError};
pub use synth::{synth_video, SynthKind, SynthSpec};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `T x H x W x 3` intensities in `[0, 1]`, frame-major, interleaved RGB.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTensor {
    frames: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl VideoTensor {
    pub fn zeros(frames: usize, height: usize, width: usize) -> Self {
        Self {
            frames,
            height,
            width,
            data: vec![0.0; frames * height * width * 3],
        }
    }

    pub fn new(
        frames: usize,
        height: usize,
        width: usize,
        data: Vec<f32>,
    ) -> Result<Self, MediaError> {
        if frames == 0 || height == 0 || width == 0 {
            return Err(MediaError::Dimensions(format!(
                "empty video {frames}x{height}x{width}"
            )));
        }
        if data.len() != frames * height * width * 3 {
            return Err(MediaError::Dimensions(format!(
                "{} samples do not fill {frames}x{height}x{width}x3",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(MediaError::Dimensions(format!("sample {v} outside [0, 1]")));
        }
        Ok(Self {
            frames,
            height,
            width,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.frames, self.height, self.width)
    }

    /// `T * H * W`, the denominator of bits-per-pixel.
    pub fn pixels(&self) -> usize {
        self.frames * self.height * self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    fn frame_len(&self) -> usize {
        self.height * self.width * 3
    }

    pub fn frame_slice(&self, t: usize) -> &[f32] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    /// Frame `t` as an `[H, W, 3]` tensor.
    pub fn frame<S: Scalar>(&self, t: usize) -> Tensor<S> {
        let data = self
            .frame_slice(t)
            .iter()
            .map(|&v| S::lit(v as f64))
            .collect();
        Tensor::new(vec![self.height, self.width, 3], data).unwrap()
    }

    /// Writes an `[H, W, 3]` frame, clamping into `[0, 1]`.
    pub fn set_frame<S: Scalar>(&mut self, t: usize, frame: &Tensor<S>) {
        assert_eq!(frame.shape(), [self.height, self.width, 3], "frame shape");
        let n = self.frame_len();
        for (d, &s) in self.data[t * n..(t + 1) * n].iter_mut().zip(frame.data()) {
            *d = (s.f64() as f32).clamp(0.0, 1.0);
        }
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Rounds every sample to the nearest 8-bit level.
    pub fn quantized_8bit(&self) -> Self {
        let mut v = self.clone();
        for s in v.data.iter_mut() {
            *s = (*s * 255.0).round() / 255.0;
        }
        v
    }
}
