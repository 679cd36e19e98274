//! The three decoded network heads over an image grid.
//!
//! Per pixel: a lane likelihood, plus two categorical distributions over the
//! horizontal step to the adjacent row (one looking up, one looking down).
//! Each categorical has `2L + 2` classes for half-support `L`: the steps
//! `-L..=L` plus an end token.

use crate::tensor::TensorData;
use crate::{Error, ImageSize, Result};

/// Tolerance for "categorical sums to one" checks. Wide enough to absorb
/// f32 storage of f64-normalized distributions.
pub const SUM_TOLERANCE: f64 = 1e-6;

/// A categorical class index in `[0, 2L+1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassIndex(pub usize);

/// What a class index means: a horizontal step, or lane termination.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Delta(i64),
    End,
}

impl ClassIndex {
    /// Class for step `dw` under half-support `l`. `dw` must be in `[-l, l]`.
    pub fn from_dw(dw: i64, l: usize) -> Result<Self> {
        if dw.unsigned_abs() as usize > l {
            return Err(Error::UnsupportedSlope(dw, l));
        }
        Ok(Self((dw + l as i64) as usize))
    }

    pub fn end(l: usize) -> Self {
        Self(2 * l + 1)
    }

    /// Decodes the class: indices below `2L+1` are steps `idx - L`, the last
    /// index is the end token.
    pub fn to_step(self, l: usize) -> Result<Step> {
        if self.0 > 2 * l + 1 {
            return Err(Error::IndexOutOfRange {
                idx: self.0,
                half_support: l,
            });
        }
        if self.0 == 2 * l + 1 {
            Ok(Step::End)
        } else {
            Ok(Step::Delta(self.0 as i64 - l as i64))
        }
    }
}

/// Decoded network output over an `H x W` grid: lane likelihood plus the two
/// step categoricals. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadField {
    height: usize,
    width: usize,
    half_support: usize,
    lane_prob: Vec<f64>,
    up: Vec<f64>,
    down: Vec<f64>,
}

/// Direction of a drawing step: `Up` looks toward higher row indices,
/// `Down` toward lower ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn row_delta(self) -> i64 {
        match self {
            Direction::Up => 1,
            Direction::Down => -1,
        }
    }
}

impl HeadField {
    /// Number of classes in each step categorical.
    pub fn classes(&self) -> usize {
        2 * self.half_support + 2
    }

    /// Raw channel count of the stacked logits/probability grid.
    pub fn raw_channels(l: usize) -> usize {
        1 + 2 * (2 * l + 2)
    }

    pub fn size(&self) -> ImageSize {
        ImageSize::new(self.height, self.width)
    }

    pub fn half_support(&self) -> usize {
        self.half_support
    }

    /// Builds the field from raw logits laid out `(h, w, channel)` with
    /// channels `[lane | up block | down block]`. Sigmoid on the lane
    /// channel, softmax over each categorical block.
    pub fn from_logits(raw: &[f64], size: ImageSize, l: usize) -> Result<Self> {
        let c = Self::raw_channels(l);
        if raw.len() != size.pixels() * c {
            return Err(Error::ShapeMismatch(format!(
                "expected {}x{}x{} = {} logits, got {}",
                size.height,
                size.width,
                c,
                size.pixels() * c,
                raw.len()
            )));
        }
        let k = 2 * l + 2;
        let mut lane_prob = Vec::with_capacity(size.pixels());
        let mut up = Vec::with_capacity(size.pixels() * k);
        let mut down = Vec::with_capacity(size.pixels() * k);
        for px in 0..size.pixels() {
            let slice = &raw[px * c..(px + 1) * c];
            lane_prob.push(sigmoid(slice[0]));
            softmax_into(&slice[1..1 + k], &mut up);
            softmax_into(&slice[1 + k..1 + 2 * k], &mut down);
        }
        Ok(Self {
            height: size.height,
            width: size.width,
            half_support: l,
            lane_prob,
            up,
            down,
        })
    }

    /// Builds a field directly from probabilities. Used by oracle fields and
    /// tests; validates the invariants.
    pub fn from_probabilities(
        size: ImageSize,
        l: usize,
        lane_prob: Vec<f64>,
        up: Vec<f64>,
        down: Vec<f64>,
    ) -> Result<Self> {
        let field = Self {
            height: size.height,
            width: size.width,
            half_support: l,
            lane_prob,
            up,
            down,
        };
        field.validate()?;
        Ok(field)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.classes();
        if self.lane_prob.len() != self.height * self.width
            || self.up.len() != self.height * self.width * k
            || self.down.len() != self.height * self.width * k
        {
            return Err(Error::ShapeMismatch("head grid sizes disagree".into()));
        }
        if self
            .lane_prob
            .iter()
            .any(|&p| !(0.0..=1.0).contains(&p) || !p.is_finite())
        {
            return Err(Error::ShapeMismatch("lane probability outside [0, 1]".into()));
        }
        for grid in [&self.up, &self.down] {
            for slice in grid.chunks_exact(k) {
                let mut sum = 0.0;
                for &p in slice {
                    if p < 0.0 || !p.is_finite() {
                        return Err(Error::ShapeMismatch("negative categorical entry".into()));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > SUM_TOLERANCE {
                    return Err(Error::ShapeMismatch(format!(
                        "categorical sums to {sum}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }

    #[inline]
    pub fn in_bounds(&self, h: i64, w: i64) -> bool {
        h >= 0 && w >= 0 && (h as usize) < self.height && (w as usize) < self.width
    }

    #[inline]
    pub fn prob_at(&self, h: usize, w: usize) -> f64 {
        self.lane_prob[h * self.width + w]
    }

    #[inline]
    pub fn step_slice(&self, h: usize, w: usize, dir: Direction) -> &[f64] {
        let k = self.classes();
        let base = (h * self.width + w) * k;
        match dir {
            Direction::Up => &self.up[base..base + k],
            Direction::Down => &self.down[base..base + k],
        }
    }

    pub fn lane_prob(&self) -> &[f64] {
        &self.lane_prob
    }

    /// Stacks the field back into `(h, w, channel)` order and wraps it in
    /// the FDT1 container.
    pub fn to_tensor(&self) -> TensorData {
        let k = self.classes();
        let c = Self::raw_channels(self.half_support);
        let mut values = Vec::with_capacity(self.height * self.width * c);
        for px in 0..self.height * self.width {
            values.push(self.lane_prob[px] as f32);
            values.extend(self.up[px * k..(px + 1) * k].iter().map(|&v| v as f32));
            values.extend(self.down[px * k..(px + 1) * k].iter().map(|&v| v as f32));
        }
        TensorData::new(
            vec![self.height as u32, self.width as u32, c as u32],
            self.half_support as u32,
            values,
        )
        .expect("dims match by construction")
    }

    /// Rebuilds a field from an FDT1 tensor. The channel count must agree
    /// with the header's half-support.
    pub fn from_tensor(t: &TensorData) -> Result<Self> {
        if t.dims.len() != 3 {
            return Err(Error::TensorFormat(format!(
                "head field needs rank 3, got {}",
                t.dims.len()
            )));
        }
        let (h, w, c) = (t.dims[0] as usize, t.dims[1] as usize, t.dims[2] as usize);
        let l = t.half_support as usize;
        if c != Self::raw_channels(l) {
            return Err(Error::TensorFormat(format!(
                "channel count {} disagrees with header half-support {} (expected {})",
                c,
                l,
                Self::raw_channels(l)
            )));
        }
        let k = 2 * l + 2;
        let mut lane_prob = Vec::with_capacity(h * w);
        let mut up = Vec::with_capacity(h * w * k);
        let mut down = Vec::with_capacity(h * w * k);
        for px in 0..h * w {
            let slice = &t.values[px * c..(px + 1) * c];
            lane_prob.push(slice[0] as f64);
            up.extend(slice[1..1 + k].iter().map(|&v| v as f64));
            down.extend(slice[1 + k..].iter().map(|&v| v as f64));
        }
        Self::from_probabilities(ImageSize::new(h, w), l, lane_prob, up, down)
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_into(logits: &[f64], out: &mut Vec<f64>) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let start = out.len();
    let mut sum = 0.0;
    for &x in logits {
        let e = (x - max).exp();
        sum += e;
        out.push(e);
    }
    for v in &mut out[start..] {
        *v /= sum;
    }
}
