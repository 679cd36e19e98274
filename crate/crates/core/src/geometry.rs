//! Lane polylines: one vertex per image row, width as a real column.
//!
//! A lane is a function of the vertical axis, sampled at consecutive integer
//! rows. All geometry here is pure and sub-pixel; rounding to integer columns
//! happens later, at target construction and rasterization.

use serde::{Deserialize, Serialize};

use crate::{Error, ImageSize, Result};

/// One polyline vertex: integer row, real column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanePoint {
    pub h: u32,
    pub w: f64,
}

/// A lane as unit-row-step samples. Rows increase by exactly one between
/// consecutive points, columns are clamped to the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    points: Vec<LanePoint>,
}

impl Polyline {
    /// Validates the unit-step/row-range/column-range invariants.
    pub fn new(points: Vec<LanePoint>, size: ImageSize) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidAnnotation(format!(
                "polyline needs at least 2 points, got {}",
                points.len()
            )));
        }
        for pair in points.windows(2) {
            if pair[1].h != pair[0].h + 1 {
                return Err(Error::InvalidAnnotation(format!(
                    "rows must increase by 1, got {} then {}",
                    pair[0].h, pair[1].h
                )));
            }
        }
        for p in &points {
            if p.h as usize >= size.height {
                return Err(Error::InvalidAnnotation(format!(
                    "row {} outside image height {}",
                    p.h, size.height
                )));
            }
            if !p.w.is_finite() || p.w < 0.0 || p.w > (size.width - 1) as f64 {
                return Err(Error::InvalidAnnotation(format!(
                    "column {} outside [0, {}]",
                    p.w,
                    size.width - 1
                )));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[LanePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// First (lowest) row of the lane.
    pub fn start_row(&self) -> u32 {
        self.points[0].h
    }

    /// Last (highest) row of the lane.
    pub fn end_row(&self) -> u32 {
        self.points[self.points.len() - 1].h
    }

    /// Column at row `h`, if the lane covers that row.
    pub fn w_at(&self, h: u32) -> Option<f64> {
        if h < self.start_row() || h > self.end_row() {
            return None;
        }
        Some(self.points[(h - self.start_row()) as usize].w)
    }

    /// Rounded integer column at row `h`.
    pub fn col_at(&self, h: u32) -> Option<i64> {
        self.w_at(h).map(|w| w.round() as i64)
    }
}

/// Ground truth for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub image_id: String,
    pub image_size: ImageSize,
    pub lanes: Vec<Polyline>,
}

impl AnnotationSet {
    pub fn new(image_id: impl Into<String>, image_size: ImageSize, lanes: Vec<Polyline>) -> Self {
        Self {
            image_id: image_id.into(),
            image_size,
            lanes,
        }
    }

    /// Total number of annotated points across all lanes.
    pub fn point_count(&self) -> usize {
        self.lanes.iter().map(Polyline::len).sum()
    }
}

/// Which coordinate an affine annotation adjustment applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AffineAxis {
    /// Transform columns: `w' = m*w + b`. The default reading.
    Width,
    /// Transform rows: `h' = m*h + b`, then resample back to unit rows.
    Height,
}

/// Resamples raw `(h, w)` samples onto every integer row they span.
///
/// `h` may be real and may run in either direction but must be strictly
/// monotone. Columns are linearly interpolated and clamped to the image;
/// rows outside the image are dropped.
pub fn resample_unit_rows(raw: &[(f64, f64)], size: ImageSize) -> Result<Polyline> {
    if raw.len() < 2 {
        return Err(Error::InvalidAnnotation(format!(
            "need at least 2 raw points, got {}",
            raw.len()
        )));
    }
    let ascending = raw[0].0 < raw[1].0;
    let mut pts: Vec<(f64, f64)> = raw.to_vec();
    if !ascending {
        pts.reverse();
    }
    for pair in pts.windows(2) {
        if !(pair[1].0 > pair[0].0) {
            return Err(Error::InvalidAnnotation(
                "row samples must be strictly monotone".into(),
            ));
        }
    }

    let w_max = (size.width - 1) as f64;
    let row_lo = pts[0].0.ceil().max(0.0) as i64;
    let row_hi = (pts[pts.len() - 1].0.floor()).min((size.height - 1) as f64) as i64;
    if pts[pts.len() - 1].0 < 0.0 || pts[0].0 > (size.height - 1) as f64 || row_hi < row_lo + 1 {
        return Err(Error::InvalidAnnotation(
            "annotation spans fewer than 2 integer rows inside the image".into(),
        ));
    }

    let mut out = Vec::with_capacity((row_hi - row_lo + 1) as usize);
    let mut seg = 0usize;
    for row in row_lo..=row_hi {
        let h = row as f64;
        while seg + 2 < pts.len() && pts[seg + 1].0 < h {
            seg += 1;
        }
        let (h0, w0) = pts[seg];
        let (h1, w1) = pts[seg + 1];
        let t = (h - h0) / (h1 - h0);
        let w = w0 + t * (w1 - w0);
        out.push(LanePoint {
            h: row as u32,
            w: w.clamp(0.0, w_max),
        });
    }
    Polyline::new(out, size)
}

/// Applies a single affine map `x' = m*x + b` to one coordinate of a lane,
/// re-clamps and re-validates. `m` must be nonzero.
pub fn affine_adjust(
    lane: &Polyline,
    m: f64,
    b: f64,
    size: ImageSize,
    axis: AffineAxis,
) -> Result<Polyline> {
    if m == 0.0 || !m.is_finite() || !b.is_finite() {
        return Err(Error::DegenerateTransform);
    }
    match axis {
        AffineAxis::Width => {
            let w_max = (size.width - 1) as f64;
            let points = lane
                .points()
                .iter()
                .map(|p| LanePoint {
                    h: p.h,
                    w: (m * p.w + b).clamp(0.0, w_max),
                })
                .collect();
            Polyline::new(points, size)
        }
        AffineAxis::Height => {
            let raw: Vec<(f64, f64)> = lane
                .points()
                .iter()
                .map(|p| (m * p.h as f64 + b, p.w))
                .collect();
            resample_unit_rows(&raw, size)
        }
    }
}
