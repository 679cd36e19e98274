//! Training targets: binary lane mask plus per-pixel step classes.
//!
//! Besides the rasterized annotation itself, targets are written at pixels
//! offset from the lane by gaussian noise, pointing back at the annotated
//! lane in the adjacent row. That teaches the decoder to recover from its
//! own drift when it conditions on its own output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::AnnotationSet;
use crate::heads::{ClassIndex, HeadField};
use crate::tensor::TensorData;
use crate::{Error, ImageSize, Result};

/// Marker for pixels that carry no step supervision.
pub const IGNORE: i32 = -1;

/// Supervision for one image: lane mask plus step-class grids for both
/// directions, `IGNORE` where unsupervised.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    pub image_id: String,
    pub size: ImageSize,
    pub half_support: usize,
    pub mask: Vec<u8>,
    pub up_idx: Vec<i32>,
    pub down_idx: Vec<i32>,
}

/// Gaussian denoising perturbation parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PerturbConfig {
    /// Noise standard deviation in pixels.
    pub noise_std: f64,
    /// Perturbed replicas written per lane (the unperturbed copy is always
    /// written, last).
    pub copies: u32,
    pub half_support: usize,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self {
            noise_std: 2.0,
            copies: 2,
            half_support: 6,
        }
    }
}

impl TargetSet {
    pub fn end_class(&self) -> i32 {
        (2 * self.half_support + 1) as i32
    }

    /// Number of supervised step entries across both direction grids.
    pub fn supervised_count(&self) -> usize {
        self.up_idx.iter().filter(|&&v| v != IGNORE).count()
            + self.down_idx.iter().filter(|&&v| v != IGNORE).count()
    }

    /// Packs mask and index grids as `(h, w, [mask, up, down])` f32 channels,
    /// `IGNORE` stored as -1.
    pub fn to_tensor(&self) -> TensorData {
        let mut values = Vec::with_capacity(self.size.pixels() * 3);
        for px in 0..self.size.pixels() {
            values.push(self.mask[px] as f32);
            values.push(self.up_idx[px] as f32);
            values.push(self.down_idx[px] as f32);
        }
        TensorData::new(
            vec![self.size.height as u32, self.size.width as u32, 3],
            self.half_support as u32,
            values,
        )
        .expect("dims match by construction")
    }

    pub fn from_tensor(t: &TensorData, image_id: impl Into<String>) -> Result<Self> {
        if t.dims.len() != 3 || t.dims[2] != 3 {
            return Err(Error::TensorFormat(
                "target tensor must be H x W x 3".into(),
            ));
        }
        let size = ImageSize::new(t.dims[0] as usize, t.dims[1] as usize);
        let l = t.half_support as usize;
        let max_class = (2 * l + 1) as i32;
        let mut mask = Vec::with_capacity(size.pixels());
        let mut up_idx = Vec::with_capacity(size.pixels());
        let mut down_idx = Vec::with_capacity(size.pixels());
        for px in 0..size.pixels() {
            mask.push(t.values[px * 3] as u8);
            for (v, grid) in [(t.values[px * 3 + 1], &mut up_idx), (t.values[px * 3 + 2], &mut down_idx)] {
                let idx = v as i32;
                if idx != IGNORE && !(0..=max_class).contains(&idx) {
                    return Err(Error::TensorFormat(format!(
                        "step class {idx} out of range for half-support {l}"
                    )));
                }
                grid.push(idx);
            }
        }
        Ok(Self {
            image_id: image_id.into(),
            size,
            half_support: l,
            mask,
            up_idx,
            down_idx,
        })
    }
}

/// Builds supervision for one annotated image.
///
/// The mask is the 1-pixel-wide rasterization of every lane. Step targets
/// are written at `copies` noise-offset replicas of every lane point
/// (`s = floor(N(0.5, sigma))` per point) and then at the unperturbed points,
/// so true-lane pixels always carry true-lane targets. Offsets from the
/// perturbed pixel to the annotated lane in the adjacent row are clamped to
/// the categorical support.
pub fn build_targets(ann: &AnnotationSet, cfg: &PerturbConfig, rng_seed: u64) -> TargetSet {
    let size = ann.image_size;
    let l = cfg.half_support;
    let end = (2 * l + 1) as i32;
    let mut mask = vec![0u8; size.pixels()];
    let mut up_idx = vec![IGNORE; size.pixels()];
    let mut down_idx = vec![IGNORE; size.pixels()];

    for lane in &ann.lanes {
        for p in lane.points() {
            let col = p.w.round() as usize;
            mask[p.h as usize * size.width + col] = 1;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let w_max = (size.width - 1) as i64;

    let mut write = |lane: &crate::geometry::Polyline, shift: Option<&mut dyn FnMut() -> i64>,
                     up_idx: &mut [i32], down_idx: &mut [i32]| {
        let pts = lane.points();
        let mut shift = shift;
        for (i, p) in pts.iter().enumerate() {
            let s = match shift.as_deref_mut() {
                Some(f) => f(),
                None => 0,
            };
            let col = (p.w.round() as i64 + s).clamp(0, w_max);
            let at = p.h as usize * size.width + col as usize;
            let up = if i + 1 == pts.len() {
                end
            } else {
                let dw = (pts[i + 1].w.round() as i64 - col).clamp(-(l as i64), l as i64);
                (dw + l as i64) as i32
            };
            let down = if i == 0 {
                end
            } else {
                let dw = (pts[i - 1].w.round() as i64 - col).clamp(-(l as i64), l as i64);
                (dw + l as i64) as i32
            };
            up_idx[at] = up;
            down_idx[at] = down;
        }
    };

    if cfg.noise_std > 0.0 {
        let normal = Normal::new(0.5, cfg.noise_std).expect("sigma validated nonnegative");
        for lane in &ann.lanes {
            for _ in 0..cfg.copies {
                let mut draw = || normal.sample(&mut rng).floor() as i64;
                write(lane, Some(&mut draw), &mut up_idx, &mut down_idx);
            }
        }
    } else {
        // floor(N(0.5, 0)) = 0: replicas coincide with the unperturbed pass.
        for lane in &ann.lanes {
            for _ in 0..cfg.copies {
                write(lane, None, &mut up_idx, &mut down_idx);
            }
        }
    }
    for lane in &ann.lanes {
        write(lane, None, &mut up_idx, &mut down_idx);
    }

    TargetSet {
        image_id: ann.image_id.clone(),
        size,
        half_support: l,
        mask,
        up_idx,
        down_idx,
    }
}

/// Builds an ideal field from ground truth: lane likelihood 1 on lanes and 0
/// elsewhere, point-mass step categoricals along each lane, end tokens at
/// lane endpoints and everywhere off-lane.
///
/// Decoding such a field recovers the (rounded) annotation exactly, which
/// makes it the reference oracle for decoder tests.
pub fn oracle_field(ann: &AnnotationSet, l: usize) -> Result<HeadField> {
    let size = ann.image_size;
    let k = 2 * l + 2;
    let end = 2 * l + 1;
    let mut lane_prob = vec![0.0; size.pixels()];
    let mut up = vec![0.0; size.pixels() * k];
    let mut down = vec![0.0; size.pixels() * k];
    // Default everything to a point mass on the end token.
    for px in 0..size.pixels() {
        up[px * k + end] = 1.0;
        down[px * k + end] = 1.0;
    }

    let mut set = |grid: &mut [f64], px: usize, class: ClassIndex| {
        let base = px * k;
        for v in &mut grid[base..base + k] {
            *v = 0.0;
        }
        grid[base + class.0] = 1.0;
    };

    for lane in &ann.lanes {
        let pts = lane.points();
        let cols: Vec<i64> = pts.iter().map(|p| p.w.round() as i64).collect();
        for step in cols.windows(2) {
            let dw = step[1] - step[0];
            if dw.unsigned_abs() as usize > l {
                return Err(Error::UnsupportedSlope(dw, l));
            }
        }
        for (i, p) in pts.iter().enumerate() {
            let px = p.h as usize * size.width + cols[i] as usize;
            lane_prob[px] = 1.0;
            let up_class = if i + 1 == pts.len() {
                ClassIndex::end(l)
            } else {
                ClassIndex::from_dw(cols[i + 1] - cols[i], l)?
            };
            let down_class = if i == 0 {
                ClassIndex::end(l)
            } else {
                ClassIndex::from_dw(cols[i - 1] - cols[i], l)?
            };
            set(&mut up, px, up_class);
            set(&mut down, px, down_class);
        }
    }

    HeadField::from_probabilities(size, l, lane_prob, up, down)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{LanePoint, Polyline};

    fn vertical_lane(h0: u32, n: usize, w: f64, size: ImageSize) -> Polyline {
        let pts = (0..n)
            .map(|i| LanePoint {
                h: h0 + i as u32,
                w,
            })
            .collect();
        Polyline::new(pts, size).unwrap()
    }

    fn ann(lanes: Vec<Polyline>, size: ImageSize) -> AnnotationSet {
        AnnotationSet::new("t", size, lanes)
    }

    #[test]
    fn zero_sigma_matches_unperturbed() {
        let size = ImageSize::new(8, 16);
        let a = ann(vec![vertical_lane(1, 5, 7.0, size)], size);
        let cfg = PerturbConfig {
            noise_std: 0.0,
            copies: 1,
            half_support: 6,
        };
        let with_copies = build_targets(&a, &cfg, 3);
        let plain = build_targets(
            &a,
            &PerturbConfig {
                copies: 0,
                ..cfg
            },
            99,
        );
        assert_eq!(with_copies, plain);
    }

    #[test]
    fn straight_lane_targets() {
        let size = ImageSize::new(8, 16);
        let a = ann(vec![vertical_lane(0, 4, 4.0, size)], size);
        let cfg = PerturbConfig {
            noise_std: 0.0,
            copies: 0,
            half_support: 6,
        };
        let t = build_targets(&a, &cfg, 0);
        let l = 6i32;
        for h in 0..3 {
            assert_eq!(t.up_idx[h * 16 + 4], l, "rows below the top point straight up");
        }
        assert_eq!(t.up_idx[3 * 16 + 4], t.end_class());
        assert_eq!(t.down_idx[0 * 16 + 4], t.end_class());
        for h in 1..4 {
            assert_eq!(t.down_idx[h * 16 + 4], l);
        }
        assert_eq!(t.mask.iter().map(|&m| m as usize).sum::<usize>(), 4);
    }

    #[test]
    fn perturbed_pixel_points_back() {
        // Vertical lane at w; a pixel displaced +3 must store step -3.
        let size = ImageSize::new(8, 16);
        let lane = vertical_lane(2, 3, 8.0, size);
        let l = 6usize;
        let mut up_idx = vec![IGNORE; size.pixels()];
        let mut down_idx = vec![IGNORE; size.pixels()];
        // Reproduce the write rule by hand for the displaced point i=1.
        let w_prime = 8 + 3;
        let dw_up = 8 - w_prime; // next row's lane column minus perturbed column
        assert_eq!(dw_up, -3);
        // And confirm build_targets produces that class when the draw is +3:
        // with sigma=0 we cannot force s=3, so emulate by shifting the lane.
        let a = ann(vec![lane], size);
        let t = build_targets(
            &a,
            &PerturbConfig {
                noise_std: 0.0,
                copies: 0,
                half_support: l,
            },
            0,
        );
        // Unperturbed sanity first.
        assert_eq!(t.up_idx[3 * 16 + 8], (0 + l as i32), "straight lane stores class L");
        // Now a real perturbed build with a seed that produces offsets; every
        // supervised off-lane pixel must point back to the lane column.
        let t = build_targets(
            &a,
            &PerturbConfig {
                noise_std: 2.0,
                copies: 4,
                half_support: l,
            },
            7,
        );
        for h in 2..4usize {
            for w in 0..16usize {
                let cls = t.up_idx[h * 16 + w];
                if cls == IGNORE || cls == t.end_class() {
                    continue;
                }
                let dw = cls as i64 - l as i64;
                let unclamped = 8 - w as i64;
                if unclamped.unsigned_abs() as usize <= l {
                    assert_eq!(dw, unclamped, "pixel ({h},{w}) must snap back to the lane");
                    assert_eq!(w as i64 + dw, 8);
                } else {
                    assert_eq!(dw, unclamped.clamp(-(l as i64), l as i64));
                }
            }
        }
        let _ = (up_idx.pop(), down_idx.pop());
    }

    #[test]
    fn deterministic_given_seed() {
        let size = ImageSize::new(16, 24);
        let a = ann(vec![vertical_lane(0, 12, 10.0, size)], size);
        let cfg = PerturbConfig::default();
        assert_eq!(build_targets(&a, &cfg, 42), build_targets(&a, &cfg, 42));
        assert_ne!(build_targets(&a, &cfg, 42), build_targets(&a, &cfg, 43));
    }

    #[test]
    fn true_lane_pixels_keep_true_targets() {
        let size = ImageSize::new(16, 24);
        let a = ann(vec![vertical_lane(2, 10, 12.0, size)], size);
        let cfg = PerturbConfig {
            noise_std: 3.0,
            copies: 8,
            half_support: 6,
        };
        let t = build_targets(&a, &cfg, 11);
        for i in 0..10usize {
            let h = 2 + i;
            let px = h * 24 + 12;
            let expect_up = if i == 9 { t.end_class() } else { 6 };
            let expect_down = if i == 0 { t.end_class() } else { 6 };
            assert_eq!(t.up_idx[px], expect_up);
            assert_eq!(t.down_idx[px], expect_down);
        }
    }

    #[test]
    fn all_written_classes_are_valid() {
        let size = ImageSize::new(32, 32);
        let pts: Vec<LanePoint> = (0..20)
            .map(|i| LanePoint {
                h: i as u32 + 3,
                w: (5.0 + 1.2 * i as f64).min(31.0),
            })
            .collect();
        let lane = Polyline::new(pts, size).unwrap();
        let a = ann(vec![lane], size);
        let t = build_targets(&a, &PerturbConfig::default(), 5);
        let max = t.end_class();
        for grid in [&t.up_idx, &t.down_idx] {
            for &v in grid.iter() {
                assert!(v == IGNORE || (0..=max).contains(&v));
            }
        }
    }

    #[test]
    fn mask_counts_deduplicated_points() {
        let size = ImageSize::new(8, 8);
        // Two lanes crossing the same pixel at (4, 3).
        let a = Polyline::new(
            vec![LanePoint { h: 3, w: 3.0 }, LanePoint { h: 4, w: 3.0 }],
            size,
        )
        .unwrap();
        let b = Polyline::new(
            vec![LanePoint { h: 4, w: 3.2 }, LanePoint { h: 5, w: 4.0 }],
            size,
        )
        .unwrap();
        let t = build_targets(
            &ann(vec![a, b], size),
            &PerturbConfig {
                noise_std: 0.0,
                copies: 0,
                half_support: 6,
            },
            0,
        );
        let count: usize = t.mask.iter().map(|&m| m as usize).sum();
        assert_eq!(count, 3, "(3,3), (4,3) shared, (5,4)");
    }

    #[test]
    fn oracle_rejects_steep_steps() {
        let size = ImageSize::new(8, 32);
        let lane = Polyline::new(
            vec![
                LanePoint { h: 0, w: 2.0 },
                LanePoint { h: 1, w: 10.0 },
                LanePoint { h: 2, w: 11.0 },
            ],
            size,
        )
        .unwrap();
        let a = ann(vec![lane], size);
        assert!(matches!(
            oracle_field(&a, 6),
            Err(Error::UnsupportedSlope(8, 6))
        ));
        assert!(oracle_field(&a, 8).is_ok());
    }

    #[test]
    fn target_tensor_round_trip() {
        let size = ImageSize::new(8, 16);
        let a = ann(vec![vertical_lane(1, 6, 9.0, size)], size);
        let t = build_targets(&a, &PerturbConfig::default(), 2);
        let back = TargetSet::from_tensor(&t.to_tensor(), "t").unwrap();
        assert_eq!(t, back);
    }
}
