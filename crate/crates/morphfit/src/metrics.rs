//! Evaluation metrics: shift-searched zero-mean normalized cross-correlation
//! between image regions, rigid-parameter RMSE for the benchmark, and
//! per-landmark displacement traces.

use crate::error::{Error, Result};
use crate::geometry::{geodesic_angle, RigidSimilarity, Vec3};
use crate::warp::PixelImage;

/// Region geometry and search window of the correlation score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZnccConfig {
    /// Region width in pixels.
    pub region_width: usize,
    /// Region height in pixels.
    pub region_height: usize,
    /// Shifts searched exhaustively in `[-max_shift, max_shift]` on both axes.
    pub max_shift: i64,
}

impl Default for ZnccConfig {
    fn default() -> Self {
        Self {
            region_width: 48,
            region_height: 48,
            max_shift: 8,
        }
    }
}

impl ZnccConfig {
    pub fn validate(&self) -> Result<()> {
        if self.region_width < 3 || self.region_height < 3 {
            return Err(Error::ParameterRange {
                name: "zncc region".into(),
                message: "region sides must be >= 3".into(),
            });
        }
        if self.max_shift < 0 {
            return Err(Error::ParameterRange {
                name: "zncc max_shift".into(),
                message: "must be >= 0".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZnccScore {
    /// Raw correlation clamped to `[0, 1]`.
    pub score: f64,
    /// Unclamped correlation at the best shift, in `[-1, 1]`.
    pub raw: f64,
    pub shift: (i64, i64),
}

/// Maximizes the zero-mean normalized cross-correlation between the region
/// of `reference` centered at `center` and same-sized regions of `target`
/// shifted by up to `max_shift` pixels. Masked-empty pixels are excluded
/// pairwise; a zero-variance pairing scores 0 (uninformative) rather than
/// erroring. An optional scale factor (from caller-side size normalization
/// between the two images) resamples the target region by nearest pixel.
pub fn zncc_score(
    reference: &PixelImage,
    target: &PixelImage,
    center: (i64, i64),
    config: &ZnccConfig,
    target_scale: f64,
) -> Result<ZnccScore> {
    config.validate()?;
    if reference.channels != 1 || target.channels != 1 {
        return Err(Error::ParameterRange {
            name: "zncc images".into(),
            message: "grayscale input required".into(),
        });
    }
    if !(target_scale > 0.0 && target_scale.is_finite()) {
        return Err(Error::ParameterRange {
            name: "zncc target_scale".into(),
            message: "must be positive and finite".into(),
        });
    }
    let hw = config.region_width as i64;
    let hv = config.region_height as i64;
    let x0 = center.0 - hw / 2;
    let y0 = center.1 - hv / 2;
    let d = config.max_shift;

    let ref_in_bounds =
        x0 >= 0 && y0 >= 0 && x0 + hw <= reference.width as i64 && y0 + hv <= reference.height as i64;
    if !ref_in_bounds {
        return Err(Error::RegionOutOfBounds);
    }
    // Target bounds must hold for every searched shift. Sampling offsets
    // scale around the region center, so check the extreme offsets exactly.
    let scaled = |offset: i64| (offset as f64 * target_scale).round() as i64;
    let t_ok = center.0 - d + scaled(x0 - center.0) >= 0
        && center.1 - d + scaled(y0 - center.1) >= 0
        && center.0 + d + scaled(x0 + hw - 1 - center.0) < target.width as i64
        && center.1 + d + scaled(y0 + hv - 1 - center.1) < target.height as i64;
    if !t_ok {
        return Err(Error::RegionOutOfBounds);
    }

    let mut best: Option<ZnccScore> = None;
    for dv in -d..=d {
        for dh in -d..=d {
            let raw = correlation_at(reference, target, (x0, y0), center, (dh, dv), config, target_scale);
            let candidate = ZnccScore {
                score: raw.max(0.0),
                raw,
                shift: (dh, dv),
            };
            let better = match &best {
                None => true,
                Some(b) => raw > b.raw,
            };
            if better {
                best = Some(candidate);
            }
        }
    }
    Ok(best.expect("search window is nonempty"))
}

fn correlation_at(
    reference: &PixelImage,
    target: &PixelImage,
    origin: (i64, i64),
    center: (i64, i64),
    shift: (i64, i64),
    config: &ZnccConfig,
    target_scale: f64,
) -> f64 {
    let mut n = 0.0;
    let mut sf = 0.0;
    let mut st = 0.0;
    let mut sff = 0.0;
    let mut stt = 0.0;
    let mut sft = 0.0;
    let hw = config.region_width as i64;
    let hv = config.region_height as i64;
    for v in 0..hv {
        for u in 0..hw {
            let rx = origin.0 + u;
            let ry = origin.1 + v;
            if reference.is_empty_at(rx as usize, ry as usize) {
                continue;
            }
            // offsets from the region center, scaled for the target sample
            let du = rx - center.0;
            let dv_off = ry - center.1;
            let tx = center.0 + shift.0 + (du as f64 * target_scale).round() as i64;
            let ty = center.1 + shift.1 + (dv_off as f64 * target_scale).round() as i64;
            if tx < 0 || ty < 0 || tx >= target.width as i64 || ty >= target.height as i64 {
                continue;
            }
            if target.is_empty_at(tx as usize, ty as usize) {
                continue;
            }
            let f = reference.pixel(rx as usize, ry as usize)[0] as f64;
            let t = target.pixel(tx as usize, ty as usize)[0] as f64;
            n += 1.0;
            sf += f;
            st += t;
            sff += f * f;
            stt += t * t;
            sft += f * t;
        }
    }
    if n < 2.0 {
        return 0.0;
    }
    let var_f = sff / n - (sf / n) * (sf / n);
    let var_t = stt / n - (st / n) * (st / n);
    if var_f <= 0.0 || var_t <= 0.0 {
        return 0.0;
    }
    let cov = sft / n - (sf / n) * (st / n);
    (cov / (var_f * var_t).sqrt()).clamp(-1.0, 1.0)
}

/// Per-pose-pair error: geodesic rotation angle, absolute scale difference,
/// translation distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidError {
    pub rotation: f64,
    pub scale: f64,
    pub translation: f64,
}

impl RigidError {
    pub fn between(estimate: &RigidSimilarity, truth: &RigidSimilarity) -> Self {
        Self {
            rotation: geodesic_angle(&estimate.rotation, &truth.rotation),
            scale: (estimate.scale - truth.scale).abs(),
            translation: (estimate.translation - truth.translation).norm(),
        }
    }
}

/// Root-mean-square error per rigid component over paired pose lists.
pub fn rigid_rmse(estimates: &[RigidSimilarity], truths: &[RigidSimilarity]) -> Result<RigidError> {
    if estimates.len() != truths.len() {
        return Err(Error::LengthMismatch(estimates.len(), truths.len()));
    }
    if estimates.is_empty() {
        return Ok(RigidError {
            rotation: 0.0,
            scale: 0.0,
            translation: 0.0,
        });
    }
    let n = estimates.len() as f64;
    let mut rot = 0.0;
    let mut scale = 0.0;
    let mut trans = 0.0;
    for (e, t) in estimates.iter().zip(truths) {
        let err = RigidError::between(e, t);
        rot += err.rotation * err.rotation;
        scale += err.scale * err.scale;
        trans += err.translation * err.translation;
    }
    Ok(RigidError {
        rotation: (rot / n).sqrt(),
        scale: (scale / n).sqrt(),
        translation: (trans / n).sqrt(),
    })
}

/// Axis selector for displacement traces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    fn component(self, p: &Vec3) -> f64 {
        match self {
            Axis::X => p.x,
            Axis::Y => p.y,
            Axis::Z => p.z,
        }
    }
}

/// Per-frame displacement of one landmark coordinate relative to the first
/// frame.
pub fn landmark_displacement_trace(
    frames: &[Vec<Vec3>],
    landmark: usize,
    axis: Axis,
) -> Result<Vec<f64>> {
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    for f in frames {
        if landmark >= f.len() {
            return Err(Error::VertexOutOfRange {
                index: landmark,
                n: f.len(),
            });
        }
    }
    let base = axis.component(&frames[0][landmark]);
    Ok(frames
        .iter()
        .map(|f| axis.component(&f[landmark]) - base)
        .collect())
}
