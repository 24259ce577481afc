//! Similarity-transform arithmetic and the closed-form weighted absolute
//! orientation solver used for initialization and as a benchmark baseline.

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Quat = UnitQuaternion<f64>;

/// Rigid similarity transform `p -> scale * R * p + translation`.
///
/// The quaternion is kept sign-canonical (w >= 0) so that poses compare
/// predictably despite the double cover of SO(3).
#[derive(Debug, Clone, PartialEq)]
pub struct RigidSimilarity {
    pub scale: f64,
    pub rotation: Quat,
    pub translation: Vec3,
}

impl RigidSimilarity {
    pub fn new(scale: f64, rotation: Quat, translation: Vec3) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidScale(scale));
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidScale(f64::NAN));
        }
        Ok(Self {
            scale,
            rotation: canonical_quat(rotation),
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: Quat::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Applies `scale * R * p + translation`.
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.scale * (self.rotation * p) + self.translation
    }

    /// Inverse transform: scale' = 1/scale, R' = R^T, T' = -R^T T / scale.
    pub fn inverse(&self) -> Result<Self> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidScale(self.scale));
        }
        let inv_rot = self.rotation.inverse();
        let inv_scale = 1.0 / self.scale;
        Self::new(inv_scale, inv_rot, -inv_scale * (inv_rot * self.translation))
    }

    /// Composition `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            scale: self.scale * other.scale,
            rotation: canonical_quat(self.rotation * other.rotation),
            translation: self.scale * (self.rotation * other.translation) + self.translation,
        }
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        self.rotation.to_rotation_matrix().into_inner()
    }
}

/// Flips the quaternion sign so that w >= 0 (both signs encode the same
/// rotation).
pub fn canonical_quat(q: Quat) -> Quat {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// Geodesic angle between two rotations, in radians. Invariant to the
/// quaternion sign ambiguity; the atan2 form stays accurate near zero.
pub fn geodesic_angle(a: &Quat, b: &Quat) -> f64 {
    let rel = a.inverse() * b;
    2.0 * rel.imag().norm().atan2(rel.w.abs())
}

/// Weighted closed-form absolute orientation: finds the similarity transform
/// minimizing the weighted squared error `sum_i w_i |dst_i - (s R src_i + T)|^2`.
///
/// The rotation comes from the principal eigenvector of the 4x4 quaternion
/// profile matrix; the scale is the symmetric ratio of weighted variances.
pub fn horn_absolute_orientation(
    src: &[Vec3],
    dst: &[Vec3],
    weights: &[f64],
) -> Result<RigidSimilarity> {
    if src.len() != dst.len() {
        return Err(Error::LengthMismatch(src.len(), dst.len()));
    }
    if src.len() != weights.len() {
        return Err(Error::LengthMismatch(src.len(), weights.len()));
    }
    if src.len() < 3 {
        return Err(Error::TooFewPoints {
            min: 3,
            got: src.len(),
        });
    }
    let wsum: f64 = weights.iter().sum();
    if weights.iter().any(|&w| !(w.is_finite() && w >= 0.0)) || wsum <= 0.0 {
        return Err(Error::InvalidWeights);
    }

    let (src_c, dst_c) = weighted_centroids(src, dst, weights, wsum);
    let src_dev: Vec<Vec3> = src.iter().map(|p| p - src_c).collect();
    let dst_dev: Vec<Vec3> = dst.iter().map(|p| p - dst_c).collect();

    let rotation = horn_rotation(&src_dev, &dst_dev, weights)?;

    let num: f64 = dst_dev
        .iter()
        .zip(weights)
        .map(|(d, &w)| w * d.norm_squared())
        .sum();
    let den: f64 = src_dev
        .iter()
        .zip(weights)
        .map(|(s, &w)| w * s.norm_squared())
        .sum();
    if den <= 0.0 {
        return Err(Error::DegenerateConfiguration);
    }
    let scale = (num / den).sqrt();
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::DegenerateConfiguration);
    }

    let translation = dst_c - scale * (rotation * src_c);
    RigidSimilarity::new(scale, rotation, translation)
}

pub(crate) fn weighted_centroids(
    src: &[Vec3],
    dst: &[Vec3],
    weights: &[f64],
    wsum: f64,
) -> (Vec3, Vec3) {
    let mut sc = Vec3::zeros();
    let mut dc = Vec3::zeros();
    for ((s, d), &w) in src.iter().zip(dst).zip(weights) {
        sc += w * s;
        dc += w * d;
    }
    (sc / wsum, dc / wsum)
}

/// Optimal rotation of `src_dev` onto `dst_dev` (both already centered) by
/// the quaternion eigenvalue method.
pub(crate) fn horn_rotation(src_dev: &[Vec3], dst_dev: &[Vec3], weights: &[f64]) -> Result<Quat> {
    let mut m = Mat3::zeros();
    for ((s, d), &w) in src_dev.iter().zip(dst_dev).zip(weights) {
        m += w * s * d.transpose();
    }

    // Rank check on the source scatter: collinear or coincident points leave
    // the rotation underdetermined.
    let mut scatter = Mat3::zeros();
    for (s, &w) in src_dev.iter().zip(weights) {
        scatter += w * s * s.transpose();
    }
    let eig = scatter.symmetric_eigen();
    let mut evs: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    evs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if evs[0] <= 0.0 || evs[1] <= 1e-12 * evs[0] {
        return Err(Error::DegenerateConfiguration);
    }

    let (sxx, sxy, sxz) = (m[(0, 0)], m[(0, 1)], m[(0, 2)]);
    let (syx, syy, syz) = (m[(1, 0)], m[(1, 1)], m[(1, 2)]);
    let (szx, szy, szz) = (m[(2, 0)], m[(2, 1)], m[(2, 2)]);
    let n = Matrix4::new(
        sxx + syy + szz,
        syz - szy,
        szx - sxz,
        sxy - syx,
        syz - szy,
        sxx - syy - szz,
        sxy + syx,
        szx + sxz,
        szx - sxz,
        sxy + syx,
        -sxx + syy - szz,
        syz + szy,
        sxy - syx,
        szx + sxz,
        syz + szy,
        -sxx - syy + szz,
    );

    let eig = n.symmetric_eigen();
    let mut best = 0;
    for i in 1..4 {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let v = eig.eigenvectors.column(best);
    let q = Quaternion::new(v[0], v[1], v[2], v[3]);
    Ok(canonical_quat(UnitQuaternion::from_quaternion(q)))
}
