//! Robust estimation of rigid pose, noise covariance and shape deformation
//! under a generalized Student's-t error model, via expectation-conditional
//! maximization. Also provides the Gaussian (Gen-Horn) and Gaussian+uniform
//! mixture (GUM-EM) baselines used by the benchmark.

use nalgebra::{DMatrix, DVector, UnitQuaternion};

use crate::error::{Error, Result};
use crate::geometry::{
    canonical_quat, geodesic_angle, horn_rotation, weighted_centroids, Mat3, Quat,
    RigidSimilarity, Vec3,
};
use crate::shape::{ShapeEmbedding, ShapeModel};
use crate::special::{digamma, inv_digamma};

const GUM_PI_INIT: f64 = 0.9;
const SIGMA_ABS_FLOOR: f64 = 1e-12;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Parameters of the ECM solvers.
#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Weight of the embedding regularizer.
    pub kappa: f64,
    /// Convergence threshold on the largest parameter change per sweep.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Initial Gamma parameter of the Student weights.
    pub mu_init: f64,
    /// Step-size threshold of the inner rotation solver.
    pub rotation_tol: f64,
    /// Support volume of the uniform outlier component (GUM-EM only);
    /// `None` derives it from the target bounding box inflated 1.5x per axis.
    pub gum_volume: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            epsilon: 1e-6,
            max_iters: 100,
            mu_init: 1.0,
            rotation_tol: 1e-12,
            gum_volume: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::ParameterRange {
                name: "epsilon".into(),
                message: "must be > 0".into(),
            });
        }
        if self.max_iters < 1 {
            return Err(Error::ParameterRange {
                name: "max_iters".into(),
                message: "must be >= 1".into(),
            });
        }
        if !self.kappa.is_finite() || self.kappa < 0.0 {
            return Err(Error::ParameterRange {
                name: "kappa".into(),
                message: "must be >= 0".into(),
            });
        }
        if !self.mu_init.is_finite() || self.mu_init <= 0.0 {
            return Err(Error::ParameterRange {
                name: "mu_init".into(),
                message: "must be > 0".into(),
            });
        }
        if !self.rotation_tol.is_finite() || self.rotation_tol <= 0.0 {
            return Err(Error::ParameterRange {
                name: "rotation_tol".into(),
                message: "must be > 0".into(),
            });
        }
        if let Some(vol) = self.gum_volume {
            if !vol.is_finite() || vol <= 0.0 {
                return Err(Error::ParameterRange {
                    name: "gum_volume".into(),
                    message: "must be > 0".into(),
                });
            }
        }
        Ok(())
    }
}

/// Full solver state: pose, shape embedding, residual covariance, Gamma
/// parameter and per-landmark posterior weights.
///
/// The Gamma posterior fields always satisfy `weights[j] = gamma_shape /
/// gamma_rates[j]` and `gamma_shape = mu + 3/2`; for the non-Student
/// estimators the rates are back-derived from the weights to keep that
/// relation.
#[derive(Debug, Clone)]
pub struct RobustFitState {
    pub pose: RigidSimilarity,
    pub embedding: ShapeEmbedding,
    pub sigma: Mat3,
    pub mu: f64,
    pub weights: Vec<f64>,
    pub gamma_shape: f64,
    pub gamma_rates: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub state: RobustFitState,
    /// Landmarks mapped through the recovered pose.
    pub frontalized: Vec<Vec3>,
    /// Number of ECM sweeps executed after initialization.
    pub iterations: usize,
    /// False when the sweep limit was reached before the parameter change
    /// dropped below `epsilon`; the result is still usable.
    pub converged: bool,
    pub objective: f64,
}

/// Inverts an SPD matrix via Cholesky, also returning log|sigma|.
fn spd_inverse(sigma: &Mat3) -> Result<(Mat3, f64)> {
    let chol = sigma.cholesky().ok_or(Error::NotPositiveDefinite)?;
    let l = chol.l();
    let logdet = 2.0 * (0..3).map(|i| l[(i, i)].ln()).sum::<f64>();
    Ok((chol.inverse(), logdet))
}

fn mahalanobis(e: &Vec3, sigma_inv: &Mat3) -> f64 {
    e.dot(&(sigma_inv * e))
}

/// Per-landmark fitting error `pose(x_j) - (U_j s + mean_j)`.
pub fn residual(
    model: &ShapeModel,
    j: usize,
    pose: &RigidSimilarity,
    s: &ShapeEmbedding,
    x_j: &Vec3,
) -> Vec3 {
    pose.apply(x_j) - model.decode_landmark(s, j)
}

/// E-step of the Student solver: Gamma posterior parameters and posterior
/// mean weights. `a = mu + 3/2`, `b_j = 1 + |e_j|^2_sigma / 2`,
/// `w_j = a / b_j`, with the Mahalanobis norm `e^T sigma^-1 e`.
pub fn estep_weights(
    residuals: &[Vec3],
    sigma: &Mat3,
    mu: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let (sigma_inv, _) = spd_inverse(sigma)?;
    let a = mu + 1.5;
    let mut rates = Vec::with_capacity(residuals.len());
    let mut weights = Vec::with_capacity(residuals.len());
    for e in residuals {
        let b = 1.0 + mahalanobis(e, &sigma_inv) / 2.0;
        rates.push(b);
        weights.push(a / b);
    }
    Ok((a, rates, weights))
}

/// Gamma-parameter update `mu = psi^-1(psi(a) - mean(log b_j))`, solved to
/// |psi(mu) - target| < 1e-12.
pub fn update_mu(a: f64, rates: &[f64]) -> f64 {
    let mean_log: f64 = rates.iter().map(|b| b.ln()).sum::<f64>() / rates.len() as f64;
    inv_digamma(digamma(a) - mean_log)
}

/// Quadratic coefficients of the centered rigid cost
/// `f(rho) = c_vv - 2 rho a_cross + rho^2 b_quad` at a fixed rotation.
fn scale_quadratic(
    x_dev: &[Vec3],
    v_dev: &[Vec3],
    weights: &[f64],
    sigma_inv: &Mat3,
    rotation: &Quat,
) -> (f64, f64, f64) {
    let mut a_cross = 0.0;
    let mut b_quad = 0.0;
    let mut c_vv = 0.0;
    for ((x, v), &w) in x_dev.iter().zip(v_dev).zip(weights) {
        let rx = rotation * x;
        let si_rx = sigma_inv * rx;
        a_cross += w * si_rx.dot(v);
        b_quad += w * si_rx.dot(&rx);
        c_vv += w * mahalanobis(v, sigma_inv);
    }
    (a_cross, b_quad, c_vv)
}

fn centered_cost(
    x_dev: &[Vec3],
    v_dev: &[Vec3],
    weights: &[f64],
    sigma_inv: &Mat3,
    rho: f64,
    rotation: &Quat,
) -> f64 {
    x_dev
        .iter()
        .zip(v_dev)
        .zip(weights)
        .map(|((x, v), &w)| {
            let r = v - rho * (rotation * x);
            w * mahalanobis(&r, sigma_inv)
        })
        .sum()
}

/// Rejects configurations where the weighted source scatter has rank < 2
/// (all significant weight on collinear or coincident points).
fn check_nondegenerate(x_dev: &[Vec3], weights: &[f64]) -> Result<()> {
    let mut scatter = Mat3::zeros();
    for (x, &w) in x_dev.iter().zip(weights) {
        scatter += w * x * x.transpose();
    }
    let eig = scatter.symmetric_eigen();
    let mut evs: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    evs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if evs[0] <= 0.0 || evs[1] <= 1e-12 * evs[0] {
        return Err(Error::DegenerateConfiguration);
    }
    Ok(())
}

/// Gauss-Newton refinement of the rotation over the unit quaternion, with
/// backtracking so the whitened cost never increases relative to the start.
fn refine_rotation(
    x_dev: &[Vec3],
    v_dev: &[Vec3],
    weights: &[f64],
    sigma_inv: &Mat3,
    rho: f64,
    start: Quat,
    tol: f64,
) -> Quat {
    let mut q = start;
    let mut cost = centered_cost(x_dev, v_dev, weights, sigma_inv, rho, &q);
    for _ in 0..50 {
        let mut h = Mat3::zeros();
        let mut g = Vec3::zeros();
        for ((x, v), &w) in x_dev.iter().zip(v_dev).zip(weights) {
            let m = rho * (q * x);
            let r = v - m;
            // Perturbing R <- exp([d]x) R gives r(d) = r + [m]x d.
            let a = m.cross_matrix();
            let si_a = sigma_inv * a;
            h += w * a.transpose() * si_a;
            g += w * si_a.transpose() * r;
        }
        let delta = match h.cholesky() {
            Some(chol) => -chol.solve(&g),
            None => {
                let damped = h + Mat3::identity() * (1e-12 * h.trace().max(1e-300));
                match damped.cholesky() {
                    Some(chol) => -chol.solve(&g),
                    None => break,
                }
            }
        };
        if !delta.iter().all(|c| c.is_finite()) || delta.norm() < tol {
            break;
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let q_try = canonical_quat(UnitQuaternion::from_scaled_axis(step * delta) * q);
            let cost_try = centered_cost(x_dev, v_dev, weights, sigma_inv, rho, &q_try);
            if cost_try <= cost {
                q = q_try;
                cost = cost_try;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted || step * delta.norm() < tol {
            break;
        }
    }
    q
}

/// Conditional rigid update: weighted centers, closed-form scale ratio,
/// rotation by constrained minimization of the whitened cost, then the
/// closed-form translation.
///
/// Without a warm start the rotation comes from the closed-form absolute
/// orientation solution (exact for isotropic covariance) before refinement.
/// The symmetric scale ratio is accepted only when it does not increase the
/// centered cost at the warm-start rotation; otherwise the exact conditional
/// least-squares scale is used, which keeps the ECM objective non-increasing.
pub fn mstep_rigid(
    x: &[Vec3],
    v: &[Vec3],
    weights: &[f64],
    sigma: &Mat3,
    warm: Option<&RigidSimilarity>,
    rotation_tol: f64,
) -> Result<RigidSimilarity> {
    if x.len() != v.len() {
        return Err(Error::LengthMismatch(x.len(), v.len()));
    }
    if x.len() != weights.len() {
        return Err(Error::LengthMismatch(x.len(), weights.len()));
    }
    let wsum: f64 = weights.iter().sum();
    if weights.iter().any(|&w| !(w.is_finite() && w >= 0.0)) || wsum <= 0.0 {
        return Err(Error::InvalidWeights);
    }
    let (sigma_inv, _) = spd_inverse(sigma)?;

    let (x_c, v_c) = weighted_centroids(x, v, weights, wsum);
    let x_dev: Vec<Vec3> = x.iter().map(|p| p - x_c).collect();
    let v_dev: Vec<Vec3> = v.iter().map(|p| p - v_c).collect();
    check_nondegenerate(&x_dev, weights)?;

    let (rho, rotation) = match warm {
        None => {
            let q0 = horn_rotation(&x_dev, &v_dev, weights)?;
            let (_, b_quad, c_vv) = scale_quadratic(&x_dev, &v_dev, weights, &sigma_inv, &q0);
            if b_quad <= 0.0 {
                return Err(Error::DegenerateConfiguration);
            }
            let rho = (c_vv / b_quad).sqrt();
            if !(rho.is_finite() && rho > 0.0) {
                return Err(Error::DegenerateConfiguration);
            }
            let q = refine_rotation(&x_dev, &v_dev, weights, &sigma_inv, rho, q0, rotation_tol);
            (rho, q)
        }
        Some(prev) => {
            let q0 = prev.rotation;
            let (a_cross, b_quad, c_vv) =
                scale_quadratic(&x_dev, &v_dev, weights, &sigma_inv, &q0);
            if b_quad <= 0.0 {
                return Err(Error::DegenerateConfiguration);
            }
            let rho_sym = (c_vv / b_quad).sqrt();
            let cost_at = |rho: f64| c_vv - 2.0 * rho * a_cross + rho * rho * b_quad;
            let rho = if cost_at(rho_sym) <= cost_at(prev.scale) {
                rho_sym
            } else {
                // exact minimizer of the 1-D quadratic; never increases cost
                let rho_ls = a_cross / b_quad;
                if rho_ls > 0.0 {
                    rho_ls
                } else {
                    prev.scale
                }
            };
            if !(rho.is_finite() && rho > 0.0) {
                return Err(Error::DegenerateConfiguration);
            }
            let q = refine_rotation(&x_dev, &v_dev, weights, &sigma_inv, rho, q0, rotation_tol);
            (rho, q)
        }
    };

    let translation = v_c - rho * (rotation * x_c);
    RigidSimilarity::new(rho, rotation, translation)
}

/// Conditional covariance update: weighted average of centered-residual
/// outer products, floored on the diagonal to stay positive definite.
pub fn mstep_covariance(x: &[Vec3], v: &[Vec3], weights: &[f64], pose: &RigidSimilarity) -> Mat3 {
    let wsum: f64 = weights.iter().sum();
    let j = x.len().max(1) as f64;
    let mut sigma = Mat3::zeros();
    if wsum > 0.0 {
        let (x_c, v_c) = weighted_centroids(x, v, weights, wsum);
        for ((xp, vp), &w) in x.iter().zip(v).zip(weights) {
            let d = (vp - v_c) - pose.scale * (pose.rotation * (xp - x_c));
            sigma += w * d * d.transpose();
        }
        sigma /= j;
        sigma = (sigma + sigma.transpose()) / 2.0;
    }
    let floor = (1e-9 * sigma.trace() / 3.0).max(SIGMA_ABS_FLOOR);
    sigma + Mat3::identity() * floor
}

/// Conditional shape update: regularized weighted least squares
/// `(sum_j w_j U_j^T sigma^-1 U_j + kappa Lambda^-1) s =
///  sum_j w_j U_j^T sigma^-1 (pose(x_j) - mean_j)`.
pub fn mstep_shape(
    x: &[Vec3],
    pose: &RigidSimilarity,
    sigma: &Mat3,
    weights: &[f64],
    model: &ShapeModel,
    kappa: f64,
) -> Result<ShapeEmbedding> {
    let j_count = model.n_landmarks();
    if x.len() != j_count {
        return Err(Error::LengthMismatch(x.len(), j_count));
    }
    if x.len() != weights.len() {
        return Err(Error::LengthMismatch(x.len(), weights.len()));
    }
    let k = model.k();
    let (sigma_inv, _) = spd_inverse(sigma)?;
    let sigma_inv_dyn = DMatrix::from_fn(3, 3, |r, c| sigma_inv[(r, c)]);

    let mut normal = DMatrix::zeros(k, k);
    let mut rhs = DVector::zeros(k);
    for (j, (xp, &w)) in x.iter().zip(weights).enumerate() {
        let u_j = model.landmark_basis(j);
        let target = pose.apply(xp) - model.landmark_mean(j);
        let ut_si = u_j.transpose() * &sigma_inv_dyn;
        normal += w * (&ut_si * &u_j);
        let t = DVector::from_column_slice(target.as_slice());
        rhs += w * (&ut_si * t);
    }
    for kk in 0..k {
        normal[(kk, kk)] += kappa * model.inv_eigenvalue(kk);
    }
    let chol = normal.cholesky().ok_or(Error::SingularNormalMatrix)?;
    Ok(ShapeEmbedding::new(chol.solve(&rhs)))
}

/// Objective minimized by the conditional M-steps at fixed weights:
/// `sum_j w_j |e_j|^2_sigma + J log|sigma| + kappa s^T Lambda^-1 s`.
pub fn objective_q(x: &[Vec3], state: &RobustFitState, model: &ShapeModel, kappa: f64) -> f64 {
    let v = model.decode_landmarks(&state.embedding);
    let mut reg = 0.0;
    for k in 0..state.embedding.len() {
        reg += state.embedding.coeffs[k] * state.embedding.coeffs[k] * model.inv_eigenvalue(k);
    }
    q_generic(x, &v, &state.pose, &state.sigma, &state.weights, kappa * reg)
}

pub(crate) fn q_generic(
    x: &[Vec3],
    v: &[Vec3],
    pose: &RigidSimilarity,
    sigma: &Mat3,
    weights: &[f64],
    regularizer: f64,
) -> f64 {
    let (sigma_inv, logdet) = match spd_inverse(sigma) {
        Ok(p) => p,
        Err(_) => return f64::INFINITY,
    };
    let mut q = 0.0;
    for ((xp, vp), &w) in x.iter().zip(v).zip(weights) {
        let e = pose.apply(xp) - vp;
        q += w * mahalanobis(&e, &sigma_inv);
    }
    q + x.len() as f64 * logdet + regularizer
}

/// What the solver aligns the landmarks against: a deformable model or a
/// fixed target point set (pure rigid benchmark).
enum Target<'a> {
    Model(&'a ShapeModel),
    Points(&'a [Vec3]),
}

impl Target<'_> {
    fn k(&self) -> usize {
        match self {
            Target::Model(m) => m.k(),
            Target::Points(_) => 0,
        }
    }

    fn landmark_count(&self) -> usize {
        match self {
            Target::Model(m) => m.n_landmarks(),
            Target::Points(p) => p.len(),
        }
    }

    fn vertices(&self, s: &ShapeEmbedding) -> Vec<Vec3> {
        match self {
            Target::Model(m) => m.decode_landmarks(s),
            Target::Points(p) => p.to_vec(),
        }
    }

    fn regularizer(&self, s: &ShapeEmbedding, kappa: f64) -> f64 {
        match self {
            Target::Model(m) => {
                let mut reg = 0.0;
                for k in 0..s.len() {
                    reg += s.coeffs[k] * s.coeffs[k] * m.inv_eigenvalue(k);
                }
                kappa * reg
            }
            Target::Points(_) => 0.0,
        }
    }
}

/// Per-landmark weighting rule distinguishing the three EM estimators.
enum WeightRule {
    Student,
    Unit,
    GaussUniform { volume: f64 },
}

fn gum_responsibilities(
    residuals: &[Vec3],
    sigma: &Mat3,
    pi: f64,
    volume: f64,
) -> Result<Vec<f64>> {
    let (sigma_inv, logdet) = spd_inverse(sigma)?;
    let log_uniform = (1.0 - pi).ln() - volume.ln();
    Ok(residuals
        .iter()
        .map(|e| {
            let log_gauss =
                pi.ln() - 0.5 * (3.0 * LN_2PI + logdet + mahalanobis(e, &sigma_inv));
            1.0 / (1.0 + (log_uniform - log_gauss).exp())
        })
        .collect())
}

fn default_gum_volume(v: &[Vec3]) -> f64 {
    let mut lo = Vec3::from_element(f64::INFINITY);
    let mut hi = Vec3::from_element(f64::NEG_INFINITY);
    for p in v {
        for c in 0..3 {
            lo[c] = lo[c].min(p[c]);
            hi[c] = hi[c].max(p[c]);
        }
    }
    (0..3)
        .map(|c| (1.5 * (hi[c] - lo[c])).max(1e-6))
        .product()
}

fn ecm_fit(
    x: &[Vec3],
    target: Target<'_>,
    rule: WeightRule,
    config: &FitConfig,
    init_s: Option<ShapeEmbedding>,
    skip_shape: bool,
) -> Result<FitResult> {
    config.validate()?;
    let j_count = target.landmark_count();
    if x.len() != j_count {
        return Err(Error::LengthMismatch(x.len(), j_count));
    }
    if j_count < 4 {
        return Err(Error::TooFewPoints {
            min: 4,
            got: j_count,
        });
    }
    let k = target.k();
    let mut s = match init_s {
        Some(s0) => {
            if s0.len() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    got: s0.len(),
                });
            }
            s0
        }
        None => ShapeEmbedding::zeros(k),
    };

    let mut sigma = Mat3::identity();
    let mut weights = vec![1.0; j_count];
    let mut mu = config.mu_init;
    let mut pi = GUM_PI_INIT;
    let volume = match &rule {
        WeightRule::GaussUniform { volume } => *volume,
        _ => 0.0,
    };
    let update_shape = !skip_shape && k > 0;

    // Initialization sweep: unit weights, identity covariance, closed-form
    // scale and rotation, then translation, covariance and shape.
    let mut v = target.vertices(&s);
    let mut pose = mstep_rigid(x, &v, &weights, &sigma, None, config.rotation_tol)?;
    sigma = mstep_covariance(x, &v, &weights, &pose);
    if update_shape {
        if let Target::Model(model) = &target {
            s = mstep_shape(x, &pose, &sigma, &weights, model, config.kappa)?;
        }
    }

    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iters {
        iterations += 1;
        v = target.vertices(&s);
        let residuals: Vec<Vec3> = x
            .iter()
            .zip(&v)
            .map(|(xp, vp)| pose.apply(xp) - vp)
            .collect();

        match &rule {
            WeightRule::Student => {
                let (a, rates, w) = estep_weights(&residuals, &sigma, mu)?;
                weights = w;
                mu = update_mu(a, &rates);
            }
            WeightRule::Unit => {}
            WeightRule::GaussUniform { .. } => {
                weights = gum_responsibilities(&residuals, &sigma, pi, volume)?;
                pi = weights.iter().sum::<f64>() / j_count as f64;
            }
        }

        let new_pose = mstep_rigid(x, &v, &weights, &sigma, Some(&pose), config.rotation_tol)?;
        let new_sigma = mstep_covariance(x, &v, &weights, &new_pose);
        let new_s = if update_shape {
            match &target {
                Target::Model(model) => {
                    mstep_shape(x, &new_pose, &new_sigma, &weights, model, config.kappa)?
                }
                Target::Points(_) => s.clone(),
            }
        } else {
            s.clone()
        };

        let delta = (new_pose.scale - pose.scale).abs() / pose.scale;
        let delta = delta.max(geodesic_angle(&new_pose.rotation, &pose.rotation));
        let delta = delta.max((new_pose.translation - pose.translation).norm());
        let delta = delta.max((&new_s.coeffs - &s.coeffs).norm());

        pose = new_pose;
        sigma = new_sigma;
        s = new_s;

        if delta <= config.epsilon {
            converged = true;
            break;
        }
    }

    // Refresh the posterior quantities at the final parameters so the
    // returned state is internally consistent.
    v = target.vertices(&s);
    let residuals: Vec<Vec3> = x
        .iter()
        .zip(&v)
        .map(|(xp, vp)| pose.apply(xp) - vp)
        .collect();
    let (gamma_shape, gamma_rates, final_weights) = match &rule {
        WeightRule::Student => estep_weights(&residuals, &sigma, mu)?,
        WeightRule::Unit => {
            let a = mu + 1.5;
            (a, vec![a; j_count], vec![1.0; j_count])
        }
        WeightRule::GaussUniform { .. } => {
            let r = gum_responsibilities(&residuals, &sigma, pi, volume)?;
            let a = mu + 1.5;
            let rates = r.iter().map(|&w| a / w.max(1e-300)).collect();
            (a, rates, r)
        }
    };
    weights = final_weights;

    let objective = q_generic(
        x,
        &v,
        &pose,
        &sigma,
        &weights,
        target.regularizer(&s, config.kappa),
    );
    let frontalized: Vec<Vec3> = x.iter().map(|p| pose.apply(p)).collect();

    Ok(FitResult {
        state: RobustFitState {
            pose,
            embedding: s,
            sigma,
            mu,
            weights,
            gamma_shape,
            gamma_rates,
        },
        frontalized,
        iterations,
        converged,
        objective,
    })
}

/// Robust pose + deformation fit of observed landmarks against a deformable
/// model, under the generalized Student's-t error model.
///
/// With a `warm_embedding` the shape is initialized from the given embedding
/// and the shape update is skipped entirely, which is how the temporal
/// tracker drives per-frame rigid estimation.
pub fn robust_fit(
    x: &[Vec3],
    model: &ShapeModel,
    config: &FitConfig,
    warm_embedding: Option<&ShapeEmbedding>,
) -> Result<FitResult> {
    ecm_fit(
        x,
        Target::Model(model),
        WeightRule::Student,
        config,
        warm_embedding.cloned(),
        warm_embedding.is_some(),
    )
}

/// Student's-t alignment of a source point set onto a fixed target set
/// (rigid only, no shape term).
pub fn gstudent_fit(x: &[Vec3], v: &[Vec3], config: &FitConfig) -> Result<FitResult> {
    ecm_fit(x, Target::Points(v), WeightRule::Student, config, None, true)
}

/// Full-covariance Gaussian baseline: the same ECM loop with all weights
/// fixed to one.
pub fn gen_horn_fit(x: &[Vec3], v: &[Vec3], config: &FitConfig) -> Result<FitResult> {
    ecm_fit(x, Target::Points(v), WeightRule::Unit, config, None, true)
}

/// Gaussian + uniform mixture baseline: EM over component responsibilities,
/// reusing the rigid and covariance updates with responsibilities as weights.
pub fn gum_em_fit(x: &[Vec3], v: &[Vec3], config: &FitConfig) -> Result<FitResult> {
    let volume = config.gum_volume.unwrap_or_else(|| default_gum_volume(v));
    ecm_fit(
        x,
        Target::Points(v),
        WeightRule::GaussUniform { volume },
        config,
        None,
        true,
    )
}
