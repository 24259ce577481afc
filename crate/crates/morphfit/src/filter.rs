//! Temporal filtering of landmark sequences with two coupled latent
//! processes: the shape embedding (random walk) and the landmark vertices
//! (persistence blended with reconstruction from the current embedding).
//! The coupled system is recast as a single Kalman filter over the stacked
//! state `Z = [S; V]`, where `S = [s; 1]` carries a homogeneous coordinate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fit::{robust_fit, FitConfig, FitResult};
use crate::geometry::RigidSimilarity;
use crate::shape::{ShapeEmbedding, ShapeModel};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Variance pinning the constant homogeneous coordinate of `S`.
pub const HOMOGENEOUS_VARIANCE: f64 = 1e-12;
/// Floor applied to data-estimated process variances so they stay SPD.
const GAMMA_FLOOR: f64 = 1e-10;

/// Process parameters of the coupled dynamics.
///
/// `w` is the 3J x (K+1) reconstruction matrix stacking the landmark basis
/// rows with the landmark mean as the last column, so `V = w * [s; 1]`.
#[derive(Debug, Clone)]
pub struct DlLdsParams {
    pub gamma_s: DMatrix<f64>,
    pub gamma_v: DMatrix<f64>,
    pub alpha: f64,
    pub w: DMatrix<f64>,
}

impl DlLdsParams {
    pub fn new(
        gamma_s: DMatrix<f64>,
        gamma_v: DMatrix<f64>,
        alpha: f64,
        w: DMatrix<f64>,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::ParameterRange {
                name: "alpha".into(),
                message: format!("must be in [0, 1], got {alpha}"),
            });
        }
        if gamma_s.nrows() != gamma_s.ncols() || gamma_v.nrows() != gamma_v.ncols() {
            return Err(Error::DimensionMismatch {
                expected: gamma_s.nrows(),
                got: gamma_s.ncols(),
            });
        }
        if w.nrows() != gamma_v.nrows() || w.ncols() != gamma_s.nrows() {
            return Err(Error::DimensionMismatch {
                expected: gamma_v.nrows(),
                got: w.nrows(),
            });
        }
        if gamma_s.clone().cholesky().is_none() || gamma_v.clone().cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self {
            gamma_s,
            gamma_v,
            alpha,
            w,
        })
    }

    /// Builds parameters from a model's landmark rows plus diagonal process
    /// variances for the embedding (length K, the homogeneous pin is
    /// appended) and the landmark vertices (length 3J).
    pub fn from_model(
        model: &ShapeModel,
        alpha: f64,
        gamma_s_diag: &DVector<f64>,
        gamma_v_diag: &DVector<f64>,
    ) -> Result<Self> {
        let k = model.k();
        let j = model.n_landmarks();
        if gamma_s_diag.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: gamma_s_diag.len(),
            });
        }
        if gamma_v_diag.len() != 3 * j {
            return Err(Error::DimensionMismatch {
                expected: 3 * j,
                got: gamma_v_diag.len(),
            });
        }
        let mut gs = DMatrix::zeros(k + 1, k + 1);
        for i in 0..k {
            gs[(i, i)] = gamma_s_diag[i].max(GAMMA_FLOOR);
        }
        gs[(k, k)] = HOMOGENEOUS_VARIANCE;
        let mut gv = DMatrix::zeros(3 * j, 3 * j);
        for i in 0..3 * j {
            gv[(i, i)] = gamma_v_diag[i].max(GAMMA_FLOOR);
        }
        Self::new(gs, gv, alpha, reconstruction_matrix(model))
    }
}

/// Landmark reconstruction matrix `w = (U_L | mean_L)` over the J landmark
/// vertices.
pub fn reconstruction_matrix(model: &ShapeModel) -> DMatrix<f64> {
    let k = model.k();
    let j = model.n_landmarks();
    let mut w = DMatrix::zeros(3 * j, k + 1);
    for jj in 0..j {
        let block = model.landmark_basis(jj);
        let mean = model.landmark_mean(jj);
        for r in 0..3 {
            for c in 0..k {
                w[(3 * jj + r, c)] = block[(r, c)];
            }
            w[(3 * jj + r, k)] = mean[r];
        }
    }
    w
}

/// The coupled dynamics rewritten as one linear-Gaussian system:
/// `Z_t | Z_{t-1} ~ N(f Z_{t-1}, gamma)` with `f = gamma * a`, plus the
/// projections selecting the vertex block (`c`) and the embedding (`c_bar`).
#[derive(Debug, Clone)]
pub struct JointDynamics {
    pub gamma: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub c_bar: DMatrix<f64>,
    /// Embedding dimension K (without the homogeneous coordinate).
    pub k: usize,
    /// Vertex block dimension 3J.
    pub v_dim: usize,
}

impl JointDynamics {
    pub fn state_dim(&self) -> usize {
        self.k + 1 + self.v_dim
    }
}

/// Assembles the joint transition from the two conditional regimes:
///
/// ```text
/// gamma^-1 = [ G_S^-1 + (1-a)^2 W^T G_V^-1 W   -(1-a) W^T G_V^-1 ]
///            [ -(1-a) G_V^-1 W                  G_V^-1           ]
/// a_mat    = [ G_S^-1                           -a(1-a) W^T G_V^-1 ]
///            [ 0                                 a G_V^-1          ]
/// ```
pub fn assemble_joint_dynamics(params: &DlLdsParams) -> Result<JointDynamics> {
    let sk = params.gamma_s.nrows();
    let vd = params.gamma_v.nrows();
    let d = sk + vd;
    let alpha = params.alpha;
    let w = &params.w;

    let gs_inv = params
        .gamma_s
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite)?
        .inverse();
    let gv_inv = params
        .gamma_v
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite)?
        .inverse();

    let wt_gv_inv = w.transpose() * &gv_inv;
    let one_m = 1.0 - alpha;

    let mut gamma_inv = DMatrix::zeros(d, d);
    gamma_inv
        .view_mut((0, 0), (sk, sk))
        .copy_from(&(&gs_inv + one_m * one_m * (&wt_gv_inv * w)));
    gamma_inv
        .view_mut((0, sk), (sk, vd))
        .copy_from(&(-one_m * &wt_gv_inv));
    gamma_inv
        .view_mut((sk, 0), (vd, sk))
        .copy_from(&(-one_m * (&gv_inv * w)));
    gamma_inv.view_mut((sk, sk), (vd, vd)).copy_from(&gv_inv);

    let mut a = DMatrix::zeros(d, d);
    a.view_mut((0, 0), (sk, sk)).copy_from(&gs_inv);
    a.view_mut((0, sk), (sk, vd))
        .copy_from(&(-alpha * one_m * &wt_gv_inv));
    a.view_mut((sk, sk), (vd, vd)).copy_from(&(alpha * &gv_inv));

    let gamma = gamma_inv
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite)?
        .inverse();
    let gamma = (&gamma + &gamma.transpose()) / 2.0;
    let f = &gamma * &a;

    let k = sk - 1;
    let mut c = DMatrix::zeros(vd, d);
    for i in 0..vd {
        c[(i, sk + i)] = 1.0;
    }
    let mut c_bar = DMatrix::zeros(k, d);
    for i in 0..k {
        c_bar[(i, i)] = 1.0;
    }

    Ok(JointDynamics {
        gamma,
        a,
        f,
        c,
        c_bar,
        k,
        v_dim: vd,
    })
}

/// Posterior filter state at frame `t`.
///
/// `p` is the predicted covariance that the *next* measurement update will
/// use; the initialization pins it to the identity.
#[derive(Debug, Clone)]
pub struct FilterState {
    pub nu: DVector<f64>,
    pub psi: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub t: usize,
}

/// First-frame state: `nu_1 = [S_1; w S_1]`, `psi_1 = I`, `p_1 = I`, where
/// `S_1 = [s_1; 1]`.
///
/// The homogeneous coordinate is a constant, so its diagonal entry in both
/// covariances is pinned to [`HOMOGENEOUS_VARIANCE`] instead of 1; a unit
/// prior variance there would let the filter absorb observation noise into
/// the constant.
pub fn initialize(s_1: &ShapeEmbedding, model: &ShapeModel) -> FilterState {
    let k = model.k();
    let j3 = 3 * model.n_landmarks();
    let d = k + 1 + j3;
    let w = reconstruction_matrix(model);
    let mut s_h = DVector::zeros(k + 1);
    for i in 0..k.min(s_1.len()) {
        s_h[i] = s_1.coeffs[i];
    }
    s_h[k] = 1.0;
    let v = &w * &s_h;
    let mut nu = DVector::zeros(d);
    nu.rows_mut(0, k + 1).copy_from(&s_h);
    nu.rows_mut(k + 1, j3).copy_from(&v);
    let mut psi = DMatrix::identity(d, d);
    psi[(k, k)] = HOMOGENEOUS_VARIANCE;
    FilterState {
        nu,
        p: psi.clone(),
        psi,
        t: 1,
    }
}

/// One-step prediction: mean `f nu`, covariance `f psi f^T + gamma`.
pub fn predict(state: &FilterState, dyn_: &JointDynamics) -> (DVector<f64>, DMatrix<f64>) {
    let mean = &dyn_.f * &state.nu;
    let p = &dyn_.f * &state.psi * dyn_.f.transpose() + &dyn_.gamma;
    let p = (&p + &p.transpose()) / 2.0;
    (mean, p)
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub state: FilterState,
    /// Predictive log-likelihood `log N(y; C f nu, C p C^T + sigma)`.
    pub log_likelihood: f64,
}

/// Measurement update using the state's stored predicted covariance:
/// gain `K = p C^T (C p C^T + sigma)^-1`, posterior mean
/// `f nu + K (y - C f nu)`, posterior covariance `(I - K C) p`
/// (symmetrized). The returned state carries the refreshed prediction
/// covariance for the next step.
pub fn kalman_step(
    state: &FilterState,
    dyn_: &JointDynamics,
    y: &DVector<f64>,
    sigma: &DMatrix<f64>,
) -> Result<StepResult> {
    let d = dyn_.state_dim();
    let m = dyn_.v_dim;
    if y.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: y.len(),
        });
    }
    if sigma.nrows() != m || sigma.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: sigma.nrows(),
        });
    }
    let offset = d - m;

    let mean_pred = &dyn_.f * &state.nu;
    // C selects the last 3J coordinates, so C p C^T is the bottom-right
    // block and p C^T the right block column.
    let p_cv = state.p.view((0, offset), (d, m)).into_owned();
    let innovation_cov = state.p.view((offset, offset), (m, m)) + sigma;
    let innovation_cov = (&innovation_cov + &innovation_cov.transpose()) / 2.0;
    let chol = innovation_cov
        .cholesky()
        .ok_or(Error::NotPositiveDefinite)?;

    let innovation = y - mean_pred.rows(offset, m);
    // gain = p C^T S^-1, computed by solving against the Cholesky factor.
    let gain = chol.solve(&p_cv.transpose()).transpose();

    let nu = &mean_pred + &gain * &innovation;
    // (I - K C) p = p - K (C p)
    let c_p = state.p.view((offset, 0), (m, d)).into_owned();
    let psi = &state.p - &gain * c_p;
    let psi = (&psi + &psi.transpose()) / 2.0;

    let l = chol.l();
    let logdet = 2.0 * (0..m).map(|i| l[(i, i)].ln()).sum::<f64>();
    let maha = innovation.dot(&chol.solve(&innovation));
    let log_likelihood = -0.5 * (m as f64 * LN_2PI + logdet + maha);

    let p_next = &dyn_.f * &psi * dyn_.f.transpose() + &dyn_.gamma;
    let p_next = (&p_next + &p_next.transpose()) / 2.0;
    let next = FilterState {
        nu,
        psi,
        p: p_next,
        t: state.t + 1,
    };
    Ok(StepResult {
        state: next,
        log_likelihood,
    })
}

/// Coordinate selections `s_t = c_bar nu_t` (first K entries) and
/// `v_t = c nu_t` (last 3J entries).
pub fn extract_state(state: &FilterState, dyn_: &JointDynamics) -> (ShapeEmbedding, DVector<f64>) {
    let s = state.nu.rows(0, dyn_.k).into_owned();
    let v = state.nu.rows(dyn_.k + 1, dyn_.v_dim).into_owned();
    (ShapeEmbedding::new(s), v)
}

/// Diagonal process-noise specification.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaSpec {
    /// Same variance on every coordinate.
    Scalar(f64),
    /// Per-coordinate variances.
    Diagonal(Vec<f64>),
}

impl GammaSpec {
    fn to_diag(&self, len: usize, name: &str) -> Result<DVector<f64>> {
        match self {
            GammaSpec::Scalar(v) => {
                if !v.is_finite() || *v <= 0.0 {
                    return Err(Error::ParameterRange {
                        name: name.into(),
                        message: "variance must be > 0".into(),
                    });
                }
                Ok(DVector::from_element(len, *v))
            }
            GammaSpec::Diagonal(d) => {
                if d.len() != len {
                    return Err(Error::DimensionMismatch {
                        expected: len,
                        got: d.len(),
                    });
                }
                if d.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                    return Err(Error::ParameterRange {
                        name: name.into(),
                        message: "variances must be > 0".into(),
                    });
                }
                Ok(DVector::from_vec(d.clone()))
            }
        }
    }
}

/// Tracker configuration. Unset process covariances are estimated as
/// diagonal sample variances of successive differences from a preliminary
/// per-frame fitting pass over the sequence.
#[derive(Debug, Clone)]
pub struct FilterConfig {
    pub alpha: f64,
    pub gamma_s: Option<GammaSpec>,
    pub gamma_v: Option<GammaSpec>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            alpha: 0.06,
            gamma_s: None,
            gamma_v: None,
        }
    }
}

/// Per-frame tracker output.
#[derive(Debug, Clone)]
pub struct TrackFrame {
    pub pose: RigidSimilarity,
    pub s_hat: ShapeEmbedding,
    /// Filtered landmark vertices, stacked (3J).
    pub v_hat: DVector<f64>,
    pub psi: DMatrix<f64>,
    pub log_likelihood: f64,
    pub fit_iterations: usize,
    pub fit_converged: bool,
}

/// Tracks a landmark sequence: a full robust fit on the first frame
/// initializes the filter; later frames run the rigid-only fit seeded with
/// the previous filtered embedding, then one Kalman update on the
/// frontalized landmarks with measurement noise `I_J (x) sigma_t`.
pub fn track_sequence(
    x_seq: &[Vec<crate::geometry::Vec3>],
    model: &ShapeModel,
    fit_config: &FitConfig,
    filter_config: &FilterConfig,
) -> Result<Vec<TrackFrame>> {
    if x_seq.is_empty() {
        return Err(Error::TooFewPoints { min: 1, got: 0 });
    }
    let k = model.k();
    let j = model.n_landmarks();

    let fit1 = robust_fit(&x_seq[0], model, fit_config, None).map_err(|e| Error::FrameFailed {
        frame: 0,
        source: Box::new(e),
    })?;

    let (gs_diag, gv_diag) = match (&filter_config.gamma_s, &filter_config.gamma_v) {
        (Some(gs), Some(gv)) => (gs.to_diag(k, "gamma_s")?, gv.to_diag(3 * j, "gamma_v")?),
        _ => {
            let (est_s, est_v) = estimate_process_noise(x_seq, model, fit_config, &fit1)?;
            let gs = match &filter_config.gamma_s {
                Some(gs) => gs.to_diag(k, "gamma_s")?,
                None => est_s,
            };
            let gv = match &filter_config.gamma_v {
                Some(gv) => gv.to_diag(3 * j, "gamma_v")?,
                None => est_v,
            };
            (gs, gv)
        }
    };

    let params = DlLdsParams::from_model(model, filter_config.alpha, &gs_diag, &gv_diag)?;
    let dyn_ = assemble_joint_dynamics(&params)?;

    let mut state = initialize(&fit1.state.embedding, model);
    let mut frames = Vec::with_capacity(x_seq.len());

    // Frame-1 likelihood of the frontalized landmarks under the initialized
    // prior (later frames get the usual predictive likelihood).
    let y1 = stack_points(&fit1.frontalized);
    let sigma1 = kron_identity(&fit1.state.sigma, j);
    let loglik1 = {
        let cov = state.psi.view((k + 1, k + 1), (3 * j, 3 * j)) + &sigma1;
        let chol = cov.cholesky().ok_or(Error::NotPositiveDefinite)?;
        let innovation = &y1 - state.nu.rows(k + 1, 3 * j);
        let l = chol.l();
        let logdet = 2.0 * (0..3 * j).map(|i| l[(i, i)].ln()).sum::<f64>();
        let maha = innovation.dot(&chol.solve(&innovation));
        -0.5 * (3.0 * j as f64 * LN_2PI + logdet + maha)
    };
    let (s_hat, v_hat) = extract_state(&state, &dyn_);
    frames.push(TrackFrame {
        pose: fit1.state.pose.clone(),
        s_hat,
        v_hat,
        psi: state.psi.clone(),
        log_likelihood: loglik1,
        fit_iterations: fit1.iterations,
        fit_converged: fit1.converged,
    });

    for (t, x_t) in x_seq.iter().enumerate().skip(1) {
        let (s_prev, _) = extract_state(&state, &dyn_);
        let fit_t: FitResult =
            robust_fit(x_t, model, fit_config, Some(&s_prev)).map_err(|e| Error::FrameFailed {
                frame: t,
                source: Box::new(e),
            })?;
        let y = stack_points(&fit_t.frontalized);
        let sigma_t = kron_identity(&fit_t.state.sigma, j);
        let step = kalman_step(&state, &dyn_, &y, &sigma_t)?;
        state = step.state;
        let (s_hat, v_hat) = extract_state(&state, &dyn_);
        frames.push(TrackFrame {
            pose: fit_t.state.pose.clone(),
            s_hat,
            v_hat,
            psi: state.psi.clone(),
            log_likelihood: step.log_likelihood,
            fit_iterations: fit_t.iterations,
            fit_converged: fit_t.converged,
        });
    }
    Ok(frames)
}

/// Diagonal variances of successive differences of the per-frame fitted
/// embeddings and their decoded landmark vertices.
fn estimate_process_noise(
    x_seq: &[Vec<crate::geometry::Vec3>],
    model: &ShapeModel,
    fit_config: &FitConfig,
    fit1: &FitResult,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let k = model.k();
    let j3 = 3 * model.n_landmarks();
    let mut s_series: Vec<DVector<f64>> = vec![fit1.state.embedding.coeffs.clone()];
    let mut v_series: Vec<DVector<f64>> =
        vec![stack_points(&model.decode_landmarks(&fit1.state.embedding))];
    for (t, x_t) in x_seq.iter().enumerate().skip(1) {
        let fit_t = robust_fit(x_t, model, fit_config, None).map_err(|e| Error::FrameFailed {
            frame: t,
            source: Box::new(e),
        })?;
        s_series.push(fit_t.state.embedding.coeffs.clone());
        v_series.push(stack_points(&model.decode_landmarks(&fit_t.state.embedding)));
    }
    Ok((diff_variances(&s_series, k), diff_variances(&v_series, j3)))
}

fn diff_variances(series: &[DVector<f64>], len: usize) -> DVector<f64> {
    if series.len() < 2 {
        // No differences available; fall back to a small default.
        return DVector::from_element(len, 1e-4);
    }
    let n = series.len() - 1;
    let mut mean = DVector::zeros(len);
    for w in series.windows(2) {
        mean += &w[1] - &w[0];
    }
    mean /= n as f64;
    let mut out = DVector::from_element(len, GAMMA_FLOOR);
    for w in series.windows(2) {
        let d = (&w[1] - &w[0]) - &mean;
        for i in 0..len {
            out[i] += d[i] * d[i] / n as f64;
        }
    }
    out
}

pub(crate) fn stack_points(points: &[crate::geometry::Vec3]) -> DVector<f64> {
    let mut v = DVector::zeros(3 * points.len());
    for (i, p) in points.iter().enumerate() {
        v[3 * i] = p.x;
        v[3 * i + 1] = p.y;
        v[3 * i + 2] = p.z;
    }
    v
}

/// Block-diagonal `I_J (x) sigma` measurement covariance.
pub(crate) fn kron_identity(sigma: &crate::geometry::Mat3, j: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(3 * j, 3 * j);
    for b in 0..j {
        for r in 0..3 {
            for c in 0..3 {
                out[(3 * b + r, 3 * b + c)] = sigma[(r, c)];
            }
        }
    }
    out
}
