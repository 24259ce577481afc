//! Descent properties of the conditional maximization sweep: at fixed
//! posterior weights the objective never increases across a sweep, and the
//! full variational surrogate (objective plus weight-posterior terms) never
//! increases across whole E+M iterations.

use morphfit::fit::{
    estep_weights, mstep_covariance, mstep_rigid, mstep_shape, objective_q, update_mu,
    RobustFitState,
};
use morphfit::geometry::{Mat3, RigidSimilarity, Vec3};
use morphfit::shape::{generate_synthetic_model, DeformationSampler, ShapeEmbedding, ShapeModel};
use morphfit::special::{digamma, ln_gamma};
use nalgebra::{Quaternion, UnitQuaternion};
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use rand_distr::{Distribution, StandardNormal};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

struct Instance {
    model: ShapeModel,
    x: Vec<Vec3>,
}

fn random_instance(seed: u64) -> Instance {
    let (model, sampler) = generate_synthetic_model(30, 4, 12, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let s_true = DeformationSampler::new(&model).sample_embedding(&mut rng);
    let _ = sampler;
    let q = Quaternion::new(
        rng.gen::<f64>() - 0.5,
        rng.gen::<f64>() - 0.5,
        rng.gen::<f64>() - 0.5,
        rng.gen::<f64>() - 0.5,
    );
    let pose = RigidSimilarity::new(
        rng.gen_range(0.6..1.8),
        UnitQuaternion::from_quaternion(q),
        Vec3::new(
            rng.gen_range(-0.4..0.4),
            rng.gen_range(-0.4..0.4),
            rng.gen_range(-0.4..0.4),
        ),
    )
    .unwrap();
    let inv = pose.inverse().unwrap();
    let x: Vec<Vec3> = model
        .decode_landmarks(&s_true)
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let mut q = inv.apply(p);
            for c in 0..3 {
                let g: f64 = StandardNormal.sample(&mut rng);
                q[c] += 0.02 * g;
            }
            // a few gross outliers keep the weights non-trivial
            if j % 5 == 0 {
                q += Vec3::new(
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                );
            }
            q
        })
        .collect();
    Instance { model, x }
}

/// Runs the initialization sweep of the solver via the public operations.
fn init_state(inst: &Instance, kappa: f64) -> RobustFitState {
    let model = &inst.model;
    let j = inst.x.len();
    let weights = vec![1.0; j];
    let s = ShapeEmbedding::zeros(model.k());
    let v = model.decode_landmarks(&s);
    let pose = mstep_rigid(&inst.x, &v, &weights, &Mat3::identity(), None, 1e-12).unwrap();
    let sigma = mstep_covariance(&inst.x, &v, &weights, &pose);
    let s = mstep_shape(&inst.x, &pose, &sigma, &weights, model, kappa).unwrap();
    RobustFitState {
        pose,
        embedding: s,
        sigma,
        mu: 1.0,
        weights,
        gamma_shape: 2.5,
        gamma_rates: vec![1.0; j],
    }
}

fn residuals(inst: &Instance, state: &RobustFitState) -> Vec<Vec3> {
    inst.model
        .decode_landmarks(&state.embedding)
        .iter()
        .zip(&inst.x)
        .map(|(vp, xp)| state.pose.apply(xp) - vp)
        .collect()
}

/// One conditional M-sweep (rigid, covariance, shape) at fixed weights.
fn m_sweep(inst: &Instance, state: &RobustFitState, kappa: f64) -> RobustFitState {
    let v = inst.model.decode_landmarks(&state.embedding);
    let pose = mstep_rigid(
        &inst.x,
        &v,
        &state.weights,
        &state.sigma,
        Some(&state.pose),
        1e-12,
    )
    .unwrap();
    let sigma = mstep_covariance(&inst.x, &v, &state.weights, &pose);
    let s = mstep_shape(&inst.x, &pose, &sigma, &state.weights, &inst.model, kappa).unwrap();
    RobustFitState {
        pose,
        embedding: s,
        sigma,
        mu: state.mu,
        weights: state.weights.clone(),
        gamma_shape: state.gamma_shape,
        gamma_rates: state.gamma_rates.clone(),
    }
}

#[test]
fn objective_never_increases_across_m_sweeps() {
    let kappa = 1.0;
    let mut violations = 0;
    let mut sweeps = 0;
    for seed in 0..25 {
        let inst = random_instance(1000 + seed);
        let mut state = init_state(&inst, kappa);
        for _ in 0..8 {
            // E-step: refresh weights, then measure the sweep at fixed weights.
            let res = residuals(&inst, &state);
            let (a, rates, weights) = estep_weights(&res, &state.sigma, state.mu).unwrap();
            state.gamma_shape = a;
            state.gamma_rates = rates.clone();
            state.weights = weights;
            state.mu = update_mu(a, &rates);

            let before = objective_q(&inst.x, &state, &inst.model, kappa);
            let next = m_sweep(&inst, &state, kappa);
            let after = objective_q(&inst.x, &next, &inst.model, kappa);
            sweeps += 1;
            if after > before + 1e-9 {
                violations += 1;
            }
            state = next;
        }
    }
    assert_eq!(violations, 0, "objective rose in {violations}/{sweeps} sweeps");
}

/// Variational surrogate: expected complete-data negative log-likelihood
/// under the Gamma weight posterior, minus its entropy, plus the embedding
/// regularizer (scaled to match the objective's convention).
fn em_surrogate(inst: &Instance, state: &RobustFitState, kappa: f64) -> f64 {
    let (sigma_inv, logdet) = {
        let chol = state.sigma.cholesky().unwrap();
        let l = chol.l();
        let ld = 2.0 * (0..3).map(|i| l[(i, i)].ln()).sum::<f64>();
        (chol.inverse(), ld)
    };
    let res = residuals(inst, state);
    let a = state.gamma_shape;
    let mu = state.mu;
    let mut total = 0.0;
    for (e, &b) in res.iter().zip(&state.gamma_rates) {
        let w = a / b;
        let e_log_w = digamma(a) - b.ln();
        let maha = e.dot(&(sigma_inv * e));
        // E[-log N(e; 0, sigma/w)] = (3 ln 2pi + log|sigma| - 3 E[log w] + w maha) / 2
        total += 0.5 * (3.0 * LN_2PI + logdet - 3.0 * e_log_w + w * maha);
        // E[-log Gamma(w; mu, 1)] = -(mu - 1) E[log w] + E[w] + ln Gamma(mu)
        total += -(mu - 1.0) * e_log_w + w + ln_gamma(mu);
        // minus the entropy of Gamma(a, b)
        let entropy = a - b.ln() + ln_gamma(a) + (1.0 - a) * digamma(a);
        total -= entropy;
    }
    let mut reg = 0.0;
    for k in 0..state.embedding.len() {
        reg += state.embedding.coeffs[k] * state.embedding.coeffs[k]
            * inst.model.inv_eigenvalue(k);
    }
    total + 0.5 * kappa * reg
}

#[test]
fn full_surrogate_never_increases_across_em_iterations() {
    let kappa = 1.0;
    for seed in 0..10 {
        let inst = random_instance(2000 + seed);
        let mut state = init_state(&inst, kappa);
        // First E-step so the surrogate's weight posterior is consistent.
        let res = residuals(&inst, &state);
        let (a, rates, weights) = estep_weights(&res, &state.sigma, state.mu).unwrap();
        state.gamma_shape = a;
        state.gamma_rates = rates;
        state.weights = weights;

        let mut prev = em_surrogate(&inst, &state, kappa);
        for _ in 0..10 {
            // M-step including the Gamma parameter update.
            state.mu = update_mu(state.gamma_shape, &state.gamma_rates);
            let mut next = m_sweep(&inst, &state, kappa);
            next.mu = state.mu;
            state = next;
            // E-step.
            let res = residuals(&inst, &state);
            let (a, rates, weights) = estep_weights(&res, &state.sigma, state.mu).unwrap();
            state.gamma_shape = a;
            state.gamma_rates = rates;
            state.weights = weights;

            let cur = em_surrogate(&inst, &state, kappa);
            assert!(
                cur <= prev + 1e-9,
                "surrogate rose from {prev} to {cur} (seed {seed})"
            );
            prev = cur;
        }
    }
}
