//! Simulated robustness benchmark: random similarity transforms of a random
//! landmark cloud, anisotropic Gaussian noise on inliers, uniform box noise
//! replacing outliers, and per-estimator rigid RMSE as a function of the
//! outlier fraction.

use std::io::Write as _;
use std::path::Path;

use nalgebra::Quaternion;
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::{gen_horn_fit, gstudent_fit, gum_em_fit, FitConfig};
use crate::geometry::{horn_absolute_orientation, RigidSimilarity, Vec3};
use crate::metrics::{rigid_rmse, RigidError};

/// Benchmark protocol parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub seed: u64,
    pub n_landmarks: usize,
    /// Total variance of the anisotropic inlier noise per landmark.
    pub inlier_variance: f64,
    /// Volume of the uniform box replacing outlier landmarks.
    pub outlier_volume: f64,
    pub outlier_fractions: Vec<f64>,
    pub n_trials: usize,
}

impl Default for TrialSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            n_landmarks: 68,
            inlier_variance: 0.0025,
            outlier_volume: 1.5_f64.powi(3),
            outlier_fractions: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            n_trials: 500,
        }
    }
}

impl TrialSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_landmarks < 4 {
            return Err(Error::ParameterRange {
                name: "n_landmarks".into(),
                message: "must be >= 4".into(),
            });
        }
        if !self.inlier_variance.is_finite() || self.inlier_variance <= 0.0 {
            return Err(Error::ParameterRange {
                name: "inlier_variance".into(),
                message: "must be > 0".into(),
            });
        }
        if !self.outlier_volume.is_finite() || self.outlier_volume <= 0.0 {
            return Err(Error::ParameterRange {
                name: "outlier_volume".into(),
                message: "must be > 0".into(),
            });
        }
        if self
            .outlier_fractions
            .iter()
            .any(|f| !(0.0..=1.0).contains(f))
        {
            return Err(Error::ParameterRange {
                name: "outlier_fractions".into(),
                message: "must lie in [0, 1]".into(),
            });
        }
        if self.n_trials == 0 {
            return Err(Error::ParameterRange {
                name: "n_trials".into(),
                message: "must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// One simulated alignment problem.
#[derive(Debug, Clone)]
pub struct Trial {
    pub source: Vec<Vec3>,
    pub target: Vec<Vec3>,
    pub truth: RigidSimilarity,
    /// `true` marks inliers.
    pub inlier: Vec<bool>,
}

/// The four estimators under comparison. CSV identifiers are stable and
/// sort alphabetically in report rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Estimator {
    GenHorn,
    GStudent,
    GumEm,
    Horn,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [
        Estimator::GenHorn,
        Estimator::GStudent,
        Estimator::GumEm,
        Estimator::Horn,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Estimator::GenHorn => "gen_horn",
            Estimator::GStudent => "gstudent",
            Estimator::GumEm => "gum_em",
            Estimator::Horn => "horn",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        match id {
            "gen_horn" => Some(Estimator::GenHorn),
            "gstudent" => Some(Estimator::GStudent),
            "gum_em" => Some(Estimator::GumEm),
            "horn" => Some(Estimator::Horn),
            _ => None,
        }
    }

    fn run(self, trial: &Trial, config: &FitConfig) -> Result<RigidSimilarity> {
        match self {
            Estimator::Horn => horn_absolute_orientation(
                &trial.source,
                &trial.target,
                &vec![1.0; trial.source.len()],
            ),
            Estimator::GenHorn => {
                gen_horn_fit(&trial.source, &trial.target, config).map(|r| r.state.pose)
            }
            Estimator::GumEm => {
                gum_em_fit(&trial.source, &trial.target, config).map(|r| r.state.pose)
            }
            Estimator::GStudent => {
                gstudent_fit(&trial.source, &trial.target, config).map(|r| r.state.pose)
            }
        }
    }
}

/// Aggregated RMSE for one (estimator, outlier fraction) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub estimator: Estimator,
    pub outlier_fraction: f64,
    pub rmse: RigidError,
    /// Trials that completed; failed trials are excluded from the RMSE.
    pub n_ok: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

/// Deterministic per-(fraction, trial) RNG stream.
fn trial_rng(seed: u64, fraction_idx: usize, trial_idx: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((fraction_idx as u64) << 32) ^ (trial_idx as u64 + 1));
    rng
}

/// Generates one trial: landmarks uniform in the unit cube, a random
/// similarity transform (rotation uniform on SO(3), scale log-uniform in
/// [0.5, 2], translation uniform in [-0.5, 0.5]^3), anisotropic Gaussian
/// noise on inliers with per-trial Dirichlet-split axis variances, and
/// outliers replaced by uniform draws from a box of the configured volume
/// centered on the clean target centroid.
pub fn generate_trial(spec: &TrialSpec, fraction_idx: usize, trial_idx: usize) -> Result<Trial> {
    spec.validate()?;
    let fraction = *spec
        .outlier_fractions
        .get(fraction_idx)
        .ok_or(Error::ParameterRange {
            name: "fraction_idx".into(),
            message: "out of range".into(),
        })?;
    let mut rng = trial_rng(spec.seed, fraction_idx, trial_idx);
    let j = spec.n_landmarks;

    let source: Vec<Vec3> = (0..j)
        .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()))
        .collect();

    let q = Quaternion::new(
        StandardNormal.sample(&mut rng),
        StandardNormal.sample(&mut rng),
        StandardNormal.sample(&mut rng),
        StandardNormal.sample(&mut rng),
    );
    let rotation = nalgebra::UnitQuaternion::from_quaternion(q);
    let scale = (rng.gen_range(0.5_f64.ln()..=2.0_f64.ln())).exp();
    let translation = Vec3::new(
        rng.gen_range(-0.5..0.5),
        rng.gen_range(-0.5..0.5),
        rng.gen_range(-0.5..0.5),
    );
    let truth = RigidSimilarity::new(scale, rotation, translation)?;

    let clean: Vec<Vec3> = source.iter().map(|p| truth.apply(p)).collect();
    let centroid = clean.iter().sum::<Vec3>() / j as f64;

    // Dirichlet(1,1,1) split of the total variance across the axes.
    let exps: Vec<f64> = (0..3).map(|_| -rng.gen::<f64>().ln()).collect();
    let esum: f64 = exps.iter().sum();
    let axis_sd: Vec<f64> = exps
        .iter()
        .map(|e| (spec.inlier_variance * e / esum).sqrt())
        .collect();

    // Random subset of round(fraction * J) outliers.
    let n_out = (fraction * j as f64).round() as usize;
    let mut indices: Vec<usize> = (0..j).collect();
    for i in (1..j).rev() {
        let pick = rng.gen_range(0..=i);
        indices.swap(i, pick);
    }
    let mut inlier = vec![true; j];
    for &idx in indices.iter().take(n_out) {
        inlier[idx] = false;
    }

    let side = spec.outlier_volume.cbrt();
    let target: Vec<Vec3> = clean
        .iter()
        .zip(&inlier)
        .map(|(p, &is_in)| {
            if is_in {
                let mut q = *p;
                for c in 0..3 {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    q[c] += axis_sd[c] * g;
                }
                q
            } else {
                // burn the inlier noise draws so the stream stays aligned
                for _ in 0..3 {
                    let _: f64 = StandardNormal.sample(&mut rng);
                }
                centroid
                    + Vec3::new(
                        rng.gen_range(-side / 2.0..side / 2.0),
                        rng.gen_range(-side / 2.0..side / 2.0),
                        rng.gen_range(-side / 2.0..side / 2.0),
                    )
            }
        })
        .collect();

    Ok(Trial {
        source,
        target,
        truth,
        inlier,
    })
}

/// Runs the full protocol. Trials are generated and fitted independently
/// (in parallel when a rayon pool is available) and aggregated in a fixed
/// order, so the report does not depend on the thread count.
pub fn run_benchmark(spec: &TrialSpec, estimators: &[Estimator]) -> Result<BenchReport> {
    spec.validate()?;
    let config = FitConfig::default();
    let mut ordered: Vec<Estimator> = estimators.to_vec();
    ordered.sort();
    ordered.dedup();

    let mut rows = Vec::new();
    for estimator in ordered {
        for (fi, &fraction) in spec.outlier_fractions.iter().enumerate() {
            let outcomes: Vec<Option<(RigidSimilarity, RigidSimilarity)>> = (0..spec.n_trials)
                .into_par_iter()
                .map(|ti| {
                    let trial = generate_trial(spec, fi, ti).ok()?;
                    let est = estimator.run(&trial, &config).ok()?;
                    Some((est, trial.truth))
                })
                .collect();
            let mut estimates = Vec::new();
            let mut truths = Vec::new();
            for outcome in outcomes.into_iter().flatten() {
                estimates.push(outcome.0);
                truths.push(outcome.1);
            }
            let n_ok = estimates.len();
            rows.push(BenchRow {
                estimator,
                outlier_fraction: fraction,
                rmse: rigid_rmse(&estimates, &truths)?,
                n_ok,
            });
        }
    }
    Ok(BenchReport { rows })
}

fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "nan".to_string()
    }
}

/// Writes the report as CSV: magic comment line, header, then one row per
/// (estimator, fraction) in estimator-alphabetical, fraction-ascending
/// order.
pub fn write_report(report: &BenchReport, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("# morphfit-v1\n");
    out.push_str("estimator,outlier_frac,rmse_rot,rmse_scale,rmse_trans,n_ok\n");
    for row in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.estimator.id(),
            format_float(row.outlier_fraction),
            format_float(row.rmse.rotation),
            format_float(row.rmse.scale),
            format_float(row.rmse.translation),
            row.n_ok
        ));
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::File {
        path: path.display().to_string(),
        source: e,
    })?;
    file.write_all(out.as_bytes()).map_err(|e| Error::File {
        path: path.display().to_string(),
        source: e,
    })
}

/// Parses a report written by [`write_report`].
pub fn read_report(path: &Path) -> Result<BenchReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::File {
        path: path.display().to_string(),
        source: e,
    })?;
    let p = path.display().to_string();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "# morphfit-v1")) => {}
        _ => {
            return Err(Error::Format {
                path: p,
                line: 1,
                message: "missing `# morphfit-v1` magic".into(),
            })
        }
    }
    match lines.next() {
        Some((_, "estimator,outlier_frac,rmse_rot,rmse_scale,rmse_trans,n_ok")) => {}
        _ => {
            return Err(Error::Format {
                path: p,
                line: 2,
                message: "bad header".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Format {
                path: p,
                line: i + 1,
                message: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let estimator = Estimator::from_id(fields[0]).ok_or(Error::Format {
            path: p.clone(),
            line: i + 1,
            message: format!("unknown estimator `{}`", fields[0]),
        })?;
        let parse = |s: &str, field: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::NonNumericField {
                path: p.clone(),
                line: i + 1,
                field: field.into(),
            })
        };
        let n_ok = fields[5].parse().map_err(|_| Error::NonNumericField {
            path: p.clone(),
            line: i + 1,
            field: "n_ok".into(),
        })?;
        rows.push(BenchRow {
            estimator,
            outlier_fraction: parse(fields[1], "outlier_frac")?,
            rmse: RigidError {
                rotation: parse(fields[2], "rmse_rot")?,
                scale: parse(fields[3], "rmse_scale")?,
                translation: parse(fields[4], "rmse_trans")?,
            },
            n_ok,
        });
    }
    Ok(BenchReport { rows })
}

/// Companion metadata: the spec and the fixed protocol choices, serialized
/// canonically.
pub fn write_metadata(spec: &TrialSpec, estimators: &[Estimator], path: &Path) -> Result<()> {
    let mut ordered: Vec<&str> = estimators.iter().map(|e| e.id()).collect();
    ordered.sort();
    ordered.dedup();
    let fractions = spec
        .outlier_fractions
        .iter()
        .map(|f| format_float(*f))
        .collect::<Vec<_>>()
        .join(", ");
    let estimator_list = ordered
        .iter()
        .map(|e| format!("\"{e}\""))
        .collect::<Vec<_>>()
        .join(", ");
    let body = format!(
        "{{\n  \"format_version\": 1,\n  \"seed\": {},\n  \"n_landmarks\": {},\n  \"inlier_variance\": {},\n  \"outlier_volume\": {},\n  \"outlier_fractions\": [{}],\n  \"n_trials\": {},\n  \"estimators\": [{}],\n  \"protocol\": {{\n    \"rotation\": \"uniform over SO(3), quaternion from normalized 4-D Gaussian\",\n    \"scale\": \"log-uniform in [0.5, 2]\",\n    \"translation\": \"uniform in [-0.5, 0.5]^3\",\n    \"inlier_noise\": \"anisotropic Gaussian, per-trial Dirichlet split of the total variance across axes\",\n    \"outlier_noise\": \"uniform box centered on the clean target centroid\"\n  }}\n}}\n",
        spec.seed,
        spec.n_landmarks,
        format_float(spec.inlier_variance),
        format_float(spec.outlier_volume),
        fractions,
        spec.n_trials,
        estimator_list
    );
    std::fs::write(path, body).map_err(|e| Error::File {
        path: path.display().to_string(),
        source: e,
    })
}
