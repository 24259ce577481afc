//! Implementations of the CLI subcommands and the usage/runtime error split
//! behind the exit-code contract.

use std::path::Path;

use morphfit::bench::{run_benchmark, write_metadata, write_report, Estimator, TrialSpec};
use morphfit::error::Error;
use morphfit::filter::track_sequence;
use morphfit::fit::robust_fit;
use morphfit::geometry::Vec3;
use morphfit::io::{
    format_float, load_config, read_landmark_sequence, read_ppm, read_shape_model, write_config,
    write_depth_csv, write_landmark_sequence, write_mask_pgm, write_ppm, write_shape_model,
    LandmarkFrame, RunConfig, CSV_MAGIC,
};
use morphfit::metrics::zncc_score;
use morphfit::shape::{generate_synthetic_model, synthetic_sequence, ShapeModel};
use morphfit::warp::frontalize_frame;
use rayon::prelude::*;

pub enum CliError {
    /// Bad flag or configuration values: exit code 2.
    Usage(String),
    /// I/O and data failures: exit code 1.
    Runtime(String),
}

/// Classifies library errors: parameter and dimension problems are usage
/// errors, everything touching files or data is a runtime failure.
fn classify(err: Error) -> CliError {
    match &err {
        Error::ParameterRange { .. }
        | Error::InfeasibleDimensions(_)
        | Error::InvalidComponentCount { .. }
        | Error::Config(_) => CliError::Usage(err.to_string()),
        _ => CliError::Runtime(err.to_string()),
    }
}

fn runtime(err: Error) -> CliError {
    CliError::Runtime(err.to_string())
}

fn load_run_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => load_config(p).map_err(|e| match e {
            Error::File { .. } => CliError::Runtime(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }),
        None => Ok(RunConfig::default()),
    }
}

fn load_model(path: &Path) -> Result<ShapeModel, CliError> {
    read_shape_model(path).map_err(runtime)
}

fn load_frames(path: &Path) -> Result<Vec<LandmarkFrame>, CliError> {
    read_landmark_sequence(path).map_err(runtime)
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn gen_model(n: usize, k: usize, j: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    let (model, _) = generate_synthetic_model(n, k, j, seed).map_err(classify)?;
    write_shape_model(&model, out).map_err(runtime)?;
    println!(
        "model: {} vertices, {} components, {} landmarks, {} triangles -> {}",
        model.n_vertices(),
        model.k(),
        model.n_landmarks(),
        model.triangles().len(),
        out.display()
    );
    Ok(())
}

pub fn gen_sequence(
    model_path: &Path,
    frames: usize,
    seed: u64,
    noise: f64,
    out: &Path,
    truth_frontal: Option<&Path>,
    truth_poses: Option<&Path>,
) -> Result<(), CliError> {
    if frames == 0 {
        return Err(CliError::Usage("--frames must be >= 1".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(CliError::Usage("--noise must be finite and >= 0".into()));
    }
    let model = load_model(model_path)?;
    let seq = synthetic_sequence(&model, frames, noise, seed);
    let observed: Vec<LandmarkFrame> = seq
        .observed
        .iter()
        .enumerate()
        .map(|(t, points)| LandmarkFrame {
            t,
            points: points.clone(),
        })
        .collect();
    write_landmark_sequence(&observed, out).map_err(runtime)?;
    if let Some(path) = truth_frontal {
        let truth: Vec<LandmarkFrame> = seq
            .truth_frontal
            .iter()
            .enumerate()
            .map(|(t, points)| LandmarkFrame {
                t,
                points: points.clone(),
            })
            .collect();
        write_landmark_sequence(&truth, path).map_err(runtime)?;
    }
    if let Some(path) = truth_poses {
        let mut text = format!("{CSV_MAGIC}\nt,rho,qw,qx,qy,qz,tx,ty,tz\n");
        for (t, pose) in seq.truth_poses.iter().enumerate() {
            let q = pose.rotation;
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                t,
                format_float(pose.scale),
                format_float(q.w),
                format_float(q.i),
                format_float(q.j),
                format_float(q.k),
                format_float(pose.translation.x),
                format_float(pose.translation.y),
                format_float(pose.translation.z),
            ));
        }
        write_text(path, &text)?;
    }
    println!("sequence: {frames} frames -> {}", out.display());
    Ok(())
}

fn pose_fields(pose: &morphfit::geometry::RigidSimilarity) -> String {
    let q = pose.rotation;
    format!(
        "{},{},{},{},{},{},{},{}",
        format_float(pose.scale),
        format_float(q.w),
        format_float(q.i),
        format_float(q.j),
        format_float(q.k),
        format_float(pose.translation.x),
        format_float(pose.translation.y),
        format_float(pose.translation.z),
    )
}

pub fn fit(
    model_path: &Path,
    landmarks_path: &Path,
    config_path: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let config = load_run_config(config_path)?;
    let model = load_model(model_path)?;
    let frames = load_frames(landmarks_path)?;
    if frames.iter().any(|f| f.points.len() != model.n_landmarks()) {
        return Err(CliError::Runtime(format!(
            "landmark count does not match the model's {} landmarks",
            model.n_landmarks()
        )));
    }
    ensure_dir(out)?;

    let fit_config = config.fit_config();
    let results: Vec<Result<morphfit::fit::FitResult, Error>> = frames
        .par_iter()
        .map(|frame| robust_fit(&frame.points, &model, &fit_config, None))
        .collect();

    let k = model.k();
    let j = model.n_landmarks();
    let mut state_csv = String::from(CSV_MAGIC);
    state_csv.push('\n');
    state_csv.push_str("t,converged,iterations,objective,mu,rho,qw,qx,qy,qz,tx,ty,tz");
    for kk in 0..k {
        state_csv.push_str(&format!(",s_{kk}"));
    }
    for jj in 0..j {
        state_csv.push_str(&format!(",omega_{jj}"));
    }
    state_csv.push('\n');

    let mut frontalized = Vec::with_capacity(frames.len());
    let mut failures = Vec::new();
    for (t, result) in results.iter().enumerate() {
        match result {
            Ok(r) => {
                state_csv.push_str(&format!(
                    "{},{},{},{},{},{}",
                    t,
                    r.converged,
                    r.iterations,
                    format_float(r.objective),
                    format_float(r.state.mu),
                    pose_fields(&r.state.pose),
                ));
                for kk in 0..k {
                    state_csv.push_str(&format!(",{}", format_float(r.state.embedding.coeffs[kk])));
                }
                for w in &r.state.weights {
                    state_csv.push_str(&format!(",{}", format_float(*w)));
                }
                state_csv.push('\n');
                frontalized.push(LandmarkFrame {
                    t,
                    points: r.frontalized.clone(),
                });
            }
            Err(e) => failures.push(format!("frame {t}: {e}")),
        }
    }

    write_text(&out.join("state.csv"), &state_csv)?;
    write_landmark_sequence(&frontalized, &out.join("frontalized.csv")).map_err(runtime)?;
    write_config(&config, &out.join("effective_config.json")).map_err(runtime)?;

    let converged = results
        .iter()
        .filter(|r| r.as_ref().map(|x| x.converged).unwrap_or(false))
        .count();
    println!(
        "fit: {} frames, {} converged -> {}",
        frames.len(),
        converged,
        out.display()
    );
    if !failures.is_empty() {
        for f in &failures {
            eprintln!("error: {f}");
        }
        return Err(CliError::Runtime(format!(
            "{} of {} frames failed",
            failures.len(),
            frames.len()
        )));
    }
    Ok(())
}

pub fn track(
    model_path: &Path,
    landmarks_path: &Path,
    config_path: Option<&Path>,
    out: &Path,
    truth_path: Option<&Path>,
) -> Result<(), CliError> {
    let config = load_run_config(config_path)?;
    let model = load_model(model_path)?;
    let frames = load_frames(landmarks_path)?;
    if frames.iter().any(|f| f.points.len() != model.n_landmarks()) {
        return Err(CliError::Runtime(format!(
            "landmark count does not match the model's {} landmarks",
            model.n_landmarks()
        )));
    }
    ensure_dir(out)?;

    let observed: Vec<Vec<Vec3>> = frames.iter().map(|f| f.points.clone()).collect();
    let tracked = track_sequence(&observed, &model, &config.fit_config(), &config.filter_config())
        .map_err(runtime)?;

    let k = model.k();
    let j = model.n_landmarks();
    let mut state_csv = String::from(CSV_MAGIC);
    state_csv.push('\n');
    state_csv.push_str("t,log_likelihood,converged,iterations,rho,qw,qx,qy,qz,tx,ty,tz");
    for kk in 0..k {
        state_csv.push_str(&format!(",s_{kk}"));
    }
    state_csv.push('\n');
    let mut vertices = Vec::with_capacity(tracked.len());
    for (t, frame) in tracked.iter().enumerate() {
        state_csv.push_str(&format!(
            "{},{},{},{},{}",
            t,
            format_float(frame.log_likelihood),
            frame.fit_converged,
            frame.fit_iterations,
            pose_fields(&frame.pose),
        ));
        for kk in 0..k {
            state_csv.push_str(&format!(",{}", format_float(frame.s_hat.coeffs[kk])));
        }
        state_csv.push('\n');
        let points: Vec<Vec3> = (0..j)
            .map(|jj| {
                Vec3::new(
                    frame.v_hat[3 * jj],
                    frame.v_hat[3 * jj + 1],
                    frame.v_hat[3 * jj + 2],
                )
            })
            .collect();
        vertices.push(LandmarkFrame { t, points });
    }
    write_text(&out.join("state.csv"), &state_csv)?;
    write_landmark_sequence(&vertices, &out.join("vertices.csv")).map_err(runtime)?;
    write_config(&config, &out.join("effective_config.json")).map_err(runtime)?;
    println!("track: {} frames -> {}", tracked.len(), out.display());

    if let Some(truth_path) = truth_path {
        let truth = load_frames(truth_path)?;
        if truth.len() != frames.len() {
            return Err(CliError::Runtime(format!(
                "truth has {} frames, sequence has {}",
                truth.len(),
                frames.len()
            )));
        }
        let fit_config = config.fit_config();
        let mut filtered_sq = 0.0;
        let mut per_frame_sq = 0.0;
        let mut count = 0.0;
        for (t, truth_frame) in truth.iter().enumerate() {
            let per_frame = robust_fit(&observed[t], &model, &fit_config, None)
                .map_err(runtime)?;
            for jj in 0..j {
                let tp = truth_frame.points[jj];
                let fp = &vertices[t].points[jj];
                let pf = per_frame.frontalized[jj];
                filtered_sq += (fp - tp).norm_squared();
                per_frame_sq += (pf - tp).norm_squared();
                count += 3.0;
            }
        }
        let filtered_rmse = (filtered_sq / count).sqrt();
        let per_frame_rmse = (per_frame_sq / count).sqrt();
        println!(
            "rmse vs truth: filtered {} | per-frame {}",
            format_float(filtered_rmse),
            format_float(per_frame_rmse)
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn frontalize(
    model_path: &Path,
    landmarks_path: &Path,
    image_path: &Path,
    config_path: Option<&Path>,
    frame: usize,
    out_image: &Path,
    out_depth: &Path,
    out_mask: Option<&Path>,
) -> Result<(), CliError> {
    let config = load_run_config(config_path)?;
    let model = load_model(model_path)?;
    let frames = load_frames(landmarks_path)?;
    let input = read_ppm(image_path).map_err(runtime)?;
    let frame_data = frames.get(frame).ok_or_else(|| {
        CliError::Runtime(format!(
            "frame {frame} not in landmark file ({} frames)",
            frames.len()
        ))
    })?;
    if frame_data.points.len() != model.n_landmarks() {
        return Err(CliError::Runtime(format!(
            "frame has {} landmarks, model expects {}",
            frame_data.points.len(),
            model.n_landmarks()
        )));
    }

    let (image, depth, fit) = frontalize_frame(
        &input,
        &model,
        &frame_data.points,
        &config.fit_config(),
        config.viewport(),
        input.width,
        input.height,
    )
    .map_err(runtime)?;

    write_ppm(&image, out_image).map_err(runtime)?;
    write_depth_csv(&depth, out_depth).map_err(runtime)?;
    if let Some(mask_path) = out_mask {
        write_mask_pgm(&image, mask_path).map_err(runtime)?;
    }
    let echo = out_image.with_extension("effective-config.json");
    write_config(&config, &echo).map_err(runtime)?;

    let covered = image
        .mask
        .as_ref()
        .map(|m| m.iter().filter(|&&v| v).count())
        .unwrap_or(image.width * image.height);
    println!(
        "frontalize: frame {frame}, converged {} in {} sweeps, scale {}, {} covered pixels",
        fit.converged,
        fit.iterations,
        format_float(fit.state.pose.scale),
        covered
    );
    Ok(())
}

fn parse_pair(text: &str, sep: char, what: &str) -> Result<(i64, i64), CliError> {
    let parts: Vec<&str> = text.split(sep).collect();
    if parts.len() != 2 {
        return Err(CliError::Usage(format!(
            "{what} must be two values separated by `{sep}`"
        )));
    }
    let a = parts[0]
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("bad {what}: `{text}`")))?;
    let b = parts[1]
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("bad {what}: `{text}`")))?;
    Ok((a, b))
}

#[allow(clippy::too_many_arguments)]
pub fn zncc(
    a: &Path,
    b: &Path,
    center: &str,
    region: Option<&str>,
    shift: Option<i64>,
    scale: f64,
    config_path: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let config = load_run_config(config_path)?;
    let (h, v) = parse_pair(center, ',', "--center")?;
    let mut zncc_config = config.zncc_config();
    if let Some(region) = region {
        let (w, hh) = parse_pair(region, 'x', "--region")?;
        if w < 3 || hh < 3 {
            return Err(CliError::Usage("--region sides must be >= 3".into()));
        }
        zncc_config.region_width = w as usize;
        zncc_config.region_height = hh as usize;
    }
    if let Some(shift) = shift {
        if shift < 0 {
            return Err(CliError::Usage("--shift must be >= 0".into()));
        }
        zncc_config.max_shift = shift;
    }

    let pairs: Vec<(std::path::PathBuf, std::path::PathBuf)> = if a.is_dir() && b.is_dir() {
        let list = |dir: &Path| -> Result<Vec<std::path::PathBuf>, CliError> {
            let mut entries: Vec<_> = std::fs::read_dir(dir)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file())
                .collect();
            entries.sort();
            Ok(entries)
        };
        let left = list(a)?;
        let right = list(b)?;
        if left.len() != right.len() {
            return Err(CliError::Runtime(format!(
                "directories hold {} vs {} files",
                left.len(),
                right.len()
            )));
        }
        left.into_iter().zip(right).collect()
    } else {
        vec![(a.to_path_buf(), b.to_path_buf())]
    };

    let mut csv = format!("{CSV_MAGIC}\nframe,score,raw,shift_h,shift_v\n");
    for (frame, (pa, pb)) in pairs.iter().enumerate() {
        let img_a = read_ppm(pa).map_err(runtime)?.to_gray();
        let img_b = read_ppm(pb).map_err(runtime)?.to_gray();
        let result = zncc_score(&img_a, &img_b, (h, v), &zncc_config, scale).map_err(|e| {
            match e {
                Error::RegionOutOfBounds => CliError::Usage(e.to_string()),
                other => CliError::Runtime(other.to_string()),
            }
        })?;
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            frame,
            format_float(result.score),
            format_float(result.raw),
            result.shift.0,
            result.shift.1
        ));
    }
    match out {
        Some(path) => write_text(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

pub fn bench(
    trials: usize,
    fractions: &str,
    estimators: &str,
    seed: u64,
    landmarks: usize,
    out: &Path,
) -> Result<(), CliError> {
    let fractions: Vec<f64> = fractions
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("bad fraction `{s}`")))
        })
        .collect::<Result<_, _>>()?;
    let estimators: Vec<Estimator> = estimators
        .split(',')
        .map(|s| {
            Estimator::from_id(s.trim())
                .ok_or_else(|| CliError::Usage(format!("unknown estimator `{s}`")))
        })
        .collect::<Result<_, _>>()?;

    let spec = TrialSpec {
        seed,
        n_landmarks: landmarks,
        outlier_fractions: fractions,
        n_trials: trials,
        ..TrialSpec::default()
    };
    spec.validate().map_err(classify)?;

    let report = run_benchmark(&spec, &estimators).map_err(runtime)?;
    write_report(&report, out).map_err(runtime)?;
    let meta = out.with_extension("meta.json");
    write_metadata(&spec, &estimators, &meta).map_err(runtime)?;
    println!(
        "bench: {} rows ({} trials x {} fractions x {} estimators) -> {}",
        report.rows.len(),
        spec.n_trials,
        spec.outlier_fractions.len(),
        estimators.len(),
        out.display()
    );
    Ok(())
}
