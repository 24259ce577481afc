//! Deterministic file formats: landmark-sequence CSV, binary PPM/PGM
//! images, depth-map CSV, shape-model JSON and the run configuration.
//!
//! Every text format starts with the magic comment `# morphfit-v1` (CSV) or
//! carries `"format_version": 1` (JSON). Floats are written with 17
//! significant digits so parsing them back is bit-exact.

use std::io::{Read as _, Write as _};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::GammaSpec;
use crate::fit::FitConfig;
use crate::geometry::Vec3;
use crate::metrics::ZnccConfig;
use crate::shape::ShapeModel;
use crate::warp::{DepthImage, PixelImage, Viewport};

pub const CSV_MAGIC: &str = "# morphfit-v1";

/// Round-trip-safe float formatting (17 significant digits).
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "nan".to_string()
    }
}

fn file_error(path: &Path, source: std::io::Error) -> Error {
    Error::File {
        path: path.display().to_string(),
        source,
    }
}

fn format_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// One frame of a landmark sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkFrame {
    pub t: usize,
    pub points: Vec<Vec3>,
}

/// Reads a `t,j,x,y,z` CSV into frames sorted by `t` with landmarks sorted
/// by `j`. Validation is strict: frames must be contiguous from 0, every
/// frame must carry the same contiguous set of landmark indices, duplicate
/// `(t, j)` pairs and non-numeric or non-finite fields are errors carrying
/// the line number.
pub fn read_landmark_sequence(path: &Path) -> Result<Vec<LandmarkFrame>> {
    let text = std::fs::read_to_string(path).map_err(|e| file_error(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l == CSV_MAGIC => {}
        _ => return Err(format_error(path, 1, "missing `# morphfit-v1` magic")),
    }
    match lines.next() {
        Some((_, "t,j,x,y,z")) => {}
        _ => return Err(format_error(path, 2, "expected header `t,j,x,y,z`")),
    }

    let mut rows: Vec<(usize, usize, Vec3, usize)> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(format_error(
                path,
                line_no,
                format!("expected 5 fields, got {}", fields.len()),
            ));
        }
        let t: usize = fields[0].parse().map_err(|_| Error::NonNumericField {
            path: path.display().to_string(),
            line: line_no,
            field: "t".into(),
        })?;
        let j: usize = fields[1].parse().map_err(|_| Error::NonNumericField {
            path: path.display().to_string(),
            line: line_no,
            field: "j".into(),
        })?;
        let mut coords = [0.0; 3];
        for (c, name) in ["x", "y", "z"].iter().enumerate() {
            let v: f64 = fields[2 + c].parse().map_err(|_| Error::NonNumericField {
                path: path.display().to_string(),
                line: line_no,
                field: (*name).into(),
            })?;
            if !v.is_finite() {
                return Err(format_error(
                    path,
                    line_no,
                    format!("non-finite {name} value"),
                ));
            }
            coords[c] = v;
        }
        if !seen.insert((t, j)) {
            return Err(Error::DuplicateLandmark {
                path: path.display().to_string(),
                line: line_no,
                t,
                j,
            });
        }
        rows.push((t, j, Vec3::new(coords[0], coords[1], coords[2]), line_no));
    }
    if rows.is_empty() {
        return Err(format_error(path, 3, "no landmark rows"));
    }

    let t_max = rows.iter().map(|r| r.0).max().unwrap();
    let j_max = rows.iter().map(|r| r.1).max().unwrap();
    let j_count = j_max + 1;
    let mut frames: Vec<Vec<Option<Vec3>>> = vec![vec![None; j_count]; t_max + 1];
    for (t, j, p, _) in rows {
        frames[t][j] = Some(p);
    }
    let mut out = Vec::with_capacity(frames.len());
    for (t, frame) in frames.into_iter().enumerate() {
        let mut points = Vec::with_capacity(j_count);
        for (j, p) in frame.into_iter().enumerate() {
            match p {
                Some(p) => points.push(p),
                None => {
                    return Err(Error::MissingLandmark {
                        path: path.display().to_string(),
                        t,
                        j,
                    })
                }
            }
        }
        out.push(LandmarkFrame { t, points });
    }
    Ok(out)
}

/// Writes frames in the canonical `t,j,x,y,z` layout (frames then landmarks
/// ascending, indices re-based to 0).
pub fn write_landmark_sequence(frames: &[LandmarkFrame], path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(CSV_MAGIC);
    out.push('\n');
    out.push_str("t,j,x,y,z\n");
    for (t, frame) in frames.iter().enumerate() {
        for (j, p) in frame.points.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                t,
                j,
                format_float(p.x),
                format_float(p.y),
                format_float(p.z)
            ));
        }
    }
    std::fs::write(path, out).map_err(|e| file_error(path, e))
}

/// Reads a binary P5 (gray) or P6 (RGB) image with maxval 255. Header
/// comments are tolerated; anything else is rejected.
pub fn read_ppm(path: &Path) -> Result<PixelImage> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| file_error(path, e))?;

    let unsupported = |message: &str| Error::UnsupportedImage {
        path: path.display().to_string(),
        message: message.to_string(),
    };

    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        // skip whitespace and `#` comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(unsupported("truncated header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    let magic = token(&bytes)?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(unsupported(&format!("magic `{other}`"))),
    };
    let width: usize = token(&bytes)?
        .parse()
        .map_err(|_| unsupported("bad width"))?;
    let height: usize = token(&bytes)?
        .parse()
        .map_err(|_| unsupported("bad height"))?;
    let maxval: usize = token(&bytes)?
        .parse()
        .map_err(|_| unsupported("bad maxval"))?;
    if maxval != 255 {
        return Err(unsupported(&format!("maxval {maxval} (only 255)")));
    }
    // single whitespace byte separates header from payload
    pos += 1;
    let expected = width * height * channels;
    let got = bytes.len().saturating_sub(pos);
    if got < expected {
        return Err(Error::TruncatedImage {
            path: path.display().to_string(),
            expected,
            got,
        });
    }
    Ok(PixelImage {
        width,
        height,
        channels,
        data: bytes[pos..pos + expected].to_vec(),
        mask: None,
    })
}

/// Writes a binary P5/P6 image with maxval 255 and no comments. Pixels
/// marked empty in the mask are rendered pure white (the preview convention
/// for missing photometric data); use [`write_mask_pgm`] to keep the mask.
pub fn write_ppm(image: &PixelImage, path: &Path) -> Result<()> {
    let magic = match image.channels {
        1 => "P5",
        3 => "P6",
        _ => {
            return Err(Error::UnsupportedImage {
                path: path.display().to_string(),
                message: format!("{} channels", image.channels),
            })
        }
    };
    let mut out = Vec::with_capacity(image.data.len() + 32);
    out.extend_from_slice(format!("{magic}\n{} {}\n255\n", image.width, image.height).as_bytes());
    match &image.mask {
        None => out.extend_from_slice(&image.data),
        Some(mask) => {
            for (i, &valid) in mask.iter().enumerate() {
                for c in 0..image.channels {
                    out.push(if valid {
                        image.data[i * image.channels + c]
                    } else {
                        255
                    });
                }
            }
        }
    }
    std::fs::write(path, out).map_err(|e| file_error(path, e))
}

/// Writes the validity mask as a P5 image (255 = valid, 0 = empty).
pub fn write_mask_pgm(image: &PixelImage, path: &Path) -> Result<()> {
    let data: Vec<u8> = match &image.mask {
        Some(mask) => mask.iter().map(|&v| if v { 255 } else { 0 }).collect(),
        None => vec![255; image.width * image.height],
    };
    write_ppm(
        &PixelImage {
            width: image.width,
            height: image.height,
            channels: 1,
            data,
            mask: None,
        },
        path,
    )
}

/// Writes a depth map as row-major CSV with `nan` for invalid pixels.
pub fn write_depth_csv(depth: &DepthImage, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(CSV_MAGIC);
    out.push('\n');
    for y in 0..depth.height {
        let row: Vec<String> = (0..depth.width)
            .map(|x| format_float(depth.at(x, y)))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| file_error(path, e))
}

/// Reads a depth CSV written by [`write_depth_csv`] bit-exactly.
pub fn read_depth_csv(path: &Path) -> Result<DepthImage> {
    let text = std::fs::read_to_string(path).map_err(|e| file_error(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l == CSV_MAGIC => {}
        _ => return Err(format_error(path, 1, "missing `# morphfit-v1` magic")),
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let v: f64 = field.parse().map_err(|_| Error::NonNumericField {
                path: path.display().to_string(),
                line: i + 1,
                field: field.to_string(),
            })?;
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(format_error(path, i + 1, "ragged row"));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(format_error(path, 2, "no depth rows"));
    }
    let height = rows.len();
    let width = rows[0].len();
    let mut depth = DepthImage::new(width, height);
    for (y, row) in rows.into_iter().enumerate() {
        for (x, v) in row.into_iter().enumerate() {
            depth.set(x, y, v);
        }
    }
    Ok(depth)
}

/// Writes a shape model as canonical JSON (`format_version: 1`, fixed key
/// order, 17-significant-digit floats).
pub fn write_shape_model(model: &ShapeModel, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str("{\n");
    out.push_str("  \"format_version\": 1,\n");
    out.push_str(&format!("  \"n_vertices\": {},\n", model.n_vertices()));
    out.push_str(&format!("  \"k\": {},\n", model.k()));
    push_float_array(&mut out, "mean", model.mean().iter().copied());
    // basis flattened row-major (3N rows of K entries)
    let basis = model.basis();
    let flat = (0..basis.nrows()).flat_map(|r| (0..basis.ncols()).map(move |c| basis[(r, c)]));
    push_float_array(&mut out, "basis", flat);
    push_float_array(&mut out, "eigenvalues", model.eigenvalues().iter().copied());
    let triangles: Vec<String> = model
        .triangles()
        .iter()
        .map(|t| format!("[{},{},{}]", t[0], t[1], t[2]))
        .collect();
    out.push_str(&format!("  \"triangles\": [{}],\n", triangles.join(",")));
    let landmarks: Vec<String> = model.landmark_map().iter().map(|i| i.to_string()).collect();
    out.push_str(&format!("  \"landmark_map\": [{}]\n", landmarks.join(",")));
    out.push_str("}\n");
    std::fs::write(path, out).map_err(|e| file_error(path, e))
}

fn push_float_array(out: &mut String, key: &str, values: impl Iterator<Item = f64>) {
    let items: Vec<String> = values.map(format_float).collect();
    out.push_str(&format!("  \"{key}\": [{}],\n", items.join(",")));
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ShapeModelFile {
    format_version: u32,
    n_vertices: usize,
    k: usize,
    mean: Vec<f64>,
    basis: Vec<f64>,
    eigenvalues: Vec<f64>,
    triangles: Vec<[usize; 3]>,
    landmark_map: Vec<usize>,
}

/// Loads a shape model, re-validating every model invariant.
pub fn read_shape_model(path: &Path) -> Result<ShapeModel> {
    let text = std::fs::read_to_string(path).map_err(|e| file_error(path, e))?;
    let file: ShapeModelFile = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    if file.format_version != 1 {
        return Err(Error::Config(format!(
            "{}: unsupported format_version {}",
            path.display(),
            file.format_version
        )));
    }
    let n3 = 3 * file.n_vertices;
    if file.mean.len() != n3 {
        return Err(Error::DimensionMismatch {
            expected: n3,
            got: file.mean.len(),
        });
    }
    if file.basis.len() != n3 * file.k {
        return Err(Error::DimensionMismatch {
            expected: n3 * file.k,
            got: file.basis.len(),
        });
    }
    if file.eigenvalues.len() != file.k {
        return Err(Error::DimensionMismatch {
            expected: file.k,
            got: file.eigenvalues.len(),
        });
    }
    let basis = DMatrix::from_fn(n3, file.k, |r, c| file.basis[r * file.k + c]);
    ShapeModel::new(
        basis,
        DVector::from_vec(file.mean),
        DVector::from_vec(file.eigenvalues),
        file.triangles,
        file.landmark_map,
    )
}

/// Flat run configuration covering the fit, the filter, the correlation
/// metric and the warping viewport. Every field has a default, so an empty
/// JSON object is a valid config; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub format_version: u32,
    pub kappa: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub mu_init: f64,
    pub rotation_tol: f64,
    pub alpha: f64,
    pub gamma_s: Option<GammaValue>,
    pub gamma_v: Option<GammaValue>,
    pub zncc_width: usize,
    pub zncc_height: usize,
    pub zncc_max_shift: i64,
    pub viewport_scale: f64,
    pub viewport_offset_x: f64,
    pub viewport_offset_y: f64,
}

/// Scalar or per-coordinate diagonal process variance in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaValue {
    Scalar(f64),
    Diagonal(Vec<f64>),
}

impl GammaValue {
    pub fn to_spec(&self) -> GammaSpec {
        match self {
            GammaValue::Scalar(v) => GammaSpec::Scalar(*v),
            GammaValue::Diagonal(d) => GammaSpec::Diagonal(d.clone()),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            format_version: 1,
            kappa: 1.0,
            epsilon: 1e-6,
            max_iters: 100,
            mu_init: 1.0,
            rotation_tol: 1e-12,
            alpha: 0.06,
            gamma_s: None,
            gamma_v: None,
            zncc_width: 48,
            zncc_height: 48,
            zncc_max_shift: 8,
            viewport_scale: 1.0,
            viewport_offset_x: 0.0,
            viewport_offset_y: 0.0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != 1 {
            return Err(Error::Config(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        self.fit_config().validate()?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::ParameterRange {
                name: "alpha".into(),
                message: format!("must be in [0, 1], got {}", self.alpha),
            });
        }
        self.zncc_config().validate()?;
        if !self.viewport_scale.is_finite() || self.viewport_scale <= 0.0 {
            return Err(Error::ParameterRange {
                name: "viewport_scale".into(),
                message: "must be > 0".into(),
            });
        }
        for (name, gamma) in [("gamma_s", &self.gamma_s), ("gamma_v", &self.gamma_v)] {
            if let Some(g) = gamma {
                let ok = match g {
                    GammaValue::Scalar(v) => *v > 0.0,
                    GammaValue::Diagonal(d) => !d.is_empty() && d.iter().all(|v| *v > 0.0),
                };
                if !ok {
                    return Err(Error::ParameterRange {
                        name: name.into(),
                        message: "variances must be > 0".into(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            kappa: self.kappa,
            epsilon: self.epsilon,
            max_iters: self.max_iters,
            mu_init: self.mu_init,
            rotation_tol: self.rotation_tol,
            gum_volume: None,
        }
    }

    pub fn filter_config(&self) -> crate::filter::FilterConfig {
        crate::filter::FilterConfig {
            alpha: self.alpha,
            gamma_s: self.gamma_s.as_ref().map(|g| g.to_spec()),
            gamma_v: self.gamma_v.as_ref().map(|g| g.to_spec()),
        }
    }

    pub fn zncc_config(&self) -> ZnccConfig {
        ZnccConfig {
            region_width: self.zncc_width,
            region_height: self.zncc_height,
            max_shift: self.zncc_max_shift,
        }
    }

    pub fn viewport(&self) -> Viewport {
        Viewport {
            scale: self.viewport_scale,
            offset_x: self.viewport_offset_x,
            offset_y: self.viewport_offset_y,
        }
    }
}

/// Loads a config file, filling defaults, rejecting unknown keys and
/// range-checking every field.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| file_error(path, e))?;
    parse_config(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let config: RunConfig =
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Writes the fully materialized config (canonical key order and float
/// formatting), so a run is reproducible from its echo alone.
pub fn write_config(config: &RunConfig, path: &Path) -> Result<()> {
    let gamma = |g: &Option<GammaValue>| match g {
        None => "null".to_string(),
        Some(GammaValue::Scalar(v)) => format_float(*v),
        Some(GammaValue::Diagonal(d)) => {
            let items: Vec<String> = d.iter().map(|v| format_float(*v)).collect();
            format!("[{}]", items.join(","))
        }
    };
    let body = format!(
        "{{\n  \"format_version\": {},\n  \"kappa\": {},\n  \"epsilon\": {},\n  \"max_iters\": {},\n  \"mu_init\": {},\n  \"rotation_tol\": {},\n  \"alpha\": {},\n  \"gamma_s\": {},\n  \"gamma_v\": {},\n  \"zncc_width\": {},\n  \"zncc_height\": {},\n  \"zncc_max_shift\": {},\n  \"viewport_scale\": {},\n  \"viewport_offset_x\": {},\n  \"viewport_offset_y\": {}\n}}\n",
        config.format_version,
        format_float(config.kappa),
        format_float(config.epsilon),
        config.max_iters,
        format_float(config.mu_init),
        format_float(config.rotation_tol),
        format_float(config.alpha),
        gamma(&config.gamma_s),
        gamma(&config.gamma_v),
        config.zncc_width,
        config.zncc_height,
        config.zncc_max_shift,
        format_float(config.viewport_scale),
        format_float(config.viewport_offset_x),
        format_float(config.viewport_offset_y),
    );
    let mut file = std::fs::File::create(path).map_err(|e| file_error(path, e))?;
    file.write_all(body.as_bytes())
        .map_err(|e| file_error(path, e))
}
