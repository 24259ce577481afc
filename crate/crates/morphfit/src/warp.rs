//! Software rasterization of a fitted frontal mesh into a dense depth map
//! (barycentric interpolation, smaller-depth-wins visibility) and synthesis
//! of a frontal image by mapping every depth pixel back through the inverse
//! pose and copying colors from the input view.

use crate::error::{Error, Result};
use crate::geometry::{RigidSimilarity, Vec3};

/// 8-bit raster image, grayscale or RGB, with an optional per-pixel
/// emptiness mask (pixels with no photometric information).
#[derive(Debug, Clone, PartialEq)]
pub struct PixelImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
    /// `mask[i] == false` marks pixel `i` as empty. `None` means all valid.
    pub mask: Option<Vec<bool>>,
}

impl PixelImage {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3, "1 or 3 channels");
        Self {
            width,
            height,
            channels,
            data: vec![0; width * height * channels],
            mask: None,
        }
    }

    pub fn from_fn_gray(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut img = Self::new(width, height, 1);
        for y in 0..height {
            for x in 0..width {
                img.data[y * width + x] = f(x, y);
            }
        }
        img
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, value: &[u8]) {
        let i = (y * self.width + x) * self.channels;
        self.data[i..i + self.channels].copy_from_slice(value);
    }

    pub fn is_empty_at(&self, x: usize, y: usize) -> bool {
        match &self.mask {
            Some(m) => !m[y * self.width + x],
            None => false,
        }
    }

    /// Grayscale copy; RGB reduces via integer luma (299/587/114).
    pub fn to_gray(&self) -> PixelImage {
        if self.channels == 1 {
            return self.clone();
        }
        let mut out = PixelImage::new(self.width, self.height, 1);
        for i in 0..self.width * self.height {
            let r = self.data[3 * i] as u32;
            let g = self.data[3 * i + 1] as u32;
            let b = self.data[3 * i + 2] as u32;
            out.data[i] = ((r * 299 + g * 587 + b * 114) / 1000) as u8;
        }
        out.mask = self.mask.clone();
        out
    }
}

/// Dense depth map; invalid pixels carry NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depth: vec![f64::NAN; width * height],
        }
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.depth[y * self.width + x] = value;
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.at(x, y).is_finite()
    }

    pub fn valid_count(&self) -> usize {
        self.depth.iter().filter(|d| d.is_finite()).count()
    }
}

/// Scale-plus-offset mapping from model coordinates to pixel coordinates,
/// applied uniformly to all three axes so it composes as a similarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewport {
    pub scale: f64,
    pub offset_x: f64,
    pub offset_y: f64,
}

impl Default for Viewport {
    fn default() -> Self {
        Self {
            scale: 1.0,
            offset_x: 0.0,
            offset_y: 0.0,
        }
    }
}

impl Viewport {
    pub fn to_similarity(self) -> Result<RigidSimilarity> {
        RigidSimilarity::new(
            self.scale,
            crate::geometry::Quat::identity(),
            Vec3::new(self.offset_x, self.offset_y, 0.0),
        )
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        Vec3::new(
            self.scale * p.x + self.offset_x,
            self.scale * p.y + self.offset_y,
            self.scale * p.z,
        )
    }
}

/// Signed parallelogram area of `(b - a) x (p - a)`.
fn edge_function(a: (f64, f64), b: (f64, f64), p: (f64, f64)) -> f64 {
    (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0)
}

/// Barycentric coordinates of `pixel` in the 2-D triangle, or `None` when
/// the pixel lies outside (any coordinate outside `[0, 1]`).
///
/// Each coordinate comes from its own edge function over the common signed
/// doubled area, so pixels exactly on a shared edge evaluate to an exact
/// zero for the opposite vertex and are claimed by both triangles. The
/// coordinates solve the 2x2 affine system with `b1 + b2 + b3 = 1` (up to
/// rounding); triangles with doubled area at or below 1e-12 are rejected
/// as degenerate.
pub fn barycentric_coordinates(
    pixel: (f64, f64),
    triangle: &[(f64, f64); 3],
) -> Result<Option<[f64; 3]>> {
    let [v1, v2, v3] = *triangle;
    let det = edge_function(v1, v2, v3);
    if det.abs() <= 1e-12 {
        return Err(Error::DegenerateTriangle { area: det });
    }
    let b1 = edge_function(v2, v3, pixel) / det;
    let b2 = edge_function(v3, v1, pixel) / det;
    let b3 = edge_function(v1, v2, pixel) / det;
    let inside =
        (0.0..=1.0).contains(&b1) && (0.0..=1.0).contains(&b2) && (0.0..=1.0).contains(&b3);
    Ok(if inside { Some([b1, b2, b3]) } else { None })
}

/// Rasterizes a triangulated mesh (vertices already in pixel coordinates)
/// into a dense depth map. Depth is interpolated barycentrically; where
/// triangles overlap, the smaller depth wins. Degenerate triangles are
/// skipped. An off-image mesh yields an all-invalid map.
pub fn rasterize_frontal_depth(
    vertices: &[Vec3],
    triangles: &[[usize; 3]],
    width: usize,
    height: usize,
) -> DepthImage {
    let mut depth = DepthImage::new(width, height);
    if width == 0 || height == 0 {
        return depth;
    }
    for tri in triangles {
        let v = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
        let tri2d = [(v[0].x, v[0].y), (v[1].x, v[1].y), (v[2].x, v[2].y)];
        let min_x = tri2d.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let max_x = tri2d.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let min_y = tri2d.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let max_y = tri2d.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        if max_x < 0.0 || max_y < 0.0 || min_x > (width - 1) as f64 || min_y > (height - 1) as f64 {
            continue;
        }
        let x0 = min_x.ceil().max(0.0) as usize;
        let x1 = max_x.floor().min((width - 1) as f64) as usize;
        let y0 = min_y.ceil().max(0.0) as usize;
        let y1 = max_y.floor().min((height - 1) as f64) as usize;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let bary = match barycentric_coordinates((x as f64, y as f64), &tri2d) {
                    Ok(Some(b)) => b,
                    Ok(None) => continue,
                    Err(_) => break,
                };
                let z = bary[0] * v[0].z + bary[1] * v[1].z + bary[2] * v[2].z;
                let cur = depth.at(x, y);
                if !cur.is_finite() || z < cur {
                    depth.set(x, y, z);
                }
            }
        }
    }
    depth
}

/// Rounds half away from zero, the documented tie-break for pixel lookup.
pub fn round_half_away(x: f64) -> i64 {
    x.round() as i64
}

/// Maps a frontal depth-map point `(a1, a2, depth)` through the inverse
/// pose, returning the 3-D point and its rounded source pixel.
pub fn backproject(a: &Vec3, inverse_pose: &RigidSimilarity) -> (Vec3, (i64, i64)) {
    let b = inverse_pose.apply(a);
    (b, (round_half_away(b.x), round_half_away(b.y)))
}

/// Synthesizes a frontal image: every valid depth pixel maps back through
/// the inverse of `pose` into the input image; of all frontal pixels
/// landing on the same source pixel only the one with the smallest mapped
/// depth copies the color, everything else is marked empty. Source pixels
/// outside the input (or empty in it) also yield empty output.
pub fn synthesize_frontal_image(
    input: &PixelImage,
    depth: &DepthImage,
    pose: &RigidSimilarity,
) -> Result<PixelImage> {
    let inverse = pose.inverse()?;
    let (w, h) = (depth.width, depth.height);
    let mut mapped: Vec<Option<(i64, i64, f64)>> = vec![None; w * h];
    let mut zmin: std::collections::HashMap<(i64, i64), f64> = std::collections::HashMap::new();

    for y in 0..h {
        for x in 0..w {
            if !depth.is_valid(x, y) {
                continue;
            }
            let a = Vec3::new(x as f64, y as f64, depth.at(x, y));
            let (b, (b1, b2)) = backproject(&a, &inverse);
            mapped[y * w + x] = Some((b1, b2, b.z));
            zmin.entry((b1, b2))
                .and_modify(|best| {
                    if b.z < *best {
                        *best = b.z;
                    }
                })
                .or_insert(b.z);
        }
    }

    let mut out = PixelImage::new(w, h, input.channels);
    let mut mask = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let Some((b1, b2, bz)) = mapped[y * w + x] else {
                continue;
            };
            if b1 < 0 || b2 < 0 || b1 >= input.width as i64 || b2 >= input.height as i64 {
                continue;
            }
            if bz > zmin[&(b1, b2)] {
                continue; // occluded by a nearer point sharing the source pixel
            }
            let (sx, sy) = (b1 as usize, b2 as usize);
            if input.is_empty_at(sx, sy) {
                continue;
            }
            let value = input.pixel(sx, sy).to_vec();
            out.set_pixel(x, y, &value);
            mask[y * w + x] = true;
        }
    }
    out.mask = Some(mask);
    Ok(out)
}

/// Full single-frame pipeline: robust fit of the landmarks, full-mesh
/// decode at the fitted embedding, viewport transform, depth rasterization
/// and frontal image synthesis.
pub fn frontalize_frame(
    input: &PixelImage,
    model: &crate::shape::ShapeModel,
    landmarks: &[Vec3],
    fit_config: &crate::fit::FitConfig,
    viewport: Viewport,
    width: usize,
    height: usize,
) -> Result<(PixelImage, DepthImage, crate::fit::FitResult)> {
    let fit = crate::fit::robust_fit(landmarks, model, fit_config, None)?;
    let mesh = model.decode_full(&fit.state.embedding);
    let n = model.n_vertices();
    let vertices: Vec<Vec3> = (0..n)
        .map(|i| viewport.apply(&Vec3::new(mesh[3 * i], mesh[3 * i + 1], mesh[3 * i + 2])))
        .collect();
    let depth = rasterize_frontal_depth(&vertices, model.triangles(), width, height);
    let total = viewport.to_similarity()?.compose(&fit.state.pose);
    let image = synthesize_frontal_image(input, &depth, &total)?;
    Ok((image, depth, fit))
}
