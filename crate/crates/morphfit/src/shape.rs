//! PCA deformable shape model: training, encoding/decoding, composition of
//! identity and expression parts, and a deterministic synthetic generator
//! for testing without any mesh assets.

use nalgebra::{DMatrix, DVector, Matrix3xX};
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{RigidSimilarity, Vec3};

/// Relative cutoff below which an eigenvalue is treated as zero; such
/// dimensions are excluded from validity checks and regularizers
/// (pseudo-inverse convention).
pub const EIGENVALUE_CUTOFF: f64 = 1e-12;

/// Low-dimensional embedding of a shape in the PCA basis.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeEmbedding {
    pub coeffs: DVector<f64>,
}

impl ShapeEmbedding {
    pub fn new(coeffs: DVector<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(k: usize) -> Self {
        Self {
            coeffs: DVector::zeros(k),
        }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

impl From<DVector<f64>> for ShapeEmbedding {
    fn from(coeffs: DVector<f64>) -> Self {
        Self { coeffs }
    }
}

/// Linear deformable shape model over N vertices: `V = U s + mean`.
///
/// The basis `U` is column-orthonormal (3N x K), eigenvalues are sorted
/// non-increasing, and `landmark_map` selects the J landmark-bearing
/// vertices in observation order.
#[derive(Debug, Clone)]
pub struct ShapeModel {
    basis: DMatrix<f64>,
    mean: DVector<f64>,
    eigenvalues: DVector<f64>,
    triangles: Vec<[usize; 3]>,
    landmark_map: Vec<usize>,
}

impl ShapeModel {
    pub fn new(
        basis: DMatrix<f64>,
        mean: DVector<f64>,
        eigenvalues: DVector<f64>,
        triangles: Vec<[usize; 3]>,
        landmark_map: Vec<usize>,
    ) -> Result<Self> {
        if !mean.len().is_multiple_of(3) || mean.is_empty() {
            return Err(Error::DimensionMismatch {
                expected: 3,
                got: mean.len(),
            });
        }
        let n = mean.len() / 3;
        if basis.nrows() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: basis.nrows(),
            });
        }
        if basis.ncols() != eigenvalues.len() {
            return Err(Error::DimensionMismatch {
                expected: basis.ncols(),
                got: eigenvalues.len(),
            });
        }
        let k = basis.ncols();
        let gram = basis.transpose() * &basis;
        for r in 0..k {
            for c in 0..k {
                let expect = if r == c { 1.0 } else { 0.0 };
                if (gram[(r, c)] - expect).abs() > 1e-8 {
                    return Err(Error::Config(format!(
                        "basis is not orthonormal: gram[{r},{c}] = {}",
                        gram[(r, c)]
                    )));
                }
            }
        }
        for i in 0..k {
            if eigenvalues[i] < 0.0 || (i + 1 < k && eigenvalues[i] < eigenvalues[i + 1]) {
                return Err(Error::Config(
                    "eigenvalues must be non-negative and non-increasing".into(),
                ));
            }
        }
        for tri in &triangles {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::VertexOutOfRange {
                    index: *tri.iter().max().unwrap(),
                    n,
                });
            }
        }
        let mut seen = vec![false; n];
        for &idx in &landmark_map {
            if idx >= n {
                return Err(Error::VertexOutOfRange { index: idx, n });
            }
            if seen[idx] {
                return Err(Error::Config(format!("duplicate landmark vertex {idx}")));
            }
            seen[idx] = true;
        }
        Ok(Self {
            basis,
            mean,
            eigenvalues,
            triangles,
            landmark_map,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.mean.len() / 3
    }

    pub fn k(&self) -> usize {
        self.basis.ncols()
    }

    pub fn n_landmarks(&self) -> usize {
        self.landmark_map.len()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn landmark_map(&self) -> &[usize] {
        &self.landmark_map
    }

    /// Inverse eigenvalue with the pseudo-inverse convention: dimensions with
    /// `lambda_k < EIGENVALUE_CUTOFF * lambda_1` contribute zero.
    pub fn inv_eigenvalue(&self, k: usize) -> f64 {
        let lead = self.eigenvalues[0];
        let lam = self.eigenvalues[k];
        if lam < EIGENVALUE_CUTOFF * lead || lam <= 0.0 {
            0.0
        } else {
            1.0 / lam
        }
    }

    /// Projects a stacked vertex vector onto the basis: `s = U^T (v - mean)`.
    pub fn encode(&self, v: &DVector<f64>) -> Result<ShapeEmbedding> {
        if v.len() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean.len(),
                got: v.len(),
            });
        }
        Ok(ShapeEmbedding::new(self.basis.transpose() * (v - &self.mean)))
    }

    /// Reconstructs the full stacked vertex vector `U s + mean`.
    pub fn decode_full(&self, s: &ShapeEmbedding) -> DVector<f64> {
        &self.basis * &s.coeffs + &self.mean
    }

    /// Reconstructs a single vertex from rows `3n .. 3n+2`.
    pub fn decode_vertex(&self, s: &ShapeEmbedding, n: usize) -> Result<Vec3> {
        if n >= self.n_vertices() {
            return Err(Error::VertexOutOfRange {
                index: n,
                n: self.n_vertices(),
            });
        }
        let mut out = Vec3::new(self.mean[3 * n], self.mean[3 * n + 1], self.mean[3 * n + 2]);
        for k in 0..self.k() {
            let c = s.coeffs[k];
            out.x += self.basis[(3 * n, k)] * c;
            out.y += self.basis[(3 * n + 1, k)] * c;
            out.z += self.basis[(3 * n + 2, k)] * c;
        }
        Ok(out)
    }

    /// Reconstructs landmark `j` (0-based index into `landmark_map`).
    pub fn decode_landmark(&self, s: &ShapeEmbedding, j: usize) -> Vec3 {
        self.decode_vertex(s, self.landmark_map[j])
            .expect("landmark_map indices are validated at construction")
    }

    /// All landmark vertices for embedding `s`, in observation order.
    pub fn decode_landmarks(&self, s: &ShapeEmbedding) -> Vec<Vec3> {
        (0..self.n_landmarks())
            .map(|j| self.decode_landmark(s, j))
            .collect()
    }

    /// The 3 x K basis block of landmark `j`.
    pub fn landmark_basis(&self, j: usize) -> Matrix3xX<f64> {
        let n = self.landmark_map[j];
        let mut block = Matrix3xX::zeros(self.k());
        for k in 0..self.k() {
            block[(0, k)] = self.basis[(3 * n, k)];
            block[(1, k)] = self.basis[(3 * n + 1, k)];
            block[(2, k)] = self.basis[(3 * n + 2, k)];
        }
        block
    }

    pub fn landmark_mean(&self, j: usize) -> Vec3 {
        let n = self.landmark_map[j];
        Vec3::new(self.mean[3 * n], self.mean[3 * n + 1], self.mean[3 * n + 2])
    }

    /// Whether `s` lies inside the confidence ellipsoid, together with the
    /// quadratic form `s^T Lambda^-1 s`. The boundary is inclusive.
    pub fn embedding_validity(&self, s: &ShapeEmbedding) -> (bool, f64) {
        let mut margin = 0.0;
        for k in 0..self.k().min(s.len()) {
            margin += s.coeffs[k] * s.coeffs[k] * self.inv_eigenvalue(k);
        }
        (margin <= 1.0, margin)
    }
}

/// Identity + expression composition over a shared topology.
#[derive(Debug, Clone)]
pub struct CompositeModel {
    pub identity: ShapeModel,
    pub expression: ShapeModel,
}

impl CompositeModel {
    pub fn new(identity: ShapeModel, expression: ShapeModel) -> Result<Self> {
        if identity.n_vertices() != expression.n_vertices() {
            return Err(Error::DimensionMismatch {
                expected: identity.n_vertices(),
                got: expression.n_vertices(),
            });
        }
        if identity.triangles() != expression.triangles() {
            return Err(Error::Config(
                "identity and expression parts must share the triangulation".into(),
            ));
        }
        Ok(Self {
            identity,
            expression,
        })
    }

    /// `V = U_I s_I + mean_I + U_E s_E + mean_E`.
    pub fn decode(&self, s_identity: &ShapeEmbedding, s_expression: &ShapeEmbedding) -> DVector<f64> {
        self.identity.decode_full(s_identity) + self.expression.decode_full(s_expression)
    }

    /// Fixes the identity embedding (estimated once, on the first frame) and
    /// returns an expression-only model whose mean absorbs it:
    /// `U = U_E`, `mean = U_I s_I + mean_I + mean_E`.
    pub fn freeze_identity(&self, s_identity: &ShapeEmbedding) -> Result<ShapeModel> {
        let (valid, margin) = self.identity.embedding_validity(s_identity);
        if !valid {
            return Err(Error::InvalidIdentityEmbedding { margin });
        }
        let mean = self.identity.decode_full(s_identity) + self.expression.mean();
        ShapeModel::new(
            self.expression.basis().clone(),
            mean,
            self.expression.eigenvalues().clone(),
            self.expression.triangles().to_vec(),
            self.expression.landmark_map().to_vec(),
        )
    }
}

/// Principal component analysis of registered meshes: mean plus the top-K
/// eigenpairs of the sample covariance (population 1/M convention).
///
/// The returned model carries no triangulation and maps every vertex as a
/// landmark; attach real topology through [`ShapeModel::new`] when needed.
pub fn train_pca(meshes: &[DVector<f64>], k: usize) -> Result<ShapeModel> {
    if meshes.len() < 2 {
        return Err(Error::TooFewPoints {
            min: 2,
            got: meshes.len(),
        });
    }
    let dim = meshes[0].len();
    if dim == 0 || !dim.is_multiple_of(3) {
        return Err(Error::DimensionMismatch { expected: 3, got: dim });
    }
    for m in meshes {
        if m.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: m.len(),
            });
        }
    }
    let m_count = meshes.len();
    let max_k = dim.min(m_count - 1);
    if k > max_k {
        return Err(Error::InvalidComponentCount { k, max: max_k });
    }

    let mut mean = DVector::zeros(dim);
    for m in meshes {
        mean += m;
    }
    mean /= m_count as f64;

    let mut centered = DMatrix::zeros(dim, m_count);
    for (i, m) in meshes.iter().enumerate() {
        centered.set_column(i, &(m - &mean));
    }

    // Thin SVD of the centered data: covariance eigenvectors are the left
    // singular vectors, eigenvalues are sigma^2 / M.
    let svd = centered.svd(true, false);
    let u = svd.u.as_ref().expect("svd was requested with u");
    let mut pairs: Vec<(f64, usize)> = svd
        .singular_values
        .iter()
        .enumerate()
        .map(|(i, &s)| (s * s / m_count as f64, i))
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    let mut basis = DMatrix::zeros(dim, k);
    let mut eigenvalues = DVector::zeros(k);
    for (col, &(lam, src)) in pairs.iter().take(k).enumerate() {
        eigenvalues[col] = lam;
        basis.set_column(col, &u.column(src));
    }

    let n = dim / 3;
    ShapeModel::new(basis, mean, eigenvalues, Vec::new(), (0..n).collect())
}

/// Draws ground-truth deformations that are valid by construction: samples
/// land inside the model's confidence ellipsoid.
#[derive(Debug, Clone)]
pub struct DeformationSampler {
    eigenvalues: DVector<f64>,
    lead: f64,
}

impl DeformationSampler {
    pub fn new(model: &ShapeModel) -> Self {
        Self {
            eigenvalues: model.eigenvalues().clone(),
            lead: model.eigenvalues()[0],
        }
    }

    fn half_axis(&self, k: usize) -> f64 {
        let lam = self.eigenvalues[k];
        if lam < EIGENVALUE_CUTOFF * self.lead {
            0.0
        } else {
            lam.sqrt()
        }
    }

    /// Uniform draw from the interior of the validity ellipsoid, shrunk
    /// slightly so the quadratic form stays strictly below one.
    pub fn sample_embedding(&self, rng: &mut ChaCha8Rng) -> ShapeEmbedding {
        let k = self.eigenvalues.len();
        let mut dir: DVector<f64> = DVector::zeros(k);
        for i in 0..k {
            dir[i] = StandardNormal.sample(rng);
        }
        let norm = dir.norm();
        if norm > 0.0 {
            dir /= norm;
        }
        let radius = 0.99 * rng.gen::<f64>().powf(1.0 / k as f64);
        let mut coeffs = DVector::zeros(k);
        for i in 0..k {
            coeffs[i] = dir[i] * radius * self.half_axis(i);
        }
        ShapeEmbedding::new(coeffs)
    }

    /// Smooth embedding trajectory: per-dimension sinusoids with random
    /// phase and frequency, amplitude-budgeted to stay inside the ellipsoid.
    pub fn trajectory(&self, frames: usize, rng: &mut ChaCha8Rng) -> Vec<ShapeEmbedding> {
        let k = self.eigenvalues.len();
        let mut amp = DVector::zeros(k);
        for i in 0..k {
            amp[i] = rng.gen::<f64>();
        }
        let total: f64 = amp.iter().map(|a| a * a).sum();
        if total > 0.0 {
            amp *= (0.8 / total.sqrt()).min(1.0e6);
        }
        let freqs: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..2.0)).collect();
        let phases: Vec<f64> = (0..k)
            .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
            .collect();
        (0..frames)
            .map(|t| {
                let u = t as f64 / frames.max(1) as f64;
                let mut coeffs = DVector::zeros(k);
                for i in 0..k {
                    coeffs[i] = amp[i]
                        * self.half_axis(i)
                        * (std::f64::consts::TAU * freqs[i] * u + phases[i]).sin();
                }
                ShapeEmbedding::new(coeffs)
            })
            .collect()
    }
}

/// Deterministic synthetic shape model over a triangulated height-field grid.
///
/// The grid supplies the topology needed by the depth rasterizer; the basis
/// stacks K smooth low-frequency displacement fields, orthonormalized.
/// Requires `n` to factor into a grid no more elongated than 8:1.
pub fn generate_synthetic_model(
    n: usize,
    k: usize,
    j: usize,
    seed: u64,
) -> Result<(ShapeModel, DeformationSampler)> {
    if n < 4 {
        return Err(Error::InfeasibleDimensions(format!(
            "need at least 4 vertices, got {n}"
        )));
    }
    if k == 0 || k >= 3 * n {
        return Err(Error::InfeasibleDimensions(format!(
            "need 0 < k < 3n, got k={k}, n={n}"
        )));
    }
    if j == 0 || j > n {
        return Err(Error::InfeasibleDimensions(format!(
            "need 0 < j <= n, got j={j}, n={n}"
        )));
    }
    let (rows, cols) = grid_dims(n).ok_or_else(|| {
        Error::InfeasibleDimensions(format!("{n} vertices do not factor into a near-square grid"))
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Base surface: gentle height field over the unit square.
    let mut mean = DVector::zeros(3 * n);
    for r in 0..rows {
        for c in 0..cols {
            let idx = r * cols + c;
            let x = c as f64 / (cols - 1) as f64;
            let y = r as f64 / (rows - 1) as f64;
            let z = 0.1
                + 0.05
                    * (std::f64::consts::TAU * x).sin()
                    * (std::f64::consts::TAU * y).cos();
            mean[3 * idx] = x;
            mean[3 * idx + 1] = y;
            mean[3 * idx + 2] = z;
        }
    }

    // Smooth candidate displacement fields, then QR for exact orthonormality.
    let mut raw = DMatrix::zeros(3 * n, k);
    for col in 0..k {
        let fx = rng.gen_range(0.5..2.5);
        let fy = rng.gen_range(0.5..2.5);
        let px = rng.gen_range(0.0..std::f64::consts::TAU);
        let py = rng.gen_range(0.0..std::f64::consts::TAU);
        let dir = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0f64),
        ];
        for r in 0..rows {
            for c in 0..cols {
                let idx = r * cols + c;
                let x = c as f64 / (cols - 1) as f64;
                let y = r as f64 / (rows - 1) as f64;
                let field = (std::f64::consts::TAU * fx * x + px).sin()
                    * (std::f64::consts::TAU * fy * y + py).cos();
                raw[(3 * idx, col)] = dir[0] * field;
                raw[(3 * idx + 1, col)] = dir[1] * field;
                raw[(3 * idx + 2, col)] = dir[2] * field;
            }
        }
    }
    let qr = raw.qr();
    let q = qr.q();
    let mut basis = DMatrix::zeros(3 * n, k);
    for col in 0..k {
        basis.set_column(col, &q.column(col));
    }

    // Geometric eigenvalue decay keeps the ordering strict.
    let mut eigenvalues = DVector::zeros(k);
    let lead = 0.01;
    for i in 0..k {
        eigenvalues[i] = lead * 0.7_f64.powi(i as i32);
    }

    let mut triangles = Vec::with_capacity(2 * (rows - 1) * (cols - 1));
    for r in 0..rows - 1 {
        for c in 0..cols - 1 {
            let a = r * cols + c;
            let b = r * cols + c + 1;
            let d = (r + 1) * cols + c;
            let e = (r + 1) * cols + c + 1;
            triangles.push([a, b, d]);
            triangles.push([b, e, d]);
        }
    }

    // Landmarks strided evenly across the vertex list.
    let landmark_map: Vec<usize> = if j == 1 {
        vec![0]
    } else {
        (0..j)
            .map(|i| i * (n - 1) / (j - 1))
            .collect()
    };

    let model = ShapeModel::new(basis, mean, eigenvalues, triangles, landmark_map)?;
    let sampler = DeformationSampler::new(&model);
    Ok((model, sampler))
}

fn grid_dims(n: usize) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut r = (n as f64).sqrt() as usize;
    while r >= 2 {
        if n.is_multiple_of(r) {
            best = Some((r, n / r));
            break;
        }
        r -= 1;
    }
    match best {
        Some((r, c)) if c <= 8 * r => Some((r, c)),
        _ => None,
    }
}

/// A synthetic observation sequence with its generating ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticSequence {
    /// Observed landmarks per frame (posed, noise added in observation space).
    pub observed: Vec<Vec<Vec3>>,
    /// Ground-truth frontal landmark positions per frame.
    pub truth_frontal: Vec<Vec<Vec3>>,
    pub truth_embeddings: Vec<ShapeEmbedding>,
    pub truth_poses: Vec<RigidSimilarity>,
}

/// Generates a sequence with smooth embedding drift, smooth rigid motion and
/// i.i.d. Gaussian landmark noise of standard deviation `noise` per axis on
/// the observation side. Deterministic per seed.
pub fn synthetic_sequence(
    model: &ShapeModel,
    frames: usize,
    noise: f64,
    seed: u64,
) -> SyntheticSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = DeformationSampler::new(model);
    let embeddings = sampler.trajectory(frames, &mut rng);

    let axis_raw = Vec3::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    );
    let axis = nalgebra::Unit::new_normalize(if axis_raw.norm() < 1e-9 {
        Vec3::z()
    } else {
        axis_raw
    });
    let max_angle = rng.gen_range(0.1..0.4);
    let trans_amp = Vec3::new(
        rng.gen_range(0.05..0.2),
        rng.gen_range(0.05..0.2),
        rng.gen_range(0.05..0.2),
    );
    let log_scale_amp = rng.gen_range(0.02..0.1);
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);

    let mut observed = Vec::with_capacity(frames);
    let mut truth_frontal = Vec::with_capacity(frames);
    let mut truth_poses = Vec::with_capacity(frames);
    for (t, s) in embeddings.iter().enumerate() {
        let u = t as f64 / frames.max(1) as f64;
        let wave = (std::f64::consts::TAU * u + phase).sin();
        let pose = RigidSimilarity::new(
            (log_scale_amp * wave).exp(),
            nalgebra::UnitQuaternion::from_axis_angle(&axis, max_angle * wave),
            trans_amp * wave,
        )
        .expect("synthetic scale is positive");
        let frontal = model.decode_landmarks(s);
        let inv = pose.inverse().expect("pose is valid");
        let obs: Vec<Vec3> = frontal
            .iter()
            .map(|p| {
                let mut q = inv.apply(p);
                for c in 0..3 {
                    let eta: f64 = StandardNormal.sample(&mut rng);
                    q[c] += noise * eta;
                }
                q
            })
            .collect();
        observed.push(obs);
        truth_frontal.push(frontal);
        truth_poses.push(pose);
    }
    SyntheticSequence {
        observed,
        truth_frontal,
        truth_embeddings: embeddings,
        truth_poses,
    }
}
