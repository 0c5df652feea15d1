//! Gaussian affinity kernel, Markov diffusion operator, spectra and
//! diffusion-distance geodesics.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, SymEigen};
use crate::par::{self, Execution};
use crate::pointcloud::DistanceMatrix;
use crate::stats::lower_median;

/// Negative eigenvalues above this are roundoff of a PSD spectrum.
pub const NEGATIVE_CLIP: f64 = -1e-12;

/// K_ij = exp(-d_ij^2 / sigma2).
#[derive(Clone, Debug)]
pub struct KernelMatrix {
    k: DMatrix<f64>,
    sigma2: f64,
}

impl KernelMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    /// Wrap an arbitrary symmetric affinity matrix with unit diagonal.
    pub fn from_matrix(k: DMatrix<f64>, sigma2: f64) -> Result<Self> {
        let n = k.nrows();
        if n != k.ncols() || n < 2 {
            return Err(Error::Input("kernel must be square with N >= 2".into()));
        }
        for i in 0..n {
            for j in 0..n {
                let x = k[(i, j)];
                if !(x.is_finite() && x >= 0.0 && x <= 1.0) || x != k[(j, i)] {
                    return Err(Error::Input(format!("invalid kernel entry at ({i}, {j})")));
                }
            }
        }
        Ok(Self { k, sigma2 })
    }
}

/// Row-stochastic P = D^-1 K together with the normalizers D_ii.
#[derive(Clone, Debug)]
pub struct DiffusionOperator {
    p: DMatrix<f64>,
    row_sums: DVector<f64>,
    // D^-1/2 K D^-1/2, kept so the spectrum comes from an exactly symmetric matrix
    symmetric: DMatrix<f64>,
}

impl DiffusionOperator {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn row_sums_of_k(&self) -> &DVector<f64> {
        &self.row_sums
    }

    pub fn symmetrized(&self) -> &DMatrix<f64> {
        &self.symmetric
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorTag {
    K,
    P,
    SymmetrizedP,
    Gram,
}

/// Eigenvalues (non-increasing) and unit eigenvectors (columns) of a tagged operator.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub tag: OperatorTag,
}

impl SpectralDecomposition {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Operators [`spectral_decompose`] understands.
#[derive(Clone, Copy, Debug)]
pub enum Operator<'a> {
    Kernel(&'a KernelMatrix),
    Diffusion(&'a DiffusionOperator),
    /// The symmetric conjugate D^1/2 P D^-1/2 of a diffusion operator.
    SymmetrizedDiffusion(&'a DiffusionOperator),
    /// Any symmetric matrix, such as a Gram matrix.
    Gram(&'a DMatrix<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeodesicSource {
    #[serde(rename = "k_spectrum")]
    KSpectrum,
    #[serde(rename = "p_spectrum")]
    PSpectrum,
}

/// Estimated geodesic distances: the t-step diffusion distance.
#[derive(Clone, Debug)]
pub struct GeodesicField {
    dg: DMatrix<f64>,
    t: f64,
    source: GeodesicSource,
}

impl GeodesicField {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.dg
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dg[(i, j)]
    }

    pub fn n(&self) -> usize {
        self.dg.nrows()
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn source(&self) -> GeodesicSource {
        self.source
    }

    /// Wrap a precomputed symmetric distance matrix (used by tests and the simulator).
    pub fn from_matrix(dg: DMatrix<f64>, t: f64, source: GeodesicSource) -> Result<Self> {
        DistanceMatrix::from_matrix(dg.clone())?;
        Ok(Self { dg, t, source })
    }
}

/// Lower median of the off-diagonal squared distances.
pub fn median_sigma2(d: &DistanceMatrix) -> Result<f64> {
    let n = d.n();
    if n < 2 {
        return Err(Error::Input("need at least 2 points".into()));
    }
    let mut sq = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let x = d.get(i, j);
            sq.push(x * x);
        }
    }
    let m = lower_median(&sq).unwrap_or(0.0);
    if m <= 0.0 {
        return Err(Error::Degenerate(
            "median squared distance is zero (points coincide)".into(),
        ));
    }
    Ok(m)
}

pub fn build_kernel(d: &DistanceMatrix, sigma2: f64) -> Result<KernelMatrix> {
    build_kernel_with(d, sigma2, Execution::default())
}

pub fn build_kernel_with(d: &DistanceMatrix, sigma2: f64, exec: Execution) -> Result<KernelMatrix> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::Parameter(format!("sigma2 must be > 0, got {sigma2}")));
    }
    let n = d.n();
    let rows = par::map_indices(exec, n, |i| {
        (0..n)
            .map(|j| {
                let x = d.get(i, j);
                (-(x * x) / sigma2).exp()
            })
            .collect::<Vec<f64>>()
    });
    Ok(KernelMatrix {
        k: DMatrix::from_fn(n, n, |i, j| rows[i][j]),
        sigma2,
    })
}

pub fn build_diffusion_operator(k: &KernelMatrix) -> DiffusionOperator {
    let n = k.n();
    let row_sums = DVector::from_iterator(n, k.k.row_iter().map(|r| r.sum()));
    let p = DMatrix::from_fn(n, n, |i, j| k.k[(i, j)] / row_sums[i]);
    let sqrt = row_sums.map(f64::sqrt);
    let symmetric = DMatrix::from_fn(n, n, |i, j| {
        // assemble from the (min, max) entry so the result is exactly symmetric
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        k.k[(a, b)] / (sqrt[a] * sqrt[b])
    });
    DiffusionOperator {
        p,
        row_sums,
        symmetric,
    }
}

pub fn spectral_decompose(op: Operator<'_>) -> Result<SpectralDecomposition> {
    match op {
        Operator::Kernel(k) => {
            let SymEigen { values, vectors } = linalg::sym_eigen(&k.k)?;
            Ok(SpectralDecomposition {
                eigenvalues: values,
                eigenvectors: vectors,
                tag: OperatorTag::K,
            })
        }
        Operator::SymmetrizedDiffusion(p) => {
            let SymEigen { values, vectors } = linalg::sym_eigen(&p.symmetric)?;
            Ok(SpectralDecomposition {
                eigenvalues: values,
                eigenvectors: vectors,
                tag: OperatorTag::SymmetrizedP,
            })
        }
        Operator::Diffusion(p) => {
            let SymEigen { values, mut vectors } = linalg::sym_eigen(&p.symmetric)?;
            // right eigenvectors of P are D^-1/2 times those of the conjugate
            for (i, mut row) in vectors.row_iter_mut().enumerate() {
                row /= p.row_sums[i].sqrt();
            }
            for mut col in vectors.column_iter_mut() {
                let norm = col.norm();
                col /= norm;
                linalg::orient(&mut col);
            }
            Ok(SpectralDecomposition {
                eigenvalues: values,
                eigenvectors: vectors,
                tag: OperatorTag::P,
            })
        }
        Operator::Gram(m) => {
            let SymEigen { values, vectors } = linalg::sym_eigen(m)?;
            Ok(SpectralDecomposition {
                eigenvalues: values,
                eigenvectors: vectors,
                tag: OperatorTag::Gram,
            })
        }
    }
}

/// Per-mode weights lambda^(2t), after clipping roundoff negatives.
fn mode_weights(eigenvalues: &DVector<f64>, t: f64) -> Result<Vec<f64>> {
    let integer_t = t.fract() == 0.0;
    eigenvalues
        .iter()
        .enumerate()
        .map(|(k, &l)| {
            if l >= 0.0 {
                Ok(l.powf(2.0 * t))
            } else if l >= NEGATIVE_CLIP {
                Ok(0.0)
            } else if integer_t {
                Ok(l.abs().powf(2.0 * t))
            } else {
                Err(Error::Domain(format!(
                    "eigenvalue {k} is {l:.3e} < {NEGATIVE_CLIP:e}; non-integer t = {t} needs a non-negative spectrum"
                )))
            }
        })
        .collect()
}

pub fn geodesic_field(spec: &SpectralDecomposition, t: f64) -> Result<GeodesicField> {
    geodesic_field_with(spec, t, Execution::default())
}

/// d_G(i, j)^2 = sum_k lambda_k^(2t) (psi_ik - psi_jk)^2.
///
/// Evaluated through the Gram matrix of the weighted features; pairs whose
/// squared distance is small next to the feature norms are recomputed
/// directly, where the Gram form would cancel catastrophically.
pub fn geodesic_field_with(
    spec: &SpectralDecomposition,
    t: f64,
    exec: Execution,
) -> Result<GeodesicField> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Parameter(format!("t must be > 0, got {t}")));
    }
    let source = match spec.tag {
        OperatorTag::K => GeodesicSource::KSpectrum,
        OperatorTag::P | OperatorTag::SymmetrizedP => GeodesicSource::PSpectrum,
        OperatorTag::Gram => {
            return Err(Error::Parameter(
                "geodesics need a kernel or diffusion spectrum".into(),
            ))
        }
    };
    let w = mode_weights(&spec.eigenvalues, t)?;
    let n = spec.eigenvectors.nrows();
    let modes: Vec<usize> = (0..w.len()).filter(|&k| w[k] > 0.0).collect();

    // centred, weighted features F_ik = sqrt(w_k) (psi_ik - mean_k)
    let mut f = DMatrix::<f64>::zeros(n, modes.len());
    for (c, &k) in modes.iter().enumerate() {
        let col = spec.eigenvectors.column(k);
        let mean = col.mean();
        let s = w[k].sqrt();
        for i in 0..n {
            f[(i, c)] = s * (col[i] - mean);
        }
    }
    let gram = &f * f.transpose();
    let psi = &spec.eigenvectors;

    let rows = par::map_indices(exec, n, |i| {
        let mut row = vec![0.0; n];
        for j in i + 1..n {
            let scale = gram[(i, i)] + gram[(j, j)];
            let mut d2 = scale - 2.0 * gram[(i, j)];
            if d2 < 1e-4 * scale {
                d2 = modes
                    .iter()
                    .map(|&k| {
                        let x = psi[(i, k)] - psi[(j, k)];
                        w[k] * x * x
                    })
                    .sum();
            }
            row[j] = d2.max(0.0).sqrt();
        }
        row
    });
    let mut dg = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            dg[(i, j)] = rows[i][j];
            dg[(j, i)] = rows[i][j];
        }
    }
    Ok(GeodesicField { dg, t, source })
}

/// Weighted diffusion features lambda_k^t psi_ik as rows, one per point.
pub fn diffusion_features(spec: &SpectralDecomposition, t: f64) -> Result<DMatrix<f64>> {
    let w = mode_weights(&spec.eigenvalues, t)?;
    let mut f = spec.eigenvectors.clone();
    for (k, mut col) in f.column_iter_mut().enumerate() {
        col *= w[k].sqrt();
    }
    Ok(f)
}

/// Kernel and geodesics for one cloud, from either spectrum.
#[derive(Clone, Debug)]
pub struct ClassicalGeodesics {
    pub kernel: KernelMatrix,
    pub spectrum: SpectralDecomposition,
    pub field: GeodesicField,
}

pub fn classical_geodesics(
    d: &DistanceMatrix,
    sigma2: f64,
    t: f64,
    source: GeodesicSource,
    exec: Execution,
) -> Result<ClassicalGeodesics> {
    let kernel = build_kernel_with(d, sigma2, exec)?;
    let spectrum = match source {
        GeodesicSource::KSpectrum => spectral_decompose(Operator::Kernel(&kernel))?,
        GeodesicSource::PSpectrum => {
            let p = build_diffusion_operator(&kernel);
            spectral_decompose(Operator::Diffusion(&p))?
        }
    };
    let field = geodesic_field_with(&spectrum, t, exec)?;
    Ok(ClassicalGeodesics {
        kernel,
        spectrum,
        field,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointcloud::{generate_manifold, pairwise_distances, GeneratorParams, ManifoldKind, PointCloud};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, m: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0))).unwrap()
    }

    fn dist_from_sq(sq: &[f64]) -> DistanceMatrix {
        // points on a line at the given squared distances from point 0 are not
        // needed; build a matrix whose upper triangle holds sqrt(sq) directly
        let n = ((1.0 + (1.0 + 8.0 * sq.len() as f64).sqrt()) / 2.0).round() as usize;
        let mut d = DMatrix::zeros(n, n);
        let mut it = sq.iter();
        for i in 0..n {
            for j in i + 1..n {
                let v = it.next().unwrap().sqrt();
                d[(i, j)] = v;
                d[(j, i)] = v;
            }
        }
        DistanceMatrix::from_matrix(d).unwrap()
    }

    #[test]
    fn median_of_three() {
        assert_eq!(median_sigma2(&dist_from_sq(&[1.0, 4.0, 9.0])).unwrap(), 4.0);
    }

    #[test]
    fn median_is_lower_for_even_counts() {
        // six pairs among four points
        let sq = [1.0, 4.0, 9.0, 16.0, 25.0, 36.0];
        let mut sorted = sq.to_vec();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(median_sigma2(&dist_from_sq(&sq)).unwrap(), sorted[2]);
    }

    #[test]
    fn coincident_points_are_degenerate() {
        let c = PointCloud::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert!(matches!(
            median_sigma2(&pairwise_distances(&c)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn kernel_entries() {
        let c = PointCloud::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        let k = build_kernel(&pairwise_distances(&c), 4.0).unwrap();
        assert_eq!(k.matrix()[(0, 0)], 1.0);
        assert!((k.matrix()[(0, 1)] - (-1.0f64).exp()).abs() < 1e-15);
        assert!(build_kernel(&pairwise_distances(&c), 0.0).is_err());
    }

    #[test]
    fn kernel_matches_elementwise_oracle() {
        let c = random_cloud(6, 3, 1);
        let d = pairwise_distances(&c);
        let k = build_kernel(&d, 0.7).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                let mut s = 0.0;
                for a in 0..3 {
                    s += (c.points()[(i, a)] - c.points()[(j, a)]).powi(2);
                }
                assert!((k.matrix()[(i, j)] - (-s / 0.7).exp()).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn two_point_operator_closed_form() {
        let c = PointCloud::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let k = build_kernel(&pairwise_distances(&c), 2.0).unwrap();
        let a = (-0.5f64).exp();
        let p = build_diffusion_operator(&k);
        assert!((p.matrix()[(0, 0)] - 1.0 / (1.0 + a)).abs() < 1e-15);
        assert!((p.matrix()[(0, 1)] - a / (1.0 + a)).abs() < 1e-15);
        let s = spectral_decompose(Operator::Diffusion(&p)).unwrap();
        assert!((s.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((s.eigenvalues[1] - (1.0 - a) / (1.0 + a)).abs() < 1e-14);
    }

    #[test]
    fn rows_of_p_sum_to_one() {
        let c = random_cloud(30, 4, 2);
        let k = build_kernel(&pairwise_distances(&c), 0.5).unwrap();
        let p = build_diffusion_operator(&k);
        for row in p.matrix().row_iter() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn far_apart_points_give_identity_operator() {
        let c = PointCloud::from_rows(&[vec![0.0], vec![100.0], vec![200.0]]).unwrap();
        let k = build_kernel(&pairwise_distances(&c), 1.0).unwrap();
        let p = build_diffusion_operator(&k);
        let s = spectral_decompose(Operator::Diffusion(&p)).unwrap();
        assert!(s.eigenvalues.iter().all(|&l| (l - 1.0).abs() < 1e-12));
    }

    #[test]
    fn right_eigenvectors_of_p_satisfy_residual_bound() {
        let c = random_cloud(40, 3, 3);
        let k = build_kernel(&pairwise_distances(&c), 0.3).unwrap();
        let p = build_diffusion_operator(&k);
        let s = spectral_decompose(Operator::Diffusion(&p)).unwrap();
        let norm = linalg::operator_norm(p.matrix());
        assert!(linalg::max_residual(p.matrix(), &s.eigenvalues, &s.eigenvectors) <= 1e-8 * norm);
        assert!((s.eigenvalues[0] - 1.0).abs() < 1e-12);
        assert!(s.eigenvalues.iter().all(|&l| (-1.0 - 1e-12..=1.0 + 1e-12).contains(&l)));
        // the top right eigenvector of P is constant
        let v0 = s.eigenvectors.column(0);
        assert!(v0.iter().all(|&x| (x - v0[0]).abs() < 1e-10));
        let ks = spectral_decompose(Operator::Kernel(&k)).unwrap();
        assert!(linalg::max_residual(k.matrix(), &ks.eigenvalues, &ks.eigenvectors) <= 1e-8 * ks.eigenvalues[0]);
        assert!(*ks.eigenvalues.as_slice().last().unwrap() >= -1e-10 * 40.0);
    }

    #[test]
    fn two_point_geodesic_by_hand() {
        let c = PointCloud::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let k = build_kernel(&pairwise_distances(&c), 1.0).unwrap();
        let s = spectral_decompose(Operator::Kernel(&k)).unwrap();
        let g = geodesic_field(&s, 1.0).unwrap();
        // K = [[1, a], [a, 1]]: eigenpairs (1 + a, (1,1)/sqrt2), (1 - a, (1,-1)/sqrt2)
        let a = (-1.0f64).exp();
        let expected = ((1.0 - a) * (1.0 - a) * 2.0f64).sqrt();
        assert!((g.get(0, 1) - expected).abs() < 1e-14);
        assert_eq!(g.get(0, 0), 0.0);
        assert_eq!(g.source(), GeodesicSource::KSpectrum);
    }

    #[test]
    fn geodesic_equals_feature_distance() {
        let c = random_cloud(8, 3, 4);
        let k = build_kernel(&pairwise_distances(&c), 0.8).unwrap();
        let p = build_diffusion_operator(&k);
        let s = spectral_decompose(Operator::Diffusion(&p)).unwrap();
        let g = geodesic_field(&s, 1.0).unwrap();
        let f = diffusion_features(&s, 1.0).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                let e = (f.row(i) - f.row(j)).norm();
                assert!((g.get(i, j) - e).abs() <= 1e-12, "{i} {j}");
            }
        }
    }

    #[test]
    fn non_integer_t_rejects_negative_spectrum() {
        let spec = SpectralDecomposition {
            eigenvalues: DVector::from_vec(vec![1.0, -0.5]),
            eigenvectors: DMatrix::identity(2, 2),
            tag: OperatorTag::P,
        };
        assert!(matches!(geodesic_field(&spec, 0.5), Err(Error::Domain(_))));
        assert!(geodesic_field(&spec, 1.0).is_ok());
        let tiny = SpectralDecomposition {
            eigenvalues: DVector::from_vec(vec![1.0, -1e-13]),
            ..spec
        };
        assert!(geodesic_field(&tiny, 0.5).is_ok());
    }

    #[test]
    fn sphere_geodesics_are_a_metric() {
        let c = generate_manifold(ManifoldKind::Sphere, 60, &GeneratorParams::default(), 0.0, 9).unwrap();
        let d = pairwise_distances(&c);
        let g = classical_geodesics(&d, median_sigma2(&d).unwrap(), 1.0, GeodesicSource::PSpectrum, Execution::Sequential)
            .unwrap()
            .field;
        let n = g.n();
        for i in 0..n {
            for j in 0..n {
                assert_eq!(g.get(i, j), g.get(j, i));
                for k in 0..n {
                    assert!(g.get(i, j) <= g.get(i, k) + g.get(k, j) + 1e-9);
                }
            }
        }
    }
}
