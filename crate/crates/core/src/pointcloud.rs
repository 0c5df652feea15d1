//! Point clouds: validation, synthetic manifolds with analytic curvature,
//! Euclidean distances and CSV / JSON persistence.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// N points in R^m, one per row.
#[derive(Clone, Debug)]
pub struct PointCloud {
    points: DMatrix<f64>,
    meta: Option<ManifoldMeta>,
}

impl PointCloud {
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        if points.nrows() < 2 {
            return Err(Error::Input(format!(
                "a point cloud needs at least 2 points, got {}",
                points.nrows()
            )));
        }
        if points.ncols() < 1 {
            return Err(Error::Input("points must have at least one coordinate".into()));
        }
        check_finite_rows(&points)?;
        Ok(Self { points, meta: None })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
            return Err(Error::Input(format!(
                "row {i} has {} coordinates, expected {m}",
                r.len()
            )));
        }
        Self::new(DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]))
    }

    pub fn with_meta(mut self, meta: ManifoldMeta) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn n_points(&self) -> usize {
        self.points.nrows()
    }

    pub fn ambient_dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn meta(&self) -> Option<&ManifoldMeta> {
        self.meta.as_ref()
    }

    pub fn point(&self, i: usize) -> nalgebra::DVector<f64> {
        self.points.row(i).transpose()
    }

    /// Reorder points so that new row `k` is old row `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let points = DMatrix::from_fn(self.n_points(), self.ambient_dim(), |i, j| {
            self.points[(perm[i], j)]
        });
        Self {
            points,
            meta: self.meta.clone(),
        }
    }

    /// Apply x -> R x + b to every point.
    pub fn transformed(&self, rotation: &DMatrix<f64>, shift: &nalgebra::DVector<f64>) -> Self {
        let mut points = &self.points * rotation.transpose();
        for mut row in points.row_iter_mut() {
            row += shift.transpose();
        }
        Self {
            points,
            meta: self.meta.clone(),
        }
    }
}

fn check_finite_rows(points: &DMatrix<f64>) -> Result<()> {
    for (i, row) in points.row_iter().enumerate() {
        if let Some(j) = row.iter().position(|x| !x.is_finite()) {
            return Err(Error::Input(format!(
                "row {i} has a non-finite coordinate in column {j}"
            )));
        }
    }
    Ok(())
}

/// Symmetric matrix of Euclidean separations.
#[derive(Clone, Debug)]
pub struct DistanceMatrix {
    d: DMatrix<f64>,
}

impl DistanceMatrix {
    /// Distances between the rows of an arbitrary coordinate matrix.
    pub fn from_points(points: &DMatrix<f64>) -> Result<Self> {
        check_finite_rows(points)?;
        Ok(Self::compute(points, Execution::default()))
    }

    /// Wrap a precomputed matrix, checking the metric invariants.
    pub fn from_matrix(d: DMatrix<f64>) -> Result<Self> {
        let n = d.nrows();
        if n != d.ncols() {
            return Err(Error::Input("distance matrix must be square".into()));
        }
        for i in 0..n {
            if d[(i, i)] != 0.0 {
                return Err(Error::Input(format!("nonzero self-distance at {i}")));
            }
            for j in 0..n {
                let x = d[(i, j)];
                if !x.is_finite() || x < 0.0 || x != d[(j, i)] {
                    return Err(Error::Input(format!("invalid distance at ({i}, {j})")));
                }
            }
        }
        Ok(Self { d })
    }

    fn compute(points: &DMatrix<f64>, exec: Execution) -> Self {
        let n = points.nrows();
        let m = points.ncols();
        let rows: Vec<Vec<f64>> = par::map_indices(exec, n, |i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        return 0.0;
                    }
                    // fixed (min, max) order keeps the matrix exactly symmetric
                    let (a, b) = if i < j { (i, j) } else { (j, i) };
                    let mut s = 0.0;
                    for k in 0..m {
                        let t = points[(a, k)] - points[(b, k)];
                        s += t * t;
                    }
                    s.sqrt()
                })
                .collect()
        });
        Self {
            d: DMatrix::from_fn(n, n, |i, j| rows[i][j]),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn n(&self) -> usize {
        self.d.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[(i, j)]
    }
}

pub fn pairwise_distances(cloud: &PointCloud) -> DistanceMatrix {
    pairwise_distances_with(cloud, Execution::default())
}

pub fn pairwise_distances_with(cloud: &PointCloud, exec: Execution) -> DistanceMatrix {
    DistanceMatrix::compute(&cloud.points, exec)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Plane,
    Sphere,
    Torus,
    SwissRoll,
    Line,
}

impl ManifoldKind {
    pub fn name(self) -> &'static str {
        match self {
            ManifoldKind::Plane => "plane",
            ManifoldKind::Sphere => "sphere",
            ManifoldKind::Torus => "torus",
            ManifoldKind::SwissRoll => "swiss_roll",
            ManifoldKind::Line => "line",
        }
    }
}

/// Shape parameters for [`generate_manifold`]. Fields irrelevant to a kind are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorParams {
    /// Sphere radius.
    pub radius: f64,
    /// Intrinsic dimension of the sphere S^dim.
    pub dim: usize,
    pub major_radius: f64,
    pub minor_radius: f64,
    /// Edge length of the plane square or the line segment; `None` picks unit
    /// point spacing (sqrt(n) for the plane, n for the line).
    pub side: Option<f64>,
    /// Swiss-roll width along its straight axis.
    pub height: f64,
    /// Zero-padded ambient dimension; `None` uses the natural embedding.
    pub ambient: Option<usize>,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            radius: 1.0,
            dim: 2,
            major_radius: 2.0,
            minor_radius: 1.0,
            side: None,
            height: 21.0,
            ambient: None,
        }
    }
}

/// Torus scalar curvature at a point, S = 2 cos(theta) / (r (R + r cos(theta))).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusCurvature {
    pub formula: String,
    pub major_radius: f64,
    pub minor_radius: f64,
}

impl TorusCurvature {
    pub fn at(&self, p: &[f64]) -> f64 {
        let (big, small) = (self.major_radius, self.minor_radius);
        let rho = (p[0] * p[0] + p[1] * p[1]).sqrt();
        let theta = p[2].atan2(rho - big);
        2.0 * theta.cos() / (small * (big + small * theta.cos()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnalyticCurvature {
    Constant(f64),
    Torus(TorusCurvature),
}

impl AnalyticCurvature {
    pub fn at(&self, p: &[f64]) -> f64 {
        match self {
            AnalyticCurvature::Constant(s) => *s,
            AnalyticCurvature::Torus(t) => t.at(p),
        }
    }
}

/// Generator provenance, persisted as the JSON sidecar of a synthetic cloud.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldMeta {
    pub kind: ManifoldKind,
    pub params: GeneratorParams,
    pub noise_sigma: f64,
    pub seed: u64,
    pub analytic_curvature: AnalyticCurvature,
}

fn natural_ambient(kind: ManifoldKind, params: &GeneratorParams) -> usize {
    match kind {
        ManifoldKind::Sphere => params.dim + 1,
        _ => 3,
    }
}

fn validate_params(kind: ManifoldKind, n: usize, params: &GeneratorParams, noise: f64) -> Result<()> {
    let bad = |msg: String| Err(Error::Parameter(msg));
    if n < 2 {
        return bad(format!("need at least 2 points, got {n}"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return bad(format!("noise_sigma must be finite and >= 0, got {noise}"));
    }
    match kind {
        ManifoldKind::Sphere => {
            if !(params.radius > 0.0 && params.radius.is_finite()) {
                return bad(format!("sphere radius must be > 0, got {}", params.radius));
            }
            if params.dim < 1 {
                return bad("sphere dimension must be >= 1".into());
            }
        }
        ManifoldKind::Torus => {
            let (big, small) = (params.major_radius, params.minor_radius);
            if !(small > 0.0 && big > small && big.is_finite()) {
                return bad(format!(
                    "torus radii need major > minor > 0, got major {big}, minor {small}"
                ));
            }
        }
        ManifoldKind::SwissRoll => {
            if !(params.height > 0.0 && params.height.is_finite()) {
                return bad(format!("swiss roll height must be > 0, got {}", params.height));
            }
        }
        ManifoldKind::Plane | ManifoldKind::Line => {}
    }
    if let Some(side) = params.side {
        if !(side > 0.0 && side.is_finite()) {
            return bad(format!("side must be > 0, got {side}"));
        }
    }
    let natural = natural_ambient(kind, params);
    if let Some(a) = params.ambient {
        if a < natural {
            return bad(format!(
                "ambient dimension {a} is below the {natural} the {} needs",
                kind.name()
            ));
        }
    }
    Ok(())
}

pub fn analytic_curvature(kind: ManifoldKind, params: &GeneratorParams) -> AnalyticCurvature {
    match kind {
        ManifoldKind::Plane | ManifoldKind::Line | ManifoldKind::SwissRoll => {
            AnalyticCurvature::Constant(0.0)
        }
        ManifoldKind::Sphere => {
            let d = params.dim as f64;
            AnalyticCurvature::Constant(d * (d - 1.0) / (params.radius * params.radius))
        }
        ManifoldKind::Torus => AnalyticCurvature::Torus(TorusCurvature {
            formula: "2*cos(theta)/(r*(R + r*cos(theta)))".into(),
            major_radius: params.major_radius,
            minor_radius: params.minor_radius,
        }),
    }
}

/// Sample `n` points from a manifold, then add isotropic Gaussian noise of
/// scale `noise_sigma` in every ambient coordinate.
pub fn generate_manifold(
    kind: ManifoldKind,
    n: usize,
    params: &GeneratorParams,
    noise_sigma: f64,
    seed: u64,
) -> Result<PointCloud> {
    validate_params(kind, n, params, noise_sigma)?;
    let ambient = params.ambient.unwrap_or_else(|| natural_ambient(kind, params));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = DMatrix::<f64>::zeros(n, ambient);

    for i in 0..n {
        match kind {
            ManifoldKind::Plane => {
                let side = params.side.unwrap_or((n as f64).sqrt());
                points[(i, 0)] = rng.random_range(0.0..side);
                points[(i, 1)] = rng.random_range(0.0..side);
            }
            ManifoldKind::Line => {
                let side = params.side.unwrap_or(n as f64);
                points[(i, 0)] = rng.random_range(0.0..side);
            }
            ManifoldKind::Sphere => {
                let k = params.dim + 1;
                let g: Vec<f64> = loop {
                    let g: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
                    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm > 1e-12 {
                        break g.into_iter().map(|x| x / norm).collect();
                    }
                };
                for (j, x) in g.into_iter().enumerate() {
                    points[(i, j)] = params.radius * x;
                }
            }
            ManifoldKind::Torus => {
                let theta = rng.random_range(0.0..2.0 * PI);
                let phi = rng.random_range(0.0..2.0 * PI);
                let (big, small) = (params.major_radius, params.minor_radius);
                let ring = big + small * theta.cos();
                points[(i, 0)] = ring * phi.cos();
                points[(i, 1)] = ring * phi.sin();
                points[(i, 2)] = small * theta.sin();
            }
            ManifoldKind::SwissRoll => {
                let t = rng.random_range(1.5 * PI..4.5 * PI);
                points[(i, 0)] = t * t.cos();
                points[(i, 1)] = rng.random_range(0.0..params.height);
                points[(i, 2)] = t * t.sin();
            }
        }
    }
    if noise_sigma > 0.0 {
        for x in points.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *x += noise_sigma * z;
        }
    }

    let meta = ManifoldMeta {
        kind,
        params: params.clone(),
        noise_sigma,
        seed,
        analytic_curvature: analytic_curvature(kind, params),
    };
    Ok(PointCloud::new(points)?.with_meta(meta))
}

/// Distance of `p` from the noiseless manifold's defining equation.
/// Circle of `radius` in the plane with angles 2 pi (i + u_i) / n, u_i uniform
/// in [-jitter, jitter]. Nearly uniform, but without the exact degeneracy of
/// an evenly spaced sample.
pub fn jittered_circle(n: usize, radius: f64, jitter: f64, seed: u64) -> Result<PointCloud> {
    if n < 3 || !(radius > 0.0 && radius.is_finite()) || !(0.0..0.5).contains(&jitter) {
        return Err(Error::Parameter(format!(
            "jittered circle needs n >= 3, radius > 0 and jitter in [0, 0.5), got {n}, {radius}, {jitter}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts = DMatrix::zeros(n, 2);
    for i in 0..n {
        let u = if jitter > 0.0 { rng.random_range(-jitter..jitter) } else { 0.0 };
        let th = 2.0 * PI * (i as f64 + u) / n as f64;
        pts[(i, 0)] = radius * th.cos();
        pts[(i, 1)] = radius * th.sin();
    }
    PointCloud::new(pts)
}

pub fn manifold_residual(kind: ManifoldKind, params: &GeneratorParams, p: &[f64]) -> f64 {
    let natural = natural_ambient(kind, params);
    let padding: f64 = p[natural.min(p.len())..].iter().map(|x| x.abs()).sum();
    let core = match kind {
        ManifoldKind::Plane => p[2].abs(),
        ManifoldKind::Line => p[1].abs() + p[2].abs(),
        ManifoldKind::Sphere => {
            let r = p[..params.dim + 1].iter().map(|x| x * x).sum::<f64>().sqrt();
            (r - params.radius).abs()
        }
        ManifoldKind::Torus => {
            let rho = (p[0] * p[0] + p[1] * p[1]).sqrt();
            (((rho - params.major_radius).powi(2) + p[2] * p[2]).sqrt() - params.minor_radius).abs()
        }
        ManifoldKind::SwissRoll => {
            // (x, z) = t (cos t, sin t); recover t from the radius and compare the angle
            let t = (p[0] * p[0] + p[2] * p[2]).sqrt();
            ((p[0] - t * t.cos()).powi(2) + (p[2] - t * t.sin()).powi(2)).sqrt()
        }
    };
    core + padding
}

/// Write one point per row, with an `x0,x1,...` header, at 17 significant digits.
pub fn save_csv(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header: Vec<String> = (0..cloud.ambient_dim()).map(|j| format!("x{j}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for row in cloud.points.row_iter() {
        let fields: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Read a comma-separated point file. A first row that does not parse as
/// numbers is taken as a header.
pub fn load_csv(path: impl AsRef<Path>) -> Result<PointCloud> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_error)?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(k as u64 + 1, |p| p.line());
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if k == 0 => continue,
            Err(_) => {
                let bad = record
                    .iter()
                    .find(|f| f.parse::<f64>().is_err())
                    .unwrap_or_default();
                return Err(Error::Parse {
                    line,
                    message: format!("non-numeric field {bad:?}"),
                });
            }
        };
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Parse {
                    line,
                    message: format!("expected {w} fields, found {}", values.len()),
                })
            }
            _ => {}
        }
        if let Some(j) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::Parse {
                line,
                message: format!("non-finite value in column {j}"),
            });
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no data rows".into(),
        });
    }
    PointCloud::from_rows(&rows)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

pub fn save_meta(meta: &ManifoldMeta, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, meta)?;
    writeln!(w)?;
    Ok(())
}

pub fn load_meta(path: impl AsRef<Path>) -> Result<ManifoldMeta> {
    Ok(serde_json::from_reader(File::open(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> GeneratorParams {
        GeneratorParams::default()
    }

    #[test]
    fn three_four_five() {
        let c = PointCloud::from_rows(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        let d = pairwise_distances(&c);
        assert_eq!(d.get(0, 1), 5.0);
        assert_eq!(d.get(1, 0), 5.0);
        assert_eq!(d.get(0, 0), 0.0);
    }

    #[test]
    fn brute_force_distances() {
        let c = generate_manifold(ManifoldKind::Sphere, 10, &params(), 0.3, 5).unwrap();
        let d = pairwise_distances(&c);
        let p = c.points();
        for i in 0..10 {
            for j in 0..10 {
                let mut s = 0.0;
                for k in 0..3 {
                    s += (p[(i, k)] - p[(j, k)]).powi(2);
                }
                assert!((d.get(i, j) - s.sqrt()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_finite_row_is_named() {
        let mut m = DMatrix::<f64>::zeros(3, 2);
        m[(2, 1)] = f64::NAN;
        let err = DistanceMatrix::from_points(&m).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
        assert!(PointCloud::new(m).is_err());
    }

    #[test]
    fn unit_sphere_points_have_unit_norm() {
        let c = generate_manifold(ManifoldKind::Sphere, 500, &params(), 0.0, 7).unwrap();
        for row in c.points().row_iter() {
            assert!((row.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn plane_lies_in_z_zero() {
        let c = generate_manifold(ManifoldKind::Plane, 100, &params(), 0.0, 1).unwrap();
        assert!(c.points().column(2).iter().all(|&z| z == 0.0));
    }

    #[test]
    fn sphere_meta_curvature() {
        let p = GeneratorParams {
            radius: 2.0,
            ..params()
        };
        let c = generate_manifold(ManifoldKind::Sphere, 10, &p, 0.0, 1).unwrap();
        assert_eq!(c.meta().unwrap().analytic_curvature, AnalyticCurvature::Constant(0.5));
        let p5 = GeneratorParams {
            dim: 5,
            ambient: Some(7),
            ..params()
        };
        let c5 = generate_manifold(ManifoldKind::Sphere, 10, &p5, 0.0, 1).unwrap();
        assert_eq!(c5.ambient_dim(), 7);
        assert_eq!(c5.meta().unwrap().analytic_curvature, AnalyticCurvature::Constant(20.0));
    }

    #[test]
    fn torus_curvature_signs() {
        let t = match analytic_curvature(ManifoldKind::Torus, &params()) {
            AnalyticCurvature::Torus(t) => t,
            other => panic!("unexpected {other:?}"),
        };
        // outer equator: theta = 0, S = 2 / (r (R + r)) = 2/3
        assert!((t.at(&[3.0, 0.0, 0.0]) - 2.0 / 3.0).abs() < 1e-12);
        // inner equator: theta = pi, S = -2 / (r (R - r)) = -2
        assert!((t.at(&[1.0, 0.0, 0.0]) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_params_rejected() {
        let p = GeneratorParams {
            radius: -1.0,
            ..params()
        };
        assert!(matches!(
            generate_manifold(ManifoldKind::Sphere, 10, &p, 0.0, 1),
            Err(Error::Parameter(_))
        ));
        let t = GeneratorParams {
            minor_radius: 3.0,
            ..params()
        };
        assert!(generate_manifold(ManifoldKind::Torus, 10, &t, 0.0, 1).is_err());
        assert!(generate_manifold(ManifoldKind::Plane, 1, &params(), 0.0, 1).is_err());
        assert!(generate_manifold(ManifoldKind::Plane, 10, &params(), -0.1, 1).is_err());
    }

    #[test]
    fn noiseless_samples_satisfy_their_equations() {
        for kind in [
            ManifoldKind::Plane,
            ManifoldKind::Line,
            ManifoldKind::Sphere,
            ManifoldKind::Torus,
            ManifoldKind::SwissRoll,
        ] {
            let c = generate_manifold(kind, 200, &params(), 0.0, 42).unwrap();
            for row in c.points().row_iter() {
                let p: Vec<f64> = row.iter().copied().collect();
                assert!(manifold_residual(kind, &params(), &p) <= 1e-10, "{kind:?}");
            }
        }
    }

    #[test]
    fn csv_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let c = generate_manifold(ManifoldKind::Torus, 5, &params(), 0.01, 3).unwrap();
        save_csv(&c, &path).unwrap();
        let back = load_csv(&path).unwrap();
        assert_eq!(back.points(), c.points());
    }

    #[test]
    fn ragged_row_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        std::fs::write(&path, "x,y,z\n1,2,3\n4,5,6\n7,8,9,10\n").unwrap();
        match load_csv(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_field_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.csv");
        std::fs::write(&path, "1,2\n3,abc\n").unwrap();
        match load_csv(&path) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("abc"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn header_only_file_has_no_data_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        std::fs::write(&path, "x,y,z\n").unwrap();
        let err = load_csv(&path).unwrap_err();
        assert!(err.to_string().contains("no data rows"), "{err}");
    }

    #[test]
    fn meta_sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let c = generate_manifold(ManifoldKind::Torus, 5, &params(), 0.0, 3).unwrap();
        save_meta(c.meta().unwrap(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        for key in ["kind", "params", "noise_sigma", "seed", "analytic_curvature"] {
            assert!(text.contains(key), "{key}");
        }
        assert_eq!(&load_meta(&path).unwrap(), c.meta().unwrap());
    }
}
