//! Neighborhoods, local PCA dimension, heat-kernel density, geodesic-ball
//! volumes, the quadratic volume fit and scalar curvature.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::{DimMode, FitVariant, RunConfig, Scale};
use crate::diffusion::{self, GeodesicField};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::pointcloud::{pairwise_distances_with, PointCloud};
use crate::stats::{lower_median, lower_median_usize};

/// The center followed by its nearest other points, by ascending distance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Neighborhood {
    pub center: usize,
    pub members: Vec<usize>,
    pub radii: Vec<f64>,
}

impl Neighborhood {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Neighborhood of `center` from one row of distances: the center itself at
/// radius 0, then the `nn - 1` closest others, ties to the lower index.
pub fn neighborhood_from_row(row: &[f64], center: usize, nn: usize) -> Result<Neighborhood> {
    let n = row.len();
    if nn < 2 || nn >= n {
        return Err(Error::Parameter(format!(
            "neighborhood size must satisfy 2 <= nn < N, got nn = {nn}, N = {n}"
        )));
    }
    let mut others: Vec<usize> = (0..n).filter(|&j| j != center).collect();
    let cmp = |a: &usize, b: &usize| row[*a].total_cmp(&row[*b]).then(a.cmp(b));
    let k = nn - 1;
    if k < others.len() {
        others.select_nth_unstable_by(k - 1, cmp);
        others.truncate(k);
    }
    others.sort_by(cmp);
    let mut members = Vec::with_capacity(nn);
    members.push(center);
    members.extend(others);
    let radii = members
        .iter()
        .map(|&j| if j == center { 0.0 } else { row[j] })
        .collect();
    Ok(Neighborhood {
        center,
        members,
        radii,
    })
}

pub fn nearest_neighborhood(dg: &GeodesicField, i: usize, nn: usize) -> Result<Neighborhood> {
    if i >= dg.n() {
        return Err(Error::Parameter(format!("point index {i} out of range")));
    }
    let row: Vec<f64> = dg.matrix().row(i).iter().copied().collect();
    neighborhood_from_row(&row, i, nn)
}

#[derive(Clone, Debug)]
pub struct LocalPca {
    pub centroid: DVector<f64>,
    /// Member coordinates minus the centroid, one row per member.
    pub centered: DMatrix<f64>,
    /// Singular values of `centered`, non-increasing.
    pub singular_values: Vec<f64>,
    pub local_dim: usize,
    pub tau: f64,
}

/// Smallest p with sum_{a <= p} s_a / sum_a s_a >= tau, for a non-increasing
/// list of variances `s`.
pub fn dimension_from_variances(variances: &[f64], total: f64, tau: f64) -> Result<usize> {
    if !(total > 0.0) {
        return Err(Error::Degenerate("zero total variance in neighborhood".into()));
    }
    let mut acc = 0.0;
    for (p, s) in variances.iter().enumerate() {
        acc += s;
        if acc / total >= tau {
            return Ok(p + 1);
        }
    }
    Ok(variances.len().max(1))
}

pub fn local_pca(cloud: &PointCloud, nb: &Neighborhood, tau: f64) -> Result<LocalPca> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Parameter(format!("tau must lie in (0, 1), got {tau}")));
    }
    let m = cloud.ambient_dim();
    let k = nb.len();
    let pts = cloud.points();
    let rows = DMatrix::from_fn(k, m, |r, c| pts[(nb.members[r], c)]);
    let centroid = rows.row_mean().transpose();
    let mut centered = rows.clone();
    for mut row in centered.row_iter_mut() {
        row -= centroid.transpose();
    }
    let scale = rows.row_iter().map(|r| r.norm_squared()).fold(0.0, f64::max);
    let total = centered.norm_squared();
    if !(total > 1e-24 * scale * k as f64) {
        return Err(Error::Degenerate(format!(
            "all {k} members of the neighborhood of point {} coincide",
            nb.center
        )));
    }
    let mut singular_values: Vec<f64> = centered.clone().svd(false, false).singular_values.iter().copied().collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let variances: Vec<f64> = singular_values.iter().map(|s| s * s).collect();
    let total_sv: f64 = variances.iter().sum();
    let local_dim = dimension_from_variances(&variances, total_sv, tau)?;
    Ok(LocalPca {
        centroid,
        centered,
        singular_values,
        local_dim,
        tau,
    })
}

pub fn global_dimension(local_dims: &[usize]) -> Result<usize> {
    lower_median_usize(local_dims)
        .ok_or_else(|| Error::Input("no local dimensions to summarize".into()))
}

#[derive(Clone, Debug)]
pub struct DensityField {
    pub rho: DVector<f64>,
    pub h: f64,
}

/// rho_i = sum over the members of N_i of exp(-d_G^2 / h^2), self term included.
pub fn density_field(neighborhoods: &[Neighborhood], h: f64) -> Result<DensityField> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Parameter(format!("h must be > 0, got {h}")));
    }
    let mut rho = DVector::zeros(neighborhoods.len());
    for nb in neighborhoods {
        if nb.center >= rho.len() {
            return Err(Error::Input(format!(
                "neighborhood center {} out of range for {} neighborhoods",
                nb.center,
                neighborhoods.len()
            )));
        }
        rho[nb.center] = nb.radii.iter().map(|r| (-(r * r) / (h * h)).exp()).sum();
    }
    Ok(DensityField { rho, h })
}

/// Lower median over points of each point's lower-median nonzero radius.
pub fn default_h(neighborhoods: &[Neighborhood]) -> Result<f64> {
    let per_point: Vec<f64> = neighborhoods
        .iter()
        .filter_map(|nb| {
            let nz: Vec<f64> = nb.radii.iter().copied().filter(|&r| r > 0.0).collect();
            lower_median(&nz)
        })
        .collect();
    lower_median(&per_point)
        .ok_or_else(|| Error::Degenerate("every neighborhood radius is zero".into()))
}

/// Volume of the unit d-ball, omega_d = pi^(d/2) / Gamma(d/2 + 1).
pub fn unit_ball_volume(d: usize) -> f64 {
    // omega_d = omega_{d-2} * 2 pi / d with omega_0 = 1, omega_1 = 2
    let (mut w, start) = if d % 2 == 0 { (1.0, 2) } else { (2.0, 3) };
    let mut k = start;
    while k <= d {
        w *= 2.0 * PI / k as f64;
        k += 2;
    }
    w
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BallVolumes {
    pub radii: Vec<f64>,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

/// Optional clipping window for the fit radii.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RadiusWindow {
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
}

impl RadiusWindow {
    fn contains(&self, r: f64) -> bool {
        self.r_min.is_none_or(|lo| r >= lo) && self.r_max.is_none_or(|hi| r <= hi)
    }
}

/// Density-weighted ball volumes at each nonzero neighbor radius.
pub fn ball_volumes(
    rho: &DensityField,
    nb: &Neighborhood,
    d: usize,
    window: RadiusWindow,
) -> Result<BallVolumes> {
    if d < 1 {
        return Err(Error::Parameter("dimension must be >= 1".into()));
    }
    let omega = unit_ball_volume(d);
    let mut radii = Vec::new();
    let mut raw = Vec::new();
    let mut normalized = Vec::new();
    // members are sorted by radius, so a running sum over the prefix gives each ball
    let mut vol = 0.0;
    let mut k = 0;
    for &r in nb.radii.iter().filter(|&&r| r > 0.0) {
        while k < nb.len() && nb.radii[k] <= r {
            vol += 1.0 / rho.rho[nb.members[k]];
            k += 1;
        }
        if !window.contains(r) {
            continue;
        }
        radii.push(r);
        raw.push(vol);
        normalized.push(vol / (omega * r.powi(d as i32)));
    }
    if radii.is_empty() {
        return Err(Error::Degenerate(format!(
            "no usable nonzero radius in the neighborhood of point {}",
            nb.center
        )));
    }
    Ok(BallVolumes {
        radii,
        raw,
        normalized,
    })
}

/// Fit Vol_nor = 1 + A r^2.
pub fn fit_quadratic(radii: &[f64], vol_nor: &[f64], variant: FitVariant) -> Result<f64> {
    if radii.len() != vol_nor.len() {
        return Err(Error::Input("radii and volumes differ in length".into()));
    }
    if radii.iter().all(|&r| r == 0.0) {
        return Err(Error::Degenerate("all fit radii are zero".into()));
    }
    match variant {
        FitVariant::Ols => {
            let mut num = 0.0;
            let mut den = 0.0;
            for (&r, &v) in radii.iter().zip(vol_nor) {
                let r2 = r * r;
                num += r2 * (v - 1.0);
                den += r2 * r2;
            }
            Ok(num / den)
        }
        FitVariant::PaperFormula => {
            let m = radii.len() as f64;
            let mean_vol = vol_nor.iter().sum::<f64>() / m;
            let mean_r2 = radii.iter().map(|r| r * r).sum::<f64>() / m;
            Ok(mean_vol / (1.0 + mean_r2))
        }
    }
}

/// d/dA of the fit cost, up to a factor 2: sum r^2 (1 + A r^2 - Vol).
pub fn fit_stationarity(radii: &[f64], vol_nor: &[f64], a: f64) -> f64 {
    radii
        .iter()
        .zip(vol_nor)
        .map(|(&r, &v)| r * r * (1.0 + a * r * r - v))
        .sum()
}

/// S = -6 (d + 2) A.
pub fn curvature(a: f64, d: usize) -> f64 {
    -6.0 * (d as f64 + 2.0) * a
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvatureReport {
    pub center: usize,
    pub radii: Vec<f64>,
    pub raw_volumes: Vec<f64>,
    pub normalized_volumes: Vec<f64>,
    pub fit_a: f64,
    pub local_dim_used: usize,
    pub curvature: f64,
    pub fit_variant: FitVariant,
}

pub fn curvature_report(
    vols: &BallVolumes,
    center: usize,
    d: usize,
    variant: FitVariant,
) -> Result<CurvatureReport> {
    let a = fit_quadratic(&vols.radii, &vols.normalized, variant)?;
    Ok(CurvatureReport {
        center,
        radii: vols.radii.clone(),
        raw_volumes: vols.raw.clone(),
        normalized_volumes: vols.normalized.clone(),
        fit_a: a,
        local_dim_used: d,
        curvature: curvature(a, d),
        fit_variant: variant,
    })
}

#[derive(Clone, Debug)]
pub struct LocalGeometryReport {
    pub index: usize,
    pub neighborhood: Neighborhood,
    pub local_dim: usize,
    pub curvature: CurvatureReport,
    /// The same fit under the other variant.
    pub alt: CurvatureReport,
}

#[derive(Clone, Debug)]
pub struct Estimate {
    pub sigma2: f64,
    pub h: f64,
    pub global_dim: usize,
    pub dim_mode: DimMode,
    pub reports: Vec<LocalGeometryReport>,
}

impl Estimate {
    pub fn local_dims(&self) -> Vec<usize> {
        self.reports.iter().map(|r| r.local_dim).collect()
    }

    pub fn curvatures(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.curvature.curvature).collect()
    }
}

/// Full classical pipeline for every point.
pub fn estimate_all(cloud: &PointCloud, config: &RunConfig) -> Result<Estimate> {
    estimate_all_with(cloud, config, Execution::default())
}

pub fn estimate_all_with(cloud: &PointCloud, config: &RunConfig, exec: Execution) -> Result<Estimate> {
    config.validate()?;
    check_size(cloud.n_points(), config.nn)?;
    let d = pairwise_distances_with(cloud, exec);
    let sigma2 = match config.sigma2 {
        Scale::Auto => diffusion::median_sigma2(&d)?,
        Scale::Value(v) => v,
    };
    let geo = diffusion::classical_geodesics(&d, sigma2, config.t, config.geodesic_source, exec)?;
    let mut est = estimate_from_geodesics(cloud, &geo.field, config, exec)?;
    est.sigma2 = sigma2;
    Ok(est)
}

fn check_size(n: usize, nn: usize) -> Result<()> {
    if nn >= n {
        return Err(Error::Parameter(format!(
            "neighborhood size nn = {nn} needs at least {} points, got {n}",
            nn + 1
        )));
    }
    Ok(())
}

/// Everything after the geodesics: neighborhoods through curvature.
/// `sigma2` in the result is NaN; callers that built the field fill it in.
pub fn estimate_from_geodesics(
    cloud: &PointCloud,
    field: &GeodesicField,
    config: &RunConfig,
    exec: Execution,
) -> Result<Estimate> {
    config.validate()?;
    let n = cloud.n_points();
    if field.n() != n {
        return Err(Error::Input("geodesic field and cloud differ in size".into()));
    }
    check_size(n, config.nn)?;

    let neighborhoods = par::try_map_indices(exec, n, |i| {
        nearest_neighborhood(field, i, config.nn).map_err(|e| e.at_point(i))
    })?;
    let local_dims = par::try_map_indices(exec, n, |i| {
        local_pca(cloud, &neighborhoods[i], config.tau)
            .map(|p| p.local_dim)
            .map_err(|e| e.at_point(i))
    })?;
    let global_dim = global_dimension(&local_dims)?;
    let h = match config.h {
        Scale::Auto => default_h(&neighborhoods)?,
        Scale::Value(v) => v,
    };
    let rho = density_field(&neighborhoods, h)?;
    let dim_mode = config.dim_mode.unwrap_or(DimMode::Global);
    let window = RadiusWindow {
        r_min: config.r_min,
        r_max: config.r_max,
    };

    let reports = par::try_map_indices(exec, n, |i| {
        let nb = &neighborhoods[i];
        let d = match dim_mode {
            DimMode::Global => global_dim,
            DimMode::Local => local_dims[i],
        };
        let run = || -> Result<LocalGeometryReport> {
            let vols = ball_volumes(&rho, nb, d, window)?;
            Ok(LocalGeometryReport {
                index: i,
                neighborhood: nb.clone(),
                local_dim: local_dims[i],
                curvature: curvature_report(&vols, i, d, config.fit_variant)?,
                alt: curvature_report(&vols, i, d, config.fit_variant.other())?,
            })
        };
        run().map_err(|e| e.at_point(i))
    })?;

    Ok(Estimate {
        sigma2: f64::NAN,
        h,
        global_dim,
        dim_mode,
        reports,
    })
}
