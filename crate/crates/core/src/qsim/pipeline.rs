//! The full simulated pipeline, from distances to per-point curvature.

use nalgebra::DMatrix;

use super::encoding::CostCounter;
use super::geodesic::{build_difference_operator, geodesic_diag_all, DifferenceScope, GeodesicDiagAll};
use super::kernel::{build_kernel_gram_encoding, KernelGram};
use super::local::{centered_gram_encoding, qsim_local_dimension, qsim_neighborhood, CenteredGram, NeighborReadout};
use super::power::PowerOptions;
use super::sums::{fit_from_sums, qsim_curvature_sums, FitSums, Sampling};
use crate::config::{DimMode, RunConfig, Scale, Stage};
use crate::diffusion;
use crate::error::{Error, Result};
use crate::geometry::{
    ball_volumes, curvature, default_h, density_field, global_dimension, BallVolumes, Neighborhood, RadiusWindow,
};
use crate::par::{self, Execution};
use crate::pointcloud::{pairwise_distances_with, PointCloud};

/// Largest cloud the simulator accepts; the geodesic stage works on N^2 x N^2 matrices.
pub const MAX_POINTS: usize = 32;

#[derive(Clone, Debug)]
pub struct PointTrace {
    pub neighbors: NeighborReadout,
    pub gram: CenteredGram,
    pub local_dim: usize,
    pub volumes: BallVolumes,
    pub sums: FitSums,
    pub fit_a: f64,
    pub curvature: f64,
    pub alt_fit_a: f64,
    pub alt_curvature: f64,
    pub cost: CostCounter,
}

/// Every intermediate result of one run.
#[derive(Clone, Debug)]
pub struct PipelineTrace {
    pub sigma2: f64,
    pub kernel: KernelGram,
    pub geodesics: GeodesicDiagAll,
    pub h: f64,
    pub global_dim: usize,
    pub dim_mode: DimMode,
    pub points: Vec<PointTrace>,
}

impl PipelineTrace {
    pub fn neighborhoods(&self) -> Vec<Neighborhood> {
        self.points.iter().map(|p| p.neighbors.neighborhood.clone()).collect()
    }

    pub fn curvatures(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.curvature).collect()
    }

    pub fn local_dims(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.local_dim).collect()
    }

    /// Oracle calls summed over all points; every point pays for its own
    /// copy of the shared kernel and geodesic stages.
    pub fn total_cost(&self) -> CostCounter {
        let mut c = CostCounter::new();
        for p in &self.points {
            c.absorb(&p.cost);
        }
        c
    }
}

pub fn power_options(config: &RunConfig, point: usize) -> PowerOptions {
    PowerOptions {
        tol: config.qsim.power_tol,
        max_iters: config.qsim.max_iters,
        seed: config.seed.wrapping_add(point as u64),
        require_gap: true,
    }
}

fn check_inputs(cloud: &PointCloud, config: &RunConfig) -> Result<()> {
    config.validate()?;
    let n = cloud.n_points();
    if n > MAX_POINTS {
        return Err(Error::Parameter(format!(
            "the simulator handles at most {MAX_POINTS} points, got {n}"
        )));
    }
    if config.nn >= n {
        return Err(Error::Parameter(format!(
            "neighborhood size nn = {} needs at least {} points, got {n}",
            config.nn,
            config.nn + 1
        )));
    }
    if config.t != 1.0 {
        return Err(Error::Parameter(format!(
            "the simulated pipeline encodes K^T K and so needs t = 1, got t = {}",
            config.t
        )));
    }
    Ok(())
}

/// Runs every stage. `fault` perturbs one stage's output before downstream
/// stages consume it, to exercise the verifier.
pub fn run_pipeline(
    cloud: &PointCloud,
    config: &RunConfig,
    fault: Option<Stage>,
    exec: Execution,
) -> Result<PipelineTrace> {
    check_inputs(cloud, config)?;
    let n = cloud.n_points();
    let q = &config.qsim;
    let d = pairwise_distances_with(cloud, exec);
    let sigma2 = match config.sigma2 {
        Scale::Auto => diffusion::median_sigma2(&d)?,
        Scale::Value(v) => v,
    };

    let mut kernel = build_kernel_gram_encoding(&d, sigma2, q)?;
    if fault == Some(Stage::KernelGram) {
        kernel.encoding = kernel.encoding.perturbed(|a| {
            a[(0, 1)] *= 1.001;
            a[(1, 0)] *= 1.001;
        })?;
    }

    let e_all = build_difference_operator(n, DifferenceScope::All)?;
    let mut geodesics = geodesic_diag_all(&kernel.encoding, &e_all)?;
    if fault == Some(Stage::GeodesicDiagonal) {
        geodesics.filtered = geodesics.filtered.perturbed(|a| a[(1, 1)] *= 1.01)?;
    }

    let neighbors = par::try_map_indices(exec, n, |i| {
        let mut r = geodesics
            .restrict(i)
            .and_then(|diag| qsim_neighborhood(&diag, config.nn, &power_options(config, i)))
            .map_err(|e| e.at_point(i))?;
        if fault == Some(Stage::Neighbors) && i == 0 {
            let nb = &mut r.neighborhood;
            let outsider = (0..n).find(|j| !nb.members.contains(j)).expect("nn < N");
            *nb.members.last_mut().expect("non-empty") = outsider;
        }
        Ok::<_, Error>(r)
    })?;

    let grams = par::try_map_indices(exec, n, |i| {
        let nb = &neighbors[i].neighborhood;
        let mut g = centered_gram_encoding(cloud, nb, q.amplification_tol).map_err(|e| e.at_point(i))?;
        if fault == Some(Stage::CenteredGram) && i == 0 {
            let bump = 1e-3 * g.before.encoded().amax();
            g.before = g.before.perturbed(|a| a[(0, 0)] += bump)?;
            g.amplified = g.amplified.perturbed(|a| a[(0, 0)] += bump)?;
        }
        Ok::<_, Error>(g)
    })?;

    let dims = par::try_map_indices(exec, n, |i| {
        let mut r = qsim_local_dimension(&grams[i].amplified, config.tau, &power_options(config, i))
            .map_err(|e| e.at_point(i))?;
        if fault == Some(Stage::LocalDimension) && i == 0 {
            r.dim += 1;
        }
        Ok::<_, Error>(r)
    })?;

    let nbs: Vec<Neighborhood> = neighbors.iter().map(|r| r.neighborhood.clone()).collect();
    let local_dims: Vec<usize> = dims.iter().map(|r| r.dim).collect();
    let global_dim = global_dimension(&local_dims)?;
    let h = match config.h {
        Scale::Auto => default_h(&nbs)?,
        Scale::Value(v) => v,
    };
    let rho = density_field(&nbs, h)?;
    let dim_mode = config.dim_mode.unwrap_or(DimMode::Global);
    let window = RadiusWindow {
        r_min: config.r_min,
        r_max: config.r_max,
    };
    let sampling_seed = config.seed;

    let points = par::try_map_indices(exec, n, |i| {
        let run = || -> Result<PointTrace> {
            let dim = match dim_mode {
                DimMode::Global => global_dim,
                DimMode::Local => local_dims[i],
            };
            let volumes = ball_volumes(&rho, &nbs[i], dim, window)?;
            let sampling = Sampling::from_mode(q.mode, q.shot_eps, sampling_seed.wrapping_add(i as u64));
            let mut sums = qsim_curvature_sums(&volumes.normalized, &volumes.radii, sampling)?;
            if fault == Some(Stage::CurvatureSums) && i == 0 {
                sums.sum_vol *= 1.01;
                sums.sum_r2_vol *= 1.01;
            }
            let fit_a = fit_from_sums(&sums, config.fit_variant)?;
            let alt_fit_a = fit_from_sums(&sums, config.fit_variant.other())?;
            let mut cost = neighbors[i].cost.merged(&dims[i].cost);
            cost.tick("hadamard_test", 3);
            Ok(PointTrace {
                neighbors: neighbors[i].clone(),
                gram: grams[i].clone(),
                local_dim: local_dims[i],
                volumes,
                sums,
                fit_a,
                curvature: curvature(fit_a, dim),
                alt_fit_a,
                alt_curvature: curvature(alt_fit_a, dim),
                cost,
            })
        };
        run().map_err(|e| e.at_point(i))
    })?;

    Ok(PipelineTrace {
        sigma2,
        kernel,
        geodesics,
        h,
        global_dim,
        dim_mode,
        points,
    })
}

/// Simulated curvature estimate for every point.
pub fn qsim_estimate(cloud: &PointCloud, config: &RunConfig) -> Result<PipelineTrace> {
    run_pipeline(cloud, config, None, Execution::default())
}

/// d_G^4 for every pair, read from the filtered diagonal.
pub fn fourth_power_matrix(trace: &PipelineTrace) -> Result<DMatrix<f64>> {
    let n = trace.geodesics.n;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let row = trace.geodesics.restrict(i)?.fourth_powers();
        m.row_mut(i).copy_from(&row.transpose());
    }
    Ok(m)
}
