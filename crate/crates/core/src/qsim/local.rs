//! Per-point stages: neighbor readout, centered Gram encoding and local
//! dimension by power iteration.

use nalgebra::{DMatrix, DVector};

use super::encoding::{
    be_amplify, col_apply, col_lcu, col_restrict, col_swap_registers, col_tensor,
    partial_trace_second, state_preparation, uniform_reflection, BlockEncoding, CostCounter,
};
use super::geodesic::{inverse_distance_encoding, GeodesicDiag};
use super::power::{PowerIteration, PowerOptions};
use crate::error::{Error, Result};
use crate::geometry::{dimension_from_variances, neighborhood_from_row, Neighborhood};
use crate::linalg;
use crate::pointcloud::PointCloud;

#[derive(Clone, Debug)]
pub struct NeighborReadout {
    pub neighborhood: Neighborhood,
    /// Set when the power method hit a degenerate gap and the classical
    /// tie rule was applied to the encoded distances instead.
    pub fallback: bool,
    pub cost: CostCounter,
}

/// Nearest neighbors of `diag.center` from the top `nn - 1` eigenvectors of
/// the inverse-distance encoding. Each eigenvector is a basis state; its
/// dominant coordinate is the measured index and its eigenvalue
/// d_min / (2 d_j) gives the distance.
pub fn qsim_neighborhood(diag: &GeodesicDiag, nn: usize, opts: &PowerOptions) -> Result<NeighborReadout> {
    let n = diag.encoding.dim();
    let center = diag.center;
    if nn < 2 || nn >= n {
        return Err(Error::Parameter(format!(
            "neighborhood size must satisfy 2 <= nn < N, got nn = {nn}, N = {n}"
        )));
    }
    let inv = inverse_distance_encoding(&diag.encoding, center)?;
    let d_min = (inv.delta_min * diag.filter_dim as f64).powf(0.25);
    let mut cost = inv.encoding.cost().clone();
    let strict = PowerOptions {
        require_gap: true,
        ..*opts
    };

    let mut power = PowerIteration::new(inv.encoding.encoded(), &strict)?;
    let mut members = vec![center];
    let mut radii = vec![0.0];
    let mut degenerate = false;
    for _ in 0..nn - 1 {
        match power.next_pair() {
            Ok(pair) => {
                let j = pair.vector.iamax();
                if members.contains(&j) {
                    degenerate = true;
                    break;
                }
                members.push(j);
                radii.push(d_min / (2.0 * pair.value));
            }
            Err(Error::Gap { .. }) => {
                degenerate = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    cost.absorb(power.cost());

    if degenerate {
        let row: Vec<f64> = diag.distances().iter().copied().collect();
        return Ok(NeighborReadout {
            neighborhood: neighborhood_from_row(&row, center, nn)?,
            fallback: true,
            cost,
        });
    }
    Ok(NeighborReadout {
        neighborhood: Neighborhood {
            center,
            members,
            radii,
        },
        fallback: false,
        cost,
    })
}

/// Encodings of the centered Gram matrix C^T C of a neighborhood.
#[derive(Clone, Debug)]
pub struct CenteredGram {
    /// Encodes C^T C / 4 at subnormalization sum_j ||x_j||^2.
    pub before: BlockEncoding,
    pub amplified: BlockEncoding,
    pub gamma: f64,
}

impl CenteredGram {
    /// C^T C recovered from the encoded block.
    pub fn gram(&self) -> DMatrix<f64> {
        self.before.encoded() * 4.0
    }
}

/// Members' coordinates, one row per member.
pub fn neighborhood_rows(cloud: &PointCloud, nb: &Neighborhood) -> DMatrix<f64> {
    let pts = cloud.points();
    DMatrix::from_fn(nb.len(), cloud.ambient_dim(), |r, c| pts[(nb.members[r], c)])
}

/// State preparation of the stacked members, a Hadamard-style uniform
/// reflection to extract the mean, subtraction by LCU, a register swap and a
/// partial trace over the member index.
pub fn centered_gram_encoding(cloud: &PointCloud, nb: &Neighborhood, amp_tol: f64) -> Result<CenteredGram> {
    let k = nb.len();
    let m = cloud.ambient_dim();
    if k < 2 {
        return Err(Error::Parameter("centered Gram needs at least two members".into()));
    }
    let x = neighborhood_rows(cloud, nb);
    // index j * m + a holds coordinate a of member j
    let psi = state_preparation(&DVector::from_fn(k * m, |idx, _| x[(idx / m, idx % m)]))?;

    let h = uniform_reflection(k);
    let h_lift = BlockEncoding::unitary(linalg::kron(&h, &DMatrix::identity(m, m)))?;
    // the first member block of (H (x) I) psi is sum_j x_j / sqrt(k)
    let mean_part = col_restrict(&col_apply(&h_lift, &psi)?, 0..m)?;
    let h_col = state_preparation(&h.column(0).into_owned())?;
    let phi = col_tensor(&h_col, &mean_part)?;

    let diff = col_lcu(&[(0.5, &psi), (-0.5, &phi)])?;
    let swapped = col_swap_registers(&diff, k, m)?;
    let before = partial_trace_second(&swapped, m, k)?;

    let norm = before.op_norm();
    if norm == 0.0 {
        return Err(Error::Degenerate(format!(
            "all {k} members of the neighborhood of point {} coincide",
            nb.center
        )));
    }
    let gamma = (2.0 * before.subnorm()).min(before.subnorm() / (2.0 * norm));
    let amplified = if gamma > 1.0 {
        be_amplify(&before, gamma, amp_tol)?
    } else {
        before.clone()
    };
    Ok(CenteredGram {
        before,
        amplified,
        gamma: gamma.max(1.0),
    })
}

#[derive(Clone, Debug)]
pub struct LocalDimReadout {
    pub dim: usize,
    /// Leading eigenvalues of the encoded matrix, as many as were needed.
    pub eigenvalues: Vec<f64>,
    /// Trace of the encoded matrix.
    pub total: f64,
    pub cost: CostCounter,
}

/// Smallest p whose top-p eigenvalue mass reaches `tau` of the trace. The
/// trace stands in for the estimate Tr(A I / n) n against the maximally mixed state.
pub fn qsim_local_dimension(gram: &BlockEncoding, tau: f64, opts: &PowerOptions) -> Result<LocalDimReadout> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Parameter(format!("tau must lie in (0, 1), got {tau}")));
    }
    let a = gram.encoded();
    let n = gram.dim();
    let total = (a / n as f64).trace() * n as f64;
    let mut cost = gram.cost().clone();
    cost.tick("trace_estimation", 1);
    if !(total > 0.0) {
        return Err(Error::Degenerate("zero total variance in neighborhood".into()));
    }
    let loose = PowerOptions {
        require_gap: false,
        ..*opts
    };
    let mut power = PowerIteration::new(a, &loose)?;
    let mut eigenvalues = Vec::new();
    let mut acc = 0.0;
    while eigenvalues.len() < n {
        let pair = power.next_pair()?;
        acc += pair.value;
        eigenvalues.push(pair.value);
        if acc / total >= tau {
            break;
        }
    }
    cost.absorb(power.cost());
    let dim = dimension_from_variances(&eigenvalues, total, tau)?;
    Ok(LocalDimReadout {
        dim,
        eigenvalues,
        total,
        cost,
    })
}
