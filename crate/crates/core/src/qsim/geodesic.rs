//! Geodesic distances on the diagonal of an encoding, and their inverse.

use nalgebra::{DMatrix, DVector};

use super::encoding::{
    be_adjoint, be_diagonal_filter, be_negative_power, be_product, be_restrict, be_tensor,
    encode_known_matrix, BlockEncoding,
};
use super::kernel::ChainLink;
use crate::error::{Error, Result};

/// Which difference matrices to assemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DifferenceScope {
    /// E_i alone, N x N.
    Single(usize),
    /// The block diagonal sum_i |i><i| (x) E_i, N^2 x N^2.
    All,
}

/// E_i: row j is e_i - e_j, row i is zero.
pub fn difference_matrix(n: usize, i: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |j, k| {
        if j == i {
            0.0
        } else if k == i {
            1.0
        } else if k == j {
            -1.0
        } else {
            0.0
        }
    })
}

pub fn build_difference_operator(n: usize, scope: DifferenceScope) -> Result<BlockEncoding> {
    if n < 2 {
        return Err(Error::Parameter(format!("difference operator needs N >= 2, got {n}")));
    }
    match scope {
        DifferenceScope::Single(i) => {
            if i >= n {
                return Err(Error::Parameter(format!("point index {i} out of range")));
            }
            encode_known_matrix(&difference_matrix(n, i))
        }
        DifferenceScope::All => {
            let mut e = DMatrix::zeros(n * n, n * n);
            for i in 0..n {
                e.view_mut((i * n, i * n), (n, n)).copy_from(&difference_matrix(n, i));
            }
            encode_known_matrix(&e)
        }
    }
}

/// Diagonal encoding of d_G^4(x_i, x_j) / filter_dim over j.
#[derive(Clone, Debug)]
pub struct GeodesicDiag {
    pub encoding: BlockEncoding,
    pub filter_dim: usize,
    pub center: usize,
    pub chain: Vec<ChainLink>,
}

impl GeodesicDiag {
    /// d_G^4 read back from the encoded diagonal.
    pub fn fourth_powers(&self) -> DVector<f64> {
        self.encoding.encoded().diagonal() * self.filter_dim as f64
    }

    pub fn distances(&self) -> DVector<f64> {
        self.fourth_powers().map(|x| x.max(0.0).powf(0.25))
    }
}

/// E (I (x) G) E^T with the diagonal filter applied, for every center at once.
#[derive(Clone, Debug)]
pub struct GeodesicDiagAll {
    pub filtered: BlockEncoding,
    pub n: usize,
    pub chain: Vec<ChainLink>,
}

impl GeodesicDiagAll {
    pub fn restrict(&self, i: usize) -> Result<GeodesicDiag> {
        if i >= self.n {
            return Err(Error::Parameter(format!("point index {i} out of range")));
        }
        let n = self.n;
        let enc = be_restrict(&self.filtered, i * n..(i + 1) * n)?;
        let mut chain = self.chain.clone();
        chain.push(ChainLink::of_block("restricted", &enc));
        Ok(GeodesicDiag {
            encoding: enc,
            filter_dim: n * n,
            center: i,
            chain,
        })
    }
}

pub fn geodesic_diag_all(gram: &BlockEncoding, e_all: &BlockEncoding) -> Result<GeodesicDiagAll> {
    let n = gram.dim();
    if e_all.dim() != n * n {
        return Err(Error::Parameter("difference operator does not match the Gram matrix".into()));
    }
    let id = BlockEncoding::unitary(DMatrix::identity(n, n))?;
    let lifted = be_tensor(&id, gram)?;
    let m = be_product(&be_product(e_all, &lifted)?, &be_adjoint(e_all)?)?;
    let filtered = be_diagonal_filter(&m)?;
    let chain = vec![
        ChainLink::of_block("gram", gram),
        ChainLink::of_block("difference_operator", e_all),
        ChainLink::of_block("sandwich", &m),
        ChainLink::of_block("diagonal_filter", &filtered),
    ];
    Ok(GeodesicDiagAll { filtered, n, chain })
}

/// Encoding of d_G^4(x_i, x_j) over j for one center, from either E_i
/// alone or the full block-diagonal E.
pub fn geodesic_diag_encoding(gram: &BlockEncoding, e: &BlockEncoding, i: usize) -> Result<GeodesicDiag> {
    let n = gram.dim();
    if e.dim() == n * n {
        return geodesic_diag_all(gram, e)?.restrict(i);
    }
    if e.dim() != n {
        return Err(Error::Parameter("difference operator does not match the Gram matrix".into()));
    }
    if i >= n || e.encoded().row(i).iter().any(|&x| x != 0.0) {
        return Err(Error::Parameter(format!("difference operator is not E_{i}")));
    }
    let m = be_product(&be_product(e, gram)?, &be_adjoint(e)?)?;
    let filtered = be_diagonal_filter(&m)?;
    let chain = vec![
        ChainLink::of_block("gram", gram),
        ChainLink::of_block("difference_operator", e),
        ChainLink::of_block("sandwich", &m),
        ChainLink::of_block("diagonal_filter", &filtered),
    ];
    Ok(GeodesicDiag {
        encoding: filtered,
        filter_dim: n,
        center: i,
        chain,
    })
}

/// Diagonal encoding proportional to d_min / d_G(x_i, x_j).
#[derive(Clone, Debug)]
pub struct InverseDistance {
    pub encoding: BlockEncoding,
    pub kappa: f64,
    /// Smallest encoded d_G^4 entry among the other points.
    pub delta_min: f64,
}

/// Applies the c = 1/4 negative power to the d_G^4 diagonal. The zero
/// self-distance is first replaced by the largest other entry, so the center
/// ranks last.
pub fn inverse_distance_encoding(diag: &BlockEncoding, center: usize) -> Result<InverseDistance> {
    let n = diag.dim();
    if center >= n {
        return Err(Error::Parameter(format!("point index {center} out of range")));
    }
    let d = diag.encoded().diagonal();
    let others = (0..n).filter(|&j| j != center).map(|j| d[j]);
    let (lo, hi) = others.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    if !(lo > 0.0) {
        return Err(Error::Degenerate(format!(
            "point {center} has a zero geodesic distance to another point"
        )));
    }
    let mut fixed = d.clone_owned();
    fixed[center] = hi;
    let mut cost = diag.cost().clone();
    cost.tick("exclude_self", 1);
    let u = BlockEncoding::new(DMatrix::from_diagonal(&fixed), diag.subnorm(), diag.err(), cost)?;
    let kappa = (diag.subnorm() / lo).max(1.0);
    Ok(InverseDistance {
        encoding: be_negative_power(&u, 0.25, kappa)?,
        kappa,
        delta_min: lo,
    })
}
