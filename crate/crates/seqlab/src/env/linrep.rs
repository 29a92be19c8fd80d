//! Linear-representation environment: a shared d×r basis with orthonormal
//! columns (Haar), per-document coefficients ξ_m ~ N(0, I_r/r), and documents
//! of iid tokens from softmax(basis·ξ_m).

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinRepSpec {
    /// Vocabulary / ambient dimension d.
    pub dim: usize,
    /// Representation rank r ≤ d.
    pub rank: usize,
}

impl LinRepSpec {
    pub fn new(dim: usize, rank: usize) -> Result<Self> {
        if dim == 0 || rank == 0 {
            return Err(Error::invalid("linrep dims must be ≥ 1"));
        }
        if rank > dim {
            return Err(Error::invalid(format!("rank {rank} exceeds dim {dim}")));
        }
        Ok(LinRepSpec { dim, rank })
    }

    /// Haar-distributed orthonormal columns: thin QR of a Gaussian matrix
    /// with the sign of each R diagonal entry folded into Q's columns.
    pub fn sample_basis(&self, rng: &mut impl Rng) -> DMatrix<f64> {
        let g = DMatrix::from_fn(self.dim, self.rank, |_, _| {
            rng.sample::<f64, _>(StandardNormal)
        });
        let qr = g.qr();
        let r = qr.r();
        let mut q = qr.q();
        for j in 0..self.rank {
            if r[(j, j)] < 0.0 {
                let mut col = q.column_mut(j);
                col *= -1.0;
            }
        }
        q
    }

    pub fn sample_coeff(&self, rng: &mut impl Rng) -> DVector<f64> {
        let sd = (1.0 / self.rank as f64).sqrt();
        DVector::from_fn(self.rank, |_, _| sd * rng.sample::<f64, _>(StandardNormal))
    }
}
