//! Solvers for the local information coupling problems.
//!
//! All problems live in the weighted input space, on the unit sphere of the
//! hyperplane orthogonal to `v₀ = √P_X`. Rates are in nats.

mod broadcast;
mod diagonal;
mod ensemble;
mod mac;
mod p2p;
mod simplex;
mod single_direction;
mod split;

pub use broadcast::{solve_broadcast, solve_broadcast_with, BroadcastOptions, BroadcastSolution};
pub use diagonal::{diagonal_constrained, diagonal_maxmin, DiagonalInstance, DiagonalSolution};
pub use ensemble::{EnsembleResiduals, PerturbationEnsemble};
pub use mac::{mac_tensorization_check, solve_mac_common, MacChannel, MacSolution, MacTensorization};
pub use p2p::{solve_p2p, P2pSolution};
pub use single_direction::{
    solve_broadcast_single_direction, solve_broadcast_single_direction_with, SearchMethod,
    SingleDirectionOptions, SingleDirectionSolution,
};
pub use split::{split_rate_region, superposed_information, RateTriple, Superposition};

use crate::channel::Dtm;
use crate::error::{Error, Result};
use crate::linalg::{orthonormal_complement, Matrix};

/// Largest receiver count accepted by the broadcast solvers.
pub const MAX_RECEIVERS: usize = 8;

/// Common setup of the broadcast problems: an orthonormal basis `Q` of
/// `v₀⊥` and the projected Gram matrices `G̃ᵢ = Qᵀ BᵢᵀBᵢ Q`.
#[derive(Clone, Debug)]
pub(crate) struct ReducedSystems {
    pub q: Matrix,
    pub grams: Vec<Matrix>,
}

impl ReducedSystems {
    pub fn new(dtms: &[Dtm]) -> Result<Self> {
        let first = dtms.first().ok_or_else(|| Error::input("at least one receiver is required"))?;
        if dtms.len() > MAX_RECEIVERS {
            return Err(Error::input(format!(
                "{} receivers given; at most {MAX_RECEIVERS} are supported",
                dtms.len()
            )));
        }
        for (i, d) in dtms.iter().enumerate().skip(1) {
            Error::check_len(first.input.alphabet_size(), d.input.alphabet_size())?;
            if d.input.max_abs_diff(&first.input) > 1e-12 {
                return Err(Error::input(format!(
                    "receiver {i} uses a different input distribution"
                )));
            }
        }
        let n = first.input.alphabet_size();
        if n < 2 {
            return Err(Error::input("input alphabet must have at least 2 symbols"));
        }
        let q = orthonormal_complement(&[first.v0()], n);
        let qt = q.transpose();
        let grams = dtms
            .iter()
            .map(|d| qt.matmul(&d.gram()).matmul(&q).symmetrized())
            .collect();
        Ok(Self { q, grams })
    }

    pub fn dim(&self) -> usize {
        self.q.cols()
    }

    /// `φᵀ G̃ᵢ φ` for every receiver.
    pub fn values(&self, phi: &[f64]) -> Vec<f64> {
        self.grams.iter().map(|g| g.quadratic_form(phi)).collect()
    }

    pub fn min_value(&self, phi: &[f64]) -> f64 {
        self.values(phi).into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Lifts a reduced vector back to the full weighted input space.
    pub fn lift(&self, phi: &[f64]) -> Vec<f64> {
        self.q.matvec(phi)
    }

    pub fn lift_gram(&self, m: &Matrix) -> Matrix {
        self.q.matmul(m).matmul(&self.q.transpose()).symmetrized()
    }
}
