use serde::{Deserialize, Serialize};

use super::ensemble::PerturbationEnsemble;
use crate::channel::{Dtm, TIE_TOL};
use crate::error::{Error, Result};
use crate::linalg::orthonormal_complement;

/// Optimal point-to-point coupling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct P2pSolution {
    pub ensemble: PerturbationEnsemble,
    /// `½ ε² σ₁²`, nats per symbol.
    pub rate: f64,
    pub sigma1: f64,
    /// Weighted direction `v₁`.
    pub direction: Vec<f64>,
    /// Probability-space direction `J = √P_X ⊙ v₁`.
    pub perturbation_direction: Vec<f64>,
    /// Set when `σ₁` is tied, so other maximizers exist.
    pub ambiguous: bool,
}

/// Uniform binary `U` with `ψ = ±v₁`, the maximizer of `‖Bψ‖²` over unit
/// `ψ ⊥ √P_X`.
pub fn solve_p2p(dtm: &Dtm, epsilon: f64) -> Result<P2pSolution> {
    if !(epsilon >= 0.0) {
        return Err(Error::input(format!("epsilon {epsilon} is negative")));
    }
    let n = dtm.input.alphabet_size();
    if n < 2 {
        return Err(Error::input("input alphabet must have at least 2 symbols"));
    }
    let sp = &dtm.spectrum;
    let (sigma1, direction) = if sp.len() >= 2 {
        (sp.sigma(1), sp.right_vectors[1].clone())
    } else {
        // Single output symbol: every direction is annihilated.
        (0.0, orthonormal_complement(&[dtm.v0()], n).column(0))
    };
    let ambiguous = sp.len() > 2 && sp.sigma(1) - sp.sigma(2) <= TIE_TOL;
    let perturbation_direction = direction
        .iter()
        .zip(dtm.input.probs())
        .map(|(v, p)| v * p.sqrt())
        .collect();
    Ok(P2pSolution {
        ensemble: PerturbationEnsemble::antipodal(&direction, epsilon)?,
        rate: 0.5 * epsilon * epsilon * sigma1 * sigma1,
        sigma1,
        direction,
        perturbation_direction,
        ambiguous,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_dtm, ChannelMatrix};
    use crate::prob::Distribution;

    #[test]
    fn example_one_direction() {
        let w = ChannelMatrix::nested_ternary(0.2, 0.1).unwrap();
        let d = build_dtm(&w, &Distribution::new(vec![0.5, 0.25, 0.25]).unwrap()).unwrap();
        let s = solve_p2p(&d, 0.1).unwrap();
        let j = [0.5, -0.25, -0.25];
        assert!(s.perturbation_direction.iter().zip(j).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!((s.rate - 0.5 * 0.01 * 0.16).abs() < 1e-15);
        assert!(s.ensemble.residuals(&d.v0()).worst() < 1e-12);
    }

    #[test]
    fn identity_and_bsc_rates() {
        let d = build_dtm(&ChannelMatrix::identity(3), &Distribution::uniform(3)).unwrap();
        let s = solve_p2p(&d, 0.3).unwrap();
        assert!((s.rate - 0.045).abs() < 1e-14 && s.ambiguous);
        let d = build_dtm(&ChannelMatrix::bsc(0.1).unwrap(), &Distribution::uniform(2)).unwrap();
        assert!((solve_p2p(&d, 0.01).unwrap().rate - 3.2e-5).abs() < 1e-15);
        assert_eq!(solve_p2p(&d, 0.0).unwrap().rate, 0.0);
        assert!(solve_p2p(&d, -1.0).is_err());
    }
}
