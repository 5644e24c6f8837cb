use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, outer, sym_eigen, Matrix};
use crate::prob::{apply_perturbation, ConditionalFamily, Distribution, Perturbation};

/// Eigenvalues of a Gram matrix at or below this are dropped when extracting
/// an ensemble.
pub const RANK_TOL: f64 = 1e-8;

/// A law `P_U` with one weighted direction `ψ_u` per symbol; the kernels are
/// `P_{X|U=u} = P_X + ε √P_X ψ_u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationEnsemble {
    pub u_law: Distribution,
    pub directions: Vec<Vec<f64>>,
    pub epsilon: f64,
}

/// Deviations from the three ensemble constraints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResiduals {
    /// `|Σ_u P_U(u) ‖ψ_u‖² − 1|`.
    pub second_moment: f64,
    /// `max_u |⟨ψ_u, v₀⟩|`.
    pub orthogonality: f64,
    /// `‖Σ_u P_U(u) ψ_u‖`.
    pub mean: f64,
}

impl EnsembleResiduals {
    pub fn worst(&self) -> f64 {
        self.second_moment.max(self.orthogonality).max(self.mean)
    }
}

impl PerturbationEnsemble {
    pub fn new(u_law: Distribution, directions: Vec<Vec<f64>>, epsilon: f64) -> Result<Self> {
        Error::check_len(u_law.alphabet_size(), directions.len())?;
        let n = directions[0].len();
        for d in &directions {
            Error::check_len(n, d.len())?;
        }
        if !(epsilon >= 0.0) {
            return Err(Error::input(format!("epsilon {epsilon} is negative")));
        }
        Ok(Self {
            u_law,
            directions,
            epsilon,
        })
    }

    /// Uniform binary `U` with `ψ_{0,1} = ±ψ`.
    pub fn antipodal(psi: &[f64], epsilon: f64) -> Result<Self> {
        let neg: Vec<f64> = psi.iter().map(|x| -x).collect();
        Self::new(Distribution::uniform(2), vec![psi.to_vec(), neg], epsilon)
    }

    /// Realizes a Gram matrix `M ⪰ 0` with unit trace as antipodal pairs
    /// `±φⱼ` of weight `μⱼ/2` over its eigenpairs `(μⱼ, φⱼ)`. Eigenvalues at
    /// or below `1e-8` are dropped and the rest renormalized.
    pub fn from_gram(m: &Matrix, epsilon: f64) -> Result<Self> {
        let eig = sym_eigen(m);
        let kept: Vec<usize> = (0..eig.values.len())
            .filter(|&i| eig.values[i] > RANK_TOL)
            .collect();
        if kept.is_empty() {
            return Err(Error::input("gram matrix has no eigenvalue above the rank tolerance"));
        }
        let total: f64 = kept.iter().map(|&i| eig.values[i]).sum();
        let mut weights = Vec::with_capacity(2 * kept.len());
        let mut directions = Vec::with_capacity(2 * kept.len());
        for &i in &kept {
            let phi = eig.vector(i);
            let w = 0.5 * eig.values[i] / total;
            weights.extend([w, w]);
            directions.push(phi.clone());
            directions.push(phi.iter().map(|x| -x).collect());
        }
        // Weights sum to one up to round-off; fold the remainder into the first.
        let s: f64 = weights.iter().sum();
        weights[0] += 1.0 - s;
        Self::new(Distribution::with_tolerance(weights, 1e-10)?, directions, epsilon)
    }

    pub fn cardinality(&self) -> usize {
        self.directions.len()
    }

    /// `Σ_u P_U(u) ψ_u ψ_uᵀ`.
    pub fn gram(&self) -> Matrix {
        let n = self.directions[0].len();
        let mut m = Matrix::zeros(n, n);
        for (p, d) in self.u_law.probs().iter().zip(&self.directions) {
            m.add_scaled(*p, &outer(d, d));
        }
        m
    }

    pub fn residuals(&self, v0: &[f64]) -> EnsembleResiduals {
        let n = self.directions[0].len();
        let mut mean = vec![0.0; n];
        let mut second = 0.0;
        let mut orth: f64 = 0.0;
        for (p, d) in self.u_law.probs().iter().zip(&self.directions) {
            second += p * dot(d, d);
            orth = orth.max(dot(d, v0).abs());
            mean.iter_mut().zip(d).for_each(|(m, x)| *m += p * x);
        }
        EnsembleResiduals {
            second_moment: (second - 1.0).abs(),
            orthogonality: orth,
            mean: norm(&mean),
        }
    }

    /// The kernels `P_{X|U=u}` at operating point `px`.
    pub fn conditional_family(&self, px: &Distribution) -> Result<ConditionalFamily> {
        let kernels = self
            .directions
            .iter()
            .map(|d| apply_perturbation(&Perturbation::from_weighted(px.clone(), d, self.epsilon)?))
            .collect::<Result<Vec<_>>>()?;
        ConditionalFamily::new(self.u_law.clone(), kernels)
    }
}
