//! Max-min problems over commuting (simultaneously diagonal) systems.
//!
//! With `Gᵢ = Θᵢ²` diagonal in a shared basis and `xⱼ = cⱼ²`, every
//! `‖Θᵢ c‖²` is linear in `x` on the simplex, so the problems become linear
//! programs. A basic optimal solution has at most as many nonzeros as there
//! are constraint rows, which bounds the support of `c*`.
//!
//! For systems that are not simultaneously diagonal, the same LP over the
//! diagonal entries optimizes over Gram matrices that are diagonal in the
//! chosen basis, so its value is a lower bound on the broadcast value.

use serde::{Deserialize, Serialize};

use super::simplex::{minimize, LpOutcome};
use crate::channel::Dtm;
use crate::error::{Error, Result};
use crate::linalg::{complete_basis, dot, norm, Matrix};

#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalInstance {
    /// `thetas[i][j] = θ_{i,j} ≥ 0`.
    pub thetas: Vec<Vec<f64>>,
    /// Orthogonal change of basis to the first system's singular basis.
    pub basis_change: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalSolution {
    pub c_star: Vec<f64>,
    pub support: Vec<usize>,
    /// Optimal objective: the max-min value, or the last system's energy.
    pub value: f64,
    /// `‖Θᵢ c*‖²` for every system.
    pub system_values: Vec<f64>,
}

impl DiagonalInstance {
    pub fn new(thetas: Vec<Vec<f64>>, basis_change: Matrix) -> Result<Self> {
        let m = thetas.first().map(Vec::len).ok_or_else(|| Error::input("no systems given"))?;
        if m == 0 {
            return Err(Error::input("systems have no coordinates"));
        }
        for t in &thetas {
            Error::check_len(m, t.len())?;
            if let Some(index) = t.iter().position(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(Error::OutOfRange { index, value: t[index] });
            }
        }
        Error::check_len(m, basis_change.rows())?;
        Error::check_len(m, basis_change.cols())?;
        let err = basis_change
            .transpose()
            .matmul(&basis_change)
            .sub(&Matrix::identity(m))
            .max_abs();
        if err > 1e-10 {
            return Err(Error::input(format!("basis change is not orthogonal (error {err:e})")));
        }
        Ok(Self {
            thetas,
            basis_change,
        })
    }

    /// Diagonal entries of the broadcast systems in an orthonormal basis of
    /// `v₀⊥` given as the columns of `basis`: `θ_{i,j} = ‖Bᵢ bⱼ‖`.
    pub fn from_dtms(dtms: &[Dtm], basis: &Matrix) -> Result<Self> {
        let first = dtms.first().ok_or_else(|| Error::input("no systems given"))?;
        let n = first.input.alphabet_size();
        Error::check_len(n, basis.rows())?;
        Error::check_len(n - 1, basis.cols())?;
        let v0 = first.v0();
        let cols = basis.columns();
        for c in &cols {
            if dot(c, &v0).abs() > 1e-10 {
                return Err(Error::input("basis vectors must be orthogonal to v0"));
            }
        }
        let thetas = dtms
            .iter()
            .map(|d| cols.iter().map(|b| norm(&d.matrix.matvec(b))).collect())
            .collect();
        let mut right = first.spectrum.right_vectors.clone();
        complete_basis(&mut right, n);
        let phi = Matrix::from_fn(n - 1, n - 1, |j, k| dot(&cols[j], &right[k + 1]));
        Self::new(thetas, phi)
    }

    pub fn coordinates(&self) -> usize {
        self.thetas[0].len()
    }

    fn squared(&self, i: usize) -> Vec<f64> {
        self.thetas[i].iter().map(|t| t * t).collect()
    }

    fn solution(&self, x: &[f64], value: f64) -> DiagonalSolution {
        let support = (0..x.len()).filter(|&j| x[j] > 1e-12).collect();
        let system_values = (0..self.thetas.len())
            .map(|i| dot(&self.squared(i), x))
            .collect();
        DiagonalSolution {
            c_star: x.iter().map(|v| v.sqrt()).collect(),
            support,
            value,
            system_values,
        }
    }
}

/// `max_{‖c‖=1} min_i ‖Θᵢ c‖²`; the support of `c*` has at most `K` entries.
pub fn diagonal_maxmin(inst: &DiagonalInstance) -> Result<DiagonalSolution> {
    let k = inst.thetas.len();
    let m = inst.coordinates();
    // Variables: x (m), t, slacks (k).
    let nv = m + 1 + k;
    let mut a = Matrix::zeros(k + 1, nv);
    let mut b = vec![0.0; k + 1];
    for j in 0..m {
        a[(0, j)] = 1.0;
    }
    b[0] = 1.0;
    for i in 0..k {
        for (j, v) in inst.squared(i).into_iter().enumerate() {
            a[(1 + i, j)] = v;
        }
        a[(1 + i, m)] = -1.0;
        a[(1 + i, m + 1 + i)] = -1.0;
    }
    let mut c = vec![0.0; nv];
    c[m] = -1.0;
    match minimize(&c, &a, &b) {
        LpOutcome::Optimal { x, value } => Ok(inst.solution(&x[..m], -value)),
        LpOutcome::Infeasible => Err(Error::Infeasible("simplex constraint".into())),
        LpOutcome::Unbounded => Err(Error::input("max-min program is unbounded")),
    }
}

/// `max ‖Θ_K c‖²` over unit `c` with `‖Θᵢ c‖² = targets[i]` for the first
/// `K − 1` systems; the support of `c*` has at most `K` entries.
pub fn diagonal_constrained(inst: &DiagonalInstance, targets: &[f64]) -> Result<DiagonalSolution> {
    let k = inst.thetas.len();
    Error::check_len(k - 1, targets.len())?;
    let m = inst.coordinates();
    let mut a = Matrix::zeros(k, m);
    let mut b = vec![1.0; k];
    for j in 0..m {
        a[(0, j)] = 1.0;
    }
    for (i, &target) in targets.iter().enumerate() {
        for (j, v) in inst.squared(i).into_iter().enumerate() {
            a[(1 + i, j)] = v;
        }
        b[1 + i] = target;
    }
    let c: Vec<f64> = inst.squared(k - 1).iter().map(|v| -v).collect();
    match minimize(&c, &a, &b) {
        LpOutcome::Optimal { x, value } => Ok(inst.solution(&x, -value)),
        LpOutcome::Infeasible => Err(Error::Infeasible(format!(
            "no unit vector meets the energy targets {targets:?}"
        ))),
        LpOutcome::Unbounded => Err(Error::input("constrained program is unbounded")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_system_picks_largest_coordinate() {
        let inst = DiagonalInstance::new(vec![vec![0.3, 0.9, 0.5]], Matrix::identity(3)).unwrap();
        let s = diagonal_maxmin(&inst).unwrap();
        assert_eq!(s.support, vec![1]);
        assert!((s.value - 0.81).abs() < 1e-12);
        let s = diagonal_constrained(&inst, &[]).unwrap();
        assert_eq!(s.support, vec![1]);
    }

    #[test]
    fn crossing_profiles_use_two_coordinates() {
        let inst = DiagonalInstance::new(
            vec![vec![1.0, 0.2, 0.6, 0.1], vec![0.1, 0.9, 0.5, 0.3]],
            Matrix::identity(4),
        )
        .unwrap();
        let s = diagonal_maxmin(&inst).unwrap();
        assert!(s.support.len() <= 2);
        // Every 2-sparse candidate, with the best mixing weight in closed form.
        let sq: Vec<Vec<f64>> = (0..2).map(|i| inst.squared(i)).collect();
        let mut best: f64 = 0.0;
        for j in 0..4 {
            for l in j..4 {
                for step in 0..=10_000 {
                    let x = step as f64 / 10_000.0;
                    let v0 = x * sq[0][j] + (1.0 - x) * sq[0][l];
                    let v1 = x * sq[1][j] + (1.0 - x) * sq[1][l];
                    best = best.max(v0.min(v1));
                }
            }
        }
        assert!(s.value >= best - 1e-12 && s.value - best < 1e-4);
    }

    #[test]
    fn infeasible_targets_are_reported() {
        let inst = DiagonalInstance::new(vec![vec![0.5, 0.5], vec![1.0, 0.0]], Matrix::identity(2)).unwrap();
        assert!(matches!(diagonal_constrained(&inst, &[0.9]), Err(Error::Infeasible(_))));
        let s = diagonal_constrained(&inst, &[0.25]).unwrap();
        assert!((s.value - 1.0).abs() < 1e-12);
    }
}
