//! Dense two-phase simplex with Bland's rule, for the handful of
//! variables in diagonal max-min problems.

use crate::linalg::Matrix;

const TOL: f64 = 1e-11;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    /// Row 0 holds reduced costs; the last column the right-hand side.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
}

impl Tableau {
    fn rhs(&self) -> usize {
        self.t[0].len() - 1
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[row].clone();
        for (r, line) in self.t.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let f = line[col];
            if f != 0.0 {
                for (v, pv) in line.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[row - 1] = col;
    }

    /// Runs to optimality over the columns `allowed`. Returns `false` when
    /// the objective is unbounded below.
    fn run(&mut self, allowed: usize) -> bool {
        let rhs = self.rhs();
        loop {
            let entering = (0..allowed).find(|&j| self.t[0][j] < -TOL);
            let Some(col) = entering else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for r in 1..self.t.len() {
                let a = self.t[r][col];
                if a > TOL {
                    let ratio = self.t[r][rhs] / a;
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - TOL
                                || ((ratio - lratio).abs() <= TOL && self.basis[r - 1] < self.basis[lr - 1])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, col),
                None => return false,
            }
        }
    }
}

/// Minimizes `cᵀx` subject to `A x = b`, `x ≥ 0`.
pub(crate) fn minimize(c: &[f64], a: &Matrix, b: &[f64]) -> LpOutcome {
    let (m, n) = (a.rows(), a.cols());
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m + 1];
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i + 1][j] = sign * a[(i, j)];
        }
        t[i + 1][n + i] = 1.0;
        t[i + 1][width - 1] = sign * b[i];
    }
    // Phase 1: minimize the sum of artificials.
    for j in 0..width {
        let s: f64 = (1..=m).map(|r| t[r][j]).sum();
        t[0][j] = if (n..n + m).contains(&j) { 0.0 } else { -s };
    }
    let mut tab = Tableau {
        t,
        basis: (n..n + m).collect(),
    };
    tab.run(n + m);
    if -tab.t[0][width - 1] > 1e-9 {
        return LpOutcome::Infeasible;
    }
    // Drive zero-level artificials out of the basis where possible.
    for r in 1..=m {
        if tab.basis[r - 1] >= n {
            if let Some(col) = (0..n).find(|&j| tab.t[r][j].abs() > 1e-9) {
                tab.pivot(r, col);
            }
        }
    }
    // Phase 2.
    for j in 0..width {
        let mut v = if j < n { c[j] } else { 0.0 };
        for r in 1..=m {
            let bj = tab.basis[r - 1];
            if bj < n {
                v -= c[bj] * tab.t[r][j];
            }
        }
        tab.t[0][j] = v;
    }
    if !tab.run(n) {
        return LpOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for r in 1..=m {
        let bj = tab.basis[r - 1];
        if bj < n {
            x[bj] = tab.t[r][width - 1].max(0.0);
        }
    }
    let value = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    LpOutcome::Optimal { x, value }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_lps() {
        // max x + y s.t. x + 2y + s1 = 4, 3x + y + s2 = 6.
        let a = Matrix::from_rows(&[vec![1.0, 2.0, 1.0, 0.0], vec![3.0, 1.0, 0.0, 1.0]]).unwrap();
        match minimize(&[-1.0, -1.0, 0.0, 0.0], &a, &[4.0, 6.0]) {
            LpOutcome::Optimal { x, value } => {
                assert!((value + 2.8).abs() < 1e-12);
                assert!((x[0] - 1.6).abs() < 1e-12 && (x[1] - 1.2).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert_eq!(minimize(&[1.0, 1.0], &a, &[1.0, 2.0]), LpOutcome::Infeasible);
        let a = Matrix::from_rows(&[vec![1.0, -1.0]]).unwrap();
        assert_eq!(minimize(&[-1.0, 0.0], &a, &[1.0]), LpOutcome::Unbounded);
    }
}
