//! Common-message broadcast coupling:
//!
//! ```text
//! λ = max { min_i tr(Gᵢ M) : M ⪰ 0, tr M = 1, M v₀ = 0 },   Gᵢ = BᵢᵀBᵢ
//! ```
//!
//! with the dual `min_{w ∈ Δᴷ} λ_max(Π (Σ wᵢ Gᵢ) Π)`. Both are solved together
//! by a log-barrier Newton method on the dual,
//!
//! ```text
//! minimize  t·λ − log det(λI − Σ wᵢ G̃ᵢ) − Σ log wᵢ   subject to Σ wᵢ = 1,
//! ```
//!
//! in coordinates of `v₀⊥`. Along the central path `M = (λI − A(w))⁻¹ / t`
//! is primal feasible and the duality gap is `O((d + K)/t)`. Each round also
//! tries a purified primal: `M` supported on the top eigenspace of `A(w)`
//! with the traces of the active receivers equalized, which closes the gap
//! long before `t` makes the slack ill-conditioned.

use super::ensemble::{PerturbationEnsemble, RANK_TOL};
use super::ReducedSystems;
use crate::channel::Dtm;
use crate::error::{Error, Result};
use crate::linalg::{cholesky, orthonormal_complement, outer, solve, spd_inverse, svd, sym_eigen, Matrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BroadcastOptions {
    /// Budget of Newton steps across all barrier rounds.
    pub max_iterations: usize,
    /// Stop once `λ_dual − λ_primal` is at most this.
    pub gap_tolerance: f64,
    /// Gap still returned as a solution once the barrier schedule runs out.
    pub accept_gap: f64,
}

impl Default for BroadcastOptions {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            gap_tolerance: 1e-9,
            accept_gap: 1e-7,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BroadcastSolution {
    /// `min_i tr(Gᵢ M)` attained by `gram`.
    pub value: f64,
    /// `λ_max(Π (Σ wᵢ Gᵢ) Π)` at `dual_weights`.
    pub dual_value: f64,
    /// `dual_value − value`.
    pub gap: f64,
    pub dual_weights: Vec<f64>,
    /// Optimal `M` in the full weighted input space.
    pub gram: Matrix,
    /// `tr(Gᵢ M)` per receiver.
    pub receiver_values: Vec<f64>,
    /// Antipodal-pair realization of `gram`, at `ε = 1`.
    pub ensemble: PerturbationEnsemble,
    /// Numerical rank of `gram` (tolerance `1e-8`).
    pub rank: usize,
    pub iterations: usize,
}

impl BroadcastSolution {
    pub fn cardinality(&self) -> usize {
        self.ensemble.cardinality()
    }
}

pub fn solve_broadcast(dtms: &[Dtm]) -> Result<BroadcastSolution> {
    solve_broadcast_with(dtms, BroadcastOptions::default())
}

pub fn solve_broadcast_with(dtms: &[Dtm], opts: BroadcastOptions) -> Result<BroadcastSolution> {
    let sys = ReducedSystems::new(dtms)?;
    let (weights, m_reduced, iterations) = solve_reduced(&sys.grams, opts)?;
    let m_reduced = reduce_rank(&m_reduced, &sys.grams);
    finish(&sys, weights, m_reduced, iterations)
}

pub(crate) fn solve_reduced(grams: &[Matrix], opts: BroadcastOptions) -> Result<(Vec<f64>, Matrix, usize)> {
    let k = grams.len();
    let d = grams[0].rows();
    if k == 1 {
        let eig = sym_eigen(&grams[0]);
        let phi = eig.vector(0);
        return Ok((vec![1.0], outer(&phi, &phi), 0));
    }
    if d == 1 {
        let vals: Vec<f64> = grams.iter().map(|g| g[(0, 0)]).collect();
        let mut best = 0;
        for (i, &v) in vals.iter().enumerate() {
            if v < vals[best] {
                best = i;
            }
        }
        let mut w = vec![0.0; k];
        w[best] = 1.0;
        return Ok((w, Matrix::identity(1), 0));
    }
    barrier(grams, opts)
}

fn combine(grams: &[Matrix], w: &[f64]) -> Matrix {
    let d = grams[0].rows();
    let mut a = Matrix::zeros(d, d);
    for (g, wi) in grams.iter().zip(w) {
        a.add_scaled(*wi, g);
    }
    a
}

fn slack(grams: &[Matrix], lam: f64, w: &[f64]) -> Matrix {
    let d = grams[0].rows();
    Matrix::identity(d).scaled(lam).sub(&combine(grams, w))
}

/// Barrier objective, or `None` outside the domain.
fn potential(grams: &[Matrix], t: f64, lam: f64, w: &[f64]) -> Option<f64> {
    if w.iter().any(|&x| !(x > 0.0)) {
        return None;
    }
    let l = cholesky(&slack(grams, lam, w))?;
    let logdet: f64 = (0..l.rows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0;
    Some(t * lam - logdet - w.iter().map(|x| x.ln()).sum::<f64>())
}

fn normalize(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn primal_value(grams: &[Matrix], m: &Matrix) -> f64 {
    grams
        .iter()
        .map(|g| g.frobenius_inner(m))
        .fold(f64::INFINITY, f64::min)
}

/// `(min_i tr(G̃ᵢ M), λ_max(A(w)))` with `w` renormalized onto the simplex.
fn primal_dual(grams: &[Matrix], w: &[f64], m: &Matrix) -> (f64, f64) {
    let dual = sym_eigen(&combine(grams, &normalize(w))).values[0];
    (primal_value(grams, m), dual)
}

/// Weight below which a receiver is treated as inactive when purifying.
const ACTIVE_WEIGHT: f64 = 1e-4;
/// Newton steps per barrier round before `t` is raised regardless.
const MAX_CENTERING_STEPS: usize = 200;

/// Candidate primal points on the near-top eigenspaces of `A(w)`, each the
/// closest (in the packed coordinates) to `m` with equal traces across the
/// active receivers. Returns the best one that is positive semidefinite.
fn purify(grams: &[Matrix], w: &[f64], m: &Matrix) -> Option<Matrix> {
    let w = normalize(w);
    let eig = sym_eigen(&combine(grams, &w));
    let top = eig.values[0];
    let active: Vec<usize> = (0..w.len()).filter(|&i| w[i] >= ACTIVE_WEIGHT).collect();
    let mut best: Option<(f64, Matrix)> = None;
    let mut tried = 0;
    for exp in 4..=10 {
        let tol = 10f64.powi(-exp) * top.abs().max(1.0);
        let r = eig.values.iter().filter(|&&v| v >= top - tol).count();
        if r == tried {
            continue;
        }
        tried = r;
        let u = Matrix::from_columns(&(0..r).map(|i| eig.vector(i)).collect::<Vec<_>>())?;
        let z = if r == 1 {
            Matrix::identity(1)
        } else {
            equalize(&u, grams, &active, m)?
        };
        let cand = u.matmul(&z).matmul(&u.transpose()).symmetrized();
        let value = primal_value(grams, &cand);
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, cand));
        }
    }
    best.map(|(_, m)| m)
}

/// `Z ⪰ 0` with `tr Z = 1` and equal `tr(UᵀG̃ᵢU Z)` over `active`, nearest
/// to `Uᵀ m U`.
fn equalize(u: &Matrix, grams: &[Matrix], active: &[usize], m: &Matrix) -> Option<Matrix> {
    let r = u.cols();
    let ut = u.transpose();
    let h: Vec<Matrix> = active.iter().map(|&i| ut.matmul(&grams[i]).matmul(u)).collect();
    let pairs: Vec<(usize, usize)> = (0..r).flat_map(|p| (p..r).map(move |q| (p, q))).collect();
    let row = |mat: &Matrix| -> Vec<f64> {
        pairs
            .iter()
            .map(|&(p, q)| if p == q { mat[(p, p)] } else { 2.0 * mat[(p, q)] })
            .collect()
    };
    let mut rows = vec![row(&Matrix::identity(r))];
    let mut rhs = vec![1.0];
    if let Some((first, rest)) = h.split_first() {
        let base = row(first);
        for hi in rest {
            rows.push(row(hi).iter().zip(&base).map(|(a, b)| a - b).collect());
            rhs.push(0.0);
        }
    }
    let c = Matrix::from_rows(&rows)?;
    let z0m = ut.matmul(m).matmul(u);
    let z0: Vec<f64> = pairs.iter().map(|&(p, q)| z0m[(p, q)]).collect();
    let cz = c.matvec(&z0);
    let res: Vec<f64> = rhs.iter().zip(&cz).map(|(a, b)| a - b).collect();
    // Minimum-norm correction through the pseudo-inverse of C.
    let dec = svd(&c);
    let smax = dec.s.first().copied().unwrap_or(0.0);
    let mut delta = vec![0.0; pairs.len()];
    for (k, &sk) in dec.s.iter().enumerate() {
        if sk > 1e-12 * smax {
            let coef = dec.u.column(k).iter().zip(&res).map(|(a, b)| a * b).sum::<f64>() / sk;
            delta.iter_mut().zip(dec.v.column(k)).for_each(|(d, v)| *d += coef * v);
        }
    }
    let mut z = Matrix::zeros(r, r);
    for (&(p, q), (a, d)) in pairs.iter().zip(z0.iter().zip(&delta)) {
        z[(p, q)] = a + d;
        z[(q, p)] = a + d;
    }
    let ze = sym_eigen(&z);
    if ze.values[r - 1] < -1e-10 {
        return None;
    }
    let mut clean = Matrix::zeros(r, r);
    for i in 0..r {
        if ze.values[i] > 0.0 {
            let v = ze.vector(i);
            clean.add_scaled(ze.values[i], &outer(&v, &v));
        }
    }
    let tr = clean.trace();
    Some(clean.scaled(1.0 / tr))
}

fn barrier(grams: &[Matrix], opts: BroadcastOptions) -> Result<(Vec<f64>, Matrix, usize)> {
    let k = grams.len();
    let d = grams[0].rows();
    let n = k + 1;
    let mut w = vec![1.0 / k as f64; k];
    let mut lam = sym_eigen(&combine(grams, &w)).values[0] + 1.0;
    let mut t = 1.0;
    let mut iterations = 0;
    let mut best_gap = f64::INFINITY;
    let mut best: Option<(Vec<f64>, Matrix)> = None;

    loop {
        // Centering by equality-constrained Newton steps.
        for _ in 0..MAX_CENTERING_STEPS {
            let y = spd_inverse(&slack(grams, lam, &w))
                .ok_or_else(|| Error::input("barrier iterate left the domain"))?;
            let yg: Vec<Matrix> = grams.iter().map(|g| y.matmul(g)).collect();
            let yy = y.matmul(&y);

            let mut grad = vec![0.0; n];
            grad[0] = t - y.trace();
            for i in 0..k {
                grad[1 + i] = yg[i].trace() - 1.0 / w[i];
            }
            let mut kkt = Matrix::zeros(n + 1, n + 1);
            kkt[(0, 0)] = y.frobenius_inner(&y);
            for i in 0..k {
                let c = -yy.frobenius_inner(&grams[i]);
                kkt[(0, 1 + i)] = c;
                kkt[(1 + i, 0)] = c;
                for j in i..k {
                    let mut v = trace_of_product(&yg[i], &yg[j]);
                    if i == j {
                        v += 1.0 / (w[i] * w[i]);
                    }
                    kkt[(1 + i, 1 + j)] = v;
                    kkt[(1 + j, 1 + i)] = v;
                }
                kkt[(1 + i, n)] = 1.0;
                kkt[(n, 1 + i)] = 1.0;
            }
            let mut rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
            rhs.push(0.0);
            let step = match solve(&kkt, &rhs) {
                Some(s) => s,
                None => break,
            };
            let dx = &step[..n];
            let slope: f64 = grad.iter().zip(dx).map(|(g, s)| g * s).sum();
            if -slope / 2.0 <= 1e-12 {
                break;
            }

            let f0 = potential(grams, t, lam, &w).expect("current iterate is feasible");
            let mut s = 1.0;
            let mut moved = false;
            while s > 1e-16 {
                let lam_n = lam + s * dx[0];
                let w_n: Vec<f64> = w.iter().zip(&dx[1..]).map(|(a, b)| a + s * b).collect();
                if let Some(f) = potential(grams, t, lam_n, &w_n) {
                    if f <= f0 + 0.25 * s * slope {
                        lam = lam_n;
                        w = w_n;
                        moved = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            iterations += 1;
            if iterations >= opts.max_iterations {
                return Err(Error::Budget {
                    iterations,
                    best_gap,
                });
            }
            if !moved {
                break;
            }
        }

        let y = spd_inverse(&slack(grams, lam, &w))
            .ok_or_else(|| Error::input("barrier iterate left the domain"))?;
        let central = y.scaled(1.0 / y.trace());
        let mut candidates = vec![central.clone()];
        candidates.extend(purify(grams, &w, &central));
        for m in candidates {
            let (primal, dual) = primal_dual(grams, &w, &m);
            let gap = dual - primal;
            if gap < best_gap {
                best_gap = gap;
                best = Some((normalize(&w), m));
            }
        }
        if best_gap <= opts.gap_tolerance {
            break;
        }
        if (d + k) as f64 / t < 1e-14 {
            if best_gap <= opts.accept_gap {
                break;
            }
            return Err(Error::Budget {
                iterations,
                best_gap,
            });
        }
        t *= 10.0;
    }
    let (w, m) = best.expect("loop exits with a recorded round");
    Ok((w, m, iterations))
}

fn trace_of_product(a: &Matrix, b: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += a[(i, j)] * b[(j, i)];
        }
    }
    s
}

/// Lowers the rank of an optimal `M` without changing `tr M` or any
/// `tr(G̃ᵢ M)`: while `r(r+1)/2 > K + 1`, some symmetric `Δ ≠ 0` keeps all
/// `K + 1` traces of `R(I + αΔ)Rᵀ` fixed, and `α` is pushed until an
/// eigenvalue of `I + αΔ` hits zero. Ends at rank `r` with
/// `r(r+1)/2 ≤ K + 1`, hence `r ≤ K`.
pub(crate) fn reduce_rank(m: &Matrix, grams: &[Matrix]) -> Matrix {
    let k = grams.len();
    let mut m = m.clone();
    for _ in 0..m.rows() {
        let eig = sym_eigen(&m);
        let kept: Vec<usize> = (0..eig.values.len())
            .filter(|&i| eig.values[i] > RANK_TOL)
            .collect();
        let r = kept.len();
        if r * (r + 1) / 2 <= k + 1 {
            break;
        }
        let cols: Vec<Vec<f64>> = kept
            .iter()
            .map(|&i| eig.vector(i).iter().map(|x| x * eig.values[i].sqrt()).collect())
            .collect();
        let rmat = Matrix::from_columns(&cols).expect("nonempty factor");
        let rt = rmat.transpose();

        let pairs: Vec<(usize, usize)> = (0..r).flat_map(|p| (p..r).map(move |q| (p, q))).collect();
        let mut targets: Vec<Matrix> = grams.iter().map(|g| rt.matmul(g).matmul(&rmat)).collect();
        targets.push(rt.matmul(&rmat));
        let c = Matrix::from_fn(targets.len(), pairs.len(), |row, col| {
            let (p, q) = pairs[col];
            if p == q {
                targets[row][(p, p)]
            } else {
                targets[row][(p, q)] + targets[row][(q, p)]
            }
        });
        let dec = svd(&c);
        let smax = dec.s.first().copied().unwrap_or(0.0);
        let rowspace: Vec<Vec<f64>> = (0..dec.s.len())
            .filter(|&i| dec.s[i] > 1e-12 * smax.max(1e-300))
            .map(|i| dec.v.column(i))
            .collect();
        let null = orthonormal_complement(&rowspace, pairs.len());
        if null.cols() == 0 {
            break;
        }
        let coeffs = null.column(0);
        let mut delta = Matrix::zeros(r, r);
        for (&(p, q), &c) in pairs.iter().zip(&coeffs) {
            delta[(p, q)] = c;
            delta[(q, p)] = c;
        }
        let de = sym_eigen(&delta);
        let (top, bottom) = (de.values[0], de.values[r - 1]);
        let alpha = if top > 0.0 { -1.0 / top } else { -1.0 / bottom };
        let core = Matrix::identity(r).add(&delta.scaled(alpha));
        let next = rmat.matmul(&core).matmul(&rt).symmetrized();
        // Drop the annihilated direction exactly and restore unit trace.
        let ne = sym_eigen(&next);
        let mut clean = Matrix::zeros(m.rows(), m.rows());
        for i in 0..ne.values.len() {
            if ne.values[i] > RANK_TOL {
                let v = ne.vector(i);
                clean.add_scaled(ne.values[i], &outer(&v, &v));
            }
        }
        let tr = clean.trace();
        m = clean.scaled(1.0 / tr);
    }
    m
}

fn finish(sys: &ReducedSystems, weights: Vec<f64>, m_reduced: Matrix, iterations: usize) -> Result<BroadcastSolution> {
    let (value, dual_value) = primal_dual(&sys.grams, &weights, &m_reduced);
    let receiver_values = sys.grams.iter().map(|g| g.frobenius_inner(&m_reduced)).collect();
    let rank = sym_eigen(&m_reduced)
        .values
        .iter()
        .filter(|&&v| v > RANK_TOL)
        .count();
    let gram = sys.lift_gram(&m_reduced);
    // Extracted in v₀⊥ coordinates so every direction is orthogonal to v₀
    // to working precision.
    let reduced = PerturbationEnsemble::from_gram(&m_reduced, 1.0)?;
    let directions = reduced.directions.iter().map(|d| sys.lift(d)).collect();
    let ensemble = PerturbationEnsemble::new(reduced.u_law, directions, 1.0)?;
    Ok(BroadcastSolution {
        value,
        dual_value,
        gap: dual_value - value,
        dual_weights: weights,
        gram,
        receiver_values,
        ensemble,
        rank,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_dtm, strong_dpi_coefficient, ChannelMatrix};
    use crate::prob::Distribution;

    fn windmill(delta: f64) -> Vec<Dtm> {
        (0..3)
            .map(|i| build_dtm(&ChannelMatrix::windmill(delta, i).unwrap(), &Distribution::uniform(3)).unwrap())
            .collect()
    }

    #[test]
    fn windmill_value_and_weights() {
        let s = solve_broadcast(&windmill(0.1)).unwrap();
        let sigma2 = 2.0 / 3.0 * 0.8 * 0.8;
        assert!((s.value - 0.5 * sigma2).abs() < 1e-8, "{}", s.value);
        assert!(s.gap <= 1e-7 && s.gap >= -1e-12);
        assert!(s.dual_weights.iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-3));
        assert!(s.rank <= 3);
        let v0 = Distribution::uniform(3).sqrt();
        assert!(s.ensemble.residuals(&v0).worst() < 1e-9);
        assert!(s.gram.matvec(&v0).iter().all(|x| x.abs() < 1e-9));
        assert!((s.gram.trace() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_receiver_counts() {
        let w = ChannelMatrix::nested_ternary(0.2, 0.1).unwrap();
        let d = build_dtm(&w, &Distribution::new(vec![0.5, 0.25, 0.25]).unwrap()).unwrap();
        let one = solve_broadcast(std::slice::from_ref(&d)).unwrap();
        assert!((one.value - strong_dpi_coefficient(&d)).abs() < 1e-12);
        let two = solve_broadcast(&[d.clone(), d.clone()]).unwrap();
        assert!((two.value - 0.16).abs() < 1e-8);
        assert!(two.rank <= 2);
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let w = ChannelMatrix::bsc(0.1).unwrap();
        let a = build_dtm(&w, &Distribution::uniform(2)).unwrap();
        let b = build_dtm(&w, &Distribution::new(vec![0.3, 0.7]).unwrap()).unwrap();
        assert!(matches!(solve_broadcast(&[a, b]), Err(Error::Input(_))));
    }

    #[test]
    fn rank_reduction_preserves_traces() {
        // Identical receivers with a three-fold tie: the barrier returns a
        // full-rank M, which must be cut to rank ≤ K.
        let d = build_dtm(&ChannelMatrix::identity(4), &Distribution::uniform(4)).unwrap();
        let s = solve_broadcast(&[d.clone(), d]).unwrap();
        assert!((s.value - 1.0).abs() < 1e-8);
        assert!(s.rank <= 2, "rank {}", s.rank);
    }
}
