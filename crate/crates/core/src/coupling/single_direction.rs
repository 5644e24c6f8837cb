//! Broadcast coupling restricted to a binary `U`: one antipodal pair `±ψ`,
//!
//! ```text
//! λ_B = max { min_i ‖Bᵢ ψ‖² : ‖ψ‖ = 1, ψ ⊥ v₀ }.
//! ```
//!
//! The search is exact on a line or circle, a certified angular grid on the
//! 2-sphere, and a seeded multi-start beyond that. With two receivers the
//! optimum of the full problem is also converted into a single direction,
//! since two quadratic forms on a plane trace an ellipse whose interior is
//! dominated by its boundary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::broadcast::{reduce_rank, solve_reduced, BroadcastOptions};
use super::ensemble::RANK_TOL;
use super::ReducedSystems;
use crate::channel::Dtm;
use crate::error::{Error, Result};
use crate::linalg::{dot, least_squares, normalized, sym_eigen, Matrix};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SearchMethod {
    /// One receiver: the top eigenvector.
    Eigen,
    /// `v₀⊥` is one-dimensional.
    Line,
    /// Exact enumeration of envelope breakpoints on the circle.
    Circle,
    /// Angular grid on the 2-sphere, doubled until the value settles.
    SphereGrid { resolution: usize },
    /// Seeded random starts with local polishing.
    MultiStart { starts: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingleDirectionOptions {
    pub seed: u64,
    /// Random starts per dimension of `v₀⊥` for the multi-start search.
    pub starts_per_dim: usize,
    pub initial_resolution: usize,
    pub max_resolution: usize,
    /// Required agreement between a grid and its 2× refinement.
    pub certificate_tol: f64,
}

impl Default for SingleDirectionOptions {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            starts_per_dim: 64,
            initial_resolution: 32,
            max_resolution: 1024,
            certificate_tol: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleDirectionSolution {
    pub lambda_b: f64,
    /// Unit weighted direction in the full input space, orthogonal to `v₀`.
    pub psi: Vec<f64>,
    pub receiver_values: Vec<f64>,
    pub method: SearchMethod,
    /// Change of the value under the last 2× grid refinement; zero for exact
    /// methods.
    pub refinement_delta: f64,
    /// Whether the two-receiver conversion of the full optimum won.
    pub from_full_optimum: bool,
}

pub fn solve_broadcast_single_direction(dtms: &[Dtm]) -> Result<SingleDirectionSolution> {
    solve_broadcast_single_direction_with(dtms, SingleDirectionOptions::default())
}

pub fn solve_broadcast_single_direction_with(
    dtms: &[Dtm],
    opts: SingleDirectionOptions,
) -> Result<SingleDirectionSolution> {
    let sys = ReducedSystems::new(dtms)?;
    let d = sys.dim();
    let (mut phi, method, delta) = if sys.grams.len() == 1 {
        (sym_eigen(&sys.grams[0]).vector(0), SearchMethod::Eigen, 0.0)
    } else {
        match d {
            1 => (vec![1.0], SearchMethod::Line, 0.0),
            2 => (circle(&sys), SearchMethod::Circle, 0.0),
            3 => sphere(&sys, &opts)?,
            _ => {
                let (phi, starts) = multi_start(&sys, &opts);
                (phi, SearchMethod::MultiStart { starts }, 0.0)
            }
        }
    };
    let mut from_full = false;
    if sys.grams.len() == 2 && d >= 2 {
        let merged = merge_two_receivers(&sys)?;
        if sys.min_value(&merged) > sys.min_value(&phi) {
            phi = merged;
            from_full = true;
        }
    }
    let phi = normalized(&phi);
    Ok(SingleDirectionSolution {
        lambda_b: sys.min_value(&phi),
        psi: sys.lift(&phi),
        receiver_values: sys.values(&phi),
        method,
        refinement_delta: delta,
        from_full_optimum: from_full,
    })
}

/// `(a, b, c)` with `φ(θ)ᵀ G φ(θ) = a + b cos 2θ + c sin 2θ` on the plane
/// spanned by orthonormal `e1, e2`.
fn sinusoid(g: &Matrix, e1: &[f64], e2: &[f64]) -> (f64, f64, f64) {
    let g11 = g.quadratic_form(e1);
    let g22 = g.quadratic_form(e2);
    let g12 = dot(e1, &g.matvec(e2));
    (0.5 * (g11 + g22), 0.5 * (g11 - g22), g12)
}

fn circle(sys: &ReducedSystems) -> Vec<f64> {
    let coeffs: Vec<(f64, f64, f64)> = sys
        .grams
        .iter()
        .map(|g| sinusoid(g, &[1.0, 0.0], &[0.0, 1.0]))
        .collect();
    let mut angles = Vec::new();
    for &(_, b, c) in &coeffs {
        angles.push(c.atan2(b));
    }
    for i in 0..coeffs.len() {
        for j in (i + 1)..coeffs.len() {
            let (da, db, dc) = (
                coeffs[i].0 - coeffs[j].0,
                coeffs[i].1 - coeffs[j].1,
                coeffs[i].2 - coeffs[j].2,
            );
            let r = db.hypot(dc);
            if r < 1e-300 || da.abs() > r {
                continue;
            }
            let base = dc.atan2(db);
            let off = (-da / r).clamp(-1.0, 1.0).acos();
            angles.push(base + off);
            angles.push(base - off);
        }
    }
    let mut best = vec![1.0, 0.0];
    let mut best_val = f64::NEG_INFINITY;
    for u in angles {
        let phi = vec![(0.5 * u).cos(), (0.5 * u).sin()];
        let v = sys.min_value(&phi);
        if v > best_val {
            best_val = v;
            best = phi;
        }
    }
    best
}

fn sphere_point(a: usize, b: usize, n: usize) -> Vec<f64> {
    let theta = (a as f64 + 0.5) * std::f64::consts::FRAC_PI_2 / n as f64;
    let phi = b as f64 * std::f64::consts::PI / n as f64;
    vec![theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
}

/// Best value on an `n × 2n` hemisphere grid, after polishing the top cells.
fn sphere_value(sys: &ReducedSystems, n: usize) -> (f64, Vec<f64>) {
    let vals = par::map_indexed(2 * n * n, |idx| sys.min_value(&sphere_point(idx / (2 * n), idx % (2 * n), n)));
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]).then(i.cmp(&j)));
    let top: Vec<Vec<f64>> = order
        .iter()
        .take(8)
        .map(|&idx| sphere_point(idx / (2 * n), idx % (2 * n), n))
        .collect();
    let polished = par::map_slice(&top, |p| polish(sys, p));
    let mut best = (vals[order[0]], top[0].clone());
    for (phi, v) in polished {
        if v > best.0 {
            best = (v, phi);
        }
    }
    best
}

fn sphere(sys: &ReducedSystems, opts: &SingleDirectionOptions) -> Result<(Vec<f64>, SearchMethod, f64)> {
    let mut n = opts.initial_resolution.max(8);
    let (mut value, mut phi) = sphere_value(sys, n);
    let mut last_delta = f64::INFINITY;
    while 2 * n <= opts.max_resolution {
        let (v2, p2) = sphere_value(sys, 2 * n);
        let delta = (v2 - value).abs();
        last_delta = delta;
        let (best_v, best_p) = if v2 >= value { (v2, p2) } else { (value, phi.clone()) };
        if delta < opts.certificate_tol {
            return Ok((best_p, SearchMethod::SphereGrid { resolution: 2 * n }, delta));
        }
        value = best_v;
        phi = best_p;
        n *= 2;
    }
    Err(Error::Budget {
        iterations: n,
        best_gap: last_delta,
    })
}

fn multi_start(sys: &ReducedSystems, opts: &SingleDirectionOptions) -> (Vec<f64>, usize) {
    let d = sys.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts: Vec<Vec<f64>> = sys.grams.iter().map(|g| sym_eigen(g).vector(0)).collect();
    for _ in 0..opts.starts_per_dim * d {
        let v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        starts.push(normalized(&v));
    }
    let results = par::map_slice(&starts, |s| polish(sys, s));
    let mut best = results[0].clone();
    for r in &results[1..] {
        let better = r.1 > best.1
            || (r.1 == best.1 && r.0.iter().zip(&best.0).find(|(a, b)| a != b).is_some_and(|(a, b)| a > b));
        if better {
            best = r.clone();
        }
    }
    (best.0, starts.len())
}

/// Local refinement of a max-min point: Gauss–Newton on the stationarity
/// system of an active set `A`,
///
/// ```text
/// (Σ_{i∈A} αᵢ G̃ᵢ − tI) φ = 0,  ‖φ‖² = 1,  φᵀG̃ᵢφ = t (i ∈ A),  Σ αᵢ = 1,
/// ```
///
/// accepted only with `α ≥ 0` and no loss in the max-min value.
pub(crate) fn polish(sys: &ReducedSystems, start: &[f64]) -> (Vec<f64>, f64) {
    let start = normalized(start);
    let base = sys.min_value(&start);
    let mut best = (start.clone(), base);
    let vals = sys.values(&start);
    for tol in [1e-6, 1e-3, 1e-2, 5e-2] {
        let active: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] <= base + tol).collect();
        if let Some((phi, v)) = newton_active(sys, &start, &active) {
            if v > best.1 {
                best = (phi, v);
            }
        }
    }
    best
}

fn newton_active(sys: &ReducedSystems, start: &[f64], active: &[usize]) -> Option<(Vec<f64>, f64)> {
    let d = sys.dim();
    let a = active.len();
    let n = d + 1 + a;
    let mut phi = start.to_vec();
    let mut t = sys.min_value(&phi);
    let mut alpha = vec![1.0 / a as f64; a];
    for _ in 0..50 {
        let gphi: Vec<Vec<f64>> = active.iter().map(|&i| sys.grams[i].matvec(&phi)).collect();
        let rows = d + 1 + a + 1;
        let mut jac = Matrix::zeros(rows, n);
        let mut res = vec![0.0; rows];
        for r in 0..d {
            let mut s = -t * phi[r];
            for (k, &i) in active.iter().enumerate() {
                s += alpha[k] * gphi[k][r];
                for c in 0..d {
                    jac[(r, c)] += alpha[k] * sys.grams[i][(r, c)];
                }
                jac[(r, d + 1 + k)] = gphi[k][r];
            }
            jac[(r, r)] -= t;
            jac[(r, d)] = -phi[r];
            res[r] = s;
        }
        res[d] = dot(&phi, &phi) - 1.0;
        for c in 0..d {
            jac[(d, c)] = 2.0 * phi[c];
        }
        for k in 0..a {
            let row = d + 1 + k;
            res[row] = dot(&phi, &gphi[k]) - t;
            for c in 0..d {
                jac[(row, c)] = 2.0 * gphi[k][c];
            }
            jac[(row, d)] = -1.0;
        }
        let last = rows - 1;
        res[last] = alpha.iter().sum::<f64>() - 1.0;
        for k in 0..a {
            jac[(last, d + 1 + k)] = 1.0;
        }
        if res.iter().all(|r| r.abs() < 1e-15) {
            break;
        }
        let step = least_squares(&jac, &res.iter().map(|r| -r).collect::<Vec<_>>())?;
        for c in 0..d {
            phi[c] += step[c];
        }
        t += step[d];
        for k in 0..a {
            alpha[k] += step[d + 1 + k];
        }
        if step.iter().map(|s| s * s).sum::<f64>().sqrt() < 1e-15 {
            break;
        }
    }
    if alpha.iter().any(|&x| x < -1e-10 || !x.is_finite()) || phi.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let phi = normalized(&phi);
    let v = sys.min_value(&phi);
    v.is_finite().then_some((phi, v))
}

/// Two receivers: collapse the optimal Gram matrix into one direction that
/// weakly dominates it on both receivers.
fn merge_two_receivers(sys: &ReducedSystems) -> Result<Vec<f64>> {
    let (_, m, _) = solve_reduced(&sys.grams, BroadcastOptions::default())?;
    let m = reduce_rank(&m, &sys.grams);
    let eig = sym_eigen(&m);
    let mut comps: Vec<(f64, Vec<f64>)> = (0..eig.values.len())
        .filter(|&i| eig.values[i] > RANK_TOL)
        .map(|i| (eig.values[i], eig.vector(i)))
        .collect();
    let (g1, g2) = (&sys.grams[0], &sys.grams[1]);
    while comps.len() > 1 {
        let (m2, e2) = comps.remove(1);
        let (m1, e1) = comps.remove(0);
        let total = m1 + m2;
        let p1 = (m1 * g1.quadratic_form(&e1) + m2 * g1.quadratic_form(&e2)) / total;
        let p2 = (m1 * g2.quadratic_form(&e1) + m2 * g2.quadratic_form(&e2)) / total;
        let diff = g1.sub(g2);
        let (a, b, c) = sinusoid(&diff, &e1, &e2);
        let r = b.hypot(c);
        let at = |u: f64| -> Vec<f64> {
            let th = 0.5 * u;
            e1.iter().zip(&e2).map(|(x, y)| th.cos() * x + th.sin() * y).collect()
        };
        let candidates: Vec<f64> = if r < 1e-300 {
            let (_, b1, c1) = sinusoid(g1, &e1, &e2);
            vec![c1.atan2(b1)]
        } else {
            let beta = c.atan2(b);
            let off = ((p1 - p2 - a) / r).clamp(-1.0, 1.0).acos();
            vec![beta + off, beta - off]
        };
        let psi = candidates
            .into_iter()
            .map(at)
            .max_by(|x, y| g1.quadratic_form(x).total_cmp(&g1.quadratic_form(y)))
            .expect("at least one candidate");
        comps.insert(0, (total, psi));
    }
    Ok(comps.remove(0).1)
}
