//! Brute-force and iterative references. None of these go through the DTM
//! or its SVD; they evaluate exact mutual informations and conditional
//! expectations directly, so agreement with the spectral solvers is
//! meaningful.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelMatrix, Dtm};
use crate::coupling::MAX_RECEIVERS;
use crate::error::{Error, Result};
use crate::linalg::{normalized, orthonormal_complement, Matrix};
use crate::par;
use crate::prob::{kl_raw, Distribution};

/// Smallest accepted angular resolution.
pub const MIN_RESOLUTION: usize = 8;
/// Default `ε` for local oracles.
pub const DEFAULT_EPSILON: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchBudget {
    /// Points per angular dimension.
    pub grid_resolution: usize,
    pub random_restarts: usize,
    pub rng_seed: u64,
}

impl SearchBudget {
    pub fn new(grid_resolution: usize, random_restarts: usize, rng_seed: u64) -> Result<Self> {
        let b = Self {
            grid_resolution,
            random_restarts,
            rng_seed,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_resolution < MIN_RESOLUTION {
            return Err(Error::Resolution {
                resolution: self.grid_resolution,
                minimum: MIN_RESOLUTION,
            });
        }
        Ok(())
    }
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            grid_resolution: 180,
            random_restarts: 0,
            rng_seed: 0,
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let n2: f64 = v.iter().map(|x| x * x).sum();
        if n2 > 1e-6 && n2 <= 1.0 {
            return normalized(&v);
        }
    }
}

/// Unit vectors covering a half-sphere of `R^d`, `d ≤ 3`, with `n` points
/// per angular dimension.
fn half_sphere_grid(d: usize, n: usize) -> Vec<Vec<f64>> {
    use std::f64::consts::{FRAC_PI_2, PI};
    match d {
        1 => vec![vec![1.0]],
        2 => (0..n)
            .map(|k| {
                let t = k as f64 * PI / n as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => {
            let mut out = Vec::with_capacity(2 * n * n);
            for a in 0..n {
                let theta = (a as f64 + 0.5) * FRAC_PI_2 / n as f64;
                for b in 0..2 * n {
                    let phi = b as f64 * PI / n as f64;
                    out.push(vec![theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]);
                }
            }
            out
        }
    }
}

/// `Σ_u P_U(u) D(K_u ‖ Σ P_U K)` over raw probability vectors.
fn mixture_information(weights: &[f64], kernels: &[Vec<f64>]) -> f64 {
    let n = kernels[0].len();
    let mut mix = vec![0.0; n];
    for (w, k) in weights.iter().zip(kernels) {
        mix.iter_mut().zip(k).for_each(|(m, p)| *m += w * p);
    }
    weights
        .iter()
        .zip(kernels)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, k)| w * kl_raw(k, &mix))
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct P2pOracle {
    /// Best `I(U;Y) / I(U;X)` found.
    pub best_ratio: f64,
    /// Weighted unit direction achieving it.
    pub best_direction: Vec<f64>,
    pub evaluated: usize,
}

/// Binary-symmetric local ensembles `P_X ± ε √P_X ⊙ ψ` over an angular grid
/// of unit `ψ ⊥ √P_X` (plus seeded random directions), scored by the exact
/// ratio `I(U;Y) / I(U;X)`.
pub fn brute_p2p(w: &ChannelMatrix, px: &Distribution, epsilon: f64, budget: SearchBudget) -> Result<P2pOracle> {
    budget.validate()?;
    Error::check_len(w.input_size(), px.alphabet_size())?;
    px.require_positive()?;
    let n = px.alphabet_size();
    if !(2..=4).contains(&n) {
        return Err(Error::input("brute_p2p supports input alphabets of 2 to 4 symbols"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::input("epsilon must be positive"));
    }
    let sqrt_p = px.sqrt();
    let q = orthonormal_complement(std::slice::from_ref(&sqrt_p), n);
    let d = q.cols();
    let mut dirs = half_sphere_grid(d, budget.grid_resolution);
    let mut rng = ChaCha8Rng::seed_from_u64(budget.rng_seed);
    for _ in 0..budget.random_restarts {
        dirs.push(random_unit(&mut rng, d));
    }
    let wm = w.matrix();
    let psis: Vec<Vec<f64>> = dirs.iter().map(|phi| q.matvec(phi)).collect();
    let ratios = par::map_slice(&psis, |psi| {
        let mut kernels = Vec::with_capacity(2);
        for s in [1.0, -1.0] {
            let k: Vec<f64> = px
                .probs()
                .iter()
                .zip(&sqrt_p)
                .zip(psi)
                .map(|((p, r), v)| p + s * epsilon * r * v)
                .collect();
            if k.iter().any(|&v| v < 0.0) {
                return f64::NAN;
            }
            kernels.push(k);
        }
        let ix = mixture_information(&[0.5, 0.5], &kernels);
        let outs: Vec<Vec<f64>> = kernels.iter().map(|k| wm.matvec(k)).collect();
        let iy = mixture_information(&[0.5, 0.5], &outs);
        if ix > 0.0 {
            iy / ix
        } else {
            f64::NAN
        }
    });
    let best = par::argmax_lowest(&ratios).ok_or_else(|| Error::input("epsilon too large: no admissible direction"))?;
    Ok(P2pOracle {
        best_ratio: ratios[best],
        best_direction: psis[best].clone(),
        evaluated: ratios.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AceResult {
    pub rho: f64,
    /// Zero-mean, unit-variance maximizer on `X`.
    pub f: Vec<f64>,
    /// Zero-mean, unit-variance maximizer on `Y`.
    pub g: Vec<f64>,
    pub iterations: usize,
}

/// Convergence threshold on the relative change of the estimate.
const ACE_TOL: f64 = 1e-10;
const ACE_BUDGET: usize = 100_000;

/// Alternating conditional expectations on a joint law `P_XY` (rows `x`,
/// columns `y`): iterate `f ← E[E[f(X)|Y] | X]` on zero-mean functions and
/// read `ρ²` off the Rayleigh quotient.
pub fn ace_correlation(joint: &Matrix) -> Result<AceResult> {
    let (nx, ny) = (joint.rows(), joint.cols());
    let px: Vec<f64> = (0..nx).map(|x| joint.row(x).iter().sum()).collect();
    let py: Vec<f64> = (0..ny).map(|y| (0..nx).map(|x| joint[(x, y)]).sum()).collect();
    if let Some(index) = px.iter().position(|&p| !(p > 0.0)) {
        return Err(Error::SingularWeight { index });
    }
    if let Some(index) = py.iter().position(|&p| !(p > 0.0)) {
        return Err(Error::DegenerateOutput { index });
    }
    let mean = |f: &[f64], p: &[f64]| f.iter().zip(p).map(|(a, b)| a * b).sum::<f64>();
    let center = |f: &mut Vec<f64>, p: &[f64]| {
        let m = mean(f, p);
        f.iter_mut().for_each(|v| *v -= m);
    };
    let var = |f: &[f64], p: &[f64]| f.iter().zip(p).map(|(a, b)| a * a * b).sum::<f64>();
    let cond_y = |f: &[f64]| -> Vec<f64> {
        (0..ny)
            .map(|y| (0..nx).map(|x| joint[(x, y)] * f[x]).sum::<f64>() / py[y])
            .collect()
    };
    let cond_x = |g: &[f64]| -> Vec<f64> {
        (0..nx)
            .map(|x| (0..ny).map(|y| joint[(x, y)] * g[y]).sum::<f64>() / px[x])
            .collect()
    };

    let mut f: Vec<f64> = (0..nx)
        .map(|x| (1.0 + 2.3 * x as f64).sin() + 0.5 * (0.7 * (x * x) as f64).cos())
        .collect();
    center(&mut f, &px);
    let zero = || AceResult {
        rho: 0.0,
        f: vec![0.0; nx],
        g: vec![0.0; ny],
        iterations: 0,
    };
    let v = var(&f, &px);
    if !(v > 1e-300) {
        return Ok(zero());
    }
    f.iter_mut().for_each(|a| *a /= v.sqrt());

    let mut estimate = f64::NAN;
    for it in 1..=ACE_BUDGET {
        let mut g = cond_y(&f);
        center(&mut g, &py);
        let mut next = cond_x(&g);
        center(&mut next, &px);
        // ⟨f, T f⟩ with ‖f‖ = 1.
        let rq = next.iter().zip(&f).zip(&px).map(|((a, b), p)| a * b * p).sum::<f64>();
        let nv = var(&next, &px);
        if !(nv > 1e-280) {
            return Ok(AceResult { iterations: it, ..zero() });
        }
        let converged = estimate.is_finite() && (rq - estimate).abs() <= ACE_TOL * rq.abs().max(1e-300);
        estimate = rq;
        f = next.iter().map(|a| a / nv.sqrt()).collect();
        if converged {
            let mut g = cond_y(&f);
            center(&mut g, &py);
            let gv = var(&g, &py).sqrt();
            let g = if gv > 0.0 { g.iter().map(|a| a / gv).collect() } else { g };
            return Ok(AceResult {
                rho: estimate.max(0.0).sqrt(),
                f,
                g,
                iterations: it,
            });
        }
    }
    Err(Error::Budget {
        iterations: ACE_BUDGET,
        best_gap: f64::NAN,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SRatioResult {
    /// Best `I(U;Y) / I(U;X)` found; a lower bound on the supremum.
    pub lower_bound: f64,
    /// `P_U(0)`.
    pub weight: f64,
    pub kernels: [Vec<f64>; 2],
    pub evaluated: usize,
}

/// Searches binary-`U` families with arbitrary (non-local) kernels whose
/// mixture is `P_X`: one kernel on a simplex grid, the mixing weight on a
/// grid, the other kernel solved from the mixture constraint. Local
/// antipodal pairs at shrinking radii over an angular grid are added, so the
/// local optimum lies in the search closure.
pub fn s_ratio_search(w: &ChannelMatrix, px: &Distribution, budget: SearchBudget) -> Result<SRatioResult> {
    budget.validate()?;
    Error::check_len(w.input_size(), px.alphabet_size())?;
    px.require_positive()?;
    let n = px.alphabet_size();
    if !(2..=3).contains(&n) {
        return Err(Error::input("s_ratio_search supports input alphabets of 2 or 3 symbols"));
    }
    let res = budget.grid_resolution;
    let p = px.probs();
    let mut cands: Vec<(f64, Vec<f64>)> = Vec::new();

    // Simplex grid for the first kernel.
    let grid: Vec<Vec<f64>> = if n == 2 {
        (0..=res).map(|i| vec![i as f64 / res as f64, 1.0 - i as f64 / res as f64]).collect()
    } else {
        let mut g = Vec::new();
        for i in 0..=res {
            for j in 0..=(res - i) {
                let (a, b) = (i as f64 / res as f64, j as f64 / res as f64);
                g.push(vec![a, b, (1.0 - a - b).max(0.0)]);
            }
        }
        g
    };
    for k0 in &grid {
        for s in 1..res {
            cands.push((s as f64 / res as f64, k0.clone()));
        }
    }
    // Local antipodal pairs.
    let sqrt_p = px.sqrt();
    let q = orthonormal_complement(std::slice::from_ref(&sqrt_p), n);
    let mut dirs = half_sphere_grid(q.cols(), res);
    let mut rng = ChaCha8Rng::seed_from_u64(budget.rng_seed);
    for _ in 0..budget.random_restarts {
        dirs.push(random_unit(&mut rng, q.cols()));
    }
    for phi in &dirs {
        let psi = q.matvec(phi);
        for r in [1e-1, 3e-2, 1e-2, 3e-3, 1e-3] {
            let k0: Vec<f64> = p.iter().zip(&sqrt_p).zip(&psi).map(|((a, s), v)| a + r * s * v).collect();
            cands.push((0.5, k0));
        }
    }

    let wm = w.matrix();
    let scores = par::map_slice(&cands, |(a, k0)| {
        let k1: Vec<f64> = p.iter().zip(k0).map(|(pp, k)| (pp - a * k) / (1.0 - a)).collect();
        if k0.iter().chain(&k1).any(|&v| v < -1e-15) {
            return f64::NAN;
        }
        let k1: Vec<f64> = k1.into_iter().map(|v| v.max(0.0)).collect();
        let kernels = [k0.clone(), k1];
        let weights = [*a, 1.0 - a];
        let ix = mixture_information(&weights, &kernels);
        if !(ix > 1e-12) {
            return f64::NAN;
        }
        let outs: Vec<Vec<f64>> = kernels.iter().map(|k| wm.matvec(k)).collect();
        mixture_information(&weights, &outs) / ix
    });
    let best = par::argmax_lowest(&scores).ok_or_else(|| Error::input("no admissible family on the grid"))?;
    let (a, k0) = &cands[best];
    let k1 = p.iter().zip(k0).map(|(pp, k)| ((pp - a * k) / (1.0 - a)).max(0.0)).collect();
    Ok(SRatioResult {
        lower_bound: scores[best],
        weight: *a,
        kernels: [k0.clone(), k1],
        evaluated: scores.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BruteBroadcast {
    pub lambda_estimate: f64,
    /// Weighted unit directions of the best antipodal pairs.
    pub directions: Vec<Vec<f64>>,
    /// Probability of each pair (split evenly between `±ψ`).
    pub weights: Vec<f64>,
    pub evaluated: usize,
}

/// Denominator of the weight grid on the simplex.
const WEIGHT_GRID: usize = 12;

/// Compositions of `total` into `parts` positive integers.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 1..=(total - parts + 1) {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Exhaustive search over ensembles of up to `K` antipodal pairs on an
/// angular grid of `v₀⊥` (dimension at most 2), with pair weights on the
/// simplex grid of denominator 12.
pub fn brute_broadcast(dtms: &[Dtm], budget: SearchBudget) -> Result<BruteBroadcast> {
    budget.validate()?;
    let first = dtms.first().ok_or_else(|| Error::input("at least one receiver is required"))?;
    if dtms.len() > MAX_RECEIVERS {
        return Err(Error::input("too many receivers"));
    }
    let n = first.input.alphabet_size();
    for d in &dtms[1..] {
        if d.input.alphabet_size() != n || d.input.max_abs_diff(&first.input) > 1e-12 {
            return Err(Error::input("receivers must share the input distribution"));
        }
    }
    if !(2..=3).contains(&n) {
        return Err(Error::input("brute_broadcast needs v0-perp of dimension 1 or 2"));
    }
    let q = orthonormal_complement(&[first.v0()], n);
    let dirs: Vec<Vec<f64>> = half_sphere_grid(q.cols(), budget.grid_resolution)
        .iter()
        .map(|phi| q.matvec(phi))
        .collect();
    let m = dirs.len();
    // energy[k][i] = ‖Bᵢ ψ_k‖².
    let energy: Vec<Vec<f64>> = dirs
        .iter()
        .map(|psi| dtms.iter().map(|d| d.output_energy(psi)).collect())
        .collect();
    let k = dtms.len();
    let max_pairs = k.min(m);
    let comps: Vec<Vec<Vec<usize>>> = (1..=max_pairs)
        .map(|parts| compositions(WEIGHT_GRID.max(parts), parts))
        .collect();

    let per_first = par::map_indexed(m, |i0| {
        let mut best = (f64::NEG_INFINITY, vec![i0], vec![1.0]);
        let mut count = 0usize;
        let mut idx = vec![i0];
        let mut acc = vec![0.0; k];
        search_combos(&energy, &comps, max_pairs, &mut idx, &mut acc, &mut best, &mut count);
        (best, count)
    });
    let values: Vec<f64> = per_first.iter().map(|(b, _)| b.0).collect();
    let top = par::argmax_lowest(&values).expect("nonempty grid");
    let evaluated = per_first.iter().map(|(_, c)| c).sum();
    let (value, idx, weights) = per_first[top].0.clone();
    Ok(BruteBroadcast {
        lambda_estimate: value,
        directions: idx.iter().map(|&i| dirs[i].clone()).collect(),
        weights,
        evaluated,
    })
}

type Best = (f64, Vec<usize>, Vec<f64>);

/// Extends the strictly increasing index list `idx` and scores every
/// weight composition at each length.
fn search_combos(
    energy: &[Vec<f64>],
    comps: &[Vec<Vec<usize>>],
    max_pairs: usize,
    idx: &mut Vec<usize>,
    scratch: &mut [f64],
    best: &mut Best,
    count: &mut usize,
) {
    let parts = idx.len();
    let denom = comps[parts - 1][0].iter().sum::<usize>() as f64;
    for comp in &comps[parts - 1] {
        scratch.iter_mut().for_each(|v| *v = 0.0);
        for (&c, &i) in comp.iter().zip(idx.iter()) {
            let w = c as f64 / denom;
            scratch.iter_mut().zip(&energy[i]).for_each(|(s, e)| *s += w * e);
        }
        *count += 1;
        let v = scratch.iter().copied().fold(f64::INFINITY, f64::min);
        if v > best.0 {
            *best = (
                v,
                idx.clone(),
                comp.iter().map(|&c| c as f64 / denom).collect(),
            );
        }
    }
    if parts < max_pairs {
        let last = *idx.last().expect("nonempty");
        for next in (last + 1)..energy.len() {
            idx.push(next);
            search_combos(energy, comps, max_pairs, idx, scratch, best, count);
            idx.pop();
        }
    }
}

/// Random channel with entries bounded away from zero, for property suites.
pub fn random_channel<R: Rng + ?Sized>(rng: &mut R, inputs: usize, outputs: usize) -> ChannelMatrix {
    let mut m = Matrix::from_fn(outputs, inputs, |_, _| rng.random_range(0.05..1.0));
    for x in 0..inputs {
        let sum: f64 = (0..outputs).map(|y| m[(y, x)]).sum();
        for y in 0..outputs {
            m[(y, x)] /= sum;
        }
    }
    ChannelMatrix::from_trusted(m)
}

/// Random strictly positive distribution, for property suites.
pub fn random_distribution<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Distribution {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    Distribution::from_algebra(raw.into_iter().map(|v| v / sum).collect()).expect("positive weights")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_dtm, renyi_correlation};

    fn ex1() -> (ChannelMatrix, Distribution) {
        (
            ChannelMatrix::nested_ternary(0.2, 0.1).unwrap(),
            Distribution::new(vec![0.5, 0.25, 0.25]).unwrap(),
        )
    }

    #[test]
    fn budget_is_validated() {
        assert!(matches!(SearchBudget::new(4, 0, 0), Err(Error::Resolution { .. })));
    }

    #[test]
    fn brute_p2p_examples() {
        let (w, px) = ex1();
        let b = SearchBudget::new(720, 0, 1).unwrap();
        let r = brute_p2p(&w, &px, 1e-3, b).unwrap();
        assert!((r.best_ratio - 0.16).abs() < 1e-3, "{}", r.best_ratio);
        let id = brute_p2p(&ChannelMatrix::identity(3), &px, 1e-3, b).unwrap();
        assert!((id.best_ratio - 1.0).abs() < 1e-9);
        let bsc = brute_p2p(&ChannelMatrix::bsc(0.25).unwrap(), &Distribution::uniform(2), 1e-3, b).unwrap();
        assert!((bsc.best_ratio - 0.25).abs() < 1e-3);
    }

    #[test]
    fn ace_examples() {
        let joint = Matrix::from_rows(&[vec![0.12, 0.28], vec![0.18, 0.42]]).unwrap();
        assert!(ace_correlation(&joint).unwrap().rho < 1e-6);
        let joint = Matrix::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        assert!((ace_correlation(&joint).unwrap().rho - 1.0).abs() < 1e-12);
        let (w, px) = ex1();
        let joint = Matrix::from_fn(3, 3, |x, y| px.probs()[x] * w.matrix()[(y, x)]);
        let ace = ace_correlation(&joint).unwrap();
        let d = build_dtm(&w, &px).unwrap();
        assert!((ace.rho - renyi_correlation(&d).rho).abs() < 1e-8);
    }

    #[test]
    fn s_ratio_covers_local_optimum() {
        let (w, px) = ex1();
        let r = s_ratio_search(&w, &px, SearchBudget::new(48, 0, 0).unwrap()).unwrap();
        assert!(r.lower_bound >= 0.16 - 1e-3);
        let id = s_ratio_search(&ChannelMatrix::identity(3), &px, SearchBudget::new(16, 0, 0).unwrap()).unwrap();
        assert!((id.lower_bound - 1.0).abs() < 1e-9);
    }

    #[test]
    fn brute_broadcast_single_receiver() {
        let (w, px) = ex1();
        let d = build_dtm(&w, &px).unwrap();
        let r = brute_broadcast(std::slice::from_ref(&d), SearchBudget::new(180, 0, 0).unwrap()).unwrap();
        assert!((r.lambda_estimate - 0.16).abs() < 1e-3);
        let r = brute_broadcast(&[d.clone(), d], SearchBudget::new(90, 0, 0).unwrap()).unwrap();
        assert!((r.lambda_estimate - 0.16).abs() < 1e-3);
    }
}
