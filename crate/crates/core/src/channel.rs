//! Channels, divergence transition matrices and their singular systems.
//!
//! Channels are stored column-stochastic: `W[(y, x)] = P(y | x)`, so that
//! `P_Y = W · P_X` is a plain matrix–vector product. The divergence
//! transition matrix at input law `P_X` is
//!
//! ```text
//! B = diag(√P_Y)⁻¹ · W · diag(√P_X)
//! ```
//!
//! and maps weighted input perturbations to weighted output perturbations.
//! Its top singular triplet is always `(1, √P_X, √P_Y)`; the remaining
//! singular values are at most one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{complete_basis, dot, norm, sub, svd, Matrix};
use crate::prob::Distribution;

/// Column-sum tolerance for channel matrices.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Two singular values closer than this are treated as tied.
pub const TIE_TOL: f64 = 1e-10;
/// A singular value within this of one is a lossless direction.
pub const LOSSLESS_TOL: f64 = 1e-10;
/// Components smaller than this are skipped by the sign convention.
const SIGN_TOL: f64 = 1e-9;

/// Conditional law `P(y | x)` as a `|Y| × |X|` column-stochastic matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelMatrix {
    entries: Matrix,
}

impl ChannelMatrix {
    pub fn new(entries: Matrix) -> Result<Self> {
        Self::with_tolerance(entries, STOCHASTIC_TOL)
    }

    pub fn with_tolerance(entries: Matrix, tol: f64) -> Result<Self> {
        if entries.rows() == 0 || entries.cols() == 0 {
            return Err(Error::input("channel matrix has an empty dimension"));
        }
        for x in 0..entries.cols() {
            let mut sum = 0.0;
            for y in 0..entries.rows() {
                let value = entries[(y, x)];
                if !(0.0..=1.0).contains(&value) {
                    return Err(Error::OutOfRange { index: y, value });
                }
                sum += value;
            }
            if (sum - 1.0).abs() > tol {
                return Err(Error::NotStochastic { column: x, sum });
            }
        }
        Ok(Self { entries })
    }

    /// Row-major construction, `rows[y][x] = P(y | x)`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = Matrix::from_rows(rows).ok_or_else(|| Error::input("ragged channel rows"))?;
        Self::new(m)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: Matrix::identity(n),
        }
    }

    /// Binary symmetric channel with crossover `p`.
    pub fn bsc(p: f64) -> Result<Self> {
        Self::from_rows(&[vec![1.0 - p, p], vec![p, 1.0 - p]])
    }

    /// Deterministic channel `y = map[x]` onto `outputs` symbols.
    pub fn deterministic(map: &[usize], outputs: usize) -> Result<Self> {
        let mut m = Matrix::zeros(outputs, map.len());
        for (x, &y) in map.iter().enumerate() {
            if y >= outputs {
                return Err(Error::input(format!("output symbol {y} out of range")));
            }
            m[(y, x)] = 1.0;
        }
        Self::new(m)
    }

    /// Ternary channel built from two nested binary symmetric channels:
    /// `{1} vs {2,3}` with crossover `½ − η`, and `2 vs 3` with crossover
    /// `½ − γ`.
    pub fn nested_ternary(eta: f64, gamma: f64) -> Result<Self> {
        let a = 0.5 + eta;
        Self::from_rows(&[
            vec![0.5 + eta, 0.5 - eta, 0.5 - eta],
            vec![0.25 - 0.5 * eta, a * (0.5 + gamma), a * (0.5 - gamma)],
            vec![0.25 - 0.5 * eta, a * (0.5 - gamma), a * (0.5 + gamma)],
        ])
    }

    /// Receiver `index ∈ {0, 1, 2}` of the three-user ternary-input
    /// "windmill" broadcast channel with crossover `δ`. At the uniform input
    /// the three DTMs act as one projection rotated by `0`, `2π/3`, `4π/3`.
    pub fn windmill(delta: f64, index: usize) -> Result<Self> {
        let (h, a, b) = (0.5, 1.0 - delta, delta);
        let rows = match index {
            0 => [vec![h, a, b], vec![h, b, a]],
            1 => [vec![b, h, a], vec![a, h, b]],
            2 => [vec![a, b, h], vec![b, a, h]],
            _ => return Err(Error::input("windmill receiver index must be 0, 1 or 2")),
        };
        Self::from_rows(&rows)
    }

    /// Splits a joint law `P_XY` (rows indexed by `x`, columns by `y`) into
    /// the input marginal and the channel `P(y | x)`.
    pub fn from_joint(joint: &Matrix) -> Result<(Self, Distribution)> {
        let px: Vec<f64> = (0..joint.rows()).map(|x| joint.row(x).iter().sum()).collect();
        let px = Distribution::with_tolerance(px, 1e-10)?;
        px.require_positive()?;
        let w = Matrix::from_fn(joint.cols(), joint.rows(), |y, x| joint[(x, y)] / px.probs()[x]);
        Ok((Self::with_tolerance(w, 1e-10)?, px))
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix {
        &self.entries
    }

    #[inline]
    pub fn input_size(&self) -> usize {
        self.entries.cols()
    }

    #[inline]
    pub fn output_size(&self) -> usize {
        self.entries.rows()
    }

    /// Channel restricted to the input symbols in `support`, in order.
    pub fn restrict_inputs(&self, support: &[usize]) -> Result<Self> {
        if let Some(&bad) = support.iter().find(|&&x| x >= self.input_size()) {
            return Err(Error::input(format!("input symbol {bad} out of range")));
        }
        Ok(Self {
            entries: Matrix::from_fn(self.output_size(), support.len(), |y, k| {
                self.entries[(y, support[k])]
            }),
        })
    }

    /// Column `x`, the output law given input `x`.
    pub fn column(&self, x: usize) -> Vec<f64> {
        self.entries.column(x)
    }

    /// Trusted constructor for products of stochastic matrices.
    pub(crate) fn from_trusted(entries: Matrix) -> Self {
        Self { entries }
    }
}

/// `P_Y = W · P_X`.
pub fn output_distribution(w: &ChannelMatrix, px: &Distribution) -> Result<Distribution> {
    Error::check_len(w.input_size(), px.alphabet_size())?;
    Distribution::from_algebra(w.matrix().matvec(px.probs()))
}

/// Full singular system, `σ₀ ≥ σ₁ ≥ … ≥ σ_m` with `m = min(rows, cols) − 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub singular_values: Vec<f64>,
    pub right_vectors: Vec<Vec<f64>>,
    pub left_vectors: Vec<Vec<f64>>,
}

impl Spectrum {
    /// Singular system of an arbitrary matrix under the crate conventions:
    /// descending order, ties ordered lexicographically (descending) by right
    /// vector, and the first component above `1e-9` of every right vector
    /// positive.
    pub fn of(matrix: &Matrix) -> Self {
        Self::anchored(matrix, None)
    }

    /// Like [`Spectrum::of`], but when the top singular value is tied the top
    /// right vector is rotated inside the tied subspace to align with
    /// `anchor`.
    pub(crate) fn anchored(matrix: &Matrix, anchor: Option<&[f64]>) -> Self {
        let dec = svd(matrix);
        let mut values = dec.s.clone();
        let mut right = dec.v.columns();
        let mut left = dec.u.columns();

        let clusters = tie_clusters(&values);
        for (ci, range) in clusters.iter().enumerate() {
            if range.len() < 2 {
                continue;
            }
            let anchor_here = if ci == 0 { anchor } else { None };
            if let Some(a) = anchor_here {
                rotate_cluster_to_anchor(&mut right, &mut left, range.clone(), a);
            }
            for i in range.clone() {
                apply_sign(&mut right[i], &mut left[i]);
            }
            // Lexicographic order inside the cluster (the anchored head stays first).
            let start = if anchor_here.is_some() { range.start + 1 } else { range.start };
            let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = (start..range.end)
                .map(|i| (right[i].clone(), left[i].clone()))
                .collect();
            pairs.sort_by(|a, b| lex_desc(&a.0, &b.0));
            for (k, (r, l)) in pairs.into_iter().enumerate() {
                right[start + k] = r;
                left[start + k] = l;
            }
            // Tied values are reported equal to the cluster head.
            let head = values[range.start];
            for v in &mut values[range.clone()] {
                *v = head;
            }
        }
        for (r, l) in right.iter_mut().zip(left.iter_mut()) {
            apply_sign(r, l);
        }
        Self {
            singular_values: values,
            right_vectors: right,
            left_vectors: left,
        }
    }

    /// `σ_i`, or zero past the end of the spectrum.
    pub fn sigma(&self, i: usize) -> f64 {
        self.singular_values.get(i).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.singular_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.singular_values.is_empty()
    }

    /// Residuals of the singular-system invariants against `matrix`.
    pub fn residuals(&self, matrix: &Matrix) -> SpectrumResiduals {
        let mut pair: f64 = 0.0;
        let mut rec = Matrix::zeros(matrix.rows(), matrix.cols());
        for ((s, v), w) in self
            .singular_values
            .iter()
            .zip(&self.right_vectors)
            .zip(&self.left_vectors)
        {
            let bv = matrix.matvec(v);
            let btw = matrix.tr_matvec(w);
            let r1 = norm(&sub(&bv, &w.iter().map(|x| s * x).collect::<Vec<_>>()));
            let r2 = norm(&sub(&btw, &v.iter().map(|x| s * x).collect::<Vec<_>>()));
            pair = pair.max(r1).max(r2);
            for r in 0..matrix.rows() {
                for c in 0..matrix.cols() {
                    rec[(r, c)] += s * w[r] * v[c];
                }
            }
        }
        SpectrumResiduals {
            pair,
            right_orthonormality: orthonormality_error(&self.right_vectors),
            left_orthonormality: orthonormality_error(&self.left_vectors),
            reconstruction: rec.sub(matrix).frobenius_norm() / matrix.frobenius_norm().max(1e-300),
        }
    }
}

/// Worst-case residuals of a computed singular system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResiduals {
    /// `max_i max(‖B vᵢ − σᵢ wᵢ‖, ‖Bᵀ wᵢ − σᵢ vᵢ‖)`.
    pub pair: f64,
    pub right_orthonormality: f64,
    pub left_orthonormality: f64,
    /// `‖B − Σ σᵢ wᵢ vᵢᵀ‖_F / ‖B‖_F`.
    pub reconstruction: f64,
}

impl SpectrumResiduals {
    pub fn worst(&self) -> f64 {
        self.pair
            .max(self.right_orthonormality)
            .max(self.left_orthonormality)
            .max(self.reconstruction)
    }
}

fn orthonormality_error(vs: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, a) in vs.iter().enumerate() {
        for (j, b) in vs.iter().enumerate().skip(i) {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot(a, b) - target).abs());
        }
    }
    worst
}

fn tie_clusters(values: &[f64]) -> Vec<std::ops::Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[start] - values[i] > TIE_TOL {
            out.push(start..i);
            start = i;
        }
    }
    out
}

fn apply_sign(right: &mut [f64], left: &mut [f64]) {
    if let Some(first) = right.iter().find(|v| v.abs() > SIGN_TOL) {
        if *first < 0.0 {
            right.iter_mut().for_each(|v| *v = -*v);
            left.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

fn lex_desc(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        if (x - y).abs() > SIGN_TOL {
            return y.total_cmp(x);
        }
    }
    std::cmp::Ordering::Equal
}

/// Rotates the tied block so that its first right vector is the normalized
/// projection of `anchor`. Left vectors receive the same rotation, which
/// preserves `B v = σ w` because the block shares one singular value.
fn rotate_cluster_to_anchor(
    right: &mut [Vec<f64>],
    left: &mut [Vec<f64>],
    range: std::ops::Range<usize>,
    anchor: &[f64],
) {
    let g = range.len();
    let coeffs: Vec<f64> = range.clone().map(|i| dot(&right[i], anchor)).collect();
    let cn = norm(&coeffs);
    if cn < 0.5 {
        return;
    }
    let mut basis = vec![coeffs.iter().map(|c| c / cn).collect::<Vec<_>>()];
    complete_basis(&mut basis, g);
    let old_r: Vec<Vec<f64>> = range.clone().map(|i| right[i].clone()).collect();
    let old_l: Vec<Vec<f64>> = range.clone().map(|i| left[i].clone()).collect();
    for (k, o) in basis.iter().enumerate() {
        let mut r = vec![0.0; old_r[0].len()];
        let mut l = vec![0.0; old_l[0].len()];
        for (j, oj) in o.iter().enumerate() {
            r.iter_mut().zip(&old_r[j]).for_each(|(a, b)| *a += oj * b);
            l.iter_mut().zip(&old_l[j]).for_each(|(a, b)| *a += oj * b);
        }
        right[range.start + k] = r;
        left[range.start + k] = l;
    }
}

/// Divergence transition matrix at an operating point, with its cached
/// singular system.
#[derive(Clone, Debug, PartialEq)]
pub struct Dtm {
    pub matrix: Matrix,
    pub channel: ChannelMatrix,
    pub input: Distribution,
    pub output: Distribution,
    pub spectrum: Spectrum,
}

/// Builds `B = diag(√P_Y)⁻¹ W diag(√P_X)` and its singular system.
pub fn build_dtm(w: &ChannelMatrix, px: &Distribution) -> Result<Dtm> {
    Error::check_len(w.input_size(), px.alphabet_size())?;
    px.require_positive()?;
    let py = output_distribution(w, px)?;
    if let Some(index) = py.probs().iter().position(|&p| p <= 0.0) {
        return Err(Error::DegenerateOutput { index });
    }
    let sx = px.sqrt();
    let sy = py.sqrt();
    let wm = w.matrix();
    let matrix = Matrix::from_fn(wm.rows(), wm.cols(), |y, x| wm[(y, x)] * sx[x] / sy[y]);
    let spectrum = Spectrum::anchored(&matrix, Some(&sx));
    Ok(Dtm {
        matrix,
        channel: w.clone(),
        input: px.clone(),
        output: py,
        spectrum,
    })
}

impl Dtm {
    /// DTM of the joint law `P_XY` (rows `x`, columns `y`).
    pub fn from_joint(joint: &Matrix) -> Result<Dtm> {
        let (w, px) = ChannelMatrix::from_joint(joint)?;
        build_dtm(&w, &px)
    }

    /// `√P_X`.
    pub fn v0(&self) -> Vec<f64> {
        self.input.sqrt()
    }

    pub fn sigma1(&self) -> f64 {
        self.spectrum.sigma(1)
    }

    /// `BᵀB`.
    pub fn gram(&self) -> Matrix {
        self.matrix.gram()
    }

    /// `‖B ψ‖²`.
    pub fn output_energy(&self, psi: &[f64]) -> f64 {
        let bpsi = self.matrix.matvec(psi);
        dot(&bpsi, &bpsi)
    }
}

/// Residuals of the top singular triplet against `(1, √P_X, √P_Y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopSingularReport {
    pub sigma0_err: f64,
    pub v0_err: f64,
    pub w0_err: f64,
    /// `max_{i ≥ 1} σᵢ`, zero when the spectrum has a single value.
    pub max_other_sigma: f64,
}

pub fn verify_top_singular(dtm: &Dtm) -> TopSingularReport {
    let sp = &dtm.spectrum;
    let aligned = |v: &[f64], target: &[f64]| {
        let plus = norm(&sub(v, target));
        let minus = norm(&v.iter().zip(target).map(|(a, b)| a + b).collect::<Vec<_>>());
        plus.min(minus)
    };
    TopSingularReport {
        sigma0_err: (sp.sigma(0) - 1.0).abs(),
        v0_err: aligned(&sp.right_vectors[0], &dtm.input.sqrt()),
        w0_err: aligned(&sp.left_vectors[0], &dtm.output.sqrt()),
        max_other_sigma: sp.singular_values.iter().skip(1).fold(0.0_f64, |m, &s| m.max(s)),
    }
}

/// `σ₁²`, the local contraction coefficient of `I(U;Y) ≤ σ₁² I(U;X)`.
pub fn strong_dpi_coefficient(dtm: &Dtm) -> f64 {
    let s = dtm.sigma1();
    s * s
}

/// Maximal correlation with its maximizing functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenyiCorrelation {
    pub rho: f64,
    /// `f(x) = v₁(x) / √P_X(x)`.
    pub f: Vec<f64>,
    /// `g(y) = w₁(y) / √P_Y(y)`.
    pub g: Vec<f64>,
    /// Set when `σ₁` and `σ₂` are tied, so the maximizing pair is not unique.
    pub ambiguous: bool,
}

pub fn renyi_correlation(dtm: &Dtm) -> RenyiCorrelation {
    let sp = &dtm.spectrum;
    if sp.len() < 2 {
        return RenyiCorrelation {
            rho: 0.0,
            f: vec![0.0; dtm.input.alphabet_size()],
            g: vec![0.0; dtm.output.alphabet_size()],
            ambiguous: false,
        };
    }
    let f = sp.right_vectors[1]
        .iter()
        .zip(dtm.input.probs())
        .map(|(v, p)| v / p.sqrt())
        .collect();
    let g = sp.left_vectors[1]
        .iter()
        .zip(dtm.output.probs())
        .map(|(w, p)| w / p.sqrt())
        .collect();
    let ambiguous = sp.len() > 2 && sp.sigma(1) - sp.sigma(2) <= TIE_TOL;
    RenyiCorrelation {
        rho: sp.sigma(1),
        f,
        g,
        ambiguous,
    }
}
