//! Finite-alphabet probability primitives.
//!
//! Divergences and mutual information are in nats. Local quantities use the
//! weighted inner product `⟨J₁, J₂⟩_P = Σ J₁(x) J₂(x) / P(x)`, under which the
//! second-order expansion of KL divergence is half a squared norm.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;

/// Construction tolerance on `Σ p = 1`.
pub const SIMPLEX_TOL: f64 = 1e-12;
/// Tolerance on `Σ J = 0` for perturbation directions.
pub const ZERO_SUM_TOL: f64 = 1e-12;

/// A point on the probability simplex over `{0, …, n−1}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Validates entries in `[0, 1]` and `|Σ p − 1| ≤ 1e-12`. Inputs are never
    /// renormalized.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(probs, SIMPLEX_TOL)
    }

    pub fn with_tolerance(probs: Vec<f64>, tol: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::input("distribution over an empty alphabet"));
        }
        for (index, &value) in probs.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::OutOfRange { index, value });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::NotNormalized { sum });
        }
        Ok(Self { probs })
    }

    /// A distribution usable as an operating point: every entry strictly
    /// positive.
    pub fn operating_point(probs: Vec<f64>) -> Result<Self> {
        let d = Self::new(probs)?;
        d.require_positive()?;
        Ok(d)
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution over an empty alphabet");
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    /// Point mass on `index`.
    pub fn vertex(n: usize, index: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[index] = 1.0;
        Self { probs }
    }

    #[inline]
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn alphabet_size(&self) -> usize {
        self.probs.len()
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    pub fn require_positive(&self) -> Result<()> {
        match self.probs.iter().position(|&p| p <= 0.0) {
            Some(index) => Err(Error::SingularWeight { index }),
            None => Ok(()),
        }
    }

    /// `√P`, the top right singular vector of any DTM built at this point.
    pub fn sqrt(&self) -> Vec<f64> {
        self.probs.iter().map(|p| p.sqrt()).collect()
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.probs.len()).filter(|&i| self.probs[i] > 0.0).collect()
    }

    /// Product distribution `self ⊗ other`, with `self` as the slow index.
    pub fn product(&self, other: &Distribution) -> Distribution {
        let probs = self
            .probs
            .iter()
            .flat_map(|a| other.probs.iter().map(move |b| a * b))
            .collect();
        Distribution { probs }
    }

    pub fn max_abs_diff(&self, other: &Distribution) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Crate-internal constructor for results of exact stochastic algebra
    /// (matrix–vector products, mixtures) that only need clamping of
    /// round-off negatives.
    pub(crate) fn from_algebra(mut probs: Vec<f64>) -> Result<Self> {
        for p in probs.iter_mut() {
            if *p < 0.0 && *p > -1e-13 {
                *p = 0.0;
            }
        }
        Self::with_tolerance(probs, 1e-10)
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Distribution::new(v)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.probs
    }
}

/// `D(p ‖ q)` in nats. Returns `+∞` when `p` puts mass where `q` has none.
pub fn kl_divergence(p: &Distribution, q: &Distribution) -> Result<f64> {
    Error::check_len(p.alphabet_size(), q.alphabet_size())?;
    Ok(kl_raw(p.probs(), q.probs()))
}

/// KL on raw slices; callers guarantee equal length.
pub(crate) fn kl_raw(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return f64::INFINITY;
        }
        // p ln(p/q) = p ln(1 + (p − q)/q); ln_1p keeps precision when p ≈ q.
        total += pi * ((pi - qi) / qi).ln_1p();
    }
    total.max(0.0)
}

/// `Σ J₁(x) J₂(x) / P(x)`.
pub fn weighted_inner(j1: &[f64], j2: &[f64], reference: &Distribution) -> Result<f64> {
    Error::check_len(reference.alphabet_size(), j1.len())?;
    Error::check_len(reference.alphabet_size(), j2.len())?;
    reference.require_positive()?;
    Ok(j1
        .iter()
        .zip(j2)
        .zip(reference.probs())
        .map(|((a, b), p)| a * b / p)
        .sum())
}

pub fn weighted_norm(j: &[f64], reference: &Distribution) -> Result<f64> {
    Ok(weighted_inner(j, j, reference)?.sqrt())
}

/// A weighted perturbation vector `ψ = J / √P` together with its reference.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedVector {
    pub coords: Vec<f64>,
    pub reference: Distribution,
}

/// `ψ(x) = J(x) / √P(x)`.
pub fn to_weighted(j: &[f64], reference: &Distribution) -> Result<WeightedVector> {
    Error::check_len(reference.alphabet_size(), j.len())?;
    reference.require_positive()?;
    let coords = j
        .iter()
        .zip(reference.probs())
        .map(|(a, p)| a / p.sqrt())
        .collect();
    Ok(WeightedVector {
        coords,
        reference: reference.clone(),
    })
}

/// `J(x) = ψ(x) √P(x)`.
pub fn from_weighted(psi: &WeightedVector) -> Vec<f64> {
    psi.coords
        .iter()
        .zip(psi.reference.probs())
        .map(|(c, p)| c * p.sqrt())
        .collect()
}

/// `Q = P + ε J`, validated only when materialized.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation {
    pub base: Distribution,
    pub direction: Vec<f64>,
    pub scale: f64,
}

impl Perturbation {
    pub fn new(base: Distribution, direction: Vec<f64>, scale: f64) -> Result<Self> {
        Error::check_len(base.alphabet_size(), direction.len())?;
        if !(scale >= 0.0) {
            return Err(Error::input(format!("perturbation scale {scale} is negative")));
        }
        let sum: f64 = direction.iter().sum();
        if sum.abs() > ZERO_SUM_TOL {
            return Err(Error::NotZeroSum { sum });
        }
        Ok(Self {
            base,
            direction,
            scale,
        })
    }

    /// Perturbation along the weighted direction `ψ`, i.e. `J = √P ψ`.
    pub fn from_weighted(base: Distribution, psi: &[f64], scale: f64) -> Result<Self> {
        Error::check_len(base.alphabet_size(), psi.len())?;
        let j = from_weighted(&WeightedVector {
            coords: psi.to_vec(),
            reference: base.clone(),
        });
        Self::new(base, j, scale)
    }
}

/// `½ ε² Σ J² / P = ½ ε² ‖ψ‖²`.
pub fn local_kl(pert: &Perturbation) -> Result<f64> {
    let n2 = weighted_inner(&pert.direction, &pert.direction, &pert.base)?;
    Ok(0.5 * pert.scale * pert.scale * n2)
}

/// Materializes `base + ε J`. Entries within `1e-12` of zero are snapped to
/// zero and round-off above one is clamped; anything larger is reported with the offending index.
pub fn apply_perturbation(pert: &Perturbation) -> Result<Distribution> {
    let mut probs = Vec::with_capacity(pert.direction.len());
    for (index, (p, j)) in pert.base.probs().iter().zip(&pert.direction).enumerate() {
        let value = p + pert.scale * j;
        if !(-1e-12..=1.0 + 1e-12).contains(&value) {
            return Err(Error::OutOfRange { index, value });
        }
        probs.push(if value.abs() <= 1e-12 { 0.0 } else { value.clamp(0.0, 1.0) });
    }
    Distribution::with_tolerance(probs, 1e-10)
}

/// An auxiliary variable law `P_U` with one kernel `P_{X|U=u}` per symbol.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalFamily {
    pub u_law: Distribution,
    pub kernels: Vec<Distribution>,
}

impl ConditionalFamily {
    pub fn new(u_law: Distribution, kernels: Vec<Distribution>) -> Result<Self> {
        Error::check_len(u_law.alphabet_size(), kernels.len())?;
        let n = kernels[0].alphabet_size();
        for k in &kernels {
            Error::check_len(n, k.alphabet_size())?;
        }
        Ok(Self { u_law, kernels })
    }

    /// `Σ_u P_U(u) P_{X|U=u}`.
    pub fn mixture(&self) -> Vec<f64> {
        let n = self.kernels[0].alphabet_size();
        let mut out = vec![0.0; n];
        for (w, k) in self.u_law.probs().iter().zip(&self.kernels) {
            for (o, p) in out.iter_mut().zip(k.probs()) {
                *o += w * p;
            }
        }
        out
    }

    /// Largest entrywise deviation of the mixture from `marginal`.
    pub fn marginal_residual(&self, marginal: &Distribution) -> f64 {
        self.mixture()
            .iter()
            .zip(marginal.probs())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Checks the mixture equals `marginal` within `1e-10`.
    pub fn check_marginal(&self, marginal: &Distribution) -> Result<()> {
        let r = self.marginal_residual(marginal);
        if r > 1e-10 {
            return Err(Error::input(format!(
                "mixture of kernels deviates from the stated marginal by {r:e}"
            )));
        }
        Ok(())
    }
}

/// `Σ_u P_U(u) D(P_{X|U=u} ‖ marginal)`, exact. `+∞` on support violation.
pub fn mutual_information(fam: &ConditionalFamily, marginal: &Distribution) -> Result<f64> {
    Error::check_len(marginal.alphabet_size(), fam.kernels[0].alphabet_size())?;
    let mut total = 0.0;
    for (w, k) in fam.u_law.probs().iter().zip(&fam.kernels) {
        if *w <= 0.0 {
            continue;
        }
        let d = kl_raw(k.probs(), marginal.probs());
        if d.is_infinite() {
            return Ok(f64::INFINITY);
        }
        total += w * d;
    }
    Ok(total)
}

/// Plain Euclidean distance, exposed for diagnostics only; all analysis uses
/// the weighted norm.
pub fn plain_norm(j: &[f64]) -> f64 {
    dot(j, j).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex1_base() -> Distribution {
        Distribution::new(vec![0.5, 0.25, 0.25]).unwrap()
    }

    fn ex1_dir() -> Vec<f64> {
        vec![0.5, -0.25, -0.25]
    }

    #[test]
    fn distribution_validation() {
        assert!(Distribution::new(vec![0.5, 0.5]).is_ok());
        assert!(matches!(
            Distribution::new(vec![0.5, 0.6]),
            Err(Error::NotNormalized { .. })
        ));
        assert!(matches!(
            Distribution::new(vec![1.5, -0.5]),
            Err(Error::OutOfRange { index: 0, .. })
        ));
        assert!(matches!(
            Distribution::operating_point(vec![1.0, 0.0]),
            Err(Error::SingularWeight { index: 1 })
        ));
        // Renormalization is refused even for tiny excess.
        assert!(Distribution::new(vec![0.5, 0.5 + 1e-9]).is_err());
    }

    #[test]
    fn kl_examples() {
        let half = Distribution::new(vec![0.5, 0.5]).unwrap();
        let point = Distribution::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(kl_divergence(&half, &half).unwrap(), 0.0);
        assert!((kl_divergence(&point, &half).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(kl_divergence(&half, &point).unwrap(), f64::INFINITY);
        let three = Distribution::uniform(3);
        assert!(matches!(
            kl_divergence(&half, &three),
            Err(Error::Dimension { expected: 2, found: 3 })
        ));
    }

    #[test]
    fn local_kl_examples() {
        let zero = Perturbation::new(ex1_base(), vec![0.0; 3], 0.3).unwrap();
        assert_eq!(local_kl(&zero).unwrap(), 0.0);

        let eps = 0.37;
        let p = Perturbation::new(ex1_base(), ex1_dir(), eps).unwrap();
        assert!((local_kl(&p).unwrap() - 0.5 * eps * eps).abs() < 1e-15);

        let eps = 1e-2;
        let p = Perturbation::new(ex1_base(), ex1_dir(), eps).unwrap();
        let q = apply_perturbation(&p).unwrap();
        let exact = kl_divergence(&ex1_base(), &q).unwrap();
        assert!((local_kl(&p).unwrap() - exact).abs() <= 5.0 * eps.powi(3));

        let singular = Perturbation {
            base: Distribution::new(vec![1.0, 0.0]).unwrap(),
            direction: vec![0.1, -0.1],
            scale: 1.0,
        };
        assert!(matches!(local_kl(&singular), Err(Error::SingularWeight { index: 1 })));
    }

    #[test]
    fn weighted_inner_examples() {
        let u3 = Distribution::uniform(3);
        assert_eq!(weighted_inner(&[0.0; 3], &[0.0; 3], &u3).unwrap(), 0.0);
        let v = weighted_inner(&[1.0, -1.0, 0.0], &[0.0, 1.0, -1.0], &u3).unwrap();
        assert!((v + 3.0).abs() < 1e-14);
    }

    #[test]
    fn weighted_vector_example() {
        let psi = to_weighted(&ex1_dir(), &ex1_base()).unwrap();
        let expected = [1.0 / 2f64.sqrt(), -0.5, -0.5];
        for (a, b) in psi.coords.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let zero = to_weighted(&[0.0; 3], &ex1_base()).unwrap();
        assert!(zero.coords.iter().all(|&c| c == 0.0));
        assert!(to_weighted(&[0.0, 0.0], &Distribution::new(vec![1.0, 0.0]).unwrap()).is_err());
    }

    #[test]
    fn apply_perturbation_examples() {
        let p0 = Perturbation::new(ex1_base(), ex1_dir(), 0.0).unwrap();
        assert_eq!(apply_perturbation(&p0).unwrap(), ex1_base());
        let p1 = Perturbation::new(ex1_base(), ex1_dir(), 1.0).unwrap();
        assert_eq!(apply_perturbation(&p1).unwrap().probs(), &[1.0, 0.0, 0.0]);
        let p3 = Perturbation::new(ex1_base(), ex1_dir(), 3.0).unwrap();
        assert!(matches!(apply_perturbation(&p3), Err(Error::OutOfRange { index: 0, .. })));
        assert!(matches!(
            Perturbation::new(ex1_base(), vec![0.1, 0.0, 0.0], 1.0),
            Err(Error::NotZeroSum { .. })
        ));
    }

    #[test]
    fn mutual_information_examples() {
        let half = Distribution::uniform(2);
        let indep = ConditionalFamily::new(half.clone(), vec![half.clone(), half.clone()]).unwrap();
        assert_eq!(mutual_information(&indep, &half).unwrap(), 0.0);

        let det = ConditionalFamily::new(
            half.clone(),
            vec![Distribution::vertex(2, 0), Distribution::vertex(2, 1)],
        )
        .unwrap();
        let mi = mutual_information(&det, &half).unwrap();
        assert!((mi - std::f64::consts::LN_2).abs() < 1e-15);

        // Binary uniform U, kernels P ± εJ with unit weighted norm.
        let eps = 1e-3;
        let base = ex1_base();
        let plus = apply_perturbation(&Perturbation::new(base.clone(), ex1_dir(), eps).unwrap()).unwrap();
        let neg: Vec<f64> = ex1_dir().iter().map(|v| -v).collect();
        let minus = apply_perturbation(&Perturbation::new(base.clone(), neg, eps).unwrap()).unwrap();
        let fam = ConditionalFamily::new(half, vec![plus, minus]).unwrap();
        fam.check_marginal(&base).unwrap();
        let mi = mutual_information(&fam, &base).unwrap();
        assert!((mi - 0.5 * eps * eps).abs() < 1e-8);
    }
}
