//! Two-receiver rate splitting: a common layer of energy `ε₀²` plus private
//! layers of energy `ε₁², ε₂²` superposed on one perturbation.

use serde::{Deserialize, Serialize};

use super::broadcast::solve_broadcast;
use crate::channel::Dtm;
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::prob::{apply_perturbation, mutual_information, ConditionalFamily, Distribution, Perturbation};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateTriple {
    pub r0: f64,
    pub r1: f64,
    pub r2: f64,
}

/// `R₀ = ½ε₀² λ`, `Rᵢ = ½εᵢ² σ₁(Bᵢ)²` for each split `(ε₀², ε₁², ε₂²)`, with
/// `λ` the two-receiver broadcast value.
pub fn split_rate_region(dtm1: &Dtm, dtm2: &Dtm, splits: &[(f64, f64, f64)]) -> Result<Vec<RateTriple>> {
    for &(a, b, c) in splits {
        if [a, b, c].iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::input(format!("split ({a}, {b}, {c}) has a negative component")));
        }
    }
    let lambda = solve_broadcast(&[dtm1.clone(), dtm2.clone()])?.value;
    let (s1, s2) = (dtm1.sigma1().powi(2), dtm2.sigma1().powi(2));
    Ok(splits
        .iter()
        .map(|&(e0, e1, e2)| RateTriple {
            r0: 0.5 * e0 * lambda,
            r1: 0.5 * e1 * s1,
            r2: 0.5 * e2 * s2,
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Superposition {
    /// Exact `I(U, V₁, V₂; X)`.
    pub exact: f64,
    /// `½ Σ εᵢ² ‖ψᵢ‖²`.
    pub local: f64,
    pub relative_error: f64,
}

/// Three independent uniform bits `(U, V₁, V₂)` drive the kernel
/// `P_X + √P_X ⊙ (±ε₀ψ₀ ± ε₁ψ₁ ± ε₂ψ₂)`; returns the exact mutual
/// information against its local value.
pub fn superposed_information(px: &Distribution, eps: [f64; 3], dirs: [&[f64]; 3]) -> Result<Superposition> {
    px.require_positive()?;
    let n = px.alphabet_size();
    let v0 = px.sqrt();
    for d in dirs {
        Error::check_len(n, d.len())?;
        if dot(d, &v0).abs() > 1e-10 {
            return Err(Error::input("superposed directions must be orthogonal to sqrt(P_X)"));
        }
    }
    let mut kernels = Vec::with_capacity(8);
    for signs in 0..8u32 {
        let mut psi = vec![0.0; n];
        for (layer, d) in dirs.iter().enumerate() {
            let s = if signs >> layer & 1 == 1 { -eps[layer] } else { eps[layer] };
            psi.iter_mut().zip(d.iter()).for_each(|(p, x)| *p += s * x);
        }
        let j: Vec<f64> = psi.iter().zip(&v0).map(|(p, s)| p * s).collect();
        let total: f64 = j.iter().sum();
        let j: Vec<f64> = j.iter().map(|x| x - total / n as f64).collect();
        kernels.push(apply_perturbation(&Perturbation::new(px.clone(), j, 1.0)?)?);
    }
    let fam = ConditionalFamily::new(Distribution::uniform(8), kernels)?;
    let exact = mutual_information(&fam, px)?;
    let local = 0.5
        * eps
            .iter()
            .zip(dirs)
            .map(|(e, d)| e * e * dot(d, d))
            .sum::<f64>();
    Ok(Superposition {
        exact,
        local,
        relative_error: if local > 0.0 { (exact - local).abs() / local } else { exact.abs() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_dtm, ChannelMatrix};

    #[test]
    fn identical_receivers_closed_form() {
        let w = ChannelMatrix::nested_ternary(0.2, 0.1).unwrap();
        let d = build_dtm(&w, &Distribution::new(vec![0.5, 0.25, 0.25]).unwrap()).unwrap();
        let r = split_rate_region(&d, &d, &[(1.0, 0.0, 0.0), (0.2, 0.3, 0.5)]).unwrap();
        assert!((r[0].r0 - 0.08).abs() < 1e-9 && r[0].r1 == 0.0 && r[0].r2 == 0.0);
        assert!((r[1].r0 - 0.016).abs() < 1e-9);
        assert!((r[1].r1 - 0.024).abs() < 1e-12 && (r[1].r2 - 0.04).abs() < 1e-12);
        assert!(split_rate_region(&d, &d, &[(-0.1, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn superposition_is_additive() {
        let px = Distribution::new(vec![0.5, 0.25, 0.25]).unwrap();
        let r2 = 0.5_f64.sqrt();
        let a = [r2, -0.5, -0.5];
        let b = [0.0, r2, -r2];
        let s = superposed_information(&px, [6e-4, 5e-4, 6e-4], [&a, &b, &a]).unwrap();
        assert!(s.relative_error < 1e-2, "{s:?}");
    }
}
