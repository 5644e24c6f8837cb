//! Kronecker lifting of channels and DTMs to `n` letters.
//!
//! Multi-letter vectors use the layout of [`kron`]: letter 1 is the
//! slowest-varying index, so `v₀ ⊗ v₁` is `kron_vec(v0, v1)`.

use serde::{Deserialize, Serialize};

use crate::channel::{build_dtm, ChannelMatrix, Dtm, Spectrum};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, svd, Matrix};
use crate::prob::Distribution;

/// Default limit on either dimension of a materialized product.
pub const DEFAULT_CAP: usize = 4096;
/// Largest letter count that is ever materialized.
pub const MAX_MATERIALIZED_LETTERS: usize = 3;

pub fn kron(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    kron_with_cap(a, b, DEFAULT_CAP)
}

pub fn kron_with_cap(a: &Matrix, b: &Matrix, cap: usize) -> Result<Matrix> {
    let rows = a.rows().saturating_mul(b.rows());
    let cols = a.cols().saturating_mul(b.cols());
    if rows > cap || cols > cap {
        return Err(Error::Capacity { rows, cols, cap });
    }
    let (br, bc) = (b.rows(), b.cols());
    Ok(Matrix::from_fn(rows, cols, |r, c| {
        a[(r / br, c / bc)] * b[(r % br, c % bc)]
    }))
}

pub fn kron_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
}

/// `a ⊗ a ⊗ … ⊗ a` (`n` factors).
pub fn kron_power(a: &Matrix, n: usize) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::input("letter count must be positive"));
    }
    let mut out = a.clone();
    for _ in 1..n {
        out = kron(&out, a)?;
    }
    Ok(out)
}

pub fn kron_vec_power(a: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![1.0];
    for _ in 0..n {
        out = kron_vec(&out, a);
    }
    out
}

/// Memoryless use of `w` over `n` letters.
pub fn lift_channel(w: &ChannelMatrix, n: usize) -> Result<ChannelMatrix> {
    Ok(ChannelMatrix::from_trusted(kron_power(w.matrix(), n)?))
}

/// I.i.d. law over `n` letters.
pub fn lift_distribution(p: &Distribution, n: usize) -> Distribution {
    let mut out = p.clone();
    for _ in 1..n {
        out = out.product(p);
    }
    out
}

/// Applies `m` along axis `axis` of a row-major tensor with extents `shape`.
fn mode_apply(x: &[f64], shape: &mut [usize], axis: usize, m: &Matrix) -> Vec<f64> {
    debug_assert_eq!(shape[axis], m.cols());
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let (din, dout) = (m.cols(), m.rows());
    let mut out = vec![0.0; outer * dout * inner];
    for o in 0..outer {
        for r in 0..dout {
            for c in 0..din {
                let coef = m[(r, c)];
                if coef == 0.0 {
                    continue;
                }
                let src = &x[(o * din + c) * inner..(o * din + c + 1) * inner];
                let dst = &mut out[(o * dout + r) * inner..(o * dout + r + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += coef * s;
                }
            }
        }
    }
    shape[axis] = dout;
    out
}

/// An `n`-letter DTM, stored densely for `n ≤ 3` when it fits under the cap
/// and otherwise applied letter by letter.
#[derive(Clone, Debug)]
pub struct LiftedDtm {
    pub base: Dtm,
    pub letters: usize,
    materialized: Option<Matrix>,
}

impl LiftedDtm {
    pub fn new(base: &Dtm, letters: usize) -> Result<Self> {
        if letters == 0 {
            return Err(Error::input("letter count must be positive"));
        }
        let materialized = if letters <= MAX_MATERIALIZED_LETTERS {
            match kron_power(&base.matrix, letters) {
                Ok(m) => Some(m),
                Err(Error::Capacity { .. }) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        Ok(Self {
            base: base.clone(),
            letters,
            materialized,
        })
    }

    /// Never materializes; for checking the dense form against.
    pub fn implicit(base: &Dtm, letters: usize) -> Result<Self> {
        if letters == 0 {
            return Err(Error::input("letter count must be positive"));
        }
        Ok(Self {
            base: base.clone(),
            letters,
            materialized: None,
        })
    }

    pub fn matrix(&self) -> Option<&Matrix> {
        self.materialized.as_ref()
    }

    pub fn input_dim(&self) -> usize {
        self.base.matrix.cols().pow(self.letters as u32)
    }

    pub fn output_dim(&self) -> usize {
        self.base.matrix.rows().pow(self.letters as u32)
    }

    /// `B⁽ⁿ⁾ x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        Error::check_len(self.input_dim(), x.len())?;
        if let Some(m) = &self.materialized {
            return Ok(m.matvec(x));
        }
        Ok(self.apply_letterwise(x))
    }

    fn apply_letterwise(&self, x: &[f64]) -> Vec<f64> {
        let mut shape = vec![self.base.matrix.cols(); self.letters];
        let mut cur = x.to_vec();
        for axis in 0..self.letters {
            cur = mode_apply(&cur, &mut shape, axis, &self.base.matrix);
        }
        cur
    }

    /// The lifted DTM rebuilt from the lifted channel and i.i.d. input law.
    pub fn to_dtm(&self) -> Result<Dtm> {
        if self.letters > MAX_MATERIALIZED_LETTERS {
            return Err(Error::input("lifted DTMs are materialized for at most 3 letters"));
        }
        let w = lift_channel(&self.base.channel, self.letters)?;
        build_dtm(&w, &lift_distribution(&self.base.input, self.letters))
    }
}

/// Outcome of checking that `vᵢ ⊗ vⱼ` is a singular vector of `B ⊗ B`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductPairCheck {
    /// `σᵢ σⱼ`.
    pub value: f64,
    /// `‖(B ⊗ B)(vᵢ ⊗ vⱼ) − σᵢσⱼ (wᵢ ⊗ wⱼ)‖`.
    pub residual: f64,
}

pub fn lemma2_check(dtm: &Dtm, i: usize, j: usize) -> Result<ProductPairCheck> {
    let sp = &dtm.spectrum;
    let m = sp.len();
    if i >= m || j >= m {
        return Err(Error::input(format!("singular index out of range (spectrum has {m} values)")));
    }
    let b2 = kron(&dtm.matrix, &dtm.matrix)?;
    let value = sp.sigma(i) * sp.sigma(j);
    let lhs = b2.matvec(&kron_vec(&sp.right_vectors[i], &sp.right_vectors[j]));
    let rhs = kron_vec(&sp.left_vectors[i], &sp.left_vectors[j]);
    let residual = norm(
        &lhs.iter()
            .zip(&rhs)
            .map(|(a, b)| a - value * b)
            .collect::<Vec<_>>(),
    );
    Ok(ProductPairCheck { value, residual })
}

/// Full singular system of `B⁽ⁿ⁾` for `n ≤ 3`.
pub fn lifted_spectrum(dtm: &Dtm, n: usize) -> Result<Spectrum> {
    if n == 0 || n > MAX_MATERIALIZED_LETTERS {
        return Err(Error::input("letter count must be in 1..=3"));
    }
    Ok(Spectrum::of(&kron_power(&dtm.matrix, n)?))
}

/// `σ₁(B⁽ⁿ⁾)` from a full SVD of the lifted matrix.
pub fn second_singular_of_power(dtm: &Dtm, n: usize) -> Result<f64> {
    if n == 0 || n > MAX_MATERIALIZED_LETTERS {
        return Err(Error::input("letter count must be in 1..=3"));
    }
    let s = svd(&kron_power(&dtm.matrix, n)?).s;
    Ok(s.get(1).copied().unwrap_or(0.0))
}

/// Orthogonal decomposition of an `n`-letter vector against the product
/// subspaces `v₀ ⊗ … ⊗ φ ⊗ … ⊗ v₀` with `φ ⊥ v₀`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductDecomposition {
    pub letters: usize,
    /// Coefficient along `v₀ ⊗ … ⊗ v₀`.
    pub line: f64,
    /// Per-letter `φ_k`, each orthogonal to `v₀`.
    pub components: Vec<Vec<f64>>,
    /// Letters whose component has norm above `1e-9`.
    pub active_letters: Vec<usize>,
    /// Norm of the part outside all of the above.
    pub residual: f64,
}

pub fn product_form_projector(psi: &[f64], base_v0: &[f64]) -> Result<ProductDecomposition> {
    let d = base_v0.len();
    if d < 2 {
        return Err(Error::input("base alphabet must have at least 2 symbols"));
    }
    let vn = norm(base_v0);
    if vn == 0.0 {
        return Err(Error::input("v0 must be nonzero"));
    }
    let v0: Vec<f64> = base_v0.iter().map(|x| x / vn).collect();
    let mut letters = 0;
    let mut size = 1usize;
    while size < psi.len() {
        size *= d;
        letters += 1;
    }
    if size != psi.len() || letters == 0 || letters > MAX_MATERIALIZED_LETTERS {
        return Err(Error::input(format!(
            "vector length {} is not |X|^n with n ≤ 3 for |X| = {d}",
            psi.len()
        )));
    }

    // Contract ψ with v₀ on every letter except k.
    let contract = |k: usize| -> Vec<f64> {
        let mut out = vec![0.0; d];
        for (idx, &p) in psi.iter().enumerate() {
            let mut rest = idx;
            let mut weight = 1.0;
            let mut sym_k = 0;
            for letter in (0..letters).rev() {
                let s = rest % d;
                rest /= d;
                if letter == k {
                    sym_k = s;
                } else {
                    weight *= v0[s];
                }
            }
            out[sym_k] += weight * p;
        }
        out
    };

    let v0n = kron_vec_power(&v0, letters);
    let line = dot(psi, &v0n);
    let mut projection: Vec<f64> = v0n.iter().map(|x| line * x).collect();
    let mut components = Vec::with_capacity(letters);
    let mut active = Vec::new();
    for k in 0..letters {
        let c = contract(k);
        let along = dot(&c, &v0);
        let phi: Vec<f64> = c.iter().zip(&v0).map(|(a, b)| a - along * b).collect();
        if norm(&phi) > 1e-9 {
            active.push(k);
        }
        let mut embedded = vec![1.0];
        for l in 0..letters {
            embedded = kron_vec(&embedded, if l == k { &phi } else { &v0 });
        }
        projection.iter_mut().zip(&embedded).for_each(|(p, e)| *p += e);
        components.push(phi);
    }
    let residual = norm(&psi.iter().zip(&projection).map(|(a, b)| a - b).collect::<Vec<_>>());
    Ok(ProductDecomposition {
        letters,
        line,
        components,
        active_letters: active,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex1() -> Dtm {
        let w = ChannelMatrix::nested_ternary(0.2, 0.1).unwrap();
        build_dtm(&w, &Distribution::new(vec![0.5, 0.25, 0.25]).unwrap()).unwrap()
    }

    #[test]
    fn kron_examples() {
        let i2 = Matrix::identity(2);
        assert_eq!(kron(&i2, &i2).unwrap(), Matrix::identity(4));
        let x = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let k = kron(&i2, &x).unwrap();
        assert_eq!(k.row(0), &[0.0, 1.0, 0.0, 0.0]);
        assert_eq!(k.row(3), &[0.0, 0.0, 1.0, 0.0]);
        let big = Matrix::zeros(100, 100);
        assert!(matches!(kron(&big, &big), Err(Error::Capacity { .. })));
    }

    #[test]
    fn product_pair_on_example() {
        let d = ex1();
        let c = lemma2_check(&d, 0, 0).unwrap();
        assert!((c.value - 1.0).abs() < 1e-12 && c.residual < 1e-12);
        let c = lemma2_check(&d, 0, 1).unwrap();
        assert!((c.value - 0.4).abs() < 1e-12 && c.residual < 1e-12);
        assert!(lemma2_check(&d, 3, 0).is_err());
    }

    #[test]
    fn second_singular_is_tied_on_two_letters() {
        let d = ex1();
        assert!((second_singular_of_power(&d, 1).unwrap() - 0.4).abs() < 1e-12);
        assert!((second_singular_of_power(&d, 2).unwrap() - 0.4).abs() < 1e-12);
        let sp = lifted_spectrum(&d, 2).unwrap();
        assert!((sp.sigma(1) - sp.sigma(2)).abs() < 1e-10 && sp.sigma(3) < 0.4 - 1e-3);
        let v0 = d.v0();
        let v1 = &d.spectrum.right_vectors[1];
        let a = kron_vec(&v0, v1);
        let b = kron_vec(v1, &v0);
        for k in 1..=2 {
            let v = &sp.right_vectors[k];
            let inside = dot(v, &a).powi(2) + dot(v, &b).powi(2);
            assert!((inside - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn implicit_matches_materialized() {
        let d = ex1();
        let dense = LiftedDtm::new(&d, 3).unwrap();
        let lazy = LiftedDtm::implicit(&d, 3).unwrap();
        assert!(dense.matrix().is_some() && lazy.matrix().is_none());
        let x: Vec<f64> = (0..27).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let a = dense.apply(&x).unwrap();
        let b = lazy.apply(&x).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-12));
        let lifted = dense.to_dtm().unwrap();
        assert!(lifted.matrix.sub(dense.matrix().unwrap()).max_abs() < 1e-12);
    }

    #[test]
    fn projector_examples() {
        let d = ex1();
        let v0 = d.v0();
        let v1 = d.spectrum.right_vectors[1].clone();
        let p = product_form_projector(&kron_vec(&v0, &v1), &v0).unwrap();
        assert!(p.residual < 1e-12);
        assert_eq!(p.active_letters, vec![1]);
        let p = product_form_projector(&kron_vec(&v1, &v1), &v0).unwrap();
        assert!((p.residual - 1.0).abs() < 1e-12);
        assert!(p.active_letters.is_empty());
        assert!(product_form_projector(&[1.0; 5], &v0).is_err());
    }
}
