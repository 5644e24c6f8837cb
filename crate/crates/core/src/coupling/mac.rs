//! Common-source coupling over a multiple access channel.
//!
//! Each transmitter sees the marginal channel obtained by averaging the joint
//! channel over the other (independent) inputs. A common message may drive
//! all transmitters coherently, which amounts to the stacked DTM
//! `B₀ = [B₁ … B_k]` with its top pair `(√k, ⊕ᵢ √P_{Xᵢ} / √k)` removed.

use serde::{Deserialize, Serialize};

use crate::channel::{build_dtm, ChannelMatrix, Dtm, Spectrum};
use crate::error::{Error, Result};
use crate::linalg::{dot, outer, Matrix};
use crate::prob::Distribution;
use crate::tensor::{kron, kron_vec};

/// Joint channel `W(y | x₁, …, x_k)` with independent inputs. Columns are
/// indexed by `(x₁, …, x_k)` flattened with `x_k` fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct MacChannel {
    pub transmitters: Vec<Distribution>,
    joint: ChannelMatrix,
}

impl MacChannel {
    pub fn new(transmitters: Vec<Distribution>, joint: ChannelMatrix) -> Result<Self> {
        if transmitters.is_empty() {
            return Err(Error::input("at least one transmitter is required"));
        }
        for t in &transmitters {
            t.require_positive()?;
        }
        let cols: usize = transmitters.iter().map(Distribution::alphabet_size).product();
        Error::check_len(cols, joint.input_size())?;
        Ok(Self {
            transmitters,
            joint,
        })
    }

    /// Binary adder `Y = X₁ + X₂` with uniform inputs.
    pub fn adder() -> Self {
        let joint = ChannelMatrix::deterministic(&[0, 1, 1, 2], 3).expect("valid adder");
        Self::new(vec![Distribution::uniform(2), Distribution::uniform(2)], joint).expect("valid adder")
    }

    pub fn joint(&self) -> &ChannelMatrix {
        &self.joint
    }

    pub fn users(&self) -> usize {
        self.transmitters.len()
    }

    /// Product input law over the flattened index.
    pub fn input_law(&self) -> Distribution {
        let mut it = self.transmitters.iter();
        let first = it.next().expect("nonempty").clone();
        it.fold(first, |acc, p| acc.product(p))
    }

    pub fn output_distribution(&self) -> Result<Distribution> {
        crate::channel::output_distribution(&self.joint, &self.input_law())
    }

    fn decode(&self, mut col: usize) -> Vec<usize> {
        let mut xs = vec![0; self.users()];
        for (i, p) in self.transmitters.iter().enumerate().rev() {
            let n = p.alphabet_size();
            xs[i] = col % n;
            col /= n;
        }
        xs
    }

    /// `Wᵢ(y | xᵢ) = Σ_{x₋ᵢ} W(y | x) Π_{j≠i} P_{Xⱼ}(xⱼ)`.
    pub fn marginal_channel(&self, i: usize) -> Result<ChannelMatrix> {
        if i >= self.users() {
            return Err(Error::input(format!("transmitter {i} out of range")));
        }
        let ny = self.joint.output_size();
        let ni = self.transmitters[i].alphabet_size();
        let w = self.joint.matrix();
        let mut m = Matrix::zeros(ny, ni);
        for col in 0..self.joint.input_size() {
            let xs = self.decode(col);
            let weight: f64 = xs
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, &x)| self.transmitters[j].probs()[x])
                .product();
            for y in 0..ny {
                m[(y, xs[i])] += weight * w[(y, col)];
            }
        }
        ChannelMatrix::with_tolerance(m, 1e-10)
    }

    pub fn marginal_dtms(&self) -> Result<Vec<Dtm>> {
        (0..self.users())
            .map(|i| build_dtm(&self.marginal_channel(i)?, &self.transmitters[i]))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacSolution {
    pub sigma_common: f64,
    /// Unit right vector of the deflated stacked DTM.
    pub stacked_vector: Vec<f64>,
    /// `stacked_vector` split per transmitter.
    pub blocks: Vec<Vec<f64>>,
    /// `⟨ψᵢ, √P_{Xᵢ}⟩` per transmitter.
    pub block_orthogonality_residuals: Vec<f64>,
    /// `σ₁(Bᵢ)` per transmitter.
    pub private_sigmas: Vec<f64>,
    /// `10 log₁₀(σ_common² / maxᵢ σ₁(Bᵢ)²)`.
    pub gain_db: f64,
    /// The removed top singular value, `√k`.
    pub top_sigma: f64,
}

fn check_shared_output(dtms: &[Dtm]) -> Result<&Dtm> {
    let first = dtms.first().ok_or_else(|| Error::input("at least one transmitter is required"))?;
    for (i, d) in dtms.iter().enumerate().skip(1) {
        Error::check_len(first.output.alphabet_size(), d.output.alphabet_size())?;
        if d.output.max_abs_diff(&first.output) > 1e-10 {
            return Err(Error::input(format!(
                "transmitter {i} induces a different output distribution"
            )));
        }
    }
    Ok(first)
}

/// `(I − w wᵀ) A` for unit `w`.
fn deflate(a: &Matrix, w: &[f64]) -> Matrix {
    let wta = a.tr_matvec(w);
    a.sub(&outer(w, &wta))
}

pub fn solve_mac_common(dtms: &[Dtm]) -> Result<MacSolution> {
    let first = check_shared_output(dtms)?;
    let parts: Vec<&Matrix> = dtms.iter().map(|d| &d.matrix).collect();
    let b0 = Matrix::hstack(&parts).expect("shared row count");
    let w0 = first.output.sqrt();
    let top_sigma = dot(&b0.tr_matvec(&w0), &b0.tr_matvec(&w0)).sqrt();
    let sp = Spectrum::of(&deflate(&b0, &w0));
    let sigma_common = sp.sigma(0);
    let stacked_vector = sp.right_vectors[0].clone();

    let mut blocks = Vec::with_capacity(dtms.len());
    let mut residuals = Vec::with_capacity(dtms.len());
    let mut offset = 0;
    for d in dtms {
        let n = d.input.alphabet_size();
        let block = stacked_vector[offset..offset + n].to_vec();
        residuals.push(dot(&block, &d.v0()));
        blocks.push(block);
        offset += n;
    }
    let private_sigmas: Vec<f64> = dtms.iter().map(Dtm::sigma1).collect();
    let best_private = private_sigmas.iter().fold(0.0_f64, |m, &s| m.max(s));
    let gain_db = if best_private > 0.0 {
        10.0 * (sigma_common * sigma_common / (best_private * best_private)).log10()
    } else if sigma_common > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(MacSolution {
        sigma_common,
        stacked_vector,
        blocks,
        block_orthogonality_residuals: residuals,
        private_sigmas,
        gain_db,
        top_sigma,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacTensorization {
    pub single_letter: f64,
    pub two_letter: f64,
    pub residual: f64,
}

/// Compares the common-source coefficient of `[B₁⊗B₁ … B_k⊗B_k]` (deflated
/// by `√P_Y ⊗ √P_Y`) with the single-letter one.
pub fn mac_tensorization_check(dtms: &[Dtm]) -> Result<MacTensorization> {
    let first = check_shared_output(dtms)?;
    let single = solve_mac_common(dtms)?.sigma_common;
    let lifted: Vec<Matrix> = dtms
        .iter()
        .map(|d| kron(&d.matrix, &d.matrix))
        .collect::<Result<_>>()?;
    let refs: Vec<&Matrix> = lifted.iter().collect();
    let b2 = Matrix::hstack(&refs).expect("shared row count");
    let w0 = first.output.sqrt();
    let two = Spectrum::of(&deflate(&b2, &kron_vec(&w0, &w0))).sigma(0);
    Ok(MacTensorization {
        single_letter: single,
        two_letter: two,
        residual: (two - single).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adder_example() {
        let mac = MacChannel::adder();
        let dtms = mac.marginal_dtms().unwrap();
        let r2 = 0.5_f64.sqrt();
        let expect = Matrix::from_rows(&[vec![r2, 0.0], vec![0.5, 0.5], vec![0.0, r2]]).unwrap();
        for d in &dtms {
            assert!(d.matrix.sub(&expect).max_abs() < 1e-15);
            assert!((d.sigma1() - r2).abs() < 1e-12);
        }
        let s = solve_mac_common(&dtms).unwrap();
        assert!((s.sigma_common - 1.0).abs() < 1e-12);
        let v = [0.5, -0.5, 0.5, -0.5];
        assert!(s.stacked_vector.iter().zip(v).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!((s.gain_db - 10.0 * 2.0_f64.log10()).abs() < 1e-12);
        assert!((s.top_sigma - 2.0_f64.sqrt()).abs() < 1e-12);
        assert!(s.block_orthogonality_residuals.iter().all(|r| r.abs() < 1e-12));
        assert!(mac_tensorization_check(&dtms).unwrap().residual < 1e-10);
    }

    #[test]
    fn single_transmitter_has_no_gain() {
        let w = ChannelMatrix::nested_ternary(0.2, 0.1).unwrap();
        let d = build_dtm(&w, &Distribution::new(vec![0.5, 0.25, 0.25]).unwrap()).unwrap();
        let s = solve_mac_common(std::slice::from_ref(&d)).unwrap();
        assert!((s.sigma_common - 0.4).abs() < 1e-12);
        assert!(s.gain_db.abs() < 1e-10);
    }
}
