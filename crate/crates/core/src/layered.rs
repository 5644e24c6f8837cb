//! Layered coding: successive binary couplings at moving operating points.
//!
//! A layer perturbs its operating point `P` to `P ± εJ`, where `J` is the
//! best local direction of the channel restricted to the support of `P`.
//! The next layer starts from one of the two resulting kernels. For the
//! nested ternary channel, two layers at `ε = 1` walk from `[½, ¼, ¼]` to the
//! vertices of the simplex.
//!
//! [`simulate_layered`] realizes the scheme with constant-composition
//! sub-blocks and a minimum-divergence type decoder.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{build_dtm, output_distribution, ChannelMatrix};
use crate::error::{Error, Result};
use crate::par;
use crate::prob::{apply_perturbation, kl_raw, Distribution, Perturbation};

/// Mass outside a layer's support that is tolerated as round-off.
const SUPPORT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub operating_point: Distribution,
    /// Probability-space direction `J` over the full alphabet (zero off the
    /// support).
    pub direction: Vec<f64>,
    /// `v₁` of the reduced DTM, indexed by the support.
    pub weighted_direction: Vec<f64>,
    pub epsilon: f64,
    pub restricted_support: Vec<usize>,
    /// `σ₁` of the reduced DTM.
    pub sigma: f64,
    /// `½ ε² σ²`, nats per symbol of this layer.
    pub rate: f64,
    /// `P + εJ` (bit 0) and `P − εJ` (bit 1).
    pub kernels: [Distribution; 2],
}

/// Best binary coupling of the channel restricted to `support`, at
/// `operating` (which must put all its mass on `support`, strictly
/// positively). Outputs unreachable from the support are dropped.
pub fn greedy_layer(
    w: &ChannelMatrix,
    operating: &Distribution,
    epsilon: f64,
    support: &[usize],
) -> Result<LayerRecord> {
    Error::check_len(w.input_size(), operating.alphabet_size())?;
    if support.len() < 2 {
        return Err(Error::DegenerateLayer { size: support.len() });
    }
    if !(epsilon >= 0.0) {
        return Err(Error::input(format!("epsilon {epsilon} is negative")));
    }
    let p = operating.probs();
    let mut restricted = Vec::with_capacity(support.len());
    for &x in support {
        let v = *p
            .get(x)
            .ok_or_else(|| Error::input(format!("support symbol {x} out of range")))?;
        if !(v > 0.0) {
            return Err(Error::SingularWeight { index: x });
        }
        restricted.push(v);
    }
    let mass: f64 = restricted.iter().sum();
    if (mass - 1.0).abs() > SUPPORT_TOL {
        return Err(Error::input(format!(
            "operating point puts mass {:e} outside the layer support",
            1.0 - mass
        )));
    }
    let p_s = Distribution::with_tolerance(restricted, SUPPORT_TOL)?;
    let reduced = w.restrict_inputs(support)?;
    let py = reduced.matrix().matvec(p_s.probs());
    let rows: Vec<Vec<f64>> = reduced
        .matrix()
        .to_rows()
        .into_iter()
        .zip(&py)
        .filter(|(_, &q)| q > 0.0)
        .map(|(r, _)| r)
        .collect();
    let dtm = build_dtm(&ChannelMatrix::from_rows(&rows)?, &p_s)?;
    let sigma = dtm.sigma1();
    let v1 = dtm.spectrum.right_vectors[1].clone();
    let mut direction = vec![0.0; p.len()];
    for ((&x, v), q) in support.iter().zip(&v1).zip(p_s.probs()) {
        direction[x] = v * q.sqrt();
    }
    let kernels = [1.0, -1.0].map(|s| {
        let j: Vec<f64> = direction.iter().map(|d| s * d).collect();
        Perturbation::new(operating.clone(), j, epsilon).and_then(|pert| apply_perturbation(&pert))
    });
    let [k0, k1] = kernels;
    Ok(LayerRecord {
        operating_point: operating.clone(),
        direction,
        weighted_direction: v1,
        epsilon,
        restricted_support: support.to_vec(),
        sigma,
        rate: 0.5 * epsilon * epsilon * sigma * sigma,
        kernels: [k0?, k1?],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerPlan {
    pub layers: Vec<LayerRecord>,
    /// Fraction of the block each layer is active on.
    pub occupancy: Vec<f64>,
    /// `Σ occupancy · rate`, nats per symbol.
    pub total_rate: f64,
}

/// Index of the layer-1 kernel the second layer refines.
pub const NESTED_BRANCH: usize = 1;

impl LayerPlan {
    /// Largest deviation between each layer's operating point and the kernel
    /// of the previous layer it is supposed to start from.
    pub fn replay_residual(&self) -> f64 {
        self.layers
            .windows(2)
            .map(|pair| pair[1].operating_point.max_abs_diff(&pair[0].kernels[NESTED_BRANCH]))
            .fold(0.0, f64::max)
    }
}

/// Layer 1 at `operating` with `eps1`; layer 2 on the support of the bit-1
/// kernel of layer 1 with `eps2`, active half of the time.
pub fn plan_two_layer(w: &ChannelMatrix, operating: &Distribution, eps1: f64, eps2: f64) -> Result<LayerPlan> {
    let first = greedy_layer(w, operating, eps1, &operating.support())?;
    let next = first.kernels[NESTED_BRANCH].clone();
    let second = greedy_layer(w, &next, eps2, &next.support())?;
    let occupancy = vec![1.0, 0.5];
    let total_rate = first.rate + 0.5 * second.rate;
    Ok(LayerPlan {
        layers: vec![first, second],
        occupancy,
        total_rate,
    })
}

/// Two layers at `ε = 1` on the nested ternary channel from `[½, ¼, ¼]`;
/// requires `0 < γ < η < ¼`.
pub fn plan_ternary_two_layer(eta: f64, gamma: f64) -> Result<LayerPlan> {
    if !(0.0 < gamma && gamma < eta && eta < 0.25) {
        return Err(Error::input(format!(
            "parameters must satisfy 0 < gamma < eta < 1/4 (got eta = {eta}, gamma = {gamma})"
        )));
    }
    let w = ChannelMatrix::nested_ternary(eta, gamma)?;
    plan_two_layer(&w, &Distribution::new(vec![0.5, 0.25, 0.25])?, 1.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCodeConfig {
    pub n1: usize,
    pub k1: usize,
    pub n2: usize,
    pub k2: usize,
    pub trials: usize,
    pub seed: u64,
}

impl BlockCodeConfig {
    pub fn validate(&self, layers: usize) -> Result<()> {
        if [self.n1, self.k1, self.trials].contains(&0) {
            return Err(Error::Config("n1, k1 and trials must be positive".into()));
        }
        if layers == 2 {
            if self.n2 == 0 || self.k2 == 0 {
                return Err(Error::Config("n2 and k2 must be positive".into()));
            }
            if self.n2 * self.k2 != self.n1 {
                return Err(Error::Config(format!(
                    "n2 * k2 = {} must equal n1 = {}",
                    self.n2 * self.k2,
                    self.n1
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    /// Bit error rate per layer. A layer-2 bit counts as wrong when its
    /// sub-block's layer-1 bit was decoded wrongly.
    pub per_layer_error_rate: Vec<f64>,
    /// Plug-in estimate of `I(U_ℓ; Y)` per symbol from the sampled
    /// `(bit, output)` pairs of the symbols the layer is active on.
    pub per_layer_empirical_rate: Vec<f64>,
    /// Delta-method standard error of the plug-in estimate.
    pub per_layer_rate_stderr: Vec<f64>,
    /// `I(U_ℓ; Y)` of the realized bit frequencies and rounded compositions,
    /// through the known channel.
    pub per_layer_type_rate: Vec<f64>,
    pub per_layer_bits: Vec<usize>,
    pub per_layer_samples: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

/// Integer symbol counts summing to `n`, by the largest-remainder method
/// (ties to the lowest symbol).
pub fn round_composition(p: &Distribution, n: usize) -> Result<Vec<usize>> {
    let exact: Vec<f64> = p.probs().iter().map(|q| q * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..exact.len()).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &x in order.iter().take(n.saturating_sub(assigned)) {
        counts[x] += 1;
    }
    if let Some(x) = (0..counts.len()).find(|&x| p.probs()[x] > 0.0 && counts[x] == 0) {
        return Err(Error::Config(format!(
            "block length {n} is too short to realize symbol {x} of the composition"
        )));
    }
    Ok(counts)
}

fn sample(column: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for (y, p) in column.iter().enumerate() {
        acc += p;
        if r < acc {
            return y;
        }
    }
    column.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Transmits one constant-composition block and returns its output counts.
fn transmit(counts: &[usize], columns: &[Vec<f64>], ny: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut out = vec![0; ny];
    for (x, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            out[sample(&columns[x], rng)] += 1;
        }
    }
    out
}

/// Minimum `D(P̂_Y ‖ W K_b)` over the two candidates; ties go to bit 0.
fn decode(counts: &[usize], candidates: &[Vec<f64>; 2]) -> usize {
    let n: usize = counts.iter().sum();
    let emp: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let d0 = kl_raw(&emp, &candidates[0]);
    let d1 = kl_raw(&emp, &candidates[1]);
    usize::from(d1 < d0)
}

#[derive(Clone, Default)]
struct Tally {
    errors: usize,
    bits: usize,
    /// `joint[b][y]`: output symbol counts per transmitted bit.
    joint: [Vec<usize>; 2],
}

impl Tally {
    fn new(ny: usize) -> Self {
        Self {
            errors: 0,
            bits: 0,
            joint: [vec![0; ny], vec![0; ny]],
        }
    }

    fn merge(&mut self, other: &Tally) {
        self.errors += other.errors;
        self.bits += other.bits;
        for b in 0..2 {
            self.joint[b].iter_mut().zip(&other.joint[b]).for_each(|(a, c)| *a += c);
        }
    }

    fn samples(&self) -> usize {
        self.joint.iter().flatten().sum()
    }

    /// Plug-in mutual information and its delta-method standard error.
    fn plug_in(&self) -> (f64, f64) {
        let n = self.samples() as f64;
        if n == 0.0 {
            return (0.0, 0.0);
        }
        let ny = self.joint[0].len();
        let pu: Vec<f64> = self.joint.iter().map(|r| r.iter().sum::<usize>() as f64 / n).collect();
        let py: Vec<f64> = (0..ny)
            .map(|y| (self.joint[0][y] + self.joint[1][y]) as f64 / n)
            .collect();
        let (mut m1, mut m2) = (0.0, 0.0);
        for b in 0..2 {
            for y in 0..ny {
                let c = self.joint[b][y] as f64;
                if c > 0.0 {
                    let pj = c / n;
                    let i = (pj / (pu[b] * py[y])).ln();
                    m1 += pj * i;
                    m2 += pj * i * i;
                }
            }
        }
        (m1, ((m2 - m1 * m1).max(0.0) / n).sqrt())
    }
}

/// Bit frequency weighted information of the realized compositions.
fn type_rate(bit_counts: [usize; 2], outputs: &[Vec<f64>; 2]) -> f64 {
    let total = (bit_counts[0] + bit_counts[1]) as f64;
    if total == 0.0 {
        return 0.0;
    }
    let w = [bit_counts[0] as f64 / total, bit_counts[1] as f64 / total];
    let ny = outputs[0].len();
    let mix: Vec<f64> = (0..ny).map(|y| w[0] * outputs[0][y] + w[1] * outputs[1][y]).collect();
    (0..2)
        .filter(|&b| w[b] > 0.0)
        .map(|b| w[b] * kl_raw(&outputs[b], &mix))
        .sum()
}

/// Monte Carlo run of a one- or two-layer plan over `w`.
///
/// Each trial sends `k1` sub-blocks of length `n1`, one layer-1 bit each.
/// Sub-blocks carrying bit 1 are split into `k2` pieces of length `n2`, one
/// layer-2 bit each. Every piece has the rounded composition of its kernel.
/// Trial `t` draws from ChaCha8 seeded with `seed` on stream `t`.
pub fn simulate_layered(plan: &LayerPlan, w: &ChannelMatrix, cfg: &BlockCodeConfig) -> Result<SimulationReport> {
    let layers = plan.layers.len();
    if !(1..=2).contains(&layers) {
        return Err(Error::Config(format!("plans with {layers} layers are not simulated")));
    }
    cfg.validate(layers)?;
    if layers == 2 && plan.replay_residual() > 1e-9 {
        return Err(Error::Config("layer 2 does not start from the bit-1 kernel of layer 1".into()));
    }
    let ny = w.output_size();
    let columns: Vec<Vec<f64>> = (0..w.input_size()).map(|x| w.column(x)).collect();

    let comps1 = [
        round_composition(&plan.layers[0].kernels[0], cfg.n1)?,
        round_composition(&plan.layers[0].kernels[1], cfg.n1)?,
    ];
    let cand1 = [
        output_distribution(w, &plan.layers[0].kernels[0])?.probs().to_vec(),
        output_distribution(w, &plan.layers[0].kernels[1])?.probs().to_vec(),
    ];
    let layer2 = if layers == 2 {
        let l = &plan.layers[1];
        Some((
            [round_composition(&l.kernels[0], cfg.n2)?, round_composition(&l.kernels[1], cfg.n2)?],
            [
                output_distribution(w, &l.kernels[0])?.probs().to_vec(),
                output_distribution(w, &l.kernels[1])?.probs().to_vec(),
            ],
        ))
    } else {
        None
    };

    let per_trial = par::map_indexed(cfg.trials, |t| {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(t as u64);
        let mut t1 = Tally::new(ny);
        let mut t2 = Tally::new(ny);
        let mut bits1 = [0usize; 2];
        let mut bits2 = [0usize; 2];
        for _ in 0..cfg.k1 {
            let u1 = usize::from(rng.random::<bool>());
            bits1[u1] += 1;
            let nested = u1 == NESTED_BRANCH && layer2.is_some();
            let mut block = vec![0; ny];
            let mut pieces = Vec::new();
            if nested {
                let (comps2, _) = layer2.as_ref().expect("nested layer present");
                for _ in 0..cfg.k2 {
                    let u2 = usize::from(rng.random::<bool>());
                    bits2[u2] += 1;
                    let out = transmit(&comps2[u2], &columns, ny, &mut rng);
                    block.iter_mut().zip(&out).for_each(|(a, b)| *a += b);
                    t2.joint[u2].iter_mut().zip(&out).for_each(|(a, b)| *a += b);
                    pieces.push((u2, out));
                }
            } else {
                block = transmit(&comps1[u1], &columns, ny, &mut rng);
            }
            t1.joint[u1].iter_mut().zip(&block).for_each(|(a, b)| *a += b);
            let u1_hat = decode(&block, &cand1);
            t1.bits += 1;
            t1.errors += usize::from(u1_hat != u1);
            if let (true, Some((_, cand2))) = (nested, layer2.as_ref()) {
                for (u2, out) in pieces {
                    t2.bits += 1;
                    let ok = u1_hat == u1 && decode(&out, cand2) == u2;
                    t2.errors += usize::from(!ok);
                }
            }
        }
        (t1, t2, bits1, bits2)
    });

    let mut t1 = Tally::new(ny);
    let mut t2 = Tally::new(ny);
    let mut bits1 = [0usize; 2];
    let mut bits2 = [0usize; 2];
    for (a, b, c, d) in &per_trial {
        t1.merge(a);
        t2.merge(b);
        for i in 0..2 {
            bits1[i] += c[i];
            bits2[i] += d[i];
        }
    }

    let realized = |comps: &[Vec<usize>; 2], n: usize| -> [Vec<f64>; 2] {
        comps.clone().map(|c| {
            let k: Vec<f64> = c.iter().map(|&v| v as f64 / n as f64).collect();
            w.matrix().matvec(&k)
        })
    };
    let mut tallies = vec![(t1, type_rate(bits1, &realized(&comps1, cfg.n1)))];
    if let Some((comps2, _)) = &layer2 {
        tallies.push((t2, type_rate(bits2, &realized(comps2, cfg.n2))));
    }
    let mut report = SimulationReport {
        per_layer_error_rate: Vec::new(),
        per_layer_empirical_rate: Vec::new(),
        per_layer_rate_stderr: Vec::new(),
        per_layer_type_rate: Vec::new(),
        per_layer_bits: Vec::new(),
        per_layer_samples: Vec::new(),
        trials: cfg.trials,
        seed: cfg.seed,
    };
    for (t, tr) in tallies {
        let (mi, se) = t.plug_in();
        report
            .per_layer_error_rate
            .push(if t.bits > 0 { t.errors as f64 / t.bits as f64 } else { 0.0 });
        report.per_layer_empirical_rate.push(mi);
        report.per_layer_rate_stderr.push(se);
        report.per_layer_type_rate.push(tr);
        report.per_layer_bits.push(t.bits);
        report.per_layer_samples.push(t.samples());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_layer_direction() {
        let w = ChannelMatrix::nested_ternary(0.2, 0.1).unwrap();
        let p = Distribution::new(vec![0.5, 0.25, 0.25]).unwrap();
        let l = greedy_layer(&w, &p, 1.0, &[0, 1, 2]).unwrap();
        let j = [0.5, -0.25, -0.25];
        assert!(l.direction.iter().zip(j).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(l.kernels[0].max_abs_diff(&Distribution::vertex(3, 0)) < 1e-12);
        assert!((l.rate - 2.0 * 0.04).abs() < 1e-12);
    }

    #[test]
    fn second_layer_sigma() {
        let (eta, gamma) = (0.2, 0.1);
        let w = ChannelMatrix::nested_ternary(eta, gamma).unwrap();
        let q = Distribution::new(vec![0.0, 0.5, 0.5]).unwrap();
        let l = greedy_layer(&w, &q, 1.0, &[1, 2]).unwrap();
        assert!((l.sigma - (2.0 + 4.0 * eta).sqrt() * gamma).abs() < 1e-12);
        assert!(l.direction.iter().zip([0.0, 0.5, -0.5]).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(matches!(greedy_layer(&w, &q, 1.0, &[1]), Err(Error::DegenerateLayer { size: 1 })));
    }

    #[test]
    fn plan_total_rate() {
        let plan = plan_ternary_two_layer(0.05, 0.02).unwrap();
        assert!((plan.total_rate - 0.00522).abs() < 1e-12);
        assert!(plan.replay_residual() < 1e-12);
        assert!(plan_ternary_two_layer(0.1, 0.1).is_err());
    }

    #[test]
    fn rounding_and_config() {
        let p = Distribution::new(vec![0.5, 0.25, 0.25]).unwrap();
        assert_eq!(round_composition(&p, 10).unwrap(), vec![5, 3, 2]);
        assert!(round_composition(&p, 1).is_err());
        let cfg = BlockCodeConfig { n1: 100, k1: 2, n2: 30, k2: 3, trials: 1, seed: 0 };
        assert!(cfg.validate(2).is_err());
        assert!(cfg.validate(1).is_ok());
    }

    #[test]
    fn noiseless_channel_has_no_errors() {
        let w = ChannelMatrix::identity(3);
        let plan = plan_two_layer(&w, &Distribution::new(vec![0.5, 0.25, 0.25]).unwrap(), 1.0, 1.0).unwrap();
        let cfg = BlockCodeConfig { n1: 40, k1: 20, n2: 10, k2: 4, trials: 5, seed: 3 };
        let r = simulate_layered(&plan, &w, &cfg).unwrap();
        assert!(r.per_layer_error_rate.iter().all(|&e| e == 0.0));
        let again = simulate_layered(&plan, &w, &cfg).unwrap();
        assert_eq!(r, again);
    }
}
