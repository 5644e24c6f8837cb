use infocoupling::channel::ChannelMatrix;
use infocoupling::layered::{plan_ternary_two_layer, simulate_layered, BlockCodeConfig};
use serde_json::{json, Value};

use crate::report::{rate, Report};
use crate::CliError;

pub const DEFAULT_SEED: u64 = 20261018;

pub struct SimArgs {
    pub n1: usize,
    pub k1: usize,
    pub k2: usize,
    pub trials: usize,
    pub seed: u64,
}

pub fn run(eta: f64, gamma: f64, sim: Option<SimArgs>) -> Result<Report, CliError> {
    let plan = plan_ternary_two_layer(eta, gamma)?;
    let layers: Vec<Value> = plan
        .layers
        .iter()
        .zip(&plan.occupancy)
        .map(|(l, occ)| {
            json!({
                "operating_point": l.operating_point,
                "direction": l.direction,
                "epsilon": l.epsilon,
                "restricted_support": l.restricted_support,
                "sigma": l.sigma,
                "occupancy": occ,
                "rate": rate(l.rate),
                "kernels": l.kernels,
            })
        })
        .collect();
    let mut results = json!({
        "layers": layers,
        "total_rate": rate(plan.total_rate),
        "closed_form_total_rate": rate(2.0 * eta * eta + (0.5 + eta) * gamma * gamma),
        "replay_residual": plan.replay_residual(),
    });
    let mut inputs = json!({ "eta": eta, "gamma": gamma, "simulate": sim.is_some() });
    let mut report_seed = None;
    if let Some(s) = sim {
        if s.k2 == 0 || s.n1 % s.k2 != 0 {
            return Err(CliError::Constraint(format!("k2 = {} must divide n1 = {}", s.k2, s.n1)));
        }
        let cfg = BlockCodeConfig { n1: s.n1, k1: s.k1, n2: s.n1 / s.k2, k2: s.k2, trials: s.trials, seed: s.seed };
        let w = ChannelMatrix::nested_ternary(eta, gamma)?;
        let r = simulate_layered(&plan, &w, &cfg)?;
        let per_layer: Vec<Value> = (0..r.per_layer_error_rate.len())
            .map(|i| {
                json!({
                    "error_rate": r.per_layer_error_rate[i],
                    "bits": r.per_layer_bits[i],
                    "samples": r.per_layer_samples[i],
                    "empirical_rate": rate(r.per_layer_empirical_rate[i]),
                    "empirical_rate_stderr": rate(r.per_layer_rate_stderr[i]),
                    "type_rate": rate(r.per_layer_type_rate[i]),
                    "planned_rate": rate(plan.layers[i].rate),
                })
            })
            .collect();
        results["simulation"] = json!({
            "decoder": "minimum KL divergence between empirical and candidate output distributions (engineering choice)",
            "layers": per_layer,
        });
        inputs["block_code"] = serde_json::to_value(cfg).expect("serializable config");
        report_seed = Some(s.seed);
    }
    let mut report = Report::new("layered", inputs, results);
    if let Some(seed) = report_seed {
        report = report.with_seed("simulation", seed);
    }
    Ok(report)
}
