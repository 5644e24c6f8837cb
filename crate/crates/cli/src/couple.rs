use std::path::PathBuf;

use infocoupling::channel::{build_dtm, Dtm};
use infocoupling::coupling::{
    mac_tensorization_check, solve_broadcast, solve_broadcast_single_direction, solve_mac_common, solve_p2p,
    SearchMethod, SingleDirectionOptions,
};
use serde_json::{json, Value};

use crate::report::{rate, Report};
use crate::spec::{load_spec, ChannelSpec};
use crate::{CliError, Mode};

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable result")
}

fn single_spec<'a>(specs: &'a [ChannelSpec], mode: &str) -> Result<&'a ChannelSpec, CliError> {
    match specs {
        [one] => Ok(one),
        _ => Err(CliError::Constraint(format!("{mode} mode takes exactly one spec, got {}", specs.len()))),
    }
}

pub fn run(paths: &[PathBuf], mode: Mode, epsilon: f64, single_direction: bool) -> Result<Report, CliError> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(CliError::Constraint(format!("epsilon must be a finite non-negative number, got {epsilon}")));
    }
    let specs = paths.iter().map(|p| load_spec(p)).collect::<Result<Vec<_>, _>>()?;
    let half_eps2 = 0.5 * epsilon * epsilon;
    let mut seeds = Vec::new();
    let (name, results) = match mode {
        Mode::P2p => {
            let (w, px) = single_spec(&specs, "p2p")?.point_to_point()?;
            let sol = solve_p2p(&build_dtm(&w, &px)?, epsilon)?;
            let mut v = to_value(&sol);
            v["rate"] = rate(sol.rate);
            v["sigma1_squared"] = json!(sol.sigma1 * sol.sigma1);
            ("p2p", v)
        }
        Mode::Broadcast => {
            let mut names = Vec::new();
            let mut dtms: Vec<Dtm> = Vec::new();
            for spec in &specs {
                for (name, w, px) in spec.receiver_channels()? {
                    names.push(name);
                    dtms.push(build_dtm(&w, &px)?);
                }
            }
            let sol = solve_broadcast(&dtms)?;
            let mut v = json!({
                "receivers": names,
                "lambda": sol.value,
                "rate": rate(half_eps2 * sol.value),
                "receiver_values": sol.receiver_values,
                "certificate": {
                    "dual_weights": sol.dual_weights,
                    "dual_value": sol.dual_value,
                    "duality_gap": sol.gap,
                },
                "gram": sol.gram.to_rows(),
                "rank": sol.rank,
                "cardinality": sol.cardinality(),
                "ensemble": sol.ensemble,
                "ensemble_residuals": sol.ensemble.residuals(&dtms[0].v0()),
                "iterations": sol.iterations,
            });
            if single_direction {
                let sd = solve_broadcast_single_direction(&dtms)?;
                if matches!(sd.method, SearchMethod::MultiStart { .. }) {
                    seeds.push(("single_direction", SingleDirectionOptions::default().seed));
                }
                let mut s = to_value(&sd);
                s["rate"] = rate(half_eps2 * sd.lambda_b);
                s["gap_to_lambda"] = json!(sol.value - sd.lambda_b);
                v["single_direction"] = s;
            }
            ("broadcast", v)
        }
        Mode::Mac => {
            let mac = single_spec(&specs, "mac")?.mac()?;
            let dtms = mac.marginal_dtms()?;
            let sol = solve_mac_common(&dtms)?;
            let mut v = to_value(&sol);
            v["rate"] = rate(half_eps2 * sol.sigma_common * sol.sigma_common);
            v["private_rates"] =
                Value::Array(sol.private_sigmas.iter().map(|s| rate(half_eps2 * s * s)).collect());
            v["tensorization"] = to_value(&mac_tensorization_check(&dtms)?);
            ("mac", v)
        }
    };
    let inputs = json!({
        "mode": name,
        "epsilon": epsilon,
        "single_direction": single_direction,
        "spec_paths": paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "specs": specs,
    });
    let mut report = Report::new("couple", inputs, results);
    for (k, s) in seeds {
        report = report.with_seed(k, s);
    }
    Ok(report)
}
