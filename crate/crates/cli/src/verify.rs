use infocoupling::channel::{build_dtm, renyi_correlation, verify_top_singular, Dtm};
use infocoupling::linalg::Matrix;
use infocoupling::oracles::{ace_correlation, brute_p2p, random_channel, random_distribution, SearchBudget};
use infocoupling::tensor::{lemma2_check, second_singular_of_power};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::report::Report;
use crate::{CliError, Suite};

#[derive(Debug, Serialize)]
struct Check {
    name: &'static str,
    bound: f64,
    worst: f64,
    instances: usize,
    passed: bool,
}

impl Check {
    fn new(name: &'static str, bound: f64, values: impl IntoIterator<Item = f64>) -> Self {
        let mut worst = 0.0_f64;
        let mut instances = 0;
        for v in values {
            worst = if v.is_nan() { f64::INFINITY } else { worst.max(v) };
            instances += 1;
        }
        Self { name, bound, worst, instances, passed: worst <= bound }
    }
}

fn random_dtm(rng: &mut ChaCha8Rng, max_size: usize) -> Result<Dtm, CliError> {
    let nx = rng.random_range(2..=max_size);
    let ny = rng.random_range(2..=max_size);
    let w = random_channel(rng, nx, ny);
    let px = random_distribution(rng, nx);
    Ok(build_dtm(&w, &px)?)
}

fn tensor_suite(rng: &mut ChaCha8Rng, budget: usize, inject_fault: bool) -> Result<Vec<Check>, CliError> {
    let mut dtms = (0..budget).map(|_| random_dtm(rng, 5)).collect::<Result<Vec<_>, _>>()?;
    if inject_fault {
        if let Some(d) = dtms.first_mut() {
            d.spectrum.singular_values[0] *= 1.0 + 1e-3;
        }
    }
    let top = dtms.iter().map(verify_top_singular).collect::<Vec<_>>();
    let mut pairs = Vec::new();
    for d in dtms.iter().filter(|d| d.input.alphabet_size() <= 4) {
        for i in 0..d.spectrum.len() {
            for j in 0..d.spectrum.len() {
                pairs.push(lemma2_check(d, i, j)?.residual);
            }
        }
    }
    let tensorization = dtms
        .iter()
        .map(|d| Ok((second_singular_of_power(d, 2)? - d.sigma1()).abs()))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(vec![
        Check::new("top_singular_triplet", 1e-9, top.iter().map(|t| t.sigma0_err.max(t.v0_err).max(t.w0_err))),
        Check::new("contraction_bound", 1e-10, top.iter().map(|t| (t.max_other_sigma - 1.0).max(0.0))),
        Check::new("spectrum_reconstruction", 1e-9, dtms.iter().map(|d| d.spectrum.residuals(&d.matrix).worst())),
        Check::new("product_singular_pairs", 1e-9, pairs),
        Check::new("two_letter_sigma1", 1e-9, tensorization),
    ])
}

fn oracle_suite(rng: &mut ChaCha8Rng, budget: usize) -> Result<Vec<Check>, CliError> {
    let mut ace = Vec::new();
    for _ in 0..budget {
        let d = random_dtm(rng, 4)?;
        let px = d.input.probs();
        let w = d.channel.matrix();
        let joint = Matrix::from_fn(px.len(), w.rows(), |x, y| px[x] * w[(y, x)]);
        ace.push((ace_correlation(&joint)?.rho - renyi_correlation(&d).rho).abs());
    }
    let grid = SearchBudget::new(360, 0, 0)?;
    let mut brute = Vec::new();
    for _ in 0..budget {
        let ny = rng.random_range(2..=4);
        let w = random_channel(rng, 3, ny);
        let px = random_distribution(rng, 3);
        let d = build_dtm(&w, &px)?;
        let s2 = d.sigma1() * d.sigma1();
        brute.push((brute_p2p(&w, &px, 1e-3, grid)?.best_ratio - s2).abs() / s2.max(1e-3));
    }
    Ok(vec![Check::new("ace_vs_spectral", 1e-8, ace), Check::new("brute_p2p_vs_spectral", 1e-2, brute)])
}

pub fn run(suite: Suite, seed: u64, budget: usize, inject_fault: bool) -> Result<(Report, Option<CliError>), CliError> {
    if budget == 0 {
        return Err(CliError::Constraint("budget must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    if matches!(suite, Suite::Tensor | Suite::All) {
        checks.extend(tensor_suite(&mut rng, budget, inject_fault)?);
    }
    if matches!(suite, Suite::Oracle | Suite::All) {
        checks.extend(oracle_suite(&mut rng, budget)?);
    }
    let failure = checks
        .iter()
        .find(|c| !c.passed)
        .map(|c| CliError::Check(format!("{} (worst {:e} > bound {:e})", c.name, c.worst, c.bound)));
    let suite_name = match suite {
        Suite::Tensor => "tensor",
        Suite::Oracle => "oracle",
        Suite::All => "all",
    };
    let inputs = json!({ "suite": suite_name, "budget": budget, "inject_fault": inject_fault });
    let results = json!({ "passed": failure.is_none(), "checks": checks });
    Ok((Report::new("verify", inputs, results).with_seed("verify", seed), failure))
}
