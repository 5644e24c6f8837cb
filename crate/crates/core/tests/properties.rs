mod common;

use common::*;
use infocoupling::channel::{build_dtm, verify_top_singular, ChannelMatrix};
use infocoupling::coupling::{
    solve_broadcast, solve_broadcast_single_direction, solve_mac_common, MacChannel,
};
use infocoupling::layered::{plan_ternary_two_layer, simulate_layered, BlockCodeConfig};
use infocoupling::linalg::Matrix;
use infocoupling::oracles::{ace_correlation, brute_p2p, random_channel, random_distribution, SearchBudget};
use infocoupling::prob::{kl_divergence, mutual_information, ConditionalFamily, Distribution, Perturbation};
use infocoupling::prob::apply_perturbation;
use infocoupling::tensor::{lifted_spectrum, second_singular_of_power, LiftedDtm};
use proptest::prelude::*;
use rand::Rng;

fn perturbed(p: &Distribution, psi: &[f64], eps: f64) -> Distribution {
    apply_perturbation(&Perturbation::from_weighted(p.clone(), psi, eps).unwrap()).unwrap()
}

fn kl_err(p: &Distribution, psi: &[f64], eps: f64) -> f64 {
    (kl_divergence(p, &perturbed(p, psi, eps)).unwrap() - 0.5 * eps * eps).abs()
}

/// Cubic and quartic coefficients of `D(P ‖ P + ε√P⊙ψ) − ½ε²`, and a bound
/// on the fifth-order tail at `ε`.
fn kl_series(p: &Distribution, psi: &[f64], eps: f64) -> (f64, f64, f64) {
    let mut c3 = 0.0;
    let mut c4 = 0.0;
    let mut tail = 0.0;
    for (q, s) in p.probs().iter().zip(psi) {
        let x = eps * s / q.sqrt();
        c3 -= s.powi(3) / q.sqrt() / 3.0;
        c4 += s.powi(4) / q / 4.0;
        tail += q * x.abs().powi(5) / (5.0 * (1.0 - x.abs()));
    }
    (c3, c4, tail)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kl_remainder_follows_the_series(seed in any::<u64>(), n in 2usize..=6, eps in 1e-3f64..2e-2) {
        let mut r = rng(seed);
        let p = random_distribution(&mut r, n);
        let psi = random_orthogonal(&mut r, &p.sqrt());
        let (c3, c4, tail) = kl_series(&p, &psi, eps);
        let q = perturbed(&p, &psi, eps);
        let rem = kl_divergence(&p, &q).unwrap() - 0.5 * eps * eps - c3 * eps.powi(3) - c4 * eps.powi(4);
        prop_assert!(rem.abs() <= 1.01 * tail + 1e-16, "{} vs {}", rem, tail);
    }

    #[test]
    fn kl_halving_ratio_when_cubic_term_dominates(seed in any::<u64>(), n in 2usize..=6) {
        let mut r = rng(seed);
        let p = random_distribution(&mut r, n);
        let psi = random_orthogonal(&mut r, &p.sqrt());
        let (c3, c4, _) = kl_series(&p, &psi, 1e-2);
        prop_assume!(c4.abs() * 1e-2 <= 0.25 * c3.abs());
        let ratio = kl_err(&p, &psi, 1e-2) / kl_err(&p, &psi, 5e-3);
        prop_assert!((5.0..=12.0).contains(&ratio), "{}", ratio);
    }

    #[test]
    fn kl_asymmetry_is_cubic(seed in any::<u64>(), n in 2usize..=6) {
        let mut r = rng(seed);
        let p = random_distribution(&mut r, n);
        let psi = random_orthogonal(&mut r, &p.sqrt());
        let asym = |eps: f64| {
            let q = perturbed(&p, &psi, eps);
            kl_divergence(&p, &q).unwrap() - kl_divergence(&q, &p).unwrap()
        };
        // Fit asym(ε) ≈ a₃ε³ + a₄ε⁴ on the ladder, then bound by C ε³ below it.
        let (e1, e2) = (1e-2f64, 5e-3f64);
        let (r1, r2) = (asym(e1) / e1.powi(3), asym(e2) / e2.powi(3));
        let a4 = (r1 - r2) / (e1 - e2);
        let a3 = r1 - a4 * e1;
        let c = 1.1 * (a3.abs() + a4.abs() * e1) + 1e-9;
        for eps in [2.5e-3f64, 1.25e-3] {
            prop_assert!(asym(eps).abs() <= c * eps.powi(3));
        }
    }

    #[test]
    fn mutual_information_is_nonnegative(seed in any::<u64>(), n in 2usize..=5, k in 1usize..=4) {
        let mut r = rng(seed);
        let law = random_distribution(&mut r, k);
        let kernels: Vec<_> = (0..k).map(|_| random_distribution(&mut r, n)).collect();
        let fam = ConditionalFamily::new(law.clone(), kernels).unwrap();
        let mix = Distribution::with_tolerance(fam.mixture(), 1e-10).unwrap();
        prop_assert!(mutual_information(&fam, &mix).unwrap() >= 0.0);
        let same = ConditionalFamily::new(law, vec![mix.clone(); k]).unwrap();
        prop_assert!(mutual_information(&same, &mix).unwrap().abs() <= 1e-10);
    }

    #[test]
    fn spectra_reconstruct_and_satisfy_top_pair(seed in any::<u64>(), nx in 2usize..=6, ny in 2usize..=6) {
        let d = random_dtm(&mut rng(seed), nx, ny);
        let scale = d.matrix.frobenius_norm();
        prop_assert!(d.spectrum.residuals(&d.matrix).reconstruction <= 1e-9 * scale);
        let t = verify_top_singular(&d);
        prop_assert!(t.sigma0_err <= 1e-9 && t.v0_err <= 1e-9 && t.w0_err <= 1e-9);
        prop_assert!(t.max_other_sigma <= 1.0 + 1e-10);
        let again = build_dtm(&d.channel, &d.input).unwrap();
        prop_assert_eq!(&again.spectrum, &d.spectrum);
    }

    #[test]
    fn spectrum_matches_nalgebra(seed in any::<u64>(), nx in 2usize..=6, ny in 2usize..=6) {
        let d = random_dtm(&mut rng(seed), nx, ny);
        let reference = nalgebra_singular_values(&d.matrix.to_rows());
        for (a, b) in d.spectrum.singular_values.iter().zip(&reference) {
            prop_assert!((a - b).abs() <= 1e-10, "{} vs {}", a, b);
        }
    }

    #[test]
    fn local_data_processing(seed in any::<u64>(), nx in 2usize..=5, ny in 2usize..=5) {
        let mut r = rng(seed);
        let d = random_dtm(&mut r, nx, ny);
        let psi = random_orthogonal(&mut r, &d.v0());
        let (ix, iy) = antipodal_informations(&d.channel, &d.input, &psi, 1e-3);
        let s2 = d.sigma1() * d.sigma1();
        prop_assert!(iy <= s2 * ix * (1.0 + 1e-2), "{} > {}", iy, s2 * ix);
    }

    #[test]
    fn tensor_powers_keep_sigma1(seed in any::<u64>(), nx in 2usize..=4, ny in 2usize..=4) {
        let d = random_dtm(&mut rng(seed), nx, ny);
        for n in [2, 3] {
            prop_assert!((second_singular_of_power(&d, n).unwrap() - d.sigma1()).abs() <= 1e-9);
        }
    }

    #[test]
    fn two_letter_spectrum_is_pairwise_products(seed in any::<u64>(), nx in 2usize..=4, ny in 2usize..=4) {
        let d = random_dtm(&mut rng(seed), nx, ny);
        let s = &d.spectrum.singular_values;
        let mut products: Vec<f64> = s.iter().flat_map(|a| s.iter().map(move |b| a * b)).collect();
        products.sort_by(|a, b| b.total_cmp(a));
        let lifted = lifted_spectrum(&d, 2).unwrap().singular_values;
        prop_assert_eq!(lifted.len(), products.len());
        for (a, b) in lifted.iter().zip(&products) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn implicit_lift_matches_dense(seed in any::<u64>(), nx in 2usize..=3, ny in 2usize..=3, n in 1usize..=3) {
        let mut r = rng(seed);
        let d = random_dtm(&mut r, nx, ny);
        let dense = LiftedDtm::new(&d, n).unwrap();
        let lazy = LiftedDtm::implicit(&d, n).unwrap();
        prop_assert!(dense.matrix().is_some() && lazy.matrix().is_none());
        for _ in 0..50 {
            let x: Vec<f64> = (0..dense.input_dim()).map(|_| r.random_range(-1.0..1.0)).collect();
            let (a, b) = (dense.apply(&x).unwrap(), lazy.apply(&x).unwrap());
            prop_assert!(a.iter().zip(&b).all(|(u, v)| (u - v).abs() <= 1e-11));
        }
    }

    #[test]
    fn ace_agrees_with_spectrum(seed in any::<u64>(), nx in 2usize..=5, ny in 2usize..=5) {
        let d = random_dtm(&mut rng(seed), nx, ny);
        let px = d.input.probs();
        let w = d.channel.matrix();
        let joint = Matrix::from_fn(nx, ny, |x, y| px[x] * w[(y, x)]);
        let rho = infocoupling::channel::renyi_correlation(&d).rho;
        prop_assert!((ace_correlation(&joint).unwrap().rho - rho).abs() <= 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn broadcast_sandwich_and_bounds(seed in any::<u64>(), nx in 2usize..=4, k in 1usize..=3) {
        let mut r = rng(seed);
        let px = random_distribution(&mut r, nx);
        let dtms: Vec<_> = (0..k)
            .map(|_| {
                let ny = r.random_range(2..=4);
                build_dtm(&random_channel(&mut r, nx, ny), &px).unwrap()
            })
            .collect();
        let sol = solve_broadcast(&dtms).unwrap();
        let min_tr = sol.receiver_values.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(min_tr <= sol.dual_value + 1e-12);
        prop_assert!(sol.dual_value - sol.value <= 1e-7);
        let best_private = dtms.iter().map(|d| d.sigma1() * d.sigma1()).fold(f64::INFINITY, f64::min);
        prop_assert!(sol.value <= best_private + 1e-9);
        let res = sol.ensemble.residuals(&dtms[0].v0());
        prop_assert!(res.worst() <= 1e-9);

        let sd = solve_broadcast_single_direction(&dtms).unwrap();
        prop_assert!(sd.lambda_b <= sol.value + 1e-9);
        if k <= 2 {
            prop_assert!((sd.lambda_b - sol.value).abs() <= 1e-6, "{} vs {}", sd.lambda_b, sol.value);
        }
    }

    #[test]
    fn mac_common_dominates_private(seed in any::<u64>(), a in 2usize..=3, b in 2usize..=3, ny in 2usize..=4) {
        let mut r = rng(seed);
        let laws = vec![random_distribution(&mut r, a), random_distribution(&mut r, b)];
        let mac = MacChannel::new(laws, random_channel(&mut r, a * b, ny)).unwrap();
        let sol = solve_mac_common(&mac.marginal_dtms().unwrap()).unwrap();
        for s in &sol.private_sigmas {
            prop_assert!(*s <= sol.sigma_common + 1e-9);
        }
    }

    #[test]
    fn brute_p2p_respects_contraction(seed in any::<u64>(), ny in 2usize..=4) {
        let mut r = rng(seed);
        let w = random_channel(&mut r, 3, ny);
        let px = random_distribution(&mut r, 3);
        let s = build_dtm(&w, &px).unwrap().sigma1();
        let budget = SearchBudget::new(90, 4, seed).unwrap();
        let a = brute_p2p(&w, &px, 1e-3, budget).unwrap();
        prop_assert!(a.best_ratio <= s * s * (1.0 + 1e-2));
        prop_assert_eq!(a, brute_p2p(&w, &px, 1e-3, budget).unwrap());
    }
}

#[test]
fn windmill_has_a_single_direction_gap() {
    let px = Distribution::uniform(3);
    let dtms: Vec<_> = (0..3)
        .map(|i| build_dtm(&ChannelMatrix::windmill(0.1, i).unwrap(), &px).unwrap())
        .collect();
    let s2 = dtms[0].sigma1().powi(2);
    let lambda = solve_broadcast(&dtms).unwrap().value;
    let lambda_b = solve_broadcast_single_direction(&dtms).unwrap().lambda_b;
    assert!(lambda - lambda_b >= 0.1 * s2);
}

#[test]
fn layered_replay_and_additivity() {
    let plan = plan_ternary_two_layer(0.2, 0.1).unwrap();
    let vertex = |i| Distribution::vertex(3, i);
    assert!(plan.layers[0].kernels[0].max_abs_diff(&vertex(0)) == 0.0);
    let face = Distribution::new(vec![0.0, 0.5, 0.5]).unwrap();
    assert!(plan.layers[0].kernels[1].max_abs_diff(&face) <= 1e-15);
    assert!(plan.layers[1].kernels[0].max_abs_diff(&vertex(1)) <= 1e-15);
    assert!(plan.layers[1].kernels[1].max_abs_diff(&vertex(2)) <= 1e-15);
    assert_eq!(plan.replay_residual(), 0.0);
    let sum: f64 = plan.layers.iter().zip(&plan.occupancy).map(|(l, o)| o * l.rate).sum();
    assert!((plan.total_rate - sum).abs() <= 1e-15);
    for l in &plan.layers {
        assert!((l.rate - 0.5 * l.epsilon.powi(2) * l.sigma.powi(2)).abs() <= 1e-12);
    }
}

#[test]
fn error_rates_do_not_grow_with_block_length() {
    let (eta, gamma) = (0.2, 0.1);
    let plan = plan_ternary_two_layer(eta, gamma).unwrap();
    let w = ChannelMatrix::nested_ternary(eta, gamma).unwrap();
    let run = |n1| {
        let cfg = BlockCodeConfig { n1, k1: 50, n2: n1 / 4, k2: 4, trials: 100, seed: 7 };
        simulate_layered(&plan, &w, &cfg).unwrap().per_layer_error_rate
    };
    let (short, long) = (run(100), run(400));
    for (s, l) in short.iter().zip(&long) {
        assert!(l <= s, "{long:?} vs {short:?}");
    }
}
