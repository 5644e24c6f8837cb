#![allow(dead_code)]

use infocoupling::channel::{build_dtm, output_distribution, ChannelMatrix, Dtm};
use infocoupling::coupling::PerturbationEnsemble;
use infocoupling::linalg::{dot, normalized};
use infocoupling::oracles::{random_channel, random_distribution};
use infocoupling::prob::{mutual_information, ConditionalFamily, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_dtm(rng: &mut ChaCha8Rng, nx: usize, ny: usize) -> Dtm {
    let w = random_channel(rng, nx, ny);
    let px = random_distribution(rng, nx);
    build_dtm(&w, &px).unwrap()
}

/// Unit vector orthogonal to `v0`.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, v0: &[f64]) -> Vec<f64> {
    loop {
        let g: Vec<f64> = v0.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        let c = dot(&g, v0);
        let p: Vec<f64> = g.iter().zip(v0).map(|(a, b)| a - c * b).collect();
        if dot(&p, &p) > 1e-6 {
            return normalized(&p);
        }
    }
}

/// Exact `I(U;X)` and `I(U;Y)` of the antipodal ensemble `±ψ` at `ε`.
pub fn antipodal_informations(w: &ChannelMatrix, px: &Distribution, psi: &[f64], eps: f64) -> (f64, f64) {
    let fam = PerturbationEnsemble::antipodal(psi, eps).unwrap().conditional_family(px).unwrap();
    let ix = mutual_information(&fam, px).unwrap();
    let outs = fam.kernels.iter().map(|k| output_distribution(w, k).unwrap()).collect();
    let fy = ConditionalFamily::new(fam.u_law.clone(), outs).unwrap();
    let iy = mutual_information(&fy, &output_distribution(w, px).unwrap()).unwrap();
    (ix, iy)
}

/// Independent singular values via nalgebra.
pub fn nalgebra_singular_values(rows: &[Vec<f64>]) -> Vec<f64> {
    let (r, c) = (rows.len(), rows[0].len());
    let m = nalgebra::DMatrix::from_fn(r, c, |i, j| rows[i][j]);
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}
