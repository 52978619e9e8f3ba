#![allow(dead_code)]

use ndarray::{Array1, Array2};
use noisecontrol::lindblad::ControlPulse;
use noisecontrol::linalg::{CMat, CVec, C64};
use noisecontrol::spinalg::{ModelSystem, Operator};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_hermitian(d: usize, rng: &mut ChaCha8Rng) -> CMat {
    let a = Array2::from_shape_fn((d, d), |_| C64::new(gauss(rng), gauss(rng)));
    let ah = a.t().mapv(|z| z.conj());
    (a + ah).mapv(|z| z * 0.5)
}

pub fn random_state(d: usize, rng: &mut ChaCha8Rng) -> CVec {
    let v: CVec = Array1::from_shape_fn(d, |_| C64::new(gauss(rng), gauss(rng)));
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.mapv(|z| z / n)
}

/// Random normalized amplitudes, each at least `floor` before normalization.
pub fn random_amplitudes(d: usize, floor: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| floor + rng.random::<f64>()).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

pub fn random_model(d: usize, k: usize, rng: &mut ChaCha8Rng) -> ModelSystem {
    let h0 = Operator::hermitian(random_hermitian(d, rng)).unwrap();
    let controls = (0..k).map(|_| Operator::hermitian(random_hermitian(d, rng)).unwrap()).collect();
    ModelSystem::new(h0, controls).unwrap()
}

pub fn random_pulse(n_seg: usize, k: usize, dt: f64, amp: f64, eta: f64, rng: &mut ChaCha8Rng) -> ControlPulse {
    let values = Array2::from_shape_fn((n_seg, k), |_| amp * (2.0 * rng.random::<f64>() - 1.0));
    ControlPulse::new(dt, values, eta).unwrap()
}
