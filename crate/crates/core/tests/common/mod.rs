#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rangeloc::signals::SinusoidInput;
use rangeloc::truth::{Model, NoiseSpec, ScenarioConfig, SignalSource};
use rangeloc::{Rotation3, Vec3};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

pub fn rotation(rng: &mut ChaCha8Rng) -> Rotation3 {
    let axis = unit(rng);
    Rotation3::about_axis(&axis, rng.random_range(0.0..std::f64::consts::TAU))
}

/// Noiseless drift-free scenario exciting the first `excited` body axes (0..=3),
/// rotated arbitrarily; `rotation · e_z` is normal to the motion when `excited == 2`.
pub fn random_free(rng: &mut ChaCha8Rng, excited: usize) -> ScenarioConfig {
    let ts = 0.01;
    let n0 = rng.random_range(200..=1000);
    let harmonics = loop {
        let h = [0; 3].map(|_| rng.random_range(1..=6u32));
        if h[0] != h[1] && h[1] != h[2] && h[0] != h[2] {
            break h;
        }
    };
    let amplitudes = [0, 1, 2].map(|i| {
        if i < excited {
            rng.random_range(0.2..2.0)
        } else {
            0.0
        }
    });
    ScenarioConfig {
        model: Model::Free,
        x0: Vec3::from_fn(|_, _| rng.random_range(-50.0..50.0)),
        beacon: Vec3::zeros(),
        current: Vec3::zeros(),
        ts,
        steps: rng.random_range(n0 / 2..=2 * n0) as usize,
        input: SignalSource::Sinusoid(SinusoidInput::new(amplitudes, harmonics, ts, n0).unwrap()),
        rotation: rotation(rng),
        noise: NoiseSpec::noiseless(),
        seed: rng.random(),
    }
}

/// As [`random_free`] but with a constant current and a random beacon.
pub fn random_current(rng: &mut ChaCha8Rng, excited: usize) -> ScenarioConfig {
    let mut cfg = random_free(rng, excited);
    cfg.model = Model::Current;
    cfg.beacon = Vec3::from_fn(|_, _| rng.random_range(-10.0..10.0));
    cfg.current = Vec3::from_fn(|_, _| rng.random_range(-0.5..0.5));
    cfg
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
