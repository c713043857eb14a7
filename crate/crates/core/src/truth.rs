//! Ground-truth kinematics and noisy squared-range measurements.
//!
//! Two models are simulated on the same zero-order-hold grid the filters use:
//!
//! * drift-free: `ẋ = u`, `y = ‖x‖²` (beacon at the origin);
//! * constant current: `ṙ = −v_f − v_r`, `y = ‖r‖²` with `r = s − x`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{to_inertial, Rotation3, Vec3};
use crate::signals::{
    eval_literature_profile, integrate, IntegralTrace, SampledSignal, SignalError, SinusoidInput,
};

/// RNG stream carrying output noise `ε_k` / `η_k`.
pub const OUTPUT_NOISE_CHANNEL: u64 = 0;
/// RNG stream carrying optional state noise `ω_k`.
pub const STATE_NOISE_CHANNEL: u64 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TruthError {
    #[error("sampling period ts must be positive and finite, got {0}")]
    SamplingPeriod(f64),
    #[error("steps must be at least 1")]
    NoSteps,
    #[error("noise variance {name} must be finite and non-negative, got {value}")]
    Variance { name: &'static str, value: f64 },
    #[error("state_cov must have 3 or 8 entries, got {0}")]
    StateCovLength(usize),
    #[error("the drift-free model requires a zero current, got {0:?}")]
    NonZeroCurrent([f64; 3]),
    #[error("sampled input has {have} samples, the scenario needs {need}")]
    ShortInput { have: usize, need: usize },
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    /// Beacon at the origin, no current.
    Free,
    /// Beacon at `s`, constant unknown current `v_f`.
    Current,
}

/// Which quantity the additive output noise perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDomain {
    /// `y = ‖r‖² + ε`, `ε ~ N(0, R)` with `R` in m⁴.
    #[default]
    SquaredRange,
    /// `y = (‖r‖ + η)²`, `η ~ N(0, R)` with `R` in m².
    Range,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Diagonal of the per-step state covariance `Q` (3 entries, or 8 for the drift state).
    pub state_cov: Vec<f64>,
    /// Variance `R` of the additive output noise.
    pub output_var: f64,
    pub apply_to: NoiseDomain,
    /// Perturb the true trajectory with `ω_k ~ N(0, Q_pos)`. Off by default.
    pub inject_state_noise: bool,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self {
            state_cov: vec![0.0; 3],
            output_var: 0.0,
            apply_to: NoiseDomain::SquaredRange,
            inject_state_noise: false,
        }
    }

    pub fn validate(&self) -> Result<(), TruthError> {
        if self.state_cov.len() != 3 && self.state_cov.len() != 8 {
            return Err(TruthError::StateCovLength(self.state_cov.len()));
        }
        for &value in &self.state_cov {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(TruthError::Variance {
                    name: "state_cov",
                    value,
                });
            }
        }
        if !(self.output_var >= 0.0 && self.output_var.is_finite()) {
            return Err(TruthError::Variance {
                name: "output_var",
                value: self.output_var,
            });
        }
        Ok(())
    }
}

/// Where the body-frame relative velocity comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum SignalSource {
    Sinusoid(SinusoidInput),
    Literature,
    Constant(Vec3),
    /// Pre-sampled velocities at `t_k = k ts`, e.g. loaded from a CSV file.
    Samples(Vec<Vec3>),
}

impl SignalSource {
    pub fn eval(&self, k: usize, ts: f64) -> Vec3 {
        let t = k as f64 * ts;
        match self {
            SignalSource::Sinusoid(s) => s.eval(t),
            SignalSource::Literature => eval_literature_profile(t),
            SignalSource::Constant(v) => *v,
            SignalSource::Samples(samples) => samples[k],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub model: Model,
    /// Initial agent position `x₀` [m].
    pub x0: Vec3,
    /// Beacon position `s` [m]; only used by [`Model::Current`].
    pub beacon: Vec3,
    /// True current `v_f` [m/s].
    pub current: Vec3,
    pub ts: f64,
    pub steps: usize,
    pub input: SignalSource,
    /// Body-to-inertial attitude applied to the input samples.
    pub rotation: Rotation3,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), TruthError> {
        if !(self.ts > 0.0 && self.ts.is_finite()) {
            return Err(TruthError::SamplingPeriod(self.ts));
        }
        if self.steps == 0 {
            return Err(TruthError::NoSteps);
        }
        if let SignalSource::Samples(s) = &self.input {
            if s.len() < self.steps + 1 {
                return Err(TruthError::ShortInput {
                    have: s.len(),
                    need: self.steps + 1,
                });
            }
        }
        self.noise.validate()
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    /// Always false: a scenario has at least the initial sample.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t_end(&self) -> f64 {
        self.steps as f64 * self.ts
    }

    /// Inertial-frame velocity samples `R u_body(t_k)`, `k = 0..=steps`.
    pub fn velocity_signal(&self) -> Result<SampledSignal, TruthError> {
        self.validate()?;
        let samples = (0..self.len())
            .map(|k| to_inertial(&self.rotation, &self.input.eval(k, self.ts)))
            .collect();
        Ok(SampledSignal::new(self.ts, samples)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthTrace {
    pub ts: f64,
    pub x: Vec<Vec3>,
    /// Relative position `s − x`; empty for the drift-free model.
    pub r: Vec<Vec3>,
    pub y: Vec<f64>,
    pub y_clean: Vec<f64>,
    /// Samples whose noisy range went negative and was clamped to zero.
    pub clamped: usize,
}

impl TruthTrace {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.ts
    }
}

/// Everything one scenario run produces.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub signal: SampledSignal,
    pub integral: IntegralTrace,
    pub trace: TruthTrace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub y: Vec<f64>,
    pub clamped: usize,
}

fn channel_rng(seed: u64, channel: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(channel);
    rng
}

/// Adds output noise to clean squared ranges. Reproducible for a given seed.
pub fn measure(y_clean: &[f64], noise: &NoiseSpec, seed: u64) -> Measurements {
    if noise.output_var == 0.0 {
        return Measurements {
            y: y_clean.to_vec(),
            clamped: 0,
        };
    }
    let mut rng = channel_rng(seed, OUTPUT_NOISE_CHANNEL);
    let normal = Normal::new(0.0, noise.output_var.sqrt()).expect("validated variance");
    let mut clamped = 0;
    let y = y_clean
        .iter()
        .map(|&yc| {
            let e: f64 = normal.sample(&mut rng);
            match noise.apply_to {
                NoiseDomain::SquaredRange => yc + e,
                NoiseDomain::Range => {
                    let range = yc.sqrt() + e;
                    if range < 0.0 {
                        clamped += 1;
                        0.0
                    } else {
                        range * range
                    }
                }
            }
        })
        .collect();
    Measurements { y, clamped }
}

struct StateNoise {
    rng: Option<(ChaCha8Rng, [Normal<f64>; 3])>,
}

impl StateNoise {
    fn new(cfg: &ScenarioConfig) -> Self {
        if !cfg.noise.inject_state_noise {
            return Self { rng: None };
        }
        let sd = [0, 1, 2]
            .map(|i| Normal::new(0.0, cfg.noise.state_cov[i].sqrt()).expect("validated variance"));
        Self {
            rng: Some((channel_rng(cfg.seed, STATE_NOISE_CHANNEL), sd)),
        }
    }

    fn draw(&mut self) -> Vec3 {
        match &mut self.rng {
            None => Vec3::zeros(),
            Some((rng, sd)) => Vec3::new(sd[0].sample(rng), sd[1].sample(rng), sd[2].sample(rng)),
        }
    }
}

fn finish(cfg: &ScenarioConfig, x: Vec<Vec3>, r: Vec<Vec3>, y_clean: Vec<f64>) -> TruthTrace {
    let m = measure(&y_clean, &cfg.noise, cfg.seed);
    TruthTrace {
        ts: cfg.ts,
        x,
        r,
        y: m.y,
        y_clean,
        clamped: m.clamped,
    }
}

/// Drift-free truth: `x_k = x₀ + I_k` (plus optional state noise), `y = ‖x‖² + ε`.
pub fn propagate_free(cfg: &ScenarioConfig) -> Result<TruthTrace, TruthError> {
    if cfg.current != Vec3::zeros() {
        return Err(TruthError::NonZeroCurrent(cfg.current.into()));
    }
    let signal = cfg.velocity_signal()?;
    let integral = integrate(&signal);
    let mut noise = StateNoise::new(cfg);
    let mut x = Vec::with_capacity(cfg.len());
    let mut drift = Vec3::zeros();
    for (k, i_k) in integral.values().iter().enumerate() {
        if k > 0 {
            drift += noise.draw();
        }
        x.push(cfg.x0 + i_k + drift);
    }
    let y_clean = x.iter().map(|p| p.norm_squared()).collect();
    Ok(finish(cfg, x, Vec::new(), y_clean))
}

/// Constant-current truth: `r_{k+1} = r_k − ts (v_f + v_r(t_{k+1}))`, `x = s − r`.
pub fn propagate_current(cfg: &ScenarioConfig) -> Result<TruthTrace, TruthError> {
    let signal = cfg.velocity_signal()?;
    let mut noise = StateNoise::new(cfg);
    let mut r = Vec::with_capacity(cfg.len());
    let mut rk = cfg.beacon - cfg.x0;
    r.push(rk);
    for v_r in &signal.samples()[1..] {
        rk -= (cfg.current + v_r) * cfg.ts + noise.draw();
        r.push(rk);
    }
    let x = r.iter().map(|rk| cfg.beacon - rk).collect();
    let y_clean = r.iter().map(|rk| rk.norm_squared()).collect();
    Ok(finish(cfg, x, r, y_clean))
}

/// Runs the model selected by `cfg.model`.
pub fn simulate(cfg: &ScenarioConfig) -> Result<Simulation, TruthError> {
    let signal = cfg.velocity_signal()?;
    let integral = integrate(&signal);
    let trace = match cfg.model {
        Model::Free => propagate_free(cfg)?,
        Model::Current => propagate_current(cfg)?,
    };
    Ok(Simulation {
        signal,
        integral,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(model: Model, input: SignalSource) -> ScenarioConfig {
        ScenarioConfig {
            model,
            x0: Vec3::new(25.0, 25.0, 25.0),
            beacon: Vec3::zeros(),
            current: Vec3::zeros(),
            ts: 1.0,
            steps: 10,
            input,
            rotation: Rotation3::identity(),
            noise: NoiseSpec::noiseless(),
            seed: 42,
        }
    }

    #[test]
    fn stationary_agent() {
        let cfg = base(Model::Free, SignalSource::Constant(Vec3::zeros()));
        let tr = propagate_free(&cfg).unwrap();
        assert!(tr.x.iter().all(|x| *x == cfg.x0));
        assert!(tr.y_clean.iter().all(|&y| y == 1875.0));
        assert_eq!(tr.y[0], 1875.0);
    }

    #[test]
    fn free_model_rejects_current() {
        let mut cfg = base(Model::Free, SignalSource::Literature);
        cfg.current = Vec3::new(0.1, 0.0, 0.0);
        assert!(matches!(
            propagate_free(&cfg),
            Err(TruthError::NonZeroCurrent(_))
        ));
    }

    // The right-endpoint rectangle rule deviates from the analytic integral by at most
    // ts/2 · |v(t) − v(0)| + O(ts²); for this profile that is below 4 ts/2 + ts².
    fn zoh_bound(ts: f64) -> f64 {
        2.0 * ts + ts * ts * 10.0
    }

    fn literature_closed_form(t: f64) -> Vec3 {
        Vec3::new(
            2.0 + 2.0 * t.sin(),
            2.0 * (2.0 * t).cos(),
            2.0 * (0.5 * t).sin(),
        )
    }

    #[test]
    fn free_literature_matches_closed_form() {
        let mut cfg = base(Model::Free, SignalSource::Literature);
        cfg.x0 = Vec3::new(2.0, 2.0, 0.0);
        cfg.ts = 1.0 / 750.0;
        cfg.steps = 750 * 10;
        let tr = propagate_free(&cfg).unwrap();
        for (k, x) in tr.x.iter().enumerate() {
            assert!((x - literature_closed_form(tr.time(k))).amax() <= zoh_bound(cfg.ts));
        }
    }

    #[test]
    fn current_literature_matches_closed_form() {
        let mut cfg = base(Model::Current, SignalSource::Literature);
        cfg.x0 = Vec3::new(2.0, 2.0, 0.0);
        cfg.beacon = Vec3::new(2.0, 3.0, 1.0);
        cfg.ts = 1.0 / 750.0;
        cfg.steps = 750 * 10;
        let tr = propagate_current(&cfg).unwrap();
        let mut worst: f64 = 0.0;
        for (k, x) in tr.x.iter().enumerate() {
            worst = worst.max((x - literature_closed_form(tr.time(k))).amax());
            assert_eq!(tr.y_clean[k], tr.r[k].norm_squared());
        }
        assert!(worst <= zoh_bound(cfg.ts), "worst deviation {worst}");
    }

    #[test]
    fn static_current_case_is_constant() {
        let mut cfg = base(Model::Current, SignalSource::Constant(Vec3::zeros()));
        cfg.beacon = Vec3::new(1.0, 2.0, 3.0);
        let tr = propagate_current(&cfg).unwrap();
        assert!(tr.r.iter().all(|r| *r == tr.r[0]));
        assert!(tr.y_clean.iter().all(|&y| y == tr.y_clean[0]));
    }

    #[test]
    fn linear_drift() {
        let mut cfg = base(Model::Current, SignalSource::Constant(Vec3::zeros()));
        cfg.current = Vec3::new(0.1, 0.0, 0.0);
        let tr = propagate_current(&cfg).unwrap();
        assert!((tr.r[10] - (tr.r[0] - Vec3::x())).amax() < 1e-12);
    }

    #[test]
    fn noiseless_measurement_is_clean() {
        let y = vec![1.0, 2.0, 3.0];
        assert_eq!(measure(&y, &NoiseSpec::noiseless(), 1).y, y);
    }

    #[test]
    fn measurement_is_deterministic() {
        let noise = NoiseSpec {
            output_var: 1.0,
            ..NoiseSpec::noiseless()
        };
        let y = vec![10.0; 1000];
        let a = measure(&y, &noise, 99);
        assert_eq!(a, measure(&y, &noise, 99));
        assert_ne!(a, measure(&y, &noise, 100));
    }

    #[test]
    fn measurement_variance_matches_config() {
        let noise = NoiseSpec {
            output_var: 1.0,
            ..NoiseSpec::noiseless()
        };
        let n = 100_000;
        let y_clean = vec![5.0; n];
        let y = measure(&y_clean, &noise, 2024).y;
        let d: Vec<f64> = y.iter().zip(&y_clean).map(|(a, b)| a - b).collect();
        let mean = d.iter().sum::<f64>() / n as f64;
        let var = d.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 1.0).abs() < 0.02, "sample variance {var}");
    }

    #[test]
    fn range_noise_clamps_negative_ranges() {
        let noise = NoiseSpec {
            output_var: 1.0,
            apply_to: NoiseDomain::Range,
            ..NoiseSpec::noiseless()
        };
        let m = measure(&vec![1e-4; 2000], &noise, 5);
        assert!(m.clamped > 500);
        assert!(m.y.iter().all(|&y| y >= 0.0));
        assert_eq!(m.y.iter().filter(|&&y| y == 0.0).count(), m.clamped);
    }

    #[test]
    fn state_noise_only_when_enabled() {
        let mut cfg = base(Model::Free, SignalSource::Literature);
        cfg.noise.state_cov = vec![1e-2; 3];
        let quiet = propagate_free(&cfg).unwrap();
        cfg.noise.inject_state_noise = true;
        let noisy = propagate_free(&cfg).unwrap();
        assert_eq!(quiet.x[0], noisy.x[0]);
        assert_ne!(quiet.x[5], noisy.x[5]);
        assert_eq!(noisy, propagate_free(&cfg).unwrap());
    }

    #[test]
    fn validation_errors() {
        let mut cfg = base(Model::Free, SignalSource::Literature);
        cfg.ts = 0.0;
        assert_eq!(cfg.validate(), Err(TruthError::SamplingPeriod(0.0)));
        cfg.ts = 1.0;
        cfg.steps = 0;
        assert_eq!(cfg.validate(), Err(TruthError::NoSteps));
        cfg.steps = 3;
        cfg.noise.state_cov = vec![1.0; 4];
        assert_eq!(cfg.validate(), Err(TruthError::StateCovLength(4)));
        cfg.noise.state_cov = vec![1.0; 3];
        cfg.noise.output_var = -1.0;
        assert!(matches!(cfg.validate(), Err(TruthError::Variance { .. })));
        cfg.noise.output_var = 0.0;
        cfg.input = SignalSource::Samples(vec![Vec3::zeros(); 2]);
        assert_eq!(
            cfg.validate(),
            Err(TruthError::ShortInput { have: 2, need: 4 })
        );
    }
}
