//! Velocity input signals and their running integral `I(t) = ∫₀ᵗ u(τ) dτ`.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("harmonics must be positive and pairwise distinct, got {0:?}")]
    Harmonics([u32; 3]),
    #[error("base period multiple n0 must be positive")]
    ZeroBasePeriod,
    #[error("sampling period must be positive and finite, got {0}")]
    SamplingPeriod(f64),
    #[error("omega {omega} does not correspond to an integer number of samples per base period (ts = {ts})")]
    OmegaNotCommensurate { omega: f64, ts: f64 },
    #[error("a sampled signal needs at least one sample")]
    Empty,
}

/// Multi-harmonic cosine velocity `u_i(t) = A_i n_i ω cos(n_i ω t)`.
///
/// With distinct harmonics and windows spanning whole base periods `T0 = n0 Ts`, the
/// integral components `A_i sin(n_i ω t)` are mutually orthogonal, which makes the
/// regression normal matrix diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinusoidInput {
    amplitudes: [f64; 3],
    harmonics: [u32; 3],
    ts: f64,
    n0: u64,
}

impl SinusoidInput {
    pub fn new(
        amplitudes: [f64; 3],
        harmonics: [u32; 3],
        ts: f64,
        n0: u64,
    ) -> Result<Self, SignalError> {
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(SignalError::SamplingPeriod(ts));
        }
        if n0 == 0 {
            return Err(SignalError::ZeroBasePeriod);
        }
        let [a, b, c] = harmonics;
        if a == 0 || b == 0 || c == 0 || a == b || b == c || a == c {
            return Err(SignalError::Harmonics(harmonics));
        }
        Ok(Self {
            amplitudes,
            harmonics,
            ts,
            n0,
        })
    }

    /// Builds the input from per-axis peak speeds `|A_i| n_i ω` instead of amplitudes.
    pub fn from_max_speeds(
        speeds: [f64; 3],
        harmonics: [u32; 3],
        ts: f64,
        n0: u64,
    ) -> Result<Self, SignalError> {
        let omega = TAU / (n0.max(1) as f64 * ts);
        let amplitudes = [0, 1, 2].map(|i| speeds[i] / (harmonics[i].max(1) as f64 * omega));
        Self::new(amplitudes, harmonics, ts, n0)
    }

    /// Recovers `n0` from a fundamental frequency; `2π / (ω Ts)` must be an integer.
    pub fn base_multiple(omega: f64, ts: f64) -> Result<u64, SignalError> {
        let samples = TAU / (omega * ts);
        let n0 = samples.round();
        if !samples.is_finite() || n0 < 1.0 || (samples - n0).abs() > 1e-6 * n0 {
            return Err(SignalError::OmegaNotCommensurate { omega, ts });
        }
        Ok(n0 as u64)
    }

    pub fn amplitudes(&self) -> [f64; 3] {
        self.amplitudes
    }

    pub fn harmonics(&self) -> [u32; 3] {
        self.harmonics
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    pub fn n0(&self) -> u64 {
        self.n0
    }

    pub fn omega(&self) -> f64 {
        TAU / self.base_period()
    }

    pub fn base_period(&self) -> f64 {
        self.n0 as f64 * self.ts
    }

    pub fn max_speeds(&self) -> [f64; 3] {
        let w = self.omega();
        [0, 1, 2].map(|i| self.amplitudes[i].abs() * self.harmonics[i] as f64 * w)
    }

    pub fn eval(&self, t: f64) -> Vec3 {
        let w = self.omega();
        Vec3::from_fn(|i, _| {
            let nw = self.harmonics[i] as f64 * w;
            self.amplitudes[i] * nw * (nw * t).cos()
        })
    }
}

/// `(2 cos t, −4 sin 2t, cos(t/2))` m/s, the relative velocity used by the
/// constant-current experiment.
pub fn eval_literature_profile(t: f64) -> Vec3 {
    Vec3::new(2.0 * t.cos(), -4.0 * (2.0 * t).sin(), (0.5 * t).cos())
}

/// Velocity samples `u(t_k)` at `t_k = k ts`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    ts: f64,
    samples: Vec<Vec3>,
}

impl SampledSignal {
    pub fn new(ts: f64, samples: Vec<Vec3>) -> Result<Self, SignalError> {
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(SignalError::SamplingPeriod(ts));
        }
        if samples.is_empty() {
            return Err(SignalError::Empty);
        }
        Ok(Self { ts, samples })
    }

    /// Samples `f` at `t_k = k ts` for `k = 0..len`.
    pub fn from_fn(ts: f64, len: usize, f: impl Fn(f64) -> Vec3) -> Result<Self, SignalError> {
        Self::new(ts, (0..len).map(|k| f(k as f64 * ts)).collect())
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    pub fn samples(&self) -> &[Vec3] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.ts
    }

    pub fn map(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        Self {
            ts: self.ts,
            samples: self.samples.iter().map(f).collect(),
        }
    }
}

/// Running integral of a sampled velocity; entry `k` holds `I_k`, with `I_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralTrace {
    ts: f64,
    values: Vec<Vec3>,
}

impl IntegralTrace {
    pub fn ts(&self) -> f64 {
        self.ts
    }

    pub fn values(&self) -> &[Vec3] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.ts
    }

    /// Displacement over step `k → k+1`, i.e. `I_{k+1} − I_k`.
    pub fn increment(&self, k: usize) -> Vec3 {
        self.values[k + 1] - self.values[k]
    }

    /// Index of the last sample at or before `t_end` (clamped to the trace).
    pub fn index_at(&self, t_end: f64) -> usize {
        let k = (t_end / self.ts + 1e-9).floor();
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(self.values.len() - 1)
        }
    }

    /// The same trace re-based at sample `k`: entry `j` holds `I_{k+j} − I_k`.
    pub fn rebased(&self, k: usize) -> Self {
        let origin = self.values[k];
        Self {
            ts: self.ts,
            values: self.values[k..].iter().map(|v| v - origin).collect(),
        }
    }
}

/// Zero-order-hold integration: `I_0 = 0`, `I_{k+1} = I_k + ts u(t_{k+1})`.
pub fn integrate(signal: &SampledSignal) -> IntegralTrace {
    let ts = signal.ts;
    let mut values = Vec::with_capacity(signal.samples.len());
    let mut acc = Vec3::zeros();
    values.push(acc);
    for u in &signal.samples[1..] {
        acc += u * ts;
        values.push(acc);
    }
    IntegralTrace { ts, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn reference_sinusoid() -> SinusoidInput {
        let n0 = SinusoidInput::base_multiple(1e-2 * PI, 1e-2).unwrap();
        SinusoidInput::from_max_speeds([0.5; 3], [1, 2, 3], 1e-2, n0).unwrap()
    }

    #[test]
    fn sinusoid_starts_at_peak_speed() {
        let s = reference_sinusoid();
        assert_eq!(s.n0(), 20_000);
        let u = s.eval(0.0);
        for i in 0..3 {
            assert!((u[i] - 0.5).abs() < 1e-12);
        }
        for (v, want) in s.max_speeds().iter().zip([0.5; 3]) {
            assert!((v - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_amplitude_is_zero() {
        let s = SinusoidInput::new([0.0; 3], [1, 2, 3], 0.01, 100).unwrap();
        for t in [0.0, 0.3, 17.0, 1e4] {
            assert_eq!(s.eval(t), Vec3::zeros());
        }
    }

    #[test]
    fn quarter_base_period_zero_on_first_axis() {
        let s = reference_sinusoid();
        assert!((s.omega() - 1e-2 * PI).abs() < 1e-15);
        assert!(s.eval(50.0)[0].abs() < 1e-12);
    }

    #[test]
    fn rejects_repeated_harmonics() {
        assert_eq!(
            SinusoidInput::new([1.0; 3], [1, 1, 3], 0.01, 10),
            Err(SignalError::Harmonics([1, 1, 3]))
        );
        assert!(SinusoidInput::new([1.0; 3], [0, 1, 3], 0.01, 10).is_err());
        assert_eq!(
            SinusoidInput::new([1.0; 3], [1, 2, 3], 0.01, 0),
            Err(SignalError::ZeroBasePeriod)
        );
        assert!(SinusoidInput::base_multiple(1.0, 0.01).is_err());
    }

    #[test]
    fn literature_profile_values() {
        assert_eq!(eval_literature_profile(0.0), Vec3::new(2.0, 0.0, 1.0));
        let a = eval_literature_profile(PI);
        assert!((a - Vec3::new(-2.0, 0.0, 0.0)).amax() < 1e-12);
        let b = eval_literature_profile(2.0 * PI);
        assert!((b - Vec3::new(2.0, 0.0, -1.0)).amax() < 1e-12);
    }

    #[test]
    fn integrate_constant() {
        let sig = SampledSignal::new(1.0, vec![Vec3::x(); 3]).unwrap();
        let tr = integrate(&sig);
        assert_eq!(
            tr.values(),
            &[
                Vec3::zeros(),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(2.0, 0.0, 0.0)
            ]
        );
    }

    #[test]
    fn integrate_zero() {
        let sig = SampledSignal::new(0.5, vec![Vec3::zeros(); 10]).unwrap();
        assert!(integrate(&sig).values().iter().all(|v| *v == Vec3::zeros()));
    }

    #[test]
    fn integrate_cosine_approaches_sine() {
        let ts = 1e-3;
        let len = (FRAC_PI_2 / ts).round() as usize + 1;
        let sig = SampledSignal::from_fn(ts, len, |t| Vec3::new(t.cos(), 0.0, 0.0)).unwrap();
        let tr = integrate(&sig);
        assert!((tr.values().last().unwrap().x - 1.0).abs() < 1e-3);
    }

    #[test]
    fn rejects_empty_or_bad_ts() {
        assert_eq!(SampledSignal::new(1.0, vec![]), Err(SignalError::Empty));
        assert!(SampledSignal::new(0.0, vec![Vec3::x()]).is_err());
    }

    #[test]
    fn rebased_trace_starts_at_zero() {
        let sig = SampledSignal::from_fn(0.1, 20, eval_literature_profile).unwrap();
        let tr = integrate(&sig);
        let rb = tr.rebased(5);
        assert_eq!(rb.values()[0], Vec3::zeros());
        assert_eq!(rb.len(), 15);
        assert!((rb.values()[3] - (tr.values()[8] - tr.values()[5])).amax() == 0.0);
        assert_eq!(tr.index_at(0.95), 9);
        assert_eq!(tr.index_at(1e9), 19);
    }

    proptest! {
        #[test]
        fn integrate_is_linear(
            alpha in -5.0..5.0f64,
            beta in -5.0..5.0f64,
            coeffs in proptest::collection::vec(-3.0..3.0f64, 6),
        ) {
            let ts = 0.01;
            let u = SampledSignal::from_fn(ts, 200, |t| {
                Vec3::new((coeffs[0] * t).sin(), coeffs[1] * t, (coeffs[2] * t).cos())
            }).unwrap();
            let w = SampledSignal::from_fn(ts, 200, |t| {
                Vec3::new(coeffs[3], (coeffs[4] * t).cos(), coeffs[5] * t * t)
            }).unwrap();
            let combo = SampledSignal::new(
                ts,
                u.samples().iter().zip(w.samples()).map(|(a, b)| a * alpha + b * beta).collect(),
            ).unwrap();
            let lhs = integrate(&combo);
            let (iu, iw) = (integrate(&u), integrate(&w));
            for k in 0..lhs.len() {
                let rhs = iu.values()[k] * alpha + iw.values()[k] * beta;
                let scale = (iu.values()[k].norm() * alpha.abs() + iw.values()[k].norm() * beta.abs()).max(1e-300);
                prop_assert!((lhs.values()[k] - rhs).norm() <= 1e-12 * scale.max(1.0));
            }
        }
    }
}
