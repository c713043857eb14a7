//! Truth-to-estimate pipelines and the two built-in reproduction scenarios.

use std::f64::consts::PI;

use crate::estimators::{
    drift_state, CurrentFilter, FilterError, FilterSettings, FreeFilter, ReanchorPolicy, UpdateForm,
};
use crate::frames::{Rotation3, Vec3};
use crate::signals::{SampledSignal, SinusoidInput};
use crate::truth::{Model, NoiseDomain, NoiseSpec, ScenarioConfig, SignalSource, TruthTrace};

/// One row of filter output, `k = 0` holding the initial guess.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub k: usize,
    pub t: f64,
    pub xhat: Vec3,
    /// Current estimate; drift filter only.
    pub vfhat: Option<Vec3>,
    /// `‖x̂ − x‖` [m].
    pub err_norm: f64,
    /// `‖v̂_f − v_f‖` [m/s]; drift filter only.
    pub vf_err: Option<f64>,
    pub trace_p: f64,
}

/// Filter initialization and tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterSetup {
    pub xhat0: Vec3,
    /// Initial current guess; ignored by the drift-free filter.
    pub vfhat0: Vec3,
    pub settings: FilterSettings,
}

fn check_lengths(signal: &SampledSignal, trace: &TruthTrace) -> Result<(), FilterError> {
    if signal.len() != trace.len() {
        return Err(FilterError::LengthMismatch(trace.len(), signal.len()));
    }
    Ok(())
}

pub fn run_free(
    signal: &SampledSignal,
    trace: &TruthTrace,
    setup: &FilterSetup,
) -> Result<Vec<EstimateRow>, FilterError> {
    check_lengths(signal, trace)?;
    let mut filter = FreeFilter::new(setup.xhat0, setup.settings.clone(), trace.y[0], trace.ts)?;
    let row = |k: usize, f: &FreeFilter| EstimateRow {
        k,
        t: trace.time(k),
        xhat: f.state().xhat,
        vfhat: None,
        err_norm: (f.state().xhat - trace.x[k]).norm(),
        vf_err: None,
        trace_p: f.state().p.trace(),
    };
    let mut rows = Vec::with_capacity(trace.len());
    rows.push(row(0, &filter));
    for k in 1..trace.len() {
        filter.step(&signal.samples()[k], trace.y[k])?;
        rows.push(row(k, &filter));
    }
    Ok(rows)
}

/// Initial `ẑ` from position and current guesses: `r̂₀ = s − x̂₀`, `ẑ₄ = r̂₀ᵀv̂_f`, `ẑ₅ = ‖v̂_f‖²`.
pub fn initial_drift_state(beacon: &Vec3, xhat0: &Vec3, vfhat0: &Vec3) -> crate::estimators::Vec8 {
    let r0 = beacon - xhat0;
    drift_state(&r0, &r0, vfhat0)
}

pub fn run_current(
    signal: &SampledSignal,
    trace: &TruthTrace,
    beacon: &Vec3,
    true_current: &Vec3,
    setup: &FilterSetup,
) -> Result<Vec<EstimateRow>, FilterError> {
    check_lengths(signal, trace)?;
    let z0 = initial_drift_state(beacon, &setup.xhat0, &setup.vfhat0);
    let mut filter = CurrentFilter::new(z0, setup.settings.clone(), trace.y[0], trace.ts)?;
    let row = |k: usize, f: &CurrentFilter| {
        let xhat = beacon - f.relative_position();
        let vfhat = f.current();
        EstimateRow {
            k,
            t: trace.time(k),
            xhat,
            vfhat: Some(vfhat),
            err_norm: (xhat - trace.x[k]).norm(),
            vf_err: Some((vfhat - true_current).norm()),
            trace_p: f.state().p.trace(),
        }
    };
    let mut rows = Vec::with_capacity(trace.len());
    rows.push(row(0, &filter));
    for k in 1..trace.len() {
        filter.step(&signal.samples()[k], trace.y[k])?;
        rows.push(row(k, &filter));
    }
    Ok(rows)
}

/// Drift-free scenario: multi-harmonic input, beacon at the origin.
///
/// `n = (1,2,3)`, `ω = 0.01π` rad/s, 0.5 m/s peak per axis, `Ts = 0.01` s,
/// `x₀ = (25,25,25)`, `x̂₀ = (125,125,125)`, `Q = 1e-4 I`, `R = 1`. The run covers two
/// base periods (400 s).
pub fn free_experiment() -> (ScenarioConfig, FilterSetup) {
    let ts = 1e-2;
    let n0 = SinusoidInput::base_multiple(1e-2 * PI, ts).expect("commensurate");
    let input =
        SinusoidInput::from_max_speeds([0.5; 3], [1, 2, 3], ts, n0).expect("valid sinusoid");
    let cfg = ScenarioConfig {
        model: Model::Free,
        x0: Vec3::new(25.0, 25.0, 25.0),
        beacon: Vec3::zeros(),
        current: Vec3::zeros(),
        ts,
        steps: 2 * n0 as usize,
        input: SignalSource::Sinusoid(input),
        rotation: Rotation3::identity(),
        noise: NoiseSpec {
            state_cov: vec![1e-4; 3],
            output_var: 1.0,
            apply_to: NoiseDomain::SquaredRange,
            inject_state_noise: false,
        },
        seed: 20140831,
    };
    let setup = FilterSetup {
        xhat0: Vec3::new(125.0, 125.0, 125.0),
        vfhat0: Vec3::zeros(),
        settings: FilterSettings {
            p0_diag: vec![1e4; 3],
            q_diag: vec![1e-4; 3],
            r: 1.0,
            update: UpdateForm::Information,
            reanchor: ReanchorPolicy::never(),
        },
    };
    (cfg, setup)
}

/// Constant-current scenario: relative velocity `(2cos t, −4sin 2t, cos(t/2))`,
/// beacon `(2,3,1)`, zero true current, `x₀ = (2,2,0)`, `Ts = 1/750` s, 30 s run.
///
/// `Q = 1e-2 diag(1,1,1, 1e-4, 1e-6, 1e-2,1e-2,1e-2)`, `R = 1`,
/// `x̂₀ = (−30,20,30)`, `v̂_f = (0.1,−0.1,0.1)`.
pub fn current_experiment() -> (ScenarioConfig, FilterSetup) {
    let ts = 1.0 / 750.0;
    let q = [1.0, 1.0, 1.0, 1e-4, 1e-6, 1e-2, 1e-2, 1e-2].map(|v| 1e-2 * v);
    let cfg = ScenarioConfig {
        model: Model::Current,
        x0: Vec3::new(2.0, 2.0, 0.0),
        beacon: Vec3::new(2.0, 3.0, 1.0),
        current: Vec3::zeros(),
        ts,
        steps: 30 * 750,
        input: SignalSource::Literature,
        rotation: Rotation3::identity(),
        noise: NoiseSpec {
            state_cov: q.to_vec(),
            output_var: 1.0,
            apply_to: NoiseDomain::SquaredRange,
            inject_state_noise: false,
        },
        seed: 20130729,
    };
    let setup = FilterSetup {
        xhat0: Vec3::new(-30.0, 20.0, 30.0),
        vfhat0: Vec3::new(0.1, -0.1, 0.1),
        settings: FilterSettings {
            p0_diag: vec![1e3, 1e3, 1e3, 4.0, 1e-2, 1e-2, 1e-2, 1e-2],
            q_diag: q.to_vec(),
            r: 1.0,
            update: UpdateForm::Information,
            reanchor: ReanchorPolicy::never(),
        },
    };
    (cfg, setup)
}
