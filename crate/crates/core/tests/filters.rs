use rangeloc::estimators::{
    derived_output, output_row_current, CurrentFilter, FreeFilter, OutputForm, UpdateForm,
};
use rangeloc::experiment::{
    current_experiment, free_experiment, initial_drift_state, run_current, run_free, EstimateRow,
};
use rangeloc::truth::{simulate, Model, ScenarioConfig, Simulation};
use rangeloc::Vec3;

/// Built-in scenario with noise switched off and `Q = 0` in the filter.
fn noiseless(model: Model) -> (ScenarioConfig, rangeloc::experiment::FilterSetup) {
    let (mut cfg, mut setup) = match model {
        Model::Free => free_experiment(),
        Model::Current => current_experiment(),
    };
    cfg.noise.output_var = 0.0;
    cfg.noise.state_cov.iter_mut().for_each(|q| *q = 0.0);
    setup.settings.q_diag.iter_mut().for_each(|q| *q = 0.0);
    (cfg, setup)
}

fn run(
    model: Model,
    cfg: &ScenarioConfig,
    sim: &Simulation,
    setup: &rangeloc::experiment::FilterSetup,
) -> Vec<EstimateRow> {
    match model {
        Model::Free => run_free(&sim.signal, &sim.trace, setup).unwrap(),
        Model::Current => {
            run_current(&sim.signal, &sim.trace, &cfg.beacon, &cfg.current, setup).unwrap()
        }
    }
}

#[test]
fn noiseless_runs_converge_to_a_thousandth_of_initial_error() {
    for model in [Model::Free, Model::Current] {
        let (cfg, setup) = noiseless(model);
        let sim = simulate(&cfg).unwrap();
        let rows = run(model, &cfg, &sim, &setup);
        let (first, last) = (rows[0].err_norm, rows.last().unwrap().err_norm);
        assert!(last <= 1e-3 * first, "{model:?}: {first} -> {last}");
    }
}

#[test]
fn free_reproduction_drops_below_five_metres() {
    let (cfg, setup) = free_experiment();
    let sim = simulate(&cfg).unwrap();
    let rows = run_free(&sim.signal, &sim.trace, &setup).unwrap();
    assert!((rows[0].err_norm - 173.205).abs() < 1e-3);
    assert!(rows.last().unwrap().err_norm < 5.0);
}

#[test]
fn covariance_stays_symmetric_before_symmetrization() {
    let (mut cfg, setup) = current_experiment();
    cfg.steps = 3000;
    let sim = simulate(&cfg).unwrap();
    let z0 = initial_drift_state(&cfg.beacon, &setup.xhat0, &setup.vfhat0);
    for update in [UpdateForm::Information, UpdateForm::Joseph] {
        let mut settings = setup.settings.clone();
        settings.update = update;
        let mut f = CurrentFilter::new(z0, settings, sim.trace.y[0], cfg.ts).unwrap();
        for k in 1..sim.trace.len() {
            let s = f.step(&sim.signal.samples()[k], sim.trace.y[k]).unwrap();
            assert!(s.asymmetry <= 1e-10, "{update:?} step {k}: {}", s.asymmetry);
            assert!(s.is_positive_definite());
        }
    }
}

#[test]
fn update_forms_agree_on_the_free_scenario() {
    let (mut cfg, setup) = free_experiment();
    cfg.steps = 5000;
    let sim = simulate(&cfg).unwrap();
    let info = run_free(&sim.signal, &sim.trace, &setup).unwrap();
    let mut joseph = setup.clone();
    joseph.settings.update = UpdateForm::Joseph;
    let jos = run_free(&sim.signal, &sim.trace, &joseph).unwrap();
    for (a, b) in info.iter().zip(&jos) {
        assert!(
            (a.xhat - b.xhat).norm() <= 1e-8 * a.xhat.norm(),
            "step {}",
            a.k
        );
    }
}

#[test]
fn innovation_vanishes_on_noiseless_data() {
    let (cfg, setup) = noiseless(Model::Current);
    let sim = simulate(&cfg).unwrap();
    let z0 = initial_drift_state(&cfg.beacon, &setup.xhat0, &setup.vfhat0);
    let mut f = CurrentFilter::new(z0, setup.settings.clone(), sim.trace.y[0], cfg.ts).unwrap();
    let mut innovation = Vec::new();
    let mut i = Vec3::zeros();
    for k in 1..sim.trace.len() {
        let v = sim.signal.samples()[k];
        i += v * cfg.ts;
        let z_pred = f.system().ad * f.state().xhat + f.system().bd * v;
        let ybar = derived_output(OutputForm::Drift, sim.trace.y[k], sim.trace.y[0], &i);
        innovation.push((ybar - output_row_current(&i, sim.trace.time(k)).dot(&z_pred)).abs());
        f.step(&v, sim.trace.y[k]).unwrap();
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let second = 750;
    let (early, late) = (
        mean(&innovation[..second]),
        mean(&innovation[innovation.len() - second..]),
    );
    assert!(late <= 1e-3 * early, "{early} -> {late}");
}

#[test]
fn anchoring_every_step_keeps_an_exact_estimate_exact() {
    // Started at the truth on noiseless data, the innovation is zero whatever the
    // anchor, so anchored and unanchored runs must both track the truth.
    for model in [Model::Free, Model::Current] {
        let (mut cfg, mut setup) = noiseless(model);
        cfg.steps = 2000;
        setup.xhat0 = cfg.x0;
        setup.vfhat0 = cfg.current;
        let sim = simulate(&cfg).unwrap();
        let plain = run(model, &cfg, &sim, &setup);
        setup.settings.reanchor.every = 1;
        let anchored = run(model, &cfg, &sim, &setup);
        for (a, b) in plain.iter().zip(&anchored) {
            let scale = sim.trace.x[a.k].norm().max(1.0);
            assert!(
                (a.xhat - b.xhat).norm() <= 1e-8 * scale,
                "{model:?} step {}",
                a.k
            );
            assert!(a.err_norm <= 1e-8 * scale);
        }
    }
}

#[test]
fn anchoring_at_step_zero_is_the_identity() {
    let (mut cfg, setup) = free_experiment();
    cfg.steps = 500;
    let sim = simulate(&cfg).unwrap();
    let mut a =
        FreeFilter::new(setup.xhat0, setup.settings.clone(), sim.trace.y[0], cfg.ts).unwrap();
    let mut b = a.clone();
    b.reanchor(sim.trace.y[0], 0);
    assert_eq!(a.output(), b.output());
    for k in 1..sim.trace.len() {
        let u = sim.signal.samples()[k];
        a.step(&u, sim.trace.y[k]).unwrap();
        b.step(&u, sim.trace.y[k]).unwrap();
    }
    assert_eq!(a.state(), b.state());

    let (cfg, setup) = current_experiment();
    let z0 = initial_drift_state(&cfg.beacon, &setup.xhat0, &setup.vfhat0);
    let a = CurrentFilter::new(z0, setup.settings.clone(), 10.0, cfg.ts).unwrap();
    let mut b = a.clone();
    b.reanchor(10.0, 0);
    assert_eq!(a.state(), b.state());
    assert_eq!(a.output(), b.output());
}

#[test]
fn reanchoring_removes_an_initial_outlier_bias() {
    for model in [Model::Free, Model::Current] {
        let (cfg, mut setup) = noiseless(model);
        let mut sim = simulate(&cfg).unwrap();
        sim.trace.y[0] += 500.0;
        let biased = run(model, &cfg, &sim, &setup).last().unwrap().err_norm;
        setup.settings.reanchor.at = vec![10];
        let recovered = run(model, &cfg, &sim, &setup).last().unwrap().err_norm;
        assert!(
            recovered * 100.0 < biased,
            "{model:?}: {biased} vs {recovered}"
        );
        assert!(
            biased > 1e-2,
            "{model:?}: outlier had no visible effect ({biased})"
        );
    }
}
