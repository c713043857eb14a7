//! Scenario files.
//!
//! A scenario is a TOML document: top-level kinematics and sampling, plus `[input]`,
//! `[noise]`, `[filter]` and `[analysis]` sections; the README documents every key.

use std::path::{Path, PathBuf};

use rangeloc::estimators::{FilterSettings, ReanchorPolicy, UpdateForm};
use rangeloc::experiment::FilterSetup;
use rangeloc::signals::SinusoidInput;
use rangeloc::truth::{Model, NoiseDomain, NoiseSpec, ScenarioConfig, SignalSource};
use rangeloc::{Rotation3, Vec3};
use serde::{Deserialize, Serialize};

use crate::error::{io_error, CliError};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<Model>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ts: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beacon: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub current: Option<[f64; 3]>,
    /// Body-to-inertial rotation, 9 numbers row-major.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rotation: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<RawInput>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<RawNoise>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<RawFilter>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analysis: Option<RawAnalysis>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInput {
    pub kind: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_speed: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub harmonics: Option<[u32; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n0: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub velocity: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNoise {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_cov: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_var: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub apply_to: Option<NoiseDomain>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inject_state_noise: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFilter {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xhat0: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vfhat0: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p0_diag: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_diag: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reanchor_every: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reanchor_at: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joseph_update: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAnalysis {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank_tol: Option<f64>,
}

/// Input velocity source as written in the file; CSV paths stay unresolved here.
#[derive(Debug, Clone, PartialEq)]
pub enum InputConfig {
    Sinusoid(SinusoidInput),
    Literature,
    Constant(Vec3),
    Csv(PathBuf),
}

/// A validated scenario file.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub model: Model,
    pub ts: f64,
    pub steps: usize,
    pub seed: u64,
    pub x0: Vec3,
    pub beacon: Vec3,
    pub current: Vec3,
    pub rotation: Rotation3,
    pub input: InputConfig,
    pub noise: NoiseSpec,
    pub filter: Option<FilterSetup>,
    pub rank_tol: Option<f64>,
}

fn invalid(field: &str, msg: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.to_string(),
        message: msg.into(),
    }
}

fn required<T>(value: Option<T>, field: &str) -> Result<T, CliError> {
    value.ok_or_else(|| invalid(field, "required"))
}

fn positive_finite(value: f64, field: &str) -> Result<f64, CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(invalid(
            field,
            format!("must be positive and finite, got {value}"),
        ))
    }
}

fn finite3(v: [f64; 3], field: &str) -> Result<Vec3, CliError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(Vec3::from(v))
    } else {
        Err(invalid(field, "entries must be finite"))
    }
}

fn variances(v: &[f64], field: &str) -> Result<(), CliError> {
    if v.iter().all(|x| x.is_finite() && *x >= 0.0) {
        Ok(())
    } else {
        Err(invalid(field, "entries must be finite and non-negative"))
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| CliError::Parse(e.message().to_string()))?;
        Self::from_raw(raw)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        Self::parse(&text)
    }

    pub fn from_raw(raw: RawConfig) -> Result<Self, CliError> {
        let model = raw.model.unwrap_or(Model::Free);
        let ts = positive_finite(required(raw.ts, "ts")?, "ts")?;
        let steps = required(raw.steps, "steps")?;
        if steps == 0 {
            return Err(invalid("steps", "must be at least 1"));
        }
        let x0 = finite3(required(raw.x0, "x0")?, "x0")?;
        let beacon = finite3(raw.beacon.unwrap_or([0.0; 3]), "beacon")?;
        let current = finite3(raw.current.unwrap_or([0.0; 3]), "current")?;
        if model == Model::Free && current != Vec3::zeros() {
            return Err(invalid("current", "must be zero for model = \"free\""));
        }
        if model == Model::Free && beacon != Vec3::zeros() {
            return Err(invalid(
                "beacon",
                "the drift-free model places the beacon at the origin",
            ));
        }
        let rotation = match raw.rotation {
            None => Rotation3::identity(),
            Some(v) => {
                let rows: [f64; 9] = v.try_into().map_err(|v: Vec<f64>| {
                    invalid("rotation", format!("expected 9 numbers, got {}", v.len()))
                })?;
                Rotation3::from_row_major(rows).map_err(|e| invalid("rotation", e.to_string()))?
            }
        };
        let input = Self::input_from_raw(required(raw.input, "input")?, ts)?;

        let noise_raw = raw.noise.unwrap_or_default();
        let state_len = if model == Model::Free { 3 } else { 8 };
        let state_cov = noise_raw.state_cov.unwrap_or_else(|| vec![0.0; state_len]);
        if state_cov.len() != 3 && state_cov.len() != 8 {
            return Err(invalid(
                "noise.state_cov",
                format!("expected 3 or 8 entries, got {}", state_cov.len()),
            ));
        }
        variances(&state_cov, "noise.state_cov")?;
        let output_var = noise_raw.output_var.unwrap_or(0.0);
        variances(&[output_var], "noise.output_var")?;
        let noise = NoiseSpec {
            state_cov,
            output_var,
            apply_to: noise_raw.apply_to.unwrap_or_default(),
            inject_state_noise: noise_raw.inject_state_noise.unwrap_or(false),
        };

        let filter = raw
            .filter
            .map(|f| Self::filter_from_raw(f, model, &noise))
            .transpose()?;
        let rank_tol = match raw.analysis.and_then(|a| a.rank_tol) {
            Some(tol) => Some(positive_finite(tol, "analysis.rank_tol")?),
            None => None,
        };

        Ok(Self {
            model,
            ts,
            steps: steps as usize,
            seed: raw.seed.unwrap_or(0),
            x0,
            beacon,
            current,
            rotation,
            input,
            noise,
            filter,
            rank_tol,
        })
    }

    fn input_from_raw(raw: RawInput, ts: f64) -> Result<InputConfig, CliError> {
        let kind = required(raw.kind, "input.kind")?;
        match kind.as_str() {
            "sinusoid" => {
                let harmonics = required(raw.harmonics, "input.harmonics")?;
                let n0 = match (raw.n0, raw.omega) {
                    (Some(n0), _) => n0,
                    (None, Some(omega)) => SinusoidInput::base_multiple(omega, ts)
                        .map_err(|e| invalid("input.omega", e.to_string()))?,
                    (None, None) => return Err(invalid("input.omega", "required (or input.n0)")),
                };
                let built = match (raw.amplitudes, raw.max_speed) {
                    (Some(a), None) => SinusoidInput::new(a, harmonics, ts, n0),
                    (None, Some(s)) => SinusoidInput::from_max_speeds(s, harmonics, ts, n0),
                    (Some(_), Some(_)) => {
                        return Err(invalid(
                            "input.amplitudes",
                            "give either amplitudes or max_speed, not both",
                        ))
                    }
                    (None, None) => {
                        return Err(invalid("input.amplitudes", "required (or input.max_speed)"))
                    }
                };
                built
                    .map(InputConfig::Sinusoid)
                    .map_err(|e| invalid("input", e.to_string()))
            }
            "literature" => Ok(InputConfig::Literature),
            "constant" => Ok(InputConfig::Constant(finite3(
                required(raw.velocity, "input.velocity")?,
                "input.velocity",
            )?)),
            "csv" => Ok(InputConfig::Csv(required(raw.path, "input.path")?)),
            other => Err(invalid(
                "input.kind",
                format!("unknown kind {other:?} (expected sinusoid, literature, constant or csv)"),
            )),
        }
    }

    fn filter_from_raw(
        raw: RawFilter,
        model: Model,
        noise: &NoiseSpec,
    ) -> Result<FilterSetup, CliError> {
        let dim = if model == Model::Free { 3 } else { 8 };
        let xhat0 = finite3(required(raw.xhat0, "filter.xhat0")?, "filter.xhat0")?;
        let vfhat0 = finite3(raw.vfhat0.unwrap_or([0.0; 3]), "filter.vfhat0")?;
        let p0_diag = required(raw.p0_diag, "filter.p0_diag")?;
        let q_diag = raw.q_diag.unwrap_or_else(|| noise.state_cov.clone());
        for (field, v) in [("filter.p0_diag", &p0_diag), ("filter.q_diag", &q_diag)] {
            if v.len() != dim {
                return Err(invalid(
                    field,
                    format!("expected {dim} entries, got {}", v.len()),
                ));
            }
            variances(v, field)?;
        }
        if p0_diag.contains(&0.0) {
            return Err(invalid("filter.p0_diag", "entries must be positive"));
        }
        let r = raw.r.unwrap_or(noise.output_var);
        if r.is_nan() || r <= 0.0 {
            return Err(invalid("filter.r", format!("must be positive, got {r}")));
        }
        let update = if raw.joseph_update.unwrap_or(false) {
            UpdateForm::Joseph
        } else {
            UpdateForm::Information
        };
        Ok(FilterSetup {
            xhat0,
            vfhat0,
            settings: FilterSettings {
                p0_diag,
                q_diag,
                r,
                update,
                reanchor: ReanchorPolicy {
                    every: raw.reanchor_every.unwrap_or(0) as usize,
                    at: raw
                        .reanchor_at
                        .unwrap_or_default()
                        .into_iter()
                        .map(|k| k as usize)
                        .collect(),
                },
            },
        })
    }

    /// Canonical raw form: every defaulted field written out explicitly.
    pub fn to_raw(&self) -> RawConfig {
        let input = match &self.input {
            InputConfig::Sinusoid(s) => RawInput {
                kind: Some("sinusoid".into()),
                amplitudes: Some(s.amplitudes()),
                harmonics: Some(s.harmonics()),
                n0: Some(s.n0()),
                ..Default::default()
            },
            InputConfig::Literature => RawInput {
                kind: Some("literature".into()),
                ..Default::default()
            },
            InputConfig::Constant(v) => RawInput {
                kind: Some("constant".into()),
                velocity: Some((*v).into()),
                ..Default::default()
            },
            InputConfig::Csv(p) => RawInput {
                kind: Some("csv".into()),
                path: Some(p.clone()),
                ..Default::default()
            },
        };
        let filter = self.filter.as_ref().map(|f| RawFilter {
            xhat0: Some(f.xhat0.into()),
            vfhat0: Some(f.vfhat0.into()),
            p0_diag: Some(f.settings.p0_diag.clone()),
            q_diag: Some(f.settings.q_diag.clone()),
            r: Some(f.settings.r),
            reanchor_every: Some(f.settings.reanchor.every as u64),
            reanchor_at: Some(f.settings.reanchor.at.iter().map(|&k| k as u64).collect()),
            joseph_update: Some(f.settings.update == UpdateForm::Joseph),
        });
        RawConfig {
            model: Some(self.model),
            ts: Some(self.ts),
            steps: Some(self.steps as u64),
            seed: Some(self.seed),
            x0: Some(self.x0.into()),
            beacon: Some(self.beacon.into()),
            current: Some(self.current.into()),
            rotation: Some(self.rotation.to_row_major().to_vec()),
            input: Some(input),
            noise: Some(RawNoise {
                state_cov: Some(self.noise.state_cov.clone()),
                output_var: Some(self.noise.output_var),
                apply_to: Some(self.noise.apply_to),
                inject_state_noise: Some(self.noise.inject_state_noise),
            }),
            filter,
            analysis: Some(RawAnalysis {
                rank_tol: self.rank_tol,
            }),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_raw()).expect("config is always representable as TOML")
    }

    /// Builds the simulator configuration, loading CSV inputs relative to `base_dir`.
    pub fn scenario(&self, base_dir: &Path) -> Result<ScenarioConfig, CliError> {
        let input = match &self.input {
            InputConfig::Sinusoid(s) => SignalSource::Sinusoid(*s),
            InputConfig::Literature => SignalSource::Literature,
            InputConfig::Constant(v) => SignalSource::Constant(*v),
            InputConfig::Csv(p) => {
                let path = if p.is_absolute() {
                    p.clone()
                } else {
                    base_dir.join(p)
                };
                SignalSource::Samples(crate::io::read_input_csv(&path, self.ts)?)
            }
        };
        let cfg = ScenarioConfig {
            model: self.model,
            x0: self.x0,
            beacon: self.beacon,
            current: self.current,
            ts: self.ts,
            steps: self.steps,
            input,
            rotation: self.rotation,
            noise: self.noise.clone(),
            seed: self.seed,
        };
        cfg.validate()
            .map_err(|e| invalid("scenario", e.to_string()))?;
        Ok(cfg)
    }

    pub fn from_experiment(scenario: &ScenarioConfig, setup: &FilterSetup) -> Self {
        let input = match &scenario.input {
            SignalSource::Sinusoid(s) => InputConfig::Sinusoid(*s),
            SignalSource::Literature => InputConfig::Literature,
            SignalSource::Constant(v) => InputConfig::Constant(*v),
            SignalSource::Samples(_) => {
                unreachable!("built-in experiments do not use sampled inputs")
            }
        };
        Self {
            model: scenario.model,
            ts: scenario.ts,
            steps: scenario.steps,
            seed: scenario.seed,
            x0: scenario.x0,
            beacon: scenario.beacon,
            current: scenario.current,
            rotation: scenario.rotation,
            input,
            noise: scenario.noise.clone(),
            filter: Some(setup.clone()),
            rank_tol: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FREE: &str = r#"
ts = 0.01
steps = 1000
x0 = [25.0, 25.0, 25.0]

[input]
kind = "sinusoid"
harmonics = [1, 2, 3]
max_speed = [0.5, 0.5, 0.5]
omega = 0.031415926535897934

[noise]
output_var = 1.0

[filter]
xhat0 = [125.0, 125.0, 125.0]
p0_diag = [1e4, 1e4, 1e4]
q_diag = [1e-4, 1e-4, 1e-4]
"#;

    #[test]
    fn parses_sinusoid_scenario() {
        let cfg = Config::parse(FREE).unwrap();
        assert_eq!(cfg.model, Model::Free);
        match cfg.input {
            InputConfig::Sinusoid(s) => assert_eq!(s.n0(), 20_000),
            other => panic!("unexpected input {other:?}"),
        }
        let f = cfg.filter.unwrap();
        assert_eq!(f.settings.r, 1.0);
        assert_eq!(f.settings.update, UpdateForm::Information);
    }

    #[test]
    fn missing_ts_is_named() {
        let text = FREE.replace("ts = 0.01\n", "");
        assert_eq!(
            Config::parse(&text).unwrap_err().to_string(),
            "ts: required"
        );
    }

    #[test]
    fn other_validation_messages() {
        let cases = [
            (
                FREE.replace("steps = 1000", "steps = 0"),
                "steps: must be at least 1",
            ),
            (
                FREE.replace("kind = \"sinusoid\"", "kind = \"chirp\""),
                "input.kind: unknown kind",
            ),
            (
                FREE.replace("p0_diag = [1e4, 1e4, 1e4]", "p0_diag = [1e4]"),
                "filter.p0_diag: expected 3 entries",
            ),
            (
                format!("rotation = [2,0,0,0,1,0,0,0,1]\n{FREE}"),
                "rotation: rotation matrix is not orthonormal",
            ),
            (
                format!("current = [0.1, 0, 0]\n{FREE}"),
                "current: must be zero",
            ),
        ];
        for (text, want) in cases {
            let err = Config::parse(&text).unwrap_err().to_string();
            assert!(err.starts_with(want), "{err:?} should start with {want:?}");
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = format!("bogus = 1\n{FREE}");
        assert!(matches!(Config::parse(&text), Err(CliError::Parse(_))));
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg = Config::parse(FREE).unwrap();
        let again = Config::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);

        let (scenario, setup) = rangeloc::experiment::current_experiment();
        let cfg = Config::from_experiment(&scenario, &setup);
        assert_eq!(Config::parse(&cfg.to_toml()).unwrap(), cfg);
    }
}
