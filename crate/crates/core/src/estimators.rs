//! Linear Kalman filters on the reformulated single-range models.
//!
//! Squared range is nonlinear in position, but subtracting the anchor measurement and
//! the known `‖I‖²` leaves an output that is linear in the state:
//!
//! | form                | output                      | linear in         |
//! |---------------------|-----------------------------|-------------------|
//! | `InitialPosition`   | `½(y − y₀ − ‖I‖²)`          | `x₀`              |
//! | `CurrentPosition`   | `½(y − y₀ + ‖I‖²)`          | `x_k`             |
//! | `Drift`             | `y − y₀ + ‖I‖²`             | `z = (r, r₀ᵀv_f, ‖v_f‖², v_f)` |
//!
//! The drift-free filter tracks `x` with `x_{k+1} = x_k + v_k`; the drift filter tracks
//! the 8-vector `z` whose dynamics `ż = Az + Bv_r` are time invariant with `A² = 0`.
//! Both use the information-form gain `(P⁻¹ + cR⁻¹cᵀ)⁻¹ cR⁻¹` by default.

use nalgebra::{Matrix3, SMatrix, SVector};
use thiserror::Error;

use crate::frames::Vec3;

pub type Vec8 = SVector<f64, 8>;
pub type Mat8 = SMatrix<f64, 8, 8>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("covariance lost positive definiteness at step {step} ({stage})")]
    NotPositiveDefinite { step: usize, stage: &'static str },
    #[error(
        "output variance must be positive (use infinity for an uninformative output), got {0}"
    )]
    OutputVariance(f64),
    #[error("{name} must have {expected} entries, got {got}")]
    Dimension {
        name: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{name} entries must be finite and non-negative")]
    NegativeVariance { name: &'static str },
    #[error("trace and input lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

/// Which linear output is built from the squared range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputForm {
    /// `½(y − y₀ − ‖I‖²) = Iᵀ x₀`.
    InitialPosition,
    /// `½(y − y₀ + ‖I‖²) = Iᵀ x_k`.
    CurrentPosition,
    /// `y − y₀ + ‖I‖² = C(t) z`.
    Drift,
}

/// `y` and `I` must be relative to the same anchor instant.
pub fn derived_output(form: OutputForm, y: f64, y_anchor: f64, i: &Vec3) -> f64 {
    let i2 = i.norm_squared();
    match form {
        OutputForm::InitialPosition => 0.5 * (y - y_anchor - i2),
        OutputForm::CurrentPosition => 0.5 * (y - y_anchor + i2),
        OutputForm::Drift => y - y_anchor + i2,
    }
}

/// The reference measurement every derived output is taken against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedOutput {
    pub form: OutputForm,
    pub y_anchor: f64,
    pub k_anchor: usize,
    pub t_anchor: f64,
}

impl DerivedOutput {
    pub fn new(form: OutputForm, y0: f64) -> Self {
        Self {
            form,
            y_anchor: y0,
            k_anchor: 0,
            t_anchor: 0.0,
        }
    }

    pub fn eval(&self, y: f64, i_since_anchor: &Vec3) -> f64 {
        derived_output(self.form, y, self.y_anchor, i_since_anchor)
    }

    /// Restarts the output as if measurement had begun at step `k`.
    pub fn reanchor(&mut self, y: f64, k: usize, t: f64) {
        self.y_anchor = y;
        self.k_anchor = k;
        self.t_anchor = t;
    }
}

/// `C(t) = [−2Iᵀ, −2t, t², 0, 0, 0]`, with `t` and `I` measured from the anchor.
pub fn output_row_current(i: &Vec3, t: f64) -> Vec8 {
    Vec8::from_column_slice(&[
        -2.0 * i.x,
        -2.0 * i.y,
        -2.0 * i.z,
        -2.0 * t,
        t * t,
        0.0,
        0.0,
        0.0,
    ])
}

/// `ż = Az + Bv_r` and its exact discretization `A_d = I + Ts A`, `B_d = Ts B`.
#[derive(Debug, Clone, PartialEq)]
pub struct LtiSystem8 {
    pub a: Mat8,
    pub b: SMatrix<f64, 8, 3>,
    pub ad: Mat8,
    pub bd: SMatrix<f64, 8, 3>,
    pub ts: f64,
}

impl LtiSystem8 {
    pub fn new(ts: f64) -> Self {
        let a = Self::state_matrix();
        let b = Self::input_matrix();
        Self {
            a,
            b,
            ad: Mat8::identity() + a * ts,
            bd: b * ts,
            ts,
        }
    }

    /// `ṙ = −v_f`; every other row is zero.
    pub fn state_matrix() -> Mat8 {
        let mut a = Mat8::zeros();
        for i in 0..3 {
            a[(i, 5 + i)] = -1.0;
        }
        a
    }

    /// `ṙ = −v_r`.
    pub fn input_matrix() -> SMatrix<f64, 8, 3> {
        let mut b = SMatrix::<f64, 8, 3>::zeros();
        for i in 0..3 {
            b[(i, i)] = -1.0;
        }
        b
    }
}

/// Assembles `z = (r, r₀ᵀv_f, ‖v_f‖², v_f)` from a relative position, the anchor-time
/// relative position and the current.
pub fn drift_state(r: &Vec3, r_anchor: &Vec3, v_f: &Vec3) -> Vec8 {
    Vec8::from_column_slice(&[
        r.x,
        r.y,
        r.z,
        r_anchor.dot(v_f),
        v_f.norm_squared(),
        v_f.x,
        v_f.y,
        v_f.z,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateForm {
    /// `P⁺ = (P⁻¹ + cR⁻¹cᵀ)⁻¹`, evaluated through Cholesky factorizations.
    #[default]
    Information,
    /// Covariance form with the Joseph-stabilized update.
    Joseph,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterState<const N: usize> {
    pub xhat: SVector<f64, N>,
    pub p: SMatrix<f64, N, N>,
    pub k: usize,
    /// `‖P − Pᵀ‖ / ‖P‖` of the last posterior before symmetrization.
    pub asymmetry: f64,
}

impl<const N: usize> FilterState<N> {
    pub fn new(xhat: SVector<f64, N>, p: SMatrix<f64, N, N>) -> Self {
        Self {
            xhat,
            p,
            k: 0,
            asymmetry: 0.0,
        }
    }

    pub fn is_positive_definite(&self) -> bool {
        self.p.cholesky().is_some()
    }
}

fn inverse_output_variance(r: f64) -> Result<f64, FilterError> {
    if r.is_infinite() && r > 0.0 {
        Ok(0.0)
    } else if r > 0.0 && r.is_finite() {
        Ok(1.0 / r)
    } else {
        Err(FilterError::OutputVariance(r))
    }
}

/// Information-form gain `(P⁻¹ + cR⁻¹cᵀ)⁻¹ c R⁻¹`, with the posterior covariance.
pub fn information_gain<const N: usize>(
    p: &SMatrix<f64, N, N>,
    c: &SVector<f64, N>,
    r_inv: f64,
) -> Option<(SVector<f64, N>, SMatrix<f64, N, N>)> {
    let p_inv = p.cholesky()?.inverse();
    let info = p_inv + c * c.transpose() * r_inv;
    let post = info.cholesky()?.inverse();
    Some((post * c * r_inv, post))
}

/// Covariance-form gain `P c (cᵀ P c + R)⁻¹`.
pub fn standard_gain<const N: usize>(
    p: &SMatrix<f64, N, N>,
    c: &SVector<f64, N>,
    r: f64,
) -> SVector<f64, N> {
    if r.is_infinite() {
        return SVector::zeros();
    }
    let pc = p * c;
    pc / (c.dot(&pc) + r)
}

fn measurement_update<const N: usize>(
    x_pred: SVector<f64, N>,
    p_pred: SMatrix<f64, N, N>,
    c: &SVector<f64, N>,
    ybar: f64,
    r: f64,
    form: UpdateForm,
    step: usize,
) -> Result<FilterState<N>, FilterError> {
    let r_inv = inverse_output_variance(r)?;
    let (gain, p_post) = match form {
        UpdateForm::Information => {
            information_gain(&p_pred, c, r_inv).ok_or(FilterError::NotPositiveDefinite {
                step,
                stage: "information update",
            })?
        }
        UpdateForm::Joseph => {
            let gain = standard_gain(&p_pred, c, r);
            let ikc = SMatrix::<f64, N, N>::identity() - gain * c.transpose();
            let noise = if r_inv == 0.0 {
                SMatrix::zeros()
            } else {
                gain * gain.transpose() * r
            };
            (gain, ikc * p_pred * ikc.transpose() + noise)
        }
    };
    let x_post = x_pred + gain * (ybar - c.dot(&x_pred));
    let norm = p_post.norm();
    let asymmetry = if norm > 0.0 {
        (p_post - p_post.transpose()).norm() / norm
    } else {
        0.0
    };
    let p = (p_post + p_post.transpose()) * 0.5;
    if p.cholesky().is_none() {
        return Err(FilterError::NotPositiveDefinite {
            step,
            stage: "posterior covariance",
        });
    }
    Ok(FilterState {
        xhat: x_post,
        p,
        k: step,
        asymmetry,
    })
}

/// One predict/update cycle of the drift-free filter.
///
/// `v_k` is the displacement over the step, `i_next` the input integral at `k+1`
/// (since the anchor) and `ybar_next` the matching [`OutputForm::CurrentPosition`] output.
pub fn kf_free_step(
    state: &FilterState<3>,
    v_k: &Vec3,
    i_next: &Vec3,
    ybar_next: f64,
    q: &Matrix3<f64>,
    r: f64,
    form: UpdateForm,
) -> Result<FilterState<3>, FilterError> {
    let x_pred = state.xhat + v_k;
    let p_pred = state.p + q;
    measurement_update(x_pred, p_pred, i_next, ybar_next, r, form, state.k + 1)
}

/// One predict/update cycle of the 8-state drift filter. `v_r` is the relative velocity
/// held over the step.
#[allow(clippy::too_many_arguments)]
pub fn kf_current_step(
    state: &FilterState<8>,
    sys: &LtiSystem8,
    v_r: &Vec3,
    c_next: &Vec8,
    ybar_next: f64,
    q: &Mat8,
    r: f64,
    form: UpdateForm,
) -> Result<FilterState<8>, FilterError> {
    let z_pred = sys.ad * state.xhat + sys.bd * v_r;
    let p_pred = sys.ad * state.p * sys.ad.transpose() + q;
    measurement_update(z_pred, p_pred, c_next, ybar_next, r, form, state.k + 1)
}

/// When to replace the anchor measurement.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReanchorPolicy {
    /// Re-anchor at every multiple of this many steps (0 disables).
    pub every: usize,
    /// Explicit re-anchor steps.
    pub at: Vec<usize>,
}

impl ReanchorPolicy {
    pub fn never() -> Self {
        Self::default()
    }

    pub fn fires_at(&self, k: usize) -> bool {
        k > 0 && ((self.every > 0 && k.is_multiple_of(self.every)) || self.at.contains(&k))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSettings {
    pub p0_diag: Vec<f64>,
    pub q_diag: Vec<f64>,
    pub r: f64,
    pub update: UpdateForm,
    pub reanchor: ReanchorPolicy,
}

impl FilterSettings {
    fn check<const N: usize>(
        &self,
    ) -> Result<(SMatrix<f64, N, N>, SMatrix<f64, N, N>), FilterError> {
        for (name, v) in [("p0_diag", &self.p0_diag), ("q_diag", &self.q_diag)] {
            if v.len() != N {
                return Err(FilterError::Dimension {
                    name,
                    expected: N,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(FilterError::NegativeVariance { name });
            }
        }
        inverse_output_variance(self.r)?;
        let p0 = SMatrix::from_diagonal(&SVector::from_column_slice(&self.p0_diag));
        let q = SMatrix::from_diagonal(&SVector::from_column_slice(&self.q_diag));
        Ok((p0, q))
    }
}

/// Drift-free localization filter with its derived-output bookkeeping.
#[derive(Debug, Clone)]
pub struct FreeFilter {
    state: FilterState<3>,
    output: DerivedOutput,
    i_since_anchor: Vec3,
    q: Matrix3<f64>,
    settings: FilterSettings,
    ts: f64,
}

impl FreeFilter {
    pub fn new(
        xhat0: Vec3,
        settings: FilterSettings,
        y0: f64,
        ts: f64,
    ) -> Result<Self, FilterError> {
        let (p0, q) = settings.check::<3>()?;
        if p0.cholesky().is_none() {
            return Err(FilterError::NotPositiveDefinite {
                step: 0,
                stage: "initial covariance",
            });
        }
        Ok(Self {
            state: FilterState::new(xhat0, p0),
            output: DerivedOutput::new(OutputForm::CurrentPosition, y0),
            i_since_anchor: Vec3::zeros(),
            q,
            settings,
            ts,
        })
    }

    pub fn state(&self) -> &FilterState<3> {
        &self.state
    }

    pub fn output(&self) -> &DerivedOutput {
        &self.output
    }

    /// Advances one step with the input velocity held over `k → k+1` and the
    /// measurement `y_{k+1}`.
    pub fn step(&mut self, u: &Vec3, y_next: f64) -> Result<&FilterState<3>, FilterError> {
        let v = u * self.ts;
        self.i_since_anchor += v;
        let ybar = self.output.eval(y_next, &self.i_since_anchor);
        self.state = kf_free_step(
            &self.state,
            &v,
            &self.i_since_anchor,
            ybar,
            &self.q,
            self.settings.r,
            self.settings.update,
        )?;
        let k = self.state.k;
        if self.settings.reanchor.fires_at(k) {
            self.reanchor(y_next, k);
        }
        Ok(&self.state)
    }

    /// Takes `y_k` as the new reference; the estimate itself is untouched.
    pub fn reanchor(&mut self, y_k: f64, k: usize) {
        self.output.reanchor(y_k, k, k as f64 * self.ts);
        self.i_since_anchor = Vec3::zeros();
    }
}

/// Constant-current localization filter on `z = (r, r₀ᵀv_f, ‖v_f‖², v_f)`.
#[derive(Debug, Clone)]
pub struct CurrentFilter {
    state: FilterState<8>,
    sys: LtiSystem8,
    output: DerivedOutput,
    i_since_anchor: Vec3,
    q: Mat8,
    settings: FilterSettings,
}

impl CurrentFilter {
    pub fn new(z0: Vec8, settings: FilterSettings, y0: f64, ts: f64) -> Result<Self, FilterError> {
        let (p0, q) = settings.check::<8>()?;
        if p0.cholesky().is_none() {
            return Err(FilterError::NotPositiveDefinite {
                step: 0,
                stage: "initial covariance",
            });
        }
        Ok(Self {
            state: FilterState::new(z0, p0),
            sys: LtiSystem8::new(ts),
            output: DerivedOutput::new(OutputForm::Drift, y0),
            i_since_anchor: Vec3::zeros(),
            q,
            settings,
        })
    }

    pub fn state(&self) -> &FilterState<8> {
        &self.state
    }

    pub fn output(&self) -> &DerivedOutput {
        &self.output
    }

    pub fn system(&self) -> &LtiSystem8 {
        &self.sys
    }

    pub fn relative_position(&self) -> Vec3 {
        self.state.xhat.fixed_rows::<3>(0).into_owned()
    }

    pub fn current(&self) -> Vec3 {
        self.state.xhat.fixed_rows::<3>(5).into_owned()
    }

    fn time_since_anchor(&self, k: usize) -> f64 {
        (k - self.output.k_anchor) as f64 * self.sys.ts
    }

    pub fn step(&mut self, v_r: &Vec3, y_next: f64) -> Result<&FilterState<8>, FilterError> {
        self.i_since_anchor += v_r * self.sys.ts;
        let k = self.state.k + 1;
        let c = output_row_current(&self.i_since_anchor, self.time_since_anchor(k));
        let ybar = self.output.eval(y_next, &self.i_since_anchor);
        self.state = kf_current_step(
            &self.state,
            &self.sys,
            v_r,
            &c,
            ybar,
            &self.q,
            self.settings.r,
            self.settings.update,
        )?;
        if self.settings.reanchor.fires_at(k) {
            self.reanchor(y_next, k);
        }
        Ok(&self.state)
    }

    /// Moves the reference to step `k`. The fourth state component `r₀ᵀv_f` depends on
    /// the anchor, so it is carried over exactly through
    /// `r_kᵀv_f = r₀ᵀv_f − t ‖v_f‖² − Iᵀv_f`, a linear map applied to both the estimate
    /// and its covariance.
    pub fn reanchor(&mut self, y_k: f64, k: usize) {
        let t = self.time_since_anchor(k);
        let transform = anchor_shift(&self.i_since_anchor, t);
        self.state.xhat = transform * self.state.xhat;
        self.state.p = transform * self.state.p * transform.transpose();
        self.state.p = (self.state.p + self.state.p.transpose()) * 0.5;
        self.output.reanchor(y_k, k, k as f64 * self.sys.ts);
        self.i_since_anchor = Vec3::zeros();
    }
}

/// Identity except row 3: `[0,0,0, 1, −t, −Iᵀ]`.
pub fn anchor_shift(i: &Vec3, t: f64) -> Mat8 {
    let mut m = Mat8::identity();
    m[(3, 4)] = -t;
    m[(3, 5)] = -i.x;
    m[(3, 6)] = -i.y;
    m[(3, 7)] = -i.z;
    m
}
