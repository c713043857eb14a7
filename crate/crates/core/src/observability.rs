//! Identifiability of the initial position from squared-range data.
//!
//! Three checks are provided, all driven by the integral trace `I_k` of the known input:
//!
//! * the discrete regression `H x₀ = ȳ` (rank of `H`, least-squares `x̂₀`);
//! * the continuous 3×3 Gramian `G(t) = ∫ I Iᵀ dτ` with `G x₀ = μ`;
//! * the 8×8 Gramian of the constant-current model and its `G₁₁` block.
//!
//! Integrals use the composite trapezoid rule on the sample grid.

use std::fmt;

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use thiserror::Error;

use crate::estimators::LtiSystem8;
use crate::frames::Vec3;
use crate::signals::IntegralTrace;
use crate::truth::TruthTrace;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservabilityError {
    #[error("trace has {trace} samples but the integral has {integral}")]
    LengthMismatch { trace: usize, integral: usize },
    #[error("traces use different sampling periods ({0} vs {1})")]
    SamplingMismatch(f64, f64),
    #[error("discrete identifiability needs at least 3 regression rows, got {0}")]
    TooFewRows(usize),
    #[error("normal matrix HᵀH is not positive definite")]
    SingularNormalMatrix,
}

/// `H` (rows `I_kᵀ`) and `ȳ_k = ½(y_k − y_0 − ‖I_k‖²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSystem {
    h: DMatrix<f64>,
    ybar: DVector<f64>,
}

impl RegressionSystem {
    /// # Panics
    /// If `h` does not have 3 columns or the row counts differ.
    pub fn new(h: DMatrix<f64>, ybar: DVector<f64>) -> Self {
        assert_eq!(h.ncols(), 3, "regression matrix must have 3 columns");
        assert_eq!(h.nrows(), ybar.len(), "row count mismatch");
        Self { h, ybar }
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn ybar(&self) -> &DVector<f64> {
        &self.ybar
    }

    pub fn rows(&self) -> usize {
        self.h.nrows()
    }

    /// `HᵀH`, the least-squares normal matrix.
    pub fn normal_matrix(&self) -> SMatrix<f64, 3, 3> {
        let hth = self.h.tr_mul(&self.h);
        SMatrix::<f64, 3, 3>::from_iterator(hth.iter().copied())
    }

    /// Singular values of `H`, descending.
    pub fn singular_values(&self) -> Vec<f64> {
        let r = self.h.clone().qr().r();
        sorted_desc(r.singular_values().iter().copied())
    }

    /// Numerical rank of `H`; `rank_tol` is relative to `σ_max`.
    pub fn rank(&self, rank_tol: Option<f64>) -> (usize, f64) {
        let sv = self.singular_values();
        let tol = tolerance(&sv, self.rows().max(3), rank_tol);
        (sv.iter().filter(|&&s| s > tol).count(), tol)
    }
}

pub fn build_regression(
    trace: &TruthTrace,
    integral: &IntegralTrace,
) -> Result<RegressionSystem, ObservabilityError> {
    if trace.len() != integral.len() {
        return Err(ObservabilityError::LengthMismatch {
            trace: trace.len(),
            integral: integral.len(),
        });
    }
    if trace.ts != integral.ts() {
        return Err(ObservabilityError::SamplingMismatch(
            trace.ts,
            integral.ts(),
        ));
    }
    let n = trace.len();
    let values = integral.values();
    let h = DMatrix::from_fn(n, 3, |k, j| values[k][j]);
    let y0 = trace.y[0];
    let ybar = DVector::from_fn(n, |k, _| 0.5 * (trace.y[k] - y0 - values[k].norm_squared()));
    Ok(RegressionSystem { h, ybar })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LsMethod {
    /// Householder QR of `H`, rank from the SVD of the triangular factor.
    #[default]
    Orthogonal,
    /// Literal `(HᵀH)⁻¹ Hᵀ ȳ` via Cholesky; kept as an independent cross-check.
    NormalEquations,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LsSolution {
    Identified {
        x0: Vec3,
        condition_number: f64,
        singular_values: Vec<f64>,
    },
    RankDeficient {
        rank: usize,
        /// Orthonormal basis of the unidentifiable directions (kernel of `HᵀH`).
        kernel: Vec<Vec3>,
        singular_values: Vec<f64>,
    },
}

impl LsSolution {
    pub fn x0(&self) -> Option<Vec3> {
        match self {
            LsSolution::Identified { x0, .. } => Some(*x0),
            LsSolution::RankDeficient { .. } => None,
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            LsSolution::Identified { .. } => 3,
            LsSolution::RankDeficient { rank, .. } => *rank,
        }
    }
}

/// Least-squares estimate of `x₀`, or the unidentifiable subspace when `rank(H) < 3`.
pub fn solve_ls(
    sys: &RegressionSystem,
    rank_tol: Option<f64>,
    method: LsMethod,
) -> Result<LsSolution, ObservabilityError> {
    let n = sys.rows();
    if n < 3 {
        return Err(ObservabilityError::TooFewRows(n));
    }
    let qr = sys.h.clone().qr();
    let r = qr.r();
    let svd = r.clone().svd(false, true);
    let sv = sorted_desc(svd.singular_values.iter().copied());
    let tol = tolerance(&sv, n.max(3), rank_tol);
    let rank = sv.iter().filter(|&&s| s > tol).count();
    if rank < 3 {
        let v_t = svd.v_t.expect("requested right singular vectors");
        let kernel = (0..3)
            .filter(|&i| svd.singular_values[i] <= tol)
            .map(|i| Vec3::new(v_t[(i, 0)], v_t[(i, 1)], v_t[(i, 2)]))
            .collect();
        return Ok(LsSolution::RankDeficient {
            rank,
            kernel,
            singular_values: sv,
        });
    }
    let x0 = match method {
        LsMethod::Orthogonal => {
            let mut qtb = sys.ybar.clone();
            qr.q_tr_mul(&mut qtb);
            let rhs = DVector::from_column_slice(&qtb.as_slice()[..3]);
            let x = r
                .solve_upper_triangular(&rhs)
                .ok_or(ObservabilityError::SingularNormalMatrix)?;
            Vec3::new(x[0], x[1], x[2])
        }
        LsMethod::NormalEquations => {
            let hth = sys.normal_matrix();
            let hty = sys.h.tr_mul(&sys.ybar);
            let chol = hth
                .cholesky()
                .ok_or(ObservabilityError::SingularNormalMatrix)?;
            chol.solve(&Vec3::new(hty[0], hty[1], hty[2]))
        }
    };
    Ok(LsSolution::Identified {
        x0,
        condition_number: sv[0] / sv[2],
        singular_values: sv,
    })
}

/// Spectral summary of a symmetric PSD Gramian.
#[derive(Debug, Clone, PartialEq)]
pub struct GramianReport {
    pub g: DMatrix<f64>,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub numerical_rank: usize,
    /// `σ_max / σ_min`, infinite when rank-deficient.
    pub condition_number: f64,
    /// Full rank. For [`g11_condition`] this means the necessary condition holds.
    pub observable: bool,
    pub tolerance_used: f64,
}

impl GramianReport {
    /// `samples` is the number of quadrature nodes accumulated into `g`; it scales the
    /// default tolerance the same way the row count does for `H`.
    pub fn from_matrix(g: DMatrix<f64>, samples: usize, rank_tol: Option<f64>) -> Self {
        let d = g.nrows();
        let eig = g.clone().symmetric_eigen();
        let mut eigenvalues: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(f64::total_cmp);
        let sv = sorted_desc(eigenvalues.iter().map(|e| e.abs()));
        let tol = tolerance(&sv, samples.max(d), rank_tol);
        let numerical_rank = sv.iter().filter(|&&s| s > tol).count();
        let condition_number = if numerical_rank == d {
            sv[0] / sv[d - 1]
        } else {
            f64::INFINITY
        };
        Self {
            g,
            eigenvalues,
            numerical_rank,
            condition_number,
            observable: numerical_rank == d,
            tolerance_used: tol,
        }
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    /// Orthonormal eigenvectors whose eigenvalues fall below the rank tolerance.
    pub fn kernel(&self) -> Vec<DVector<f64>> {
        let eig = self.g.clone().symmetric_eigen();
        (0..self.dim())
            .filter(|&i| eig.eigenvalues[i].abs() <= self.tolerance_used)
            .map(|i| eig.eigenvectors.column(i).into_owned())
            .collect()
    }

    pub fn verdict(&self) -> Verdict {
        Verdict {
            observable: self.observable,
            rank: self.numerical_rank,
            dim: self.dim(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub observable: bool,
    pub rank: usize,
    pub dim: usize,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = if self.observable {
            "OBSERVABLE"
        } else {
            "NOT OBSERVABLE"
        };
        write!(f, "{label} (rank {}/{})", self.rank, self.dim)
    }
}

/// Default `max(d, n) ε σ_max`, or `rank_tol σ_max` when given.
fn tolerance(sv_desc: &[f64], n: usize, rank_tol: Option<f64>) -> f64 {
    let smax = sv_desc.first().copied().unwrap_or(0.0);
    match rank_tol {
        Some(rel) => rel * smax,
        None => n as f64 * f64::EPSILON * smax,
    }
}

fn sorted_desc(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Trapezoid weights times `ts` for nodes `0..=k_end`.
fn trapezoid(k_end: usize, ts: f64) -> impl Iterator<Item = (usize, f64)> {
    (0..=k_end).map(move |k| {
        let w = if k_end == 0 {
            0.0
        } else if k == 0 || k == k_end {
            0.5
        } else {
            1.0
        };
        (k, w * ts)
    })
}

/// Accumulates `∫ f(τ) f(τ)ᵀ dτ` for a row function over `[0, t_end]`.
fn outer_integral<const D: usize>(
    integral: &IntegralTrace,
    t_end: f64,
    row: impl Fn(usize, f64, &Vec3) -> SVector<f64, D>,
) -> (SMatrix<f64, D, D>, usize) {
    let k_end = integral.index_at(t_end);
    let ts = integral.ts();
    let mut g = SMatrix::<f64, D, D>::zeros();
    for (k, w) in trapezoid(k_end, ts) {
        let c = row(k, integral.time(k), &integral.values()[k]);
        g += (c * c.transpose()) * w;
    }
    (g, k_end + 1)
}

fn to_dynamic<const D: usize>(m: &SMatrix<f64, D, D>) -> DMatrix<f64> {
    DMatrix::from_iterator(D, D, m.iter().copied())
}

/// Raw 3×3 Gramian `∫₀^{t_end} I Iᵀ dτ`.
pub fn gramian_free_matrix(integral: &IntegralTrace, t_end: f64) -> (SMatrix<f64, 3, 3>, usize) {
    outer_integral::<3>(integral, t_end, |_, _, i| *i)
}

pub fn gramian_free(integral: &IntegralTrace, t_end: f64, rank_tol: Option<f64>) -> GramianReport {
    let (g, n) = gramian_free_matrix(integral, t_end);
    GramianReport::from_matrix(to_dynamic(&g), n, rank_tol)
}

/// `μ(t) = ∫₀ᵗ I ȳ dτ`, with the same quadrature as [`gramian_free`].
pub fn mu_free(integral: &IntegralTrace, ybar: &[f64], t_end: f64) -> Vec3 {
    let k_end = integral.index_at(t_end);
    trapezoid(k_end, integral.ts()).fold(Vec3::zeros(), |acc, (k, w)| {
        acc + integral.values()[k] * (ybar[k] * w)
    })
}

/// Continuous-time estimate `G(t)⁻¹ μ(t)`; `None` when `G` is not positive definite.
pub fn continuous_estimate(integral: &IntegralTrace, ybar: &[f64], t_end: f64) -> Option<Vec3> {
    let (g, _) = gramian_free_matrix(integral, t_end);
    g.cholesky()
        .map(|c| c.solve(&mu_free(integral, ybar, t_end)))
}

/// `e^{At} = I + At`, exact because `A² = 0`.
pub fn exp_at(t: f64) -> SMatrix<f64, 8, 8> {
    SMatrix::<f64, 8, 8>::identity() + LtiSystem8::state_matrix() * t
}

/// `C(τ) e^{Aτ} = [−2Iᵀ, −2τ, τ², 2τ Iᵀ]`.
pub fn observed_row(i: &Vec3, t: f64) -> SVector<f64, 8> {
    SVector::<f64, 8>::from_column_slice(&[
        -2.0 * i.x,
        -2.0 * i.y,
        -2.0 * i.z,
        -2.0 * t,
        t * t,
        2.0 * t * i.x,
        2.0 * t * i.y,
        2.0 * t * i.z,
    ])
}

/// Raw 8×8 observability Gramian of the constant-current model.
pub fn gramian_current_matrix(
    vr_integral: &IntegralTrace,
    t_end: f64,
) -> (SMatrix<f64, 8, 8>, usize) {
    outer_integral::<8>(vr_integral, t_end, |_, t, i| observed_row(i, t))
}

pub fn gramian_current(
    vr_integral: &IntegralTrace,
    t_end: f64,
    rank_tol: Option<f64>,
) -> GramianReport {
    let (g, n) = gramian_current_matrix(vr_integral, t_end);
    GramianReport::from_matrix(to_dynamic(&g), n, rank_tol)
}

/// `G₁₁ = 4 ∫ I Iᵀ dτ`; full rank is necessary for the 8-state model to be observable.
pub fn g11_condition(
    vr_integral: &IntegralTrace,
    t_end: f64,
    rank_tol: Option<f64>,
) -> GramianReport {
    let (g, n) = gramian_free_matrix(vr_integral, t_end);
    GramianReport::from_matrix(to_dynamic(&(g * 4.0)), n, rank_tol)
}

/// Largest off-diagonal magnitude relative to the smallest diagonal entry; zero for a
/// diagonal matrix, even a singular one.
pub fn offdiag_ratio(m: &SMatrix<f64, 3, 3>) -> f64 {
    let min_diag = m
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b.abs()));
    let mut max_off: f64 = 0.0;
    for r in 0..3 {
        for c in 0..3 {
            if r != c {
                max_off = max_off.max(m[(r, c)].abs());
            }
        }
    }
    if max_off == 0.0 {
        0.0
    } else {
        max_off / min_diag
    }
}
