//! First-order DRLM time stepping.
//!
//! One step from `(u^n, q^n)`:
//!
//! ```text
//! (u1 - u^n)/tau - nu L u1 + G p1 = f(t_{n+1}),   D u1 = 0
//!  u2/tau        - nu L u2 + G p2 = -N(u^n),      D u2 = 0
//! A q^2 + B q + C = 0,  q^{n+1} the positive root
//! u^{n+1} = u1 + q^{n+1} u2,   p^{n+1} = p1 + q^{n+1} p2
//! ```
//!
//! with `N(u) = (u . grad) u` and
//!
//! ```text
//! A = theta + |u2|^2/2 + tau nu |u2|_1^2
//! B = -(u1 - u^n, u2) - tau (N(u^n), u1)
//! C = -theta (q^n)^2 - |u1 - u^n|^2/2
//! ```

use std::sync::Arc;

use thiserror::Error;

use crate::error::{Error, Result};
use crate::grid::{project_mean_zero, CellField, MacGrid, VelocityField};
use crate::manufactured::Manufactured;
use crate::operators::{
    divergence, dot, gradient, h1_seminorm_sq, laplacian, norm_sq, ConvectionForm,
};
use crate::stokes::{StokesOperator, StokesSolution, DEFAULT_MAX_ITER, DEFAULT_TOL};

/// `(x, y, t) -> vector`
pub type VectorFn = Arc<dyn Fn(f64, f64, f64) -> (f64, f64) + Send + Sync>;
/// `(x, y) -> vector`
pub type InitialFn = Arc<dyn Fn(f64, f64) -> (f64, f64) + Send + Sync>;

#[derive(Debug, Clone)]
pub struct DrlmState {
    pub velocity: VelocityField,
    /// Mean-zero pressure. Zero placeholder at step 0.
    pub pressure: CellField,
    pub q: f64,
    pub step: usize,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl QuadraticCoefficients {
    pub fn residual(&self, q: f64) -> f64 {
        (self.a * q * q + self.b * q + self.c).abs()
    }

    /// Magnitude of the largest term at `q`, used to scale the residual.
    pub fn term_scale(&self, q: f64) -> f64 {
        (self.a * q * q).abs().max((self.b * q).abs()).max(self.c.abs())
    }
}

/// Per-step residuals and solver statistics. Every `*_residual` is an
/// absolute value and comes with the magnitude of the largest term of the
/// identity it measures. Differences such as `|u'|^2 - |u|^2` count with
/// their larger operand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub time: f64,
    pub q: f64,
    pub coefficients: QuadraticCoefficients,
    pub quadratic_residual: f64,
    pub quadratic_scale: f64,
    /// `(|u'|^2 - |u|^2)/(2 tau) + theta (q'^2 - q^2)/tau + nu |u'|_1^2 - (f, u')`
    pub energy_residual: f64,
    pub energy_scale: f64,
    /// `theta (q'^2 - q^2)/tau - [(f, du) - |du|^2/(2 tau) - nu/2 (|u'|_1^2 - |u|_1^2 + |du|_1^2)]`
    pub qdyn_residual: f64,
    pub qdyn_scale: f64,
    /// `q' b(u, u, u)`, the amount by which the identity above is off for a
    /// convection stencil that is not skew-symmetric.
    pub convective_work: f64,
    /// `qdyn_residual` with `convective_work` moved to the right-hand side.
    pub qdyn_balanced_residual: f64,
    /// `|(u' - u)/tau - nu L u' + q' N(u) + G p' - f|_0`
    pub momentum_residual: f64,
    pub momentum_scale: f64,
    pub div_inf: f64,
    pub div_l2: f64,
    pub div_tolerance: f64,
    pub stokes_iterations: [usize; 2],
    pub velocity_l2: f64,
}

impl StepDiagnostics {
    pub fn energy_relative(&self) -> f64 {
        relative(self.energy_residual, self.energy_scale)
    }

    pub fn qdyn_relative(&self) -> f64 {
        relative(self.qdyn_residual, self.qdyn_scale)
    }

    pub fn qdyn_balanced_relative(&self) -> f64 {
        relative(self.qdyn_balanced_residual, self.qdyn_scale.max(self.convective_work.abs()))
    }

    pub fn momentum_relative(&self) -> f64 {
        relative(self.momentum_residual, self.momentum_scale)
    }

    pub fn quadratic_relative(&self) -> f64 {
        relative(self.quadratic_residual, self.quadratic_scale)
    }

    pub fn is_finite(&self) -> bool {
        [
            self.q,
            self.energy_residual,
            self.qdyn_residual,
            self.momentum_residual,
            self.div_inf,
            self.velocity_l2,
        ]
        .iter()
        .all(|x| x.is_finite())
    }
}

fn relative(r: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        r / scale
    } else {
        r
    }
}

#[derive(Clone)]
pub struct RunConfig {
    pub theta: f64,
    pub nu: f64,
    pub tau: f64,
    pub t_final: f64,
    pub grid: MacGrid,
    pub tol: f64,
    pub max_iter: usize,
    pub convection: ConvectionForm,
    pub forcing: VectorFn,
    pub initial_velocity: InitialFn,
}

impl std::fmt::Debug for RunConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunConfig")
            .field("theta", &self.theta)
            .field("nu", &self.nu)
            .field("tau", &self.tau)
            .field("t_final", &self.t_final)
            .field("grid", &(self.grid.nx, self.grid.ny))
            .field("tol", &self.tol)
            .field("convection", &self.convection)
            .finish_non_exhaustive()
    }
}

impl RunConfig {
    /// Manufactured-solution run on an `n x n` unit-square grid.
    pub fn manufactured(theta: f64, nu: f64, tau: f64, t_final: f64, n: usize) -> Result<Self> {
        let m = Manufactured::new(nu);
        Ok(Self {
            theta,
            nu,
            tau,
            t_final,
            grid: MacGrid::square(n)?,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            convection: ConvectionForm::default(),
            forcing: Arc::new(move |x, y, t| m.forcing(x, y, t)),
            initial_velocity: Arc::new(move |x, y| m.velocity(x, y, 0.0)),
        })
    }

    /// Number of steps; errors unless `t_final / tau` is an integer to
    /// within half an ulp.
    pub fn steps(&self) -> Result<usize> {
        let ratio = self.t_final / self.tau;
        let n = ratio.round();
        let ulp = f64::EPSILON * n.abs().max(1.0);
        if !ratio.is_finite() || n < 1.0 || (ratio - n).abs() > 0.5 * ulp {
            return Err(Error::InvalidConfig(format!(
                "T = {} is not an integer multiple of tau = {}",
                self.t_final, self.tau
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self) -> Result<usize> {
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::InvalidConfig(format!("theta must be positive, got {}", self.theta)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidConfig(format!("nu must be positive, got {}", self.nu)));
        }
        self.steps()
    }

    pub fn stokes_operator(&self) -> Result<StokesOperator> {
        StokesOperator::new(&self.grid, 1.0 / self.tau, self.nu, self.tol, self.max_iter)
    }

    pub fn sample_forcing(&self, t: f64) -> VelocityField {
        let f = &self.forcing;
        VelocityField::sample(&self.grid, |x, y| f(x, y, t))
    }
}

/// Quadratic for `q^{n+1}`. `conv` is `N(u^n)`, the same field that was
/// used in the right-hand side of the second Stokes solve.
pub fn quadratic_coefficients(
    state: &DrlmState,
    u1: &StokesSolution,
    u2: &StokesSolution,
    conv: &VelocityField,
    cfg: &RunConfig,
) -> Result<QuadraticCoefficients> {
    let g = &cfg.grid;
    let d1 = VelocityField::lin_comb(1.0, &u1.velocity, -1.0, &state.velocity);
    let a = cfg.theta
        + 0.5 * norm_sq(&u2.velocity, g)
        + cfg.tau * cfg.nu * h1_seminorm_sq(&u2.velocity, g);
    let b = -dot(&d1, &u2.velocity, g) - cfg.tau * dot(conv, &u1.velocity, g);
    let c = -cfg.theta * state.q * state.q - 0.5 * norm_sq(&d1, g);
    if !(a.is_finite() && b.is_finite() && c.is_finite()) {
        return Err(Error::NonFinite("quadratic coefficients"));
    }
    Ok(QuadraticCoefficients { a, b, c })
}

/// Unique positive root of `A q^2 + B q + C` for `A > 0 > C`, evaluated
/// without cancellation.
pub fn positive_root(coef: &QuadraticCoefficients) -> Result<f64> {
    let QuadraticCoefficients { a, b, c } = *coef;
    if !(a > 0.0 && c < 0.0) {
        return Err(Error::QuadraticPrecondition { a, c });
    }
    let disc = (b * b - 4.0 * a * c).sqrt();
    Ok(if b <= 0.0 {
        (-b + disc) / (2.0 * a)
    } else {
        -2.0 * c / (b + disc)
    })
}

/// Upper bound on the multiplier for `theta >= 1`:
/// `c0^2 = 1 + (|u0|^2 + 2 cf T (2 cf T + |u0| + sqrt 2)) / 2`.
pub fn multiplier_bound_c0(u0_l2: f64, cf: f64, t_final: f64) -> Result<f64> {
    if !(u0_l2 >= 0.0 && cf >= 0.0 && t_final >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "c0 needs non-negative inputs, got ({u0_l2}, {cf}, {t_final})"
        )));
    }
    let ft = cf * t_final;
    Ok((1.0 + (u0_l2 * u0_l2 + 2.0 * ft * (2.0 * ft + u0_l2 + 2f64.sqrt())) / 2.0).sqrt())
}

/// Advances `state` by one step.
pub fn drlm_step(
    state: &DrlmState,
    cfg: &RunConfig,
    stokes: &StokesOperator,
) -> Result<(DrlmState, StepDiagnostics)> {
    let step = state.step + 1;
    let wrap = |e: Error| Error::Step {
        step,
        source: Box::new(e),
    };
    let g = &cfg.grid;
    let tau = cfg.tau;
    let t_next = step as f64 * tau;
    let un = &state.velocity;

    let f = cfg.sample_forcing(t_next);
    let conv = cfg.convection.apply(un, un, g);

    let rhs1 = VelocityField::lin_comb(1.0 / tau, un, 1.0, &f);
    let mut rhs2 = conv.clone();
    rhs2.scale(-1.0);
    let s1 = stokes.solve(&rhs1).map_err(wrap)?;
    let s2 = stokes.solve(&rhs2).map_err(wrap)?;

    let coefficients = quadratic_coefficients(state, &s1, &s2, &conv, cfg).map_err(wrap)?;
    let q = positive_root(&coefficients).map_err(wrap)?;

    let u = VelocityField::lin_comb(1.0, &s1.velocity, q, &s2.velocity);
    let p = project_mean_zero(CellField::lin_comb(1.0, &s1.pressure, q, &s2.pressure));
    if !u.is_finite() {
        return Err(wrap(Error::NonFinite("velocity")));
    }

    // energy identity
    let un_sq = norm_sq(un, g);
    let u_sq = norm_sq(&u, g);
    let semi_u = h1_seminorm_sq(&u, g);
    let d_kin = (u_sq - un_sq) / (2.0 * tau);
    let d_q = cfg.theta * (q * q - state.q * state.q) / tau;
    let visc = cfg.nu * semi_u;
    let work = dot(&f, &u, g);
    let energy_residual = (d_kin + d_q + visc - work).abs();
    // the differences cancel as the flow settles, so scale by the terms
    // before subtraction, which is where the rounding happens
    let q_terms = cfg.theta * (q * q).max(state.q * state.q) / tau;
    let kin_terms = u_sq.max(un_sq) / (2.0 * tau);
    let energy_scale = [kin_terms, q_terms, visc, work.abs()]
        .into_iter()
        .fold(0.0, f64::max);

    // multiplier dynamics
    let du = VelocityField::lin_comb(1.0, &u, -1.0, un);
    let semi_un = h1_seminorm_sq(un, g);
    let semi_du = h1_seminorm_sq(&du, g);
    let work_du = dot(&f, &du, g);
    let inc = norm_sq(&du, g) / (2.0 * tau);
    let half_nu = 0.5 * cfg.nu;
    let qdyn_rhs = work_du - inc - half_nu * (semi_u - semi_un + semi_du);
    let qdyn_residual = (d_q - qdyn_rhs).abs();
    let convective_work = q * dot(&conv, un, g);
    let qdyn_balanced_residual = (d_q - qdyn_rhs - convective_work).abs();
    let qdyn_scale = [
        q_terms,
        work_du.abs(),
        inc,
        half_nu * semi_u,
        half_nu * semi_un,
        half_nu * semi_du,
    ]
    .into_iter()
    .fold(0.0, f64::max);

    // coupled momentum equation
    let mut time_term = du.clone();
    time_term.scale(1.0 / tau);
    let visc_term = {
        let mut l = laplacian(&u, g);
        l.scale(-cfg.nu);
        l
    };
    let mut conv_term = conv.clone();
    conv_term.scale(q);
    let grad_term = gradient(&p, g);
    let mut r = time_term.clone();
    r.axpy(1.0, &visc_term);
    r.axpy(1.0, &conv_term);
    r.axpy(1.0, &grad_term);
    r.axpy(-1.0, &f);
    let momentum_residual = norm_sq(&r, g).sqrt();
    let momentum_scale = [&time_term, &visc_term, &conv_term, &grad_term, &f]
        .iter()
        .map(|w| norm_sq(w, g).sqrt())
        .fold(0.0, f64::max);

    let div = divergence(&u, g);
    let div_l2 = (div.values.iter().map(|x| x * x).sum::<f64>() * g.cell_area()).sqrt();

    let diag = StepDiagnostics {
        step,
        time: t_next,
        q,
        coefficients,
        quadratic_residual: coefficients.residual(q),
        quadratic_scale: coefficients.term_scale(q),
        energy_residual,
        energy_scale,
        qdyn_residual,
        qdyn_scale,
        convective_work,
        qdyn_balanced_residual,
        momentum_residual,
        momentum_scale,
        div_inf: div.max_abs(),
        div_l2,
        div_tolerance: s1.divergence_tolerance + q * s2.divergence_tolerance,
        stokes_iterations: [s1.iterations, s2.iterations],
        velocity_l2: u_sq.sqrt(),
    };
    let next = DrlmState {
        velocity: u,
        pressure: p,
        q,
        step,
        time: t_next,
    };
    Ok((next, diag))
}

/// Re-solves the momentum equation as one Stokes problem with the computed
/// multiplier, `(u/tau - nu L u) + G p = u^n/tau + f - q N(u^n)`, and
/// returns `|u - u^{n+1}|_0 / |u^{n+1}|_0`.
pub fn superposition_gap(
    prev: &DrlmState,
    next: &DrlmState,
    cfg: &RunConfig,
    stokes: &StokesOperator,
) -> Result<f64> {
    let g = &cfg.grid;
    let f = cfg.sample_forcing(next.time);
    let mut rhs = VelocityField::lin_comb(1.0 / cfg.tau, &prev.velocity, 1.0, &f);
    rhs.axpy(-next.q, &cfg.convection.apply(&prev.velocity, &prev.velocity, g));
    let sol = stokes.solve(&rhs)?;
    let diff = VelocityField::lin_comb(1.0, &sol.velocity, -1.0, &next.velocity);
    let scale = norm_sq(&next.velocity, g).sqrt();
    Ok(relative(norm_sq(&diff, g).sqrt(), scale))
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: DrlmState,
    pub diagnostics: Vec<StepDiagnostics>,
    /// `|u^0|_0` after projection onto discretely solenoidal fields.
    pub initial_l2: f64,
}

#[derive(Debug, Error)]
#[error("{error}")]
pub struct RunFailure {
    pub partial: Box<RunOutput>,
    #[source]
    pub error: Error,
}

/// Initial state: `u^0` sampled at the faces, wall conditions applied and
/// projected onto the discretely divergence-free fields; `q^0 = 1`, `p^0 = 0`.
pub fn initial_state(cfg: &RunConfig, stokes: &StokesOperator) -> DrlmState {
    let init = &cfg.initial_velocity;
    let u0 = VelocityField::sample(&cfg.grid, |x, y| init(x, y));
    DrlmState {
        velocity: stokes.project_divergence_free(&u0),
        pressure: CellField::zeros(&cfg.grid),
        q: 1.0,
        step: 0,
        time: 0.0,
    }
}

/// Runs `T / tau` steps, calling `observer` after each one.
pub fn run_simulation<F>(cfg: &RunConfig, mut observer: F) -> Result<RunOutput, RunFailure>
where
    F: FnMut(&DrlmState, &StepDiagnostics),
{
    let fail_early = |error: Error| RunFailure {
        partial: Box::new(RunOutput {
            state: DrlmState {
                velocity: VelocityField::zeros(&cfg.grid),
                pressure: CellField::zeros(&cfg.grid),
                q: 1.0,
                step: 0,
                time: 0.0,
            },
            diagnostics: Vec::new(),
            initial_l2: 0.0,
        }),
        error,
    };
    let steps = cfg.validate().map_err(fail_early)?;
    let stokes = cfg.stokes_operator().map_err(fail_early)?;
    let mut state = initial_state(cfg, &stokes);
    let initial_l2 = norm_sq(&state.velocity, &cfg.grid).sqrt();
    let mut diagnostics = Vec::with_capacity(steps);
    for _ in 0..steps {
        match drlm_step(&state, cfg, &stokes) {
            Ok((next, diag)) => {
                observer(&next, &diag);
                diagnostics.push(diag);
                state = next;
            }
            Err(error) => {
                return Err(RunFailure {
                    partial: Box::new(RunOutput {
                        state,
                        diagnostics,
                        initial_l2,
                    }),
                    error,
                })
            }
        }
    }
    Ok(RunOutput {
        state,
        diagnostics,
        initial_l2,
    })
}
