//! Closed-form verification problem on the unit square.
//!
//! ```text
//! u = 5 sin^2(pi x) sin(2 pi y) e^-t
//! v = -5 sin(2 pi x) sin^2(pi y) e^-t
//! p = cos(pi x) sin(pi y) e^-t
//! ```
//!
//! The velocity is solenoidal and vanishes on the boundary. The forcing is
//! the Navier-Stokes residual of this solution (the exact multiplier is 1).

use std::f64::consts::PI;

use crate::drlm::DrlmState;
use crate::grid::{project_mean_zero, CellField, MacGrid, VelocityField};
use crate::operators::{self, DiscreteNorms};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Manufactured {
    pub nu: f64,
}

/// Final-time errors: velocity and pressure norms plus `e_q = q - 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub norms: DiscreteNorms,
    pub e_q: f64,
}

struct Trig {
    s1x: f64,
    c1x: f64,
    s2x: f64,
    c2x: f64,
    s1y: f64,
    c1y: f64,
    s2y: f64,
    c2y: f64,
}

impl Trig {
    fn at(x: f64, y: f64) -> Self {
        let (s1x, c1x) = (PI * x).sin_cos();
        let (s1y, c1y) = (PI * y).sin_cos();
        Self {
            s1x,
            c1x,
            s2x: 2.0 * s1x * c1x,
            c2x: c1x * c1x - s1x * s1x,
            s1y,
            c1y,
            s2y: 2.0 * s1y * c1y,
            c2y: c1y * c1y - s1y * s1y,
        }
    }
}

impl Manufactured {
    pub fn new(nu: f64) -> Self {
        Self { nu }
    }

    pub fn velocity(&self, x: f64, y: f64, t: f64) -> (f64, f64) {
        let s = Trig::at(x, y);
        let e = 5.0 * (-t).exp();
        (e * s.s1x * s.s1x * s.s2y, -e * s.s2x * s.s1y * s.s1y)
    }

    pub fn pressure(&self, x: f64, y: f64, t: f64) -> f64 {
        (PI * x).cos() * (PI * y).sin() * (-t).exp()
    }

    /// Velocity gradient `((u_x, u_y), (v_x, v_y))`.
    pub fn velocity_gradient(&self, x: f64, y: f64, t: f64) -> ((f64, f64), (f64, f64)) {
        let s = Trig::at(x, y);
        let e = 5.0 * (-t).exp();
        (
            (e * PI * s.s2x * s.s2y, e * 2.0 * PI * s.s1x * s.s1x * s.c2y),
            (-e * 2.0 * PI * s.c2x * s.s1y * s.s1y, -e * PI * s.s2x * s.s2y),
        )
    }

    pub fn velocity_t(&self, x: f64, y: f64, t: f64) -> (f64, f64) {
        let (u, v) = self.velocity(x, y, t);
        (-u, -v)
    }

    pub fn laplacian(&self, x: f64, y: f64, t: f64) -> (f64, f64) {
        let s = Trig::at(x, y);
        let e = 5.0 * (-t).exp();
        let pi2 = PI * PI;
        // d2/dx2 sin^2(pi x) = 2 pi^2 cos(2 pi x); d2/dy2 sin(2 pi y) = -4 pi^2 sin(2 pi y)
        let lu = e * (2.0 * pi2 * s.c2x * s.s2y - 4.0 * pi2 * s.s1x * s.s1x * s.s2y);
        let lv = -e * (-4.0 * pi2 * s.s2x * s.s1y * s.s1y + 2.0 * pi2 * s.s2x * s.c2y);
        (lu, lv)
    }

    pub fn convective(&self, x: f64, y: f64, t: f64) -> (f64, f64) {
        let (u, v) = self.velocity(x, y, t);
        let ((ux, uy), (vx, vy)) = self.velocity_gradient(x, y, t);
        (u * ux + v * uy, u * vx + v * vy)
    }

    pub fn pressure_gradient(&self, x: f64, y: f64, t: f64) -> (f64, f64) {
        let s = Trig::at(x, y);
        let e = (-t).exp();
        (-PI * s.s1x * s.s1y * e, PI * s.c1x * s.c1y * e)
    }

    /// `u_t - nu lap u + (u.grad)u + grad p`.
    pub fn forcing(&self, x: f64, y: f64, t: f64) -> (f64, f64) {
        let ut = self.velocity_t(x, y, t);
        let lap = self.laplacian(x, y, t);
        let conv = self.convective(x, y, t);
        let gp = self.pressure_gradient(x, y, t);
        (
            ut.0 - self.nu * lap.0 + conv.0 + gp.0,
            ut.1 - self.nu * lap.1 + conv.1 + gp.1,
        )
    }

    pub fn sample_velocity(&self, grid: &MacGrid, t: f64) -> VelocityField {
        VelocityField::sample_components(
            grid,
            |x, y| self.velocity(x, y, t).0,
            |x, y| self.velocity(x, y, t).1,
        )
    }

    pub fn sample_pressure(&self, grid: &MacGrid, t: f64) -> CellField {
        CellField::sample(grid, |x, y| self.pressure(x, y, t))
    }

    pub fn sample_forcing(&self, grid: &MacGrid, t: f64) -> VelocityField {
        VelocityField::sample_components(
            grid,
            |x, y| self.forcing(x, y, t).0,
            |x, y| self.forcing(x, y, t).1,
        )
    }

    /// Estimate of `sup_t ||f(t)||_0` over `[0, t_final]` from `samples`
    /// equally spaced times, using the discrete norm on `grid`.
    pub fn forcing_sup_norm(&self, grid: &MacGrid, t_final: f64, samples: usize) -> f64 {
        let samples = samples.max(2);
        (0..samples)
            .map(|k| {
                let t = t_final * k as f64 / (samples - 1) as f64;
                operators::norm_sq(&self.sample_forcing(grid, t), grid).sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Errors of `state` against the exact solution at the state's time.
    /// Both pressures are projected to mean zero before differencing.
    pub fn error_norms(&self, state: &DrlmState, grid: &MacGrid) -> ErrorNorms {
        let t = state.time;
        let exact_u = self.sample_velocity(grid, t);
        let exact_p = project_mean_zero(self.sample_pressure(grid, t));
        let num_p = project_mean_zero(state.pressure.clone());
        let eu = VelocityField::lin_comb(1.0, &state.velocity, -1.0, &exact_u);
        let ep = CellField::lin_comb(1.0, &num_p, -1.0, &exact_p);
        ErrorNorms {
            norms: operators::norms(&eu, &ep, grid),
            e_q: state.q - 1.0,
        }
    }
}
