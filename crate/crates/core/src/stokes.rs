//! Generalized Stokes solver
//!
//! ```text
//! (alpha I - nu L) u + G p = g,   D u = 0
//! ```
//!
//! Uzawa iteration on the pressure Schur complement `S = -D A^-1 G`,
//! accelerated by conjugate gradients with the Cahouet-Chabard
//! preconditioner `nu I + alpha (-D G)^-1`. The velocity block `A` is
//! inverted exactly by fast diagonalization, which is built once per
//! operator and shared by every solve.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{
    apply_velocity_bc, for_each_interior_u, for_each_interior_v, project_mean_zero, CellField,
    MacGrid, VelocityField,
};
use crate::operators::{cell_inner, divergence, dot, gradient, laplacian};
use crate::spectral::{NeumannPoisson, VelocityHelmholtz};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 500;

#[derive(Clone)]
pub struct StokesOperator {
    pub alpha: f64,
    pub nu: f64,
    pub grid: MacGrid,
    pub tol: f64,
    pub max_iter: usize,
    helmholtz: VelocityHelmholtz,
    poisson: NeumannPoisson,
}

impl std::fmt::Debug for StokesOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StokesOperator")
            .field("alpha", &self.alpha)
            .field("nu", &self.nu)
            .field("grid", &(self.grid.nx, self.grid.ny))
            .field("tol", &self.tol)
            .field("max_iter", &self.max_iter)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub struct StokesSolution {
    pub velocity: VelocityField,
    pub pressure: CellField,
    /// `||A u + G p - g||_0 / ||g||_0`
    pub momentum_residual: f64,
    /// `||D u||_0`
    pub divergence_residual: f64,
    /// Threshold the divergence was driven below: `tol * ||A^-1 g||_0 / L`
    /// with `L` the shorter side of the domain.
    pub divergence_tolerance: f64,
    pub iterations: usize,
}

impl StokesOperator {
    pub fn new(grid: &MacGrid, alpha: f64, nu: f64, tol: f64, max_iter: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha must be positive, got {alpha}")));
        }
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidConfig(format!("nu must be positive, got {nu}")));
        }
        if !(tol > 0.0 && tol <= 1e-4) {
            return Err(Error::InvalidConfig(format!("tolerance must lie in (0, 1e-4], got {tol}")));
        }
        if max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be positive".into()));
        }
        Ok(Self {
            alpha,
            nu,
            grid: *grid,
            tol,
            max_iter,
            helmholtz: VelocityHelmholtz::new(grid, alpha, nu),
            poisson: NeumannPoisson::new(grid),
        })
    }

    /// `(alpha I - nu L) w` on interior faces.
    pub fn apply_velocity_operator(&self, w: &VelocityField) -> VelocityField {
        VelocityField::lin_comb(self.alpha, w, -self.nu, &laplacian(w, &self.grid))
    }

    /// Exact `(alpha I - nu L)^-1 r`, wall conditions applied.
    pub fn solve_velocity(&self, r: &VelocityField) -> VelocityField {
        self.helmholtz.solve(r)
    }

    fn precondition(&self, r: &CellField) -> CellField {
        let phi = self.poisson.solve(r);
        project_mean_zero(CellField::lin_comb(self.nu, r, self.alpha, &phi))
    }

    pub fn solve(&self, g: &VelocityField) -> Result<StokesSolution> {
        let grid = &self.grid;
        grid.check_velocity(g)?;
        if !g.is_finite() {
            return Err(Error::NonFinite("Stokes right-hand side"));
        }
        let g_norm = dot(g, g, grid).sqrt();
        if g_norm == 0.0 {
            return Ok(StokesSolution {
                velocity: VelocityField::zeros(grid),
                pressure: CellField::zeros(grid),
                momentum_residual: 0.0,
                divergence_residual: 0.0,
                divergence_tolerance: 0.0,
                iterations: 0,
            });
        }

        let mut u = self.solve_velocity(g);
        let length = (grid.x1 - grid.x0).min(grid.y1 - grid.y0);
        let target = self.tol * dot(&u, &u, grid).sqrt() / length;
        let mut p = CellField::zeros(grid);

        // residual of S p = -D A^-1 g is -D u
        let mut r = project_mean_zero(neg(divergence(&u, grid)));
        let mut history = vec![cell_inner(&r, &r, grid).sqrt()];
        let mut iterations = 0;

        if history[0] > target {
            let mut z = self.precondition(&r);
            let mut d = z.clone();
            let mut rz = cell_inner(&r, &z, grid);
            let mut converged = false;
            while iterations < self.max_iter {
                iterations += 1;
                let w = self.solve_velocity(&gradient(&d, grid));
                let sd = project_mean_zero(neg(divergence(&w, grid)));
                let dsd = cell_inner(&d, &sd, grid);
                if !(dsd > 0.0) {
                    break;
                }
                let step = rz / dsd;
                p = CellField::lin_comb(1.0, &p, step, &d);
                u.axpy(-step, &w);
                r = CellField::lin_comb(1.0, &r, -step, &sd);

                let div = divergence(&u, grid);
                let rn = cell_inner(&div, &div, grid).sqrt();
                history.push(rn);
                if rn <= target {
                    converged = true;
                    break;
                }
                z = self.precondition(&r);
                let rz_new = cell_inner(&r, &z, grid);
                let beta = rz_new / rz;
                rz = rz_new;
                d = CellField::lin_comb(1.0, &z, beta, &d);
            }
            if !converged {
                return Err(Error::StokesDiverged {
                    iterations,
                    residual_history: history,
                });
            }
        }

        apply_velocity_bc(&mut u, grid);
        let pressure = project_mean_zero(p);
        let momentum_residual = self.momentum_residual(&u, &pressure, g) / g_norm;
        let div = divergence(&u, grid);
        Ok(StokesSolution {
            velocity: u,
            pressure,
            momentum_residual,
            divergence_residual: cell_inner(&div, &div, grid).sqrt(),
            divergence_tolerance: target,
            iterations,
        })
    }

    /// `||(alpha I - nu L) u + G p - g||_0`
    pub fn momentum_residual(&self, u: &VelocityField, p: &CellField, g: &VelocityField) -> f64 {
        let mut r = self.apply_velocity_operator(u);
        r.axpy(1.0, &gradient(p, &self.grid));
        r.axpy(-1.0, g);
        dot(&r, &r, &self.grid).sqrt()
    }

    /// Discrete Leray projection: removes the gradient part of `u` so that
    /// `D u = 0`. Wall-normal faces are untouched.
    pub fn project_divergence_free(&self, u: &VelocityField) -> VelocityField {
        let grid = &self.grid;
        let phi = self.poisson.solve(&divergence(u, grid));
        // -D G phi = D u  =>  D (u + G phi) = 0
        let mut out = u.clone();
        out.axpy(1.0, &gradient(&phi, grid));
        apply_velocity_bc(&mut out, grid);
        out
    }
}

fn neg(mut c: CellField) -> CellField {
    c.values_mut().iter_mut().for_each(|x| *x = -*x);
    c
}

/// Direct solve of the assembled saddle-point system
///
/// ```text
/// [ alpha I - nu L   G ] [u]   [g]
/// [ D                0 ] [p] = [0]
/// ```
///
/// with the continuity row of cell 0 replaced by `p_0 = 0`. The stencils are
/// assembled here entry by entry, independently of the operator routines.
pub fn dense_oracle_solve(op: &StokesOperator, g: &VelocityField) -> Result<StokesSolution> {
    let grid = &op.grid;
    let (nx, ny) = (grid.nx, grid.ny);
    if nx > 16 || ny > 16 {
        return Err(Error::OracleTooLarge { nx, ny });
    }
    grid.check_velocity(g)?;
    let (hx, hy) = (grid.hx, grid.hy);
    let (ax, ay) = (op.nu / (hx * hx), op.nu / (hy * hy));

    let nu_dofs = (nx - 1) * ny;
    let nv_dofs = nx * (ny - 1);
    let np = nx * ny;
    let n = nu_dofs + nv_dofs + np;
    let ucol = |i: usize, j: usize| (i - 1) + j * (nx - 1);
    let vcol = |i: usize, j: usize| nu_dofs + i + (j - 1) * nx;
    let pcol = |i: usize, j: usize| nu_dofs + nv_dofs + i + j * nx;

    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);

    for j in 0..ny {
        for i in 1..nx {
            let r = ucol(i, j);
            let mut diag = op.alpha + 2.0 * ax + 2.0 * ay;
            if i > 1 {
                m[(r, ucol(i - 1, j))] = -ax;
            }
            if i < nx - 1 {
                m[(r, ucol(i + 1, j))] = -ax;
            }
            if j > 0 {
                m[(r, ucol(i, j - 1))] = -ay;
            } else {
                diag += ay; // odd ghost below the bottom wall
            }
            if j < ny - 1 {
                m[(r, ucol(i, j + 1))] = -ay;
            } else {
                diag += ay;
            }
            m[(r, r)] = diag;
            m[(r, pcol(i, j))] += 1.0 / hx;
            m[(r, pcol(i - 1, j))] -= 1.0 / hx;
            b[r] = g.u[grid.u_idx(i, j as isize)];
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let r = vcol(i, j);
            let mut diag = op.alpha + 2.0 * ax + 2.0 * ay;
            if j > 1 {
                m[(r, vcol(i, j - 1))] = -ay;
            }
            if j < ny - 1 {
                m[(r, vcol(i, j + 1))] = -ay;
            }
            if i > 0 {
                m[(r, vcol(i - 1, j))] = -ax;
            } else {
                diag += ax;
            }
            if i < nx - 1 {
                m[(r, vcol(i + 1, j))] = -ax;
            } else {
                diag += ax;
            }
            m[(r, r)] = diag;
            m[(r, pcol(i, j))] += 1.0 / hy;
            m[(r, pcol(i, j - 1))] -= 1.0 / hy;
            b[r] = g.v[grid.v_idx(i as isize, j)];
        }
    }
    for j in 0..ny {
        for i in 0..nx {
            let r = pcol(i, j);
            if i == 0 && j == 0 {
                m[(r, r)] = 1.0;
                continue;
            }
            if i + 1 < nx {
                m[(r, ucol(i + 1, j))] += 1.0 / hx;
            }
            if i > 0 {
                m[(r, ucol(i, j))] -= 1.0 / hx;
            }
            if j + 1 < ny {
                m[(r, vcol(i, j + 1))] += 1.0 / hy;
            }
            if j > 0 {
                m[(r, vcol(i, j))] -= 1.0 / hy;
            }
        }
    }

    let x = m.clone().lu().solve(&b).ok_or(Error::OracleSingular)?;

    let mut u = VelocityField::zeros(grid);
    for j in 0..ny {
        for i in 1..nx {
            u.u[grid.u_idx(i, j as isize)] = x[ucol(i, j)];
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            u.v[grid.v_idx(i as isize, j)] = x[vcol(i, j)];
        }
    }
    apply_velocity_bc(&mut u, grid);
    let p = CellField::from_values(grid, x.as_slice()[nu_dofs + nv_dofs..].to_vec())?;
    let pressure = project_mean_zero(p);

    let g_norm = dot(g, g, grid).sqrt();
    let momentum_residual = if g_norm > 0.0 {
        op.momentum_residual(&u, &pressure, g) / g_norm
    } else {
        0.0
    };
    let div = divergence(&u, grid);
    Ok(StokesSolution {
        velocity: u,
        pressure,
        momentum_residual,
        divergence_residual: cell_inner(&div, &div, grid).sqrt(),
        divergence_tolerance: 0.0,
        iterations: 1,
    })
}

/// Largest pointwise difference between two solutions over velocity
/// unknowns and pressure cells.
pub fn max_abs_difference(a: &StokesSolution, b: &StokesSolution, grid: &MacGrid) -> f64 {
    let mut m = 0.0f64;
    for_each_interior_u(grid, |k| m = m.max((a.velocity.u[k] - b.velocity.u[k]).abs()));
    for_each_interior_v(grid, |k| m = m.max((a.velocity.v[k] - b.velocity.v[k]).abs()));
    for (x, y) in a.pressure.values.iter().zip(&b.pressure.values) {
        m = m.max((x - y).abs());
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_rhs(grid: &MacGrid, rng: &mut ChaCha8Rng) -> VelocityField {
        let mut f = VelocityField::zeros(grid);
        f.u.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        f.v.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        apply_velocity_bc(&mut f, grid);
        f
    }

    fn op(n: usize) -> StokesOperator {
        let g = MacGrid::square(n).unwrap();
        StokesOperator::new(&g, 8.0, 0.1, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        let g = MacGrid::square(4).unwrap();
        assert!(StokesOperator::new(&g, 0.0, 0.1, 1e-10, 10).is_err());
        assert!(StokesOperator::new(&g, 1.0, -0.1, 1e-10, 10).is_err());
        assert!(StokesOperator::new(&g, 1.0, 0.1, 1e-3, 10).is_err());
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let s = op(8);
        let sol = s.solve(&VelocityField::zeros(&s.grid)).unwrap();
        assert_eq!(sol.velocity.max_abs_interior(&s.grid), 0.0);
        assert_eq!(sol.pressure.max_abs(), 0.0);
        let d = dense_oracle_solve(&s, &VelocityField::zeros(&s.grid)).unwrap();
        assert_eq!(d.velocity.max_abs_interior(&s.grid), 0.0);
        assert!(d.pressure.max_abs() < 1e-15);
    }

    #[test]
    fn gradient_rhs_is_absorbed_by_pressure() {
        let s = op(16);
        let g = &s.grid;
        let phat = CellField::sample(g, |x, y| (PI * x).cos() * (PI * y).sin());
        let rhs = gradient(&phat, g);
        let sol = s.solve(&rhs).unwrap();
        assert!(sol.velocity.max_abs_interior(g) < 1e-9);
        let want = project_mean_zero(phat);
        for (a, b) in sol.pressure.values.iter().zip(&want.values) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(sol.momentum_residual < 1e-10);
    }

    #[test]
    fn iterative_matches_dense_oracle() {
        let s = op(8);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let rhs = random_rhs(&s.grid, &mut rng);
            let a = s.solve(&rhs).unwrap();
            let b = dense_oracle_solve(&s, &rhs).unwrap();
            assert!(max_abs_difference(&a, &b, &s.grid) < 1e-8);
            assert!(a.divergence_residual <= a.divergence_tolerance);
            assert!(a.pressure.mean().abs() < 1e-14);
        }
    }

    #[test]
    fn oracle_residual_on_unit_vector() {
        let s = op(4);
        let mut rhs = VelocityField::zeros(&s.grid);
        rhs.u[s.grid.u_idx(2, 1)] = 1.0;
        let d = dense_oracle_solve(&s, &rhs).unwrap();
        assert!(d.momentum_residual < 1e-12);
        assert!(d.divergence_residual < 1e-12);
    }

    #[test]
    fn oracle_rejects_large_grids() {
        let s = op(17);
        assert!(matches!(
            dense_oracle_solve(&s, &VelocityField::zeros(&s.grid)),
            Err(Error::OracleTooLarge { .. })
        ));
    }

    #[test]
    fn solve_is_linear() {
        let s = op(12);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_rhs(&s.grid, &mut rng);
        let b = random_rhs(&s.grid, &mut rng);
        let sa = s.solve(&a).unwrap();
        let sb = s.solve(&b).unwrap();
        let sab = s.solve(&VelocityField::lin_comb(1.0, &a, 1.0, &b)).unwrap();
        let sum = VelocityField::lin_comb(1.0, &sa.velocity, 1.0, &sb.velocity);
        let scale = sab.velocity.max_abs_interior(&s.grid);
        let diff = VelocityField::lin_comb(1.0, &sum, -1.0, &sab.velocity).max_abs_interior(&s.grid);
        assert!(diff <= 10.0 * s.tol * scale.max(1.0));
    }

    #[test]
    fn velocity_operator_is_spd() {
        let s = op(10);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let w1 = random_rhs(&s.grid, &mut rng);
            let w2 = random_rhs(&s.grid, &mut rng);
            let a11 = dot(&s.apply_velocity_operator(&w1), &w1, &s.grid);
            assert!(a11 > 0.0);
            let a12 = dot(&s.apply_velocity_operator(&w1), &w2, &s.grid);
            let a21 = dot(&s.apply_velocity_operator(&w2), &w1, &s.grid);
            assert!((a12 - a21).abs() <= 1e-13 * a12.abs().max(a11));
        }
    }

    #[test]
    fn schur_consistency() {
        let s = op(16);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let g = random_rhs(&s.grid, &mut rng);
        let sol = s.solve(&g).unwrap();
        let mut rhs = g.clone();
        rhs.axpy(-1.0, &gradient(&sol.pressure, &s.grid));
        let u = s.solve_velocity(&rhs);
        let div = divergence(&u, &s.grid);
        assert!(cell_inner(&div, &div, &s.grid).sqrt() <= 2.0 * sol.divergence_tolerance);
    }

    #[test]
    fn non_convergence_reports_history() {
        let g = MacGrid::square(32).unwrap();
        let s = StokesOperator::new(&g, 8.0, 0.1, 1e-12, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        match s.solve(&random_rhs(&g, &mut rng)) {
            Err(Error::StokesDiverged {
                iterations,
                residual_history,
            }) => {
                assert_eq!(iterations, 1);
                assert_eq!(residual_history.len(), 2);
            }
            other => panic!("expected divergence error, got {other:?}"),
        }
    }

    #[test]
    fn leray_projection_is_divergence_free() {
        let s = op(16);
        let m = crate::manufactured::Manufactured::new(0.1);
        let u = m.sample_velocity(&s.grid, 0.0);
        let pu = s.project_divergence_free(&u);
        assert!(divergence(&pu, &s.grid).max_abs() < 1e-10);
        let diff = VelocityField::lin_comb(1.0, &pu, -1.0, &u).max_abs_interior(&s.grid);
        assert!(diff < 0.1);
    }
}
