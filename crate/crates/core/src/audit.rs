//! Property suites over randomized inputs on small grids. Each suite returns
//! the worst observed value next to its limit so that callers can print a
//! report or fail a test on it.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::drlm::{
    drlm_step, initial_state, multiplier_bound_c0, run_simulation, superposition_gap, RunConfig,
};
use crate::error::Result;
use crate::grid::{apply_velocity_bc, CellField, MacGrid, VelocityField};
use crate::operators::{
    cell_inner, divergence, dot, gradient, h1_seminorm_sq, laplacian, norm_sq, skew_advect,
    ConvectionForm,
};
use crate::stokes::{dense_oracle_solve, max_abs_difference, StokesOperator, DEFAULT_TOL};

/// Relative limits for the operator identities.
pub const ADJOINT_LIMIT: f64 = 1e-13;
pub const SYMMETRY_LIMIT: f64 = 1e-13;
pub const SEMINORM_LIMIT: f64 = 1e-12;
/// Absolute max-norm gap between the iterative and dense Stokes solutions.
pub const ORACLE_LIMIT: f64 = 1e-8;
/// Identity residuals may reach this multiple of the Stokes tolerance.
pub const SOLVER_FACTOR: f64 = 10.0;
/// The quadratic residual may reach this many ulps of its largest term.
pub const QUADRATIC_ULPS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub worst: f64,
    pub limit: f64,
    pub cases: usize,
    pub passed: bool,
}

impl Check {
    /// Passes when `worst <= limit`; NaN never passes.
    pub fn at_most(name: impl Into<String>, worst: f64, limit: f64, cases: usize) -> Self {
        Self {
            name: name.into(),
            worst,
            limit,
            cases,
            passed: worst <= limit,
        }
    }

    /// Boolean property, reported as the number of violating cases.
    pub fn holds(name: impl Into<String>, violations: usize, cases: usize) -> Self {
        Self {
            name: name.into(),
            worst: violations as f64,
            limit: 0.0,
            cases,
            passed: violations == 0,
        }
    }
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} {:<44} worst {:.3e} limit {:.3e} ({} cases)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.worst,
            self.limit,
            self.cases
        )
    }
}

/// Random grid with 2..=max cells per direction and unequal spacings.
pub fn random_grid(rng: &mut ChaCha8Rng, max: usize) -> MacGrid {
    let nx = rng.gen_range(2..=max);
    let ny = rng.gen_range(2..=max);
    let lx = rng.gen_range(0.5..2.0);
    let ly = rng.gen_range(0.5..2.0);
    MacGrid::with_bounds(nx, ny, (0.0, lx), (0.0, ly)).expect("valid random grid")
}

/// Uniform random interior values with wall conditions applied.
pub fn random_velocity(grid: &MacGrid, rng: &mut ChaCha8Rng) -> VelocityField {
    let mut w = VelocityField::zeros(grid);
    w.u.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    w.v.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
    apply_velocity_bc(&mut w, grid);
    w
}

pub fn random_cells(grid: &MacGrid, rng: &mut ChaCha8Rng) -> CellField {
    let vals = (0..grid.cell_len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    CellField::from_values(grid, vals).expect("matching length")
}

fn l2(w: &VelocityField, g: &MacGrid) -> f64 {
    norm_sq(w, g).sqrt()
}

fn cell_l2(p: &CellField, g: &MacGrid) -> f64 {
    cell_inner(p, p, g).sqrt()
}

/// Adjointness of gradient and divergence, symmetry of the Laplacian, the
/// Laplacian against the seminorm and skew-symmetry of the flux-form
/// convection, each
/// over `trials` random fields on random grids.
pub fn operator_algebra(seed: u64, trials: usize) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut adj, mut sym, mut semi, mut skew) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..trials {
        let g = random_grid(&mut rng, 12);
        let p = random_cells(&g, &mut rng);
        let w = random_velocity(&g, &mut rng);
        let z = random_velocity(&g, &mut rng);
        let a = random_velocity(&g, &mut rng);

        let gp = gradient(&p, &g);
        let dw = divergence(&w, &g);
        let lhs = dot(&gp, &w, &g);
        let rhs = -cell_inner(&p, &dw, &g);
        let scale = l2(&gp, &g) * l2(&w, &g) + cell_l2(&p, &g) * cell_l2(&dw, &g);
        adj = adj.max((lhs - rhs).abs() / scale);

        let lw = laplacian(&w, &g);
        let lz = laplacian(&z, &g);
        let scale = l2(&lw, &g) * l2(&z, &g) + l2(&w, &g) * l2(&lz, &g);
        sym = sym.max((dot(&lw, &z, &g) - dot(&w, &lz, &g)).abs() / scale);

        let s = h1_seminorm_sq(&w, &g);
        semi = semi.max((-dot(&lw, &w, &g) - s).abs() / s);

        let cw = skew_advect(&a, &w, &g);
        let cz = skew_advect(&a, &z, &g);
        let scale = l2(&cw, &g) * l2(&z, &g) + l2(&w, &g) * l2(&cz, &g);
        skew = skew.max((dot(&cw, &z, &g) + dot(&w, &cz, &g)).abs() / scale);
    }
    vec![
        Check::at_most("gradient/divergence adjointness", adj, ADJOINT_LIMIT, trials),
        Check::at_most("Laplacian symmetry", sym, SYMMETRY_LIMIT, trials),
        Check::at_most("Laplacian/seminorm consistency", semi, SEMINORM_LIMIT, trials),
        Check::at_most("skew convection form skew-symmetry", skew, SYMMETRY_LIMIT, trials),
        divergence_of_gradient(),
    ]
}

/// `D G` on a 4x4 grid against a 5-point Neumann Laplacian written out cell
/// by cell.
fn divergence_of_gradient() -> Check {
    let g = MacGrid::with_bounds(4, 4, (0.0, 1.0), (0.0, 0.5)).expect("4x4 grid");
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut worst = 0.0f64;
    let cases = 10;
    for _ in 0..cases {
        let p = random_cells(&g, &mut rng);
        let dg = divergence(&gradient(&p, &g), &g);
        for j in 0..4usize {
            for i in 0..4usize {
                let c = p.values[j * 4 + i];
                let mut expect = 0.0;
                if i > 0 {
                    expect += (p.values[j * 4 + i - 1] - c) / (g.hx * g.hx);
                }
                if i < 3 {
                    expect += (p.values[j * 4 + i + 1] - c) / (g.hx * g.hx);
                }
                if j > 0 {
                    expect += (p.values[(j - 1) * 4 + i] - c) / (g.hy * g.hy);
                }
                if j < 3 {
                    expect += (p.values[(j + 1) * 4 + i] - c) / (g.hy * g.hy);
                }
                let got = dg.values[j * 4 + i];
                worst = worst.max((got - expect).abs() / expect.abs().max(1.0));
            }
        }
    }
    Check::at_most("div(grad) equals Neumann 5-point Laplacian", worst, 1e-13, cases)
}

/// Iterative Stokes solutions against the dense oracle for `trials` random
/// right-hand sides on an 8x8 grid.
pub fn oracle_equivalence(seed: u64, trials: usize) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = MacGrid::square(8)?;
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let alpha = 2f64.powi(rng.gen_range(0..8));
        let nu = rng.gen_range(0.01..1.0);
        let op = StokesOperator::new(&g, alpha, nu, DEFAULT_TOL, 500)?;
        let rhs = random_velocity(&g, &mut rng);
        let it = op.solve(&rhs)?;
        let dense = dense_oracle_solve(&op, &rhs)?;
        worst = worst.max(max_abs_difference(&it, &dense, &g));
    }
    Ok(Check::at_most("iterative vs dense Stokes (8x8)", worst, ORACLE_LIMIT, trials))
}

/// One row per random right-hand side: Uzawa iterations and the max-norm
/// gap to the dense solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleTrial {
    pub iterations: usize,
    pub gap: f64,
}

/// Compares the iterative and dense solvers for a fixed operator.
pub fn oracle_trials(op: &StokesOperator, seed: u64, trials: usize) -> Result<Vec<OracleTrial>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|_| {
            let rhs = random_velocity(&op.grid, &mut rng);
            let it = op.solve(&rhs)?;
            let dense = dense_oracle_solve(op, &rhs)?;
            Ok(OracleTrial {
                iterations: it.iterations,
                gap: max_abs_difference(&it, &dense, &op.grid),
            })
        })
        .collect()
}

/// Smooth random initial velocity and forcing, built from a few sine and
/// cosine modes so that both vanish on the walls, with either convection
/// stencil.
pub fn random_config(rng: &mut ChaCha8Rng) -> RunConfig {
    let n = rng.gen_range(4..=12);
    let theta = 10f64.powf(rng.gen_range(-1.0..2.0));
    let tau = 0.5f64.powi(rng.gen_range(1..=4));
    let steps = rng.gen_range(1..=6);
    let nu = 10f64.powf(rng.gen_range(-2.0..0.0));
    let mut cfg = RunConfig::manufactured(theta, nu, tau, tau * steps as f64, n)
        .expect("valid random config");
    if rng.gen_bool(0.5) {
        cfg.convection = ConvectionForm::Skew;
    }

    let modes = |rng: &mut ChaCha8Rng| -> Vec<(f64, f64, f64, f64)> {
        (0..3)
            .map(|_| {
                (
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(1..=3) as f64,
                    rng.gen_range(1..=3) as f64,
                    rng.gen_range(0.0..4.0),
                )
            })
            .collect()
    };
    let iu = modes(rng);
    let iv = modes(rng);
    let fu = modes(rng);
    let fv = modes(rng);
    let sum = |m: &[(f64, f64, f64, f64)], x: f64, y: f64, t: f64| {
        m.iter()
            .map(|(c, kx, ky, w)| c * (kx * PI * x).sin() * (ky * PI * y).sin() * (w * t).cos())
            .sum::<f64>()
    };
    cfg.initial_velocity = Arc::new(move |x, y| (sum(&iu, x, y, 0.0), sum(&iv, x, y, 0.0)));
    cfg.forcing = Arc::new(move |x, y, t| (sum(&fu, x, y, t), sum(&fv, x, y, t)));
    cfg
}

/// Per-step invariants of the stepper over `trials` random configurations:
/// multiplier positivity, coefficient signs, quadratic, energy,
/// multiplier-dynamics and momentum residuals, superposition, divergence,
/// and the uniform multiplier bound for `theta >= 1`.
///
/// The multiplier-dynamics identity without the convective work term only
/// holds for the skew-symmetric stencil, so it is checked on those
/// configurations; the balanced identity is checked on all of them.
pub fn stepper_invariants(seed: u64, trials: usize) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut steps = 0usize;
    let mut sign_violations = 0usize;
    let mut bound_violations = 0usize;
    let mut bound_cases = 0usize;
    let (mut quad, mut energy, mut qdyn, mut mom, mut sup, mut div) =
        (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut qdyn_skew, mut skew_steps) = (0.0f64, 0usize);
    for _ in 0..trials {
        let cfg = random_config(&mut rng);
        let n = cfg.validate()?;
        let stokes = cfg.stokes_operator()?;
        let mut state = initial_state(&cfg, &stokes);
        let u0 = l2(&state.velocity, &cfg.grid);
        let cf = (1..=n)
            .map(|k| l2(&cfg.sample_forcing(k as f64 * cfg.tau), &cfg.grid))
            .fold(0.0, f64::max);
        let c0 = multiplier_bound_c0(u0, cf, cfg.t_final)?;
        let mut q_max = 0.0f64;
        for _ in 0..n {
            let (next, d) = drlm_step(&state, &cfg, &stokes)?;
            steps += 1;
            let k = d.coefficients;
            if !(d.q > 0.0 && k.a > cfg.theta && k.c < 0.0) {
                sign_violations += 1;
            }
            quad = quad.max(d.quadratic_relative() / f64::EPSILON);
            energy = energy.max(d.energy_relative() / cfg.tol);
            qdyn = qdyn.max(d.qdyn_balanced_relative() / cfg.tol);
            if cfg.convection == ConvectionForm::Skew {
                skew_steps += 1;
                qdyn_skew = qdyn_skew.max(d.qdyn_relative() / cfg.tol);
            }
            mom = mom.max(d.momentum_relative() / cfg.tol);
            div = div.max(d.div_l2 / d.div_tolerance);
            sup = sup.max(superposition_gap(&state, &next, &cfg, &stokes)? / cfg.tol);
            q_max = q_max.max(d.q);
            state = next;
        }
        if cfg.theta >= 1.0 {
            bound_cases += 1;
            if q_max > c0 {
                bound_violations += 1;
            }
        }
    }
    Ok(vec![
        Check::holds("q > 0, A > theta, C < 0", sign_violations, steps),
        Check::at_most("quadratic residual [ulps]", quad, QUADRATIC_ULPS, steps),
        Check::at_most("energy identity [x tol]", energy, SOLVER_FACTOR, steps),
        Check::at_most("multiplier dynamics with b(u,u,u) [x tol]", qdyn, SOLVER_FACTOR, steps),
        Check::at_most("multiplier dynamics, skew form [x tol]", qdyn_skew, SOLVER_FACTOR, skew_steps),
        Check::at_most("coupled momentum residual [x tol]", mom, SOLVER_FACTOR, steps),
        Check::at_most("superposition re-solve [x tol]", sup, SOLVER_FACTOR, steps),
        Check::at_most("divergence [x solver bound]", div, 1.0, steps),
        Check::holds("max q <= c0 for theta >= 1", bound_violations, bound_cases),
    ])
}

/// Two runs of the same random configuration must agree bit for bit.
pub fn determinism(seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = random_config(&mut rng);
    let a = run_simulation(&cfg, |_, _| {}).map_err(|f| f.error)?;
    let b = run_simulation(&cfg, |_, _| {}).map_err(|f| f.error)?;
    let same = a.state.q.to_bits() == b.state.q.to_bits()
        && a.state.velocity.u.iter().zip(&b.state.velocity.u).all(|(x, y)| x.to_bits() == y.to_bits())
        && a.state.velocity.v.iter().zip(&b.state.velocity.v).all(|(x, y)| x.to_bits() == y.to_bits())
        && a.state.pressure.values.iter().zip(&b.state.pressure.values).all(|(x, y)| x.to_bits() == y.to_bits());
    Ok(Check::holds("bitwise determinism", usize::from(!same), 1))
}

/// Everything the `check` command runs.
pub fn full_audit(seed: u64) -> Result<Vec<Check>> {
    let mut checks = operator_algebra(seed, 100);
    checks.push(oracle_equivalence(seed.wrapping_add(1), 20)?);
    checks.extend(stepper_invariants(seed.wrapping_add(2), 40)?);
    checks.push(determinism(seed.wrapping_add(3))?);
    Ok(checks)
}
