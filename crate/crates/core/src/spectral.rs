//! Fast diagonalization of the constant-coefficient MAC operators.
//!
//! On a uniform box every 1D second-difference operator that appears here
//! is diagonalized by a real trigonometric transform:
//!
//! | unknowns                         | closure             | transform |
//! |----------------------------------|---------------------|-----------|
//! | nodes strictly inside, zero ends | Dirichlet at nodes  | DST-I     |
//! | cell midpoints, odd ghosts       | Dirichlet at faces  | DST-II    |
//! | cell midpoints, even ghosts      | Neumann at faces    | DCT-II    |
//!
//! Each velocity component is Dirichlet-at-nodes in its normal direction and
//! Dirichlet-at-faces tangentially; the pressure Laplacian is Neumann in both.

use std::sync::Arc;

use rustdct::{Dst1, DctPlanner, TransformType2And3};

use crate::grid::{apply_velocity_bc, CellField, MacGrid, VelocityField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisKind {
    DirichletNode,
    DirichletMid,
    NeumannMid,
}

#[derive(Clone)]
enum Plan {
    Node(Arc<dyn Dst1<f64>>),
    Mid(Arc<dyn TransformType2And3<f64>>),
}

/// One direction of a separable operator: its transform and the
/// eigenvalues of `-d^2/dx^2` in transform order.
#[derive(Clone)]
pub struct Axis {
    kind: AxisKind,
    len: usize,
    plan: Plan,
    pub eigenvalues: Vec<f64>,
}

impl Axis {
    /// `cells` is the number of grid cells in this direction; the axis
    /// length is `cells - 1` for node unknowns and `cells` otherwise.
    pub fn new(planner: &mut DctPlanner<f64>, kind: AxisKind, cells: usize, h: f64) -> Self {
        let s = |k: f64| {
            let t = (std::f64::consts::PI * k / (2.0 * cells as f64)).sin();
            4.0 * t * t / (h * h)
        };
        let (len, plan, eigenvalues): (usize, Plan, Vec<f64>) = match kind {
            AxisKind::DirichletNode => {
                let len = cells - 1;
                (
                    len,
                    Plan::Node(planner.plan_dst1(len)),
                    (0..len).map(|k| s((k + 1) as f64)).collect(),
                )
            }
            AxisKind::DirichletMid => (
                cells,
                Plan::Mid(planner.plan_dst2(cells)),
                (0..cells).map(|k| s((k + 1) as f64)).collect(),
            ),
            AxisKind::NeumannMid => (
                cells,
                Plan::Mid(planner.plan_dct2(cells)),
                (0..cells).map(|k| s(k as f64)).collect(),
            ),
        };
        Self {
            kind,
            len,
            plan,
            eigenvalues,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn forward(&self, buf: &mut [f64]) {
        match (&self.plan, self.kind) {
            (Plan::Node(p), _) => p.process_dst1(buf),
            (Plan::Mid(p), AxisKind::DirichletMid) => p.process_dst2(buf),
            (Plan::Mid(p), _) => p.process_dct2(buf),
        }
    }

    pub fn inverse(&self, buf: &mut [f64]) {
        let scale = match (&self.plan, self.kind) {
            (Plan::Node(p), _) => {
                p.process_dst1(buf);
                2.0 / (self.len + 1) as f64
            }
            (Plan::Mid(p), AxisKind::DirichletMid) => {
                p.process_dst3(buf);
                2.0 / self.len as f64
            }
            (Plan::Mid(p), _) => {
                p.process_dct3(buf);
                2.0 / self.len as f64
            }
        };
        buf.iter_mut().for_each(|x| *x *= scale);
    }
}

/// Tensor-product operator `shift + coeff * (Lx + Ly)` on a dense
/// row-major block of `ay.len()` rows by `ax.len()` columns.
#[derive(Clone)]
pub struct Separable2d {
    pub ax: Axis,
    pub ay: Axis,
}

impl Separable2d {
    fn transform(&self, data: &mut [f64], forward: bool) {
        let (nxb, nyb) = (self.ax.len(), self.ay.len());
        for row in data.chunks_exact_mut(nxb) {
            if forward {
                self.ax.forward(row)
            } else {
                self.ax.inverse(row)
            }
        }
        let mut col = vec![0.0; nyb];
        for i in 0..nxb {
            for (j, c) in col.iter_mut().enumerate() {
                *c = data[j * nxb + i];
            }
            if forward {
                self.ay.forward(&mut col)
            } else {
                self.ay.inverse(&mut col)
            }
            for (j, c) in col.iter().enumerate() {
                data[j * nxb + i] = *c;
            }
        }
    }

    /// In-place solve. Modes whose symbol is exactly zero are set to zero.
    pub fn solve(&self, data: &mut [f64], shift: f64, coeff: f64) {
        let nxb = self.ax.len();
        debug_assert_eq!(data.len(), nxb * self.ay.len());
        self.transform(data, true);
        for (j, row) in data.chunks_exact_mut(nxb).enumerate() {
            let ly = self.ay.eigenvalues[j];
            for (x, lx) in row.iter_mut().zip(&self.ax.eigenvalues) {
                let d = shift + coeff * (lx + ly);
                *x = if d == 0.0 { 0.0 } else { *x / d };
            }
        }
        self.transform(data, false);
    }
}

/// Exact inverse of `alpha I - nu L` on interior velocity faces.
#[derive(Clone)]
pub struct VelocityHelmholtz {
    grid: MacGrid,
    alpha: f64,
    nu: f64,
    u_op: Separable2d,
    v_op: Separable2d,
}

impl VelocityHelmholtz {
    pub fn new(grid: &MacGrid, alpha: f64, nu: f64) -> Self {
        let mut planner = DctPlanner::new();
        let u_op = Separable2d {
            ax: Axis::new(&mut planner, AxisKind::DirichletNode, grid.nx, grid.hx),
            ay: Axis::new(&mut planner, AxisKind::DirichletMid, grid.ny, grid.hy),
        };
        let v_op = Separable2d {
            ax: Axis::new(&mut planner, AxisKind::DirichletMid, grid.nx, grid.hx),
            ay: Axis::new(&mut planner, AxisKind::DirichletNode, grid.ny, grid.hy),
        };
        Self {
            grid: *grid,
            alpha,
            nu,
            u_op,
            v_op,
        }
    }

    /// Returns `w` with `(alpha I - nu L) w = rhs` on interior faces and
    /// wall conditions applied.
    pub fn solve(&self, rhs: &VelocityField) -> VelocityField {
        let g = &self.grid;
        let mut out = VelocityField::zeros(g);

        let mut buf = Vec::with_capacity((g.nx - 1) * g.ny);
        for j in 0..g.ny as isize {
            let row = g.u_idx(0, j);
            buf.extend_from_slice(&rhs.u[row + 1..row + g.nx]);
        }
        self.u_op.solve(&mut buf, self.alpha, self.nu);
        for (j, chunk) in buf.chunks_exact(g.nx - 1).enumerate() {
            let row = g.u_idx(0, j as isize);
            out.u[row + 1..row + g.nx].copy_from_slice(chunk);
        }

        buf.clear();
        for j in 1..g.ny {
            let row = g.v_idx(0, j);
            buf.extend_from_slice(&rhs.v[row..row + g.nx]);
        }
        self.v_op.solve(&mut buf, self.alpha, self.nu);
        for (j, chunk) in buf.chunks_exact(g.nx).enumerate() {
            let row = g.v_idx(0, j + 1);
            out.v[row..row + g.nx].copy_from_slice(chunk);
        }

        apply_velocity_bc(&mut out, g);
        out
    }
}

/// Mean-zero inverse of the cell Laplacian `-div grad` with the
/// homogeneous Neumann closure implied by zero wall-face gradients.
#[derive(Clone)]
pub struct NeumannPoisson {
    op: Separable2d,
}

impl NeumannPoisson {
    pub fn new(grid: &MacGrid) -> Self {
        let mut planner = DctPlanner::new();
        Self {
            op: Separable2d {
                ax: Axis::new(&mut planner, AxisKind::NeumannMid, grid.nx, grid.hx),
                ay: Axis::new(&mut planner, AxisKind::NeumannMid, grid.ny, grid.hy),
            },
        }
    }

    /// Solves `-div grad phi = rhs - mean(rhs)`; the result has zero mean.
    pub fn solve(&self, rhs: &CellField) -> CellField {
        let mut out = rhs.clone();
        self.op.solve(out.values_mut(), 0.0, 1.0);
        crate::grid::project_mean_zero(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{divergence, gradient, laplacian};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn second_difference(x: &[f64], kind: AxisKind, h: f64) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                let c = x[k];
                let ghost = |idx: isize| -> f64 {
                    if idx >= 0 && (idx as usize) < n {
                        x[idx as usize]
                    } else {
                        match kind {
                            AxisKind::DirichletNode => 0.0,
                            AxisKind::DirichletMid => -c,
                            AxisKind::NeumannMid => c,
                        }
                    }
                };
                -(ghost(k as isize - 1) - 2.0 * c + ghost(k as isize + 1)) / (h * h)
            })
            .collect()
    }

    #[test]
    fn axes_round_trip_and_diagonalize() {
        let mut planner = DctPlanner::new();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for kind in [AxisKind::DirichletNode, AxisKind::DirichletMid, AxisKind::NeumannMid] {
            for cells in [2usize, 3, 8, 13] {
                let h = 1.0 / cells as f64;
                let axis = Axis::new(&mut planner, kind, cells, h);
                let x: Vec<f64> = (0..axis.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let mut y = x.clone();
                axis.forward(&mut y);
                axis.inverse(&mut y);
                for (a, b) in x.iter().zip(&y) {
                    assert!((a - b).abs() < 1e-13, "{kind:?} {cells}");
                }
                let mut fx = x.clone();
                axis.forward(&mut fx);
                let mut flx = second_difference(&x, kind, h);
                axis.forward(&mut flx);
                for k in 0..axis.len() {
                    let want = axis.eigenvalues[k] * fx[k];
                    assert!(
                        (flx[k] - want).abs() < 1e-10 * (1.0 + want.abs()),
                        "{kind:?} cells={cells} k={k}"
                    );
                }
            }
        }
    }

    #[test]
    fn helmholtz_inverts_velocity_operator() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (nx, ny) in [(2, 2), (5, 3), (16, 16)] {
            let g = MacGrid::new(nx, ny).unwrap();
            let (alpha, nu) = (8.0, 0.1);
            let h = VelocityHelmholtz::new(&g, alpha, nu);
            let mut rhs = VelocityField::zeros(&g);
            rhs.u.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
            rhs.v.iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
            apply_velocity_bc(&mut rhs, &g);
            let w = h.solve(&rhs);
            let lw = laplacian(&w, &g);
            let aw = VelocityField::lin_comb(alpha, &w, -nu, &lw);
            let r = VelocityField::lin_comb(1.0, &aw, -1.0, &rhs);
            assert!(r.max_abs_interior(&g) < 1e-12, "{nx}x{ny}");
        }
    }

    #[test]
    fn poisson_inverts_div_grad() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let g = MacGrid::new(12, 7).unwrap();
        let solver = NeumannPoisson::new(&g);
        let rhs = crate::grid::project_mean_zero(CellField::sample(&g, |_, _| rng.gen_range(-1.0..1.0)));
        let phi = solver.solve(&rhs);
        let back = divergence(&gradient(&phi, &g), &g);
        for (a, b) in back.values.iter().zip(&rhs.values) {
            assert!((a + b).abs() < 1e-11);
        }
        assert!(phi.mean().abs() < 1e-15);
    }
}
