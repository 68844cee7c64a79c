//! Discrete operators and inner products on the MAC grid.
//!
//! The operators are paired so that summation by parts holds exactly:
//! `(grad p, w) = -(p, div w)` for every `w` vanishing on wall faces, and
//! `(-lap w, w) = |w|_1^2` with the seminorm built from the same difference
//! quotients.
//!
//! Convection comes in two stencils. The default is the centered advective
//! form. The alternative flux form is skew-adjoint, `b(a, c, w) = -b(a, w, c)`
//! to rounding, which makes `b(u, u, u)` vanish identically.

use crate::error::Result;
use crate::grid::{for_each_interior_u, for_each_interior_v, CellField, MacGrid, VelocityField};

/// Velocity and pressure norms of an error pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiscreteNorms {
    pub l2_u: f64,
    pub h1semi_u: f64,
    pub h1_u: f64,
    pub l2_p: f64,
}

/// Per-cell `(u[i+1,j] - u[i,j])/hx + (v[i,j+1] - v[i,j])/hy`.
pub fn divergence(vel: &VelocityField, grid: &MacGrid) -> CellField {
    let mut out = CellField::zeros(grid);
    let vals = out.values_mut();
    let (ihx, ihy) = (1.0 / grid.hx, 1.0 / grid.hy);
    for j in 0..grid.ny {
        let ur = grid.u_idx(0, j as isize);
        let vb = grid.v_idx(0, j);
        let vt = grid.v_idx(0, j + 1);
        for i in 0..grid.nx {
            vals[grid.cell_idx(i, j)] =
                (vel.u[ur + i + 1] - vel.u[ur + i]) * ihx + (vel.v[vt + i] - vel.v[vb + i]) * ihy;
        }
    }
    out
}

/// Face-normal pressure differences on interior faces; wall faces stay 0.
pub fn gradient(p: &CellField, grid: &MacGrid) -> VelocityField {
    let mut out = VelocityField::zeros(grid);
    let (ihx, ihy) = (1.0 / grid.hx, 1.0 / grid.hy);
    let pv = &p.values;
    for j in 0..grid.ny {
        let row = grid.u_idx(0, j as isize);
        let c = grid.cell_idx(0, j);
        for i in 1..grid.nx {
            out.u[row + i] = (pv[c + i] - pv[c + i - 1]) * ihx;
        }
    }
    for j in 1..grid.ny {
        let row = grid.v_idx(0, j);
        let cb = grid.cell_idx(0, j - 1);
        let ct = grid.cell_idx(0, j);
        for i in 0..grid.nx {
            out.v[row + i] = (pv[ct + i] - pv[cb + i]) * ihy;
        }
    }
    out
}

/// Component-wise 5-point Laplacian on interior faces. Reads wall faces and
/// ghost values, so the input must have its boundary conditions applied.
pub fn laplacian(vel: &VelocityField, grid: &MacGrid) -> VelocityField {
    let mut out = VelocityField::zeros(grid);
    let (ihx2, ihy2) = (1.0 / (grid.hx * grid.hx), 1.0 / (grid.hy * grid.hy));
    let us = grid.u_stride();
    let u = &vel.u;
    for j in 0..grid.ny as isize {
        let row = grid.u_idx(0, j);
        for i in 1..grid.nx {
            let k = row + i;
            out.u[k] = (u[k + 1] - 2.0 * u[k] + u[k - 1]) * ihx2
                + (u[k + us] - 2.0 * u[k] + u[k - us]) * ihy2;
        }
    }
    let vs = grid.v_stride();
    let v = &vel.v;
    for j in 1..grid.ny {
        let row = grid.v_idx(0, j);
        for i in 0..grid.nx {
            let k = row + i;
            out.v[k] = (v[k + 1] - 2.0 * v[k] + v[k - 1]) * ihx2
                + (v[k + vs] - 2.0 * v[k] + v[k - vs]) * ihy2;
        }
    }
    out
}

/// Discretization of `(a . grad) c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvectionForm {
    /// Centered differences of `c` times `a`, with the transverse component
    /// of `a` averaged from the four surrounding faces.
    #[default]
    Advective,
    /// Symmetry-preserving flux stencil; see [`skew_advect`].
    Skew,
}

impl ConvectionForm {
    pub fn apply(self, a: &VelocityField, c: &VelocityField, grid: &MacGrid) -> VelocityField {
        match self {
            Self::Advective => advect(a, c, grid),
            Self::Skew => skew_advect(a, c, grid),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Advective => "advective",
            Self::Skew => "skew",
        }
    }
}

impl std::str::FromStr for ConvectionForm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "advective" => Ok(Self::Advective),
            "skew" => Ok(Self::Skew),
            other => Err(format!("unknown convection form {other:?} (advective or skew)")),
        }
    }
}

/// Advective form of `(a . grad) c` at interior faces. For the u-component,
/// `a_u dc_u/dx` by centered differences plus `abar_v dc_u/dy` with `abar_v`
/// the mean of the four v-faces around the u-face; the v-component mirrors
/// it. Reads ghost values of `c`.
pub fn advect(a: &VelocityField, c: &VelocityField, grid: &MacGrid) -> VelocityField {
    let mut out = VelocityField::zeros(grid);
    let (ihx, ihy) = (0.5 / grid.hx, 0.5 / grid.hy);
    let us = grid.u_stride();
    let vs = grid.v_stride();

    for j in 0..grid.ny {
        let row = grid.u_idx(0, j as isize);
        let vbot = grid.v_idx(0, j);
        let vtop = grid.v_idx(0, j + 1);
        for i in 1..grid.nx {
            let k = row + i;
            let vbar =
                0.25 * (a.v[vbot + i - 1] + a.v[vbot + i] + a.v[vtop + i - 1] + a.v[vtop + i]);
            out.u[k] = a.u[k] * (c.u[k + 1] - c.u[k - 1]) * ihx
                + vbar * (c.u[k + us] - c.u[k - us]) * ihy;
        }
    }

    for j in 1..grid.ny {
        let row = grid.v_idx(0, j);
        let ubot = grid.u_idx(0, j as isize - 1);
        let utop = grid.u_idx(0, j as isize);
        for i in 0..grid.nx {
            let k = row + i;
            let ubar =
                0.25 * (a.u[ubot + i] + a.u[ubot + i + 1] + a.u[utop + i] + a.u[utop + i + 1]);
            out.v[k] = ubar * (c.v[k + 1] - c.v[k - 1]) * ihx
                + a.v[k] * (c.v[k + vs] - c.v[k - vs]) * ihy;
        }
    }
    out
}

/// Flux form of `(a . grad) c`. Each face carries a control volume of size
/// `hx x hy`. With `F` the outward volume flux of `a` through a side (linear
/// interpolation of the normal component) and `c_nb` the value across that
/// side,
///
/// ```text
/// (C(a) c)_k = sum_sides F * c_nb / (2 hx hy)
/// ```
///
/// This equals `a.grad(c) + c div(a)/2` to second order, so it agrees with
/// the advective form for solenoidal `a`. Every interior side is shared by
/// two control volumes with opposite `F`, which makes `C(a)` skew-adjoint.
/// Wall sides either have zero flux or a zero wall-face neighbour.
pub fn skew_advect(a: &VelocityField, c: &VelocityField, grid: &MacGrid) -> VelocityField {
    let mut out = VelocityField::zeros(grid);
    let (hx, hy) = (grid.hx, grid.hy);
    let scale = 1.0 / (2.0 * hx * hy);
    let us = grid.u_stride();
    let vs = grid.v_stride();

    // u control volumes
    for j in 0..grid.ny {
        let row = grid.u_idx(0, j as isize);
        let vbot = grid.v_idx(0, j);
        let vtop = grid.v_idx(0, j + 1);
        for i in 1..grid.nx {
            let k = row + i;
            let fe = 0.5 * hy * (a.u[k] + a.u[k + 1]);
            let fw = -0.5 * hy * (a.u[k - 1] + a.u[k]);
            // v-faces to the left/right of x = i*hx are v(i-1, .), v(i, .)
            let fn_ = 0.5 * hx * (a.v[vtop + i - 1] + a.v[vtop + i]);
            let fs = -0.5 * hx * (a.v[vbot + i - 1] + a.v[vbot + i]);
            out.u[k] = scale
                * (fe * c.u[k + 1] + fw * c.u[k - 1] + fn_ * c.u[k + us] + fs * c.u[k - us]);
        }
    }

    // v control volumes
    for j in 1..grid.ny {
        let row = grid.v_idx(0, j);
        let ubot = grid.u_idx(0, j as isize - 1);
        let utop = grid.u_idx(0, j as isize);
        for i in 0..grid.nx {
            let k = row + i;
            let fn_ = 0.5 * hx * (a.v[k] + a.v[k + vs]);
            let fs = -0.5 * hx * (a.v[k - vs] + a.v[k]);
            let fe = 0.5 * hy * (a.u[ubot + i + 1] + a.u[utop + i + 1]);
            let fw = -0.5 * hy * (a.u[ubot + i] + a.u[utop + i]);
            out.v[k] = scale
                * (fe * c.v[k + 1] + fw * c.v[k - 1] + fn_ * c.v[k + vs] + fs * c.v[k - vs]);
        }
    }
    out
}

/// `(u . grad) u` on interior faces, advective form.
pub fn convection(vel: &VelocityField, grid: &MacGrid) -> VelocityField {
    advect(vel, vel, grid)
}

/// L2 inner product over interior faces, unchecked.
pub(crate) fn dot(a: &VelocityField, b: &VelocityField, grid: &MacGrid) -> f64 {
    let mut s = 0.0;
    for_each_interior_u(grid, |k| s += a.u[k] * b.u[k]);
    for_each_interior_v(grid, |k| s += a.v[k] * b.v[k]);
    s * grid.cell_area()
}

pub(crate) fn norm_sq(a: &VelocityField, grid: &MacGrid) -> f64 {
    dot(a, a, grid)
}

/// L2 inner product of two velocity fields over interior faces.
pub fn inner_l2(a: &VelocityField, b: &VelocityField, grid: &MacGrid) -> Result<f64> {
    grid.check_velocity(a)?;
    grid.check_velocity(b)?;
    Ok(dot(a, b, grid))
}

/// Cell-weighted L2 inner product of scalar fields.
pub fn cell_inner(a: &CellField, b: &CellField, grid: &MacGrid) -> f64 {
    a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum::<f64>() * grid.cell_area()
}

/// Squared H1 seminorm from first differences. Sides touching a wall are
/// measured against the zero wall value over half a cell; wall-normal
/// faces are read as zero.
pub fn h1_seminorm_sq(w: &VelocityField, grid: &MacGrid) -> f64 {
    let (nx, ny) = (grid.nx, grid.ny);
    let (hx, hy) = (grid.hx, grid.hy);
    let fx = hy / hx; // (d/hx)^2 * hx*hy
    let fy = hx / hy;
    let u_at = |i: usize, j: usize| -> f64 {
        if i == 0 || i == nx {
            0.0
        } else {
            w.u[grid.u_idx(i, j as isize)]
        }
    };
    let mut s = 0.0;
    for j in 0..ny {
        for i in 0..nx {
            let d = u_at(i + 1, j) - u_at(i, j);
            s += fx * d * d;
        }
    }
    for i in 1..nx {
        let bottom = u_at(i, 0);
        let top = u_at(i, ny - 1);
        s += 2.0 * fy * (bottom * bottom + top * top);
        for j in 0..ny - 1 {
            let d = u_at(i, j + 1) - u_at(i, j);
            s += fy * d * d;
        }
    }
    let v_at = |i: usize, j: usize| -> f64 {
        if j == 0 || j == ny {
            0.0
        } else {
            w.v[grid.v_idx(i as isize, j)]
        }
    };
    for i in 0..nx {
        for j in 0..ny {
            let d = v_at(i, j + 1) - v_at(i, j);
            s += fy * d * d;
        }
    }
    for j in 1..ny {
        let left = v_at(0, j);
        let right = v_at(nx - 1, j);
        s += 2.0 * fx * (left * left + right * right);
        for i in 0..nx - 1 {
            let d = v_at(i + 1, j) - v_at(i, j);
            s += fx * d * d;
        }
    }
    s
}

/// Error norms. `perr` should already be mean-projected.
pub fn norms(err: &VelocityField, perr: &CellField, grid: &MacGrid) -> DiscreteNorms {
    let l2_sq = norm_sq(err, grid);
    let semi_sq = h1_seminorm_sq(err, grid);
    DiscreteNorms {
        l2_u: l2_sq.sqrt(),
        h1semi_u: semi_sq.sqrt(),
        h1_u: (l2_sq + semi_sq).sqrt(),
        l2_p: cell_inner(perr, perr, grid).sqrt(),
    }
}

/// `b(a, c, w) = ((a . grad) c, w)` with the advective stencil.
pub fn trilinear_b(a: &VelocityField, c: &VelocityField, w: &VelocityField, grid: &MacGrid) -> f64 {
    dot(&advect(a, c, grid), w, grid)
}
