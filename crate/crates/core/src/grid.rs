//! Staggered (MAC) grid geometry and field storage.
//!
//! Layout for an `nx x ny` grid on `[x0, x1] x [y0, y1]`:
//! - u on vertical faces at `(x0 + i*hx, y0 + (j+1/2)*hy)`, `i in 0..=nx`, `j in 0..ny`
//! - v on horizontal faces at `(x0 + (i+1/2)*hx, y0 + j*hy)`, `i in 0..nx`, `j in 0..=ny`
//! - scalars at cell centers `(x0 + (i+1/2)*hx, y0 + (j+1/2)*hy)`
//!
//! Each velocity component carries one ghost layer in its tangential
//! direction (`j = -1, ny` for u, `i = -1, nx` for v). Faces with `i = 0, nx`
//! (u) or `j = 0, ny` (v) lie on the wall and hold the normal velocity.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacGrid {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl MacGrid {
    /// Uniform grid on the unit square.
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        Self::with_bounds(nx, ny, (0.0, 1.0), (0.0, 1.0))
    }

    pub fn with_bounds(nx: usize, ny: usize, xb: (f64, f64), yb: (f64, f64)) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::GridTooSmall { nx, ny });
        }
        if !(xb.1 > xb.0 && yb.1 > yb.0) {
            return Err(Error::InvalidConfig(format!(
                "empty domain {xb:?} x {yb:?}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            hx: (xb.1 - xb.0) / nx as f64,
            hy: (yb.1 - yb.0) / ny as f64,
            x0: xb.0,
            x1: xb.1,
            y0: yb.0,
            y1: yb.1,
        })
    }

    /// Square grid with `n` cells per side on the unit square.
    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    /// Row length of u storage (wall faces included).
    pub fn u_stride(&self) -> usize {
        self.nx + 1
    }

    /// Row length of v storage (ghost columns included).
    pub fn v_stride(&self) -> usize {
        self.nx + 2
    }

    pub fn u_len(&self) -> usize {
        (self.nx + 1) * (self.ny + 2)
    }

    pub fn v_len(&self) -> usize {
        (self.nx + 2) * (self.ny + 1)
    }

    pub fn cell_len(&self) -> usize {
        self.nx * self.ny
    }

    /// Flat index of u-face `(i, j)`, `i in 0..=nx`, `j in -1..=ny`.
    #[inline]
    pub fn u_idx(&self, i: usize, j: isize) -> usize {
        debug_assert!(i <= self.nx && j >= -1 && j <= self.ny as isize);
        (j + 1) as usize * (self.nx + 1) + i
    }

    pub fn u_coords(&self, flat: usize) -> (usize, isize) {
        let s = self.nx + 1;
        (flat % s, (flat / s) as isize - 1)
    }

    /// Flat index of v-face `(i, j)`, `i in -1..=nx`, `j in 0..=ny`.
    #[inline]
    pub fn v_idx(&self, i: isize, j: usize) -> usize {
        debug_assert!(i >= -1 && i <= self.nx as isize && j <= self.ny);
        j * (self.nx + 2) + (i + 1) as usize
    }

    pub fn v_coords(&self, flat: usize) -> (isize, usize) {
        let s = self.nx + 2;
        ((flat % s) as isize - 1, flat / s)
    }

    #[inline]
    pub fn cell_idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_coords(&self, flat: usize) -> (usize, usize) {
        (flat % self.nx, flat / self.nx)
    }

    pub fn u_point(&self, i: usize, j: isize) -> (f64, f64) {
        (
            self.x0 + i as f64 * self.hx,
            self.y0 + (j as f64 + 0.5) * self.hy,
        )
    }

    pub fn v_point(&self, i: isize, j: usize) -> (f64, f64) {
        (
            self.x0 + (i as f64 + 0.5) * self.hx,
            self.y0 + j as f64 * self.hy,
        )
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x0 + (i as f64 + 0.5) * self.hx,
            self.y0 + (j as f64 + 0.5) * self.hy,
        )
    }

    /// Number of velocity unknowns (interior faces of both components).
    pub fn velocity_dofs(&self) -> usize {
        (self.nx - 1) * self.ny + self.nx * (self.ny - 1)
    }

    pub(crate) fn check_velocity(&self, f: &VelocityField) -> Result<()> {
        if f.shape() != (self.nx, self.ny) {
            return Err(Error::GridMismatch {
                expected: (self.nx, self.ny),
                found: f.shape(),
            });
        }
        Ok(())
    }
}

/// Face-centered velocity with one tangential ghost layer per component.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    nx: usize,
    ny: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl VelocityField {
    pub fn zeros(grid: &MacGrid) -> Self {
        Self {
            nx: grid.nx,
            ny: grid.ny,
            u: vec![0.0; grid.u_len()],
            v: vec![0.0; grid.v_len()],
        }
    }

    /// Samples `f(x, y) -> (u, v)` at the native face locations of every
    /// non-ghost face, then applies the wall conditions.
    pub fn sample<F>(grid: &MacGrid, mut f: F) -> Self
    where
        F: FnMut(f64, f64) -> (f64, f64),
    {
        let mut out = Self::zeros(grid);
        for j in 0..grid.ny as isize {
            for i in 1..grid.nx {
                let (x, y) = grid.u_point(i, j);
                out.u[grid.u_idx(i, j)] = f(x, y).0;
            }
        }
        for j in 1..grid.ny {
            for i in 0..grid.nx as isize {
                let (x, y) = grid.v_point(i, j);
                out.v[grid.v_idx(i, j)] = f(x, y).1;
            }
        }
        apply_velocity_bc(&mut out, grid);
        out
    }

    /// Like [`VelocityField::sample`] but with separate component
    /// evaluators, so each face only evaluates its own component.
    pub fn sample_components<Fu, Fv>(grid: &MacGrid, mut fu: Fu, mut fv: Fv) -> Self
    where
        Fu: FnMut(f64, f64) -> f64,
        Fv: FnMut(f64, f64) -> f64,
    {
        let mut out = Self::zeros(grid);
        for j in 0..grid.ny as isize {
            for i in 1..grid.nx {
                let (x, y) = grid.u_point(i, j);
                out.u[grid.u_idx(i, j)] = fu(x, y);
            }
        }
        for j in 1..grid.ny {
            for i in 0..grid.nx as isize {
                let (x, y) = grid.v_point(i, j);
                out.v[grid.v_idx(i, j)] = fv(x, y);
            }
        }
        apply_velocity_bc(&mut out, grid);
        out
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }

    pub fn scale(&mut self, a: f64) {
        self.u.iter_mut().chain(self.v.iter_mut()).for_each(|x| *x *= a);
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &VelocityField) {
        debug_assert_eq!(self.shape(), other.shape());
        for (x, y) in self.u.iter_mut().zip(&other.u) {
            *x += a * y;
        }
        for (x, y) in self.v.iter_mut().zip(&other.v) {
            *x += a * y;
        }
    }

    /// `a * x + b * y`
    pub fn lin_comb(a: f64, x: &VelocityField, b: f64, y: &VelocityField) -> VelocityField {
        debug_assert_eq!(x.shape(), y.shape());
        VelocityField {
            nx: x.nx,
            ny: x.ny,
            u: x.u.iter().zip(&y.u).map(|(p, q)| a * p + b * q).collect(),
            v: x.v.iter().zip(&y.v).map(|(p, q)| a * p + b * q).collect(),
        }
    }

    /// Largest magnitude over interior (unknown) faces.
    pub fn max_abs_interior(&self, grid: &MacGrid) -> f64 {
        let mut m = 0.0f64;
        for_each_interior_u(grid, |k| m = m.max(self.u[k].abs()));
        for_each_interior_v(grid, |k| m = m.max(self.v[k].abs()));
        m
    }
}

/// Calls `f` with the flat index of every interior u-face, row by row.
#[inline]
pub(crate) fn for_each_interior_u(grid: &MacGrid, mut f: impl FnMut(usize)) {
    for j in 0..grid.ny as isize {
        let row = grid.u_idx(0, j);
        for i in 1..grid.nx {
            f(row + i);
        }
    }
}

#[inline]
pub(crate) fn for_each_interior_v(grid: &MacGrid, mut f: impl FnMut(usize)) {
    for j in 1..grid.ny {
        let row = grid.v_idx(0, j);
        for i in 0..grid.nx {
            f(row + i);
        }
    }
}

/// Enforces no-slip: normal velocity on wall faces is zero and tangential
/// ghosts mirror the adjacent interior value with opposite sign, so the
/// linearly interpolated wall value vanishes.
pub fn apply_velocity_bc(field: &mut VelocityField, grid: &MacGrid) {
    let (nx, ny) = (grid.nx, grid.ny);
    let ny_i = ny as isize;
    for j in -1..=ny_i {
        field.u[grid.u_idx(0, j)] = 0.0;
        field.u[grid.u_idx(nx, j)] = 0.0;
    }
    for i in 1..nx {
        field.u[grid.u_idx(i, -1)] = -field.u[grid.u_idx(i, 0)];
        field.u[grid.u_idx(i, ny_i)] = -field.u[grid.u_idx(i, ny_i - 1)];
    }
    let nx_i = nx as isize;
    for i in -1..=nx_i {
        field.v[grid.v_idx(i, 0)] = 0.0;
        field.v[grid.v_idx(i, ny)] = 0.0;
    }
    for j in 1..ny {
        field.v[grid.v_idx(-1, j)] = -field.v[grid.v_idx(0, j)];
        field.v[grid.v_idx(nx_i, j)] = -field.v[grid.v_idx(nx_i - 1, j)];
    }
}

/// Cell-centered scalar (pressure, divergence).
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    nx: usize,
    ny: usize,
    pub values: Vec<f64>,
    mean_zero: bool,
}

impl CellField {
    pub fn zeros(grid: &MacGrid) -> Self {
        Self {
            nx: grid.nx,
            ny: grid.ny,
            values: vec![0.0; grid.cell_len()],
            mean_zero: true,
        }
    }

    pub fn from_values(grid: &MacGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_len() {
            return Err(Error::InvalidConfig(format!(
                "cell field needs {} values, got {}",
                grid.cell_len(),
                values.len()
            )));
        }
        Ok(Self {
            nx: grid.nx,
            ny: grid.ny,
            values,
            mean_zero: false,
        })
    }

    pub fn sample<F: FnMut(f64, f64) -> f64>(grid: &MacGrid, mut f: F) -> Self {
        let mut values = Vec::with_capacity(grid.cell_len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.cell_center(i, j);
                values.push(f(x, y));
            }
        }
        Self {
            nx: grid.nx,
            ny: grid.ny,
            values,
            mean_zero: false,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// Set by [`project_mean_zero`]; any later mutation through
    /// [`CellField::values_mut`] clears it.
    pub fn is_mean_zero(&self) -> bool {
        self.mean_zero
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        self.mean_zero = false;
        &mut self.values
    }

    /// Cell average.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn lin_comb(a: f64, x: &CellField, b: f64, y: &CellField) -> CellField {
        debug_assert_eq!(x.shape(), y.shape());
        CellField {
            nx: x.nx,
            ny: x.ny,
            values: x.values.iter().zip(&y.values).map(|(p, q)| a * p + b * q).collect(),
            mean_zero: false,
        }
    }
}

/// Removes the cell average. The result represents the same element of
/// L2/R with zero mean.
pub fn project_mean_zero(mut p: CellField) -> CellField {
    let mean = p.mean();
    p.values.iter_mut().for_each(|x| *x -= mean);
    // second pass removes the rounding left by the first
    let resid = p.mean();
    p.values.iter_mut().for_each(|x| *x -= resid);
    p.mean_zero = true;
    p
}
