//! Uniform rectangular grids in 1D/2D with cell-centered fields and
//! zero-flux (Neumann) discrete operators.
//!
//! All domain integrals are midpoint quadrature, exact for cellwise-constant
//! data. Gradients live on faces; boundary faces always carry zero gradient
//! and zero flux, which makes `integrate(div_flux_neumann(F))` telescope to
//! zero and keeps total mass exact under the divergence-form update.

use crate::error::{Error, Result};

const MIN_CELLS_PER_AXIS: usize = 4;

/// Uniform cell-centered grid over a rectangle `(0, Lx) x (0, Ly)` or an
/// interval `(0, Lx)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dims: usize,
    extents: [f64; 2],
    cells: [usize; 2],
    h: [f64; 2],
}

impl Grid {
    pub fn new(dims: usize, extents: &[f64], cells: &[usize]) -> Result<Self> {
        if dims != 1 && dims != 2 {
            return Err(Error::Domain(format!("dims must be 1 or 2, got {dims}")));
        }
        if extents.len() != dims || cells.len() != dims {
            return Err(Error::Shape(format!(
                "expected {dims} extents and cell counts, got {} and {}",
                extents.len(),
                cells.len()
            )));
        }
        let mut ext = [1.0; 2];
        let mut cel = [1usize; 2];
        let mut h = [1.0; 2];
        for ax in 0..dims {
            if !(extents[ax] > 0.0) || !extents[ax].is_finite() {
                return Err(Error::Domain(format!(
                    "extent along axis {ax} must be positive, got {}",
                    extents[ax]
                )));
            }
            if cells[ax] < MIN_CELLS_PER_AXIS {
                return Err(Error::Domain(format!(
                    "need at least {MIN_CELLS_PER_AXIS} cells per axis, got {} on axis {ax}",
                    cells[ax]
                )));
            }
            ext[ax] = extents[ax];
            cel[ax] = cells[ax];
            h[ax] = extents[ax] / cells[ax] as f64;
        }
        Ok(Self {
            dims,
            extents: ext,
            cells: cel,
            h,
        })
    }

    pub fn new_1d(extent: f64, cells: usize) -> Result<Self> {
        Self::new(1, &[extent], &[cells])
    }

    pub fn new_2d(extents: [f64; 2], cells: [usize; 2]) -> Result<Self> {
        Self::new(2, &extents, &cells)
    }

    #[inline]
    pub fn dims(&self) -> usize {
        self.dims
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.cells[0]
    }

    /// Cell count along y; 1 for one-dimensional grids.
    #[inline]
    pub fn ny(&self) -> usize {
        self.cells[1]
    }

    #[inline]
    pub fn hx(&self) -> f64 {
        self.h[0]
    }

    #[inline]
    pub fn hy(&self) -> f64 {
        self.h[1]
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents[..self.dims]
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells[..self.dims]
    }

    #[inline]
    pub fn cell_count(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    /// Volume of one cell: `hx` in 1D, `hx * hy` in 2D.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        if self.dims == 1 {
            self.h[0]
        } else {
            self.h[0] * self.h[1]
        }
    }

    /// Total measure of the domain.
    #[inline]
    pub fn measure(&self) -> f64 {
        if self.dims == 1 {
            self.extents[0]
        } else {
            self.extents[0] * self.extents[1]
        }
    }

    /// Largest stable diffusive step `h^2 / (2 dims)` for the explicit scheme.
    pub fn diffusive_dt_limit(&self) -> f64 {
        let h_min = if self.dims == 1 {
            self.h[0]
        } else {
            self.h[0].min(self.h[1])
        };
        h_min * h_min / (2.0 * self.dims as f64)
    }

    #[inline]
    pub fn cell_index(&self, ix: usize, iy: usize) -> usize {
        iy * self.cells[0] + ix
    }

    /// Physical coordinates of a cell center, from the linear index.
    pub fn cell_center(&self, idx: usize) -> [f64; 2] {
        let nx = self.cells[0];
        let ix = idx % nx;
        let iy = idx / nx;
        [
            (ix as f64 + 0.5) * self.h[0],
            (iy as f64 + 0.5) * self.h[1],
        ]
    }

    pub fn x_face_count(&self) -> usize {
        (self.cells[0] + 1) * self.cells[1]
    }

    pub fn y_face_count(&self) -> usize {
        if self.dims == 1 {
            0
        } else {
            self.cells[0] * (self.cells[1] + 1)
        }
    }

    #[inline]
    pub fn x_face_index(&self, fx: usize, iy: usize) -> usize {
        iy * (self.cells[0] + 1) + fx
    }

    #[inline]
    pub fn y_face_index(&self, ix: usize, fy: usize) -> usize {
        fy * self.cells[0] + ix
    }

    pub fn constant_field(&self, value: f64) -> Field {
        Field {
            grid: *self,
            values: vec![value; self.cell_count()],
        }
    }

    /// Builds a field by evaluating `f` at every cell center.
    pub fn field_from_fn(&self, f: impl Fn([f64; 2]) -> f64) -> Field {
        let values = (0..self.cell_count())
            .map(|i| f(self.cell_center(i)))
            .collect();
        Field { grid: *self, values }
    }

    pub fn field_from_values(&self, values: Vec<f64>) -> Result<Field> {
        if values.len() != self.cell_count() {
            return Err(Error::Shape(format!(
                "expected {} cell values, got {}",
                self.cell_count(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite cell value {bad}")));
        }
        Ok(Field { grid: *self, values })
    }

    pub fn zero_faces(&self) -> FaceField {
        FaceField {
            grid: *self,
            x: vec![0.0; self.x_face_count()],
            y: vec![0.0; self.y_face_count()],
        }
    }
}

/// Cell-centered scalar field, row-major with the x index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Field {
    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// New field with `f` applied cellwise.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// New field combining two fields cellwise.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        assert_eq!(self.grid, other.grid, "fields on different grids");
        Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }
}

/// Face-valued data: one value per x-face (and per y-face in 2D).
/// Boundary faces are included; the zero-flux operators keep them at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    pub grid: Grid,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Midpoint quadrature `sum_i f_i * vol`; exact for cellwise-constant data.
pub fn integrate(f: &Field) -> f64 {
    let sum: f64 = f.values.iter().sum();
    sum * f.grid.cell_volume()
}

/// Two-point face gradients `(f_r - f_l)/h`, zero on boundary faces.
pub fn gradient_faces(f: &Field) -> FaceField {
    let g = f.grid;
    let (nx, ny) = (g.nx(), g.ny());
    let mut out = g.zero_faces();
    for iy in 0..ny {
        for fx in 1..nx {
            let l = g.cell_index(fx - 1, iy);
            let r = g.cell_index(fx, iy);
            out.x[g.x_face_index(fx, iy)] = (f.values[r] - f.values[l]) / g.hx();
        }
    }
    if g.dims() == 2 {
        for fy in 1..ny {
            for ix in 0..nx {
                let d = g.cell_index(ix, fy - 1);
                let u = g.cell_index(ix, fy);
                out.y[g.y_face_index(ix, fy)] = (f.values[u] - f.values[d]) / g.hy();
            }
        }
    }
    out
}

/// Cellwise divergence of a face flux, `(F_r - F_l)/hx + (F_u - F_d)/hy`.
///
/// Face values are used as given. Fluxes produced by the solver carry exact
/// zeros on boundary faces, so the integral of the divergence telescopes to
/// zero; synthetic fields with nonzero boundary faces are allowed and feed
/// the discrete Gauss-Green audits.
pub fn div_flux_neumann(flux: &FaceField) -> Result<Field> {
    let g = flux.grid;
    if flux.x.len() != g.x_face_count() || flux.y.len() != g.y_face_count() {
        return Err(Error::Shape(format!(
            "face array sizes {}/{} do not match grid ({}/{})",
            flux.x.len(),
            flux.y.len(),
            g.x_face_count(),
            g.y_face_count()
        )));
    }
    let (nx, ny) = (g.nx(), g.ny());
    let mut values = vec![0.0; g.cell_count()];
    for iy in 0..ny {
        for ix in 0..nx {
            let i = g.cell_index(ix, iy);
            values[i] = (flux.x[g.x_face_index(ix + 1, iy)] - flux.x[g.x_face_index(ix, iy)])
                / g.hx();
        }
    }
    if g.dims() == 2 {
        for iy in 0..ny {
            for ix in 0..nx {
                let i = g.cell_index(ix, iy);
                values[i] += (flux.y[g.y_face_index(ix, iy + 1)] - flux.y[g.y_face_index(ix, iy)])
                    / g.hy();
            }
        }
    }
    Ok(Field { grid: g, values })
}

/// Zero-flux Laplacian: divergence of the face gradients. Equivalent to the
/// 3/5-point stencil with mirror ghost cells, and conservative by
/// construction.
pub fn laplacian_neumann(f: &Field) -> Field {
    div_flux_neumann(&gradient_faces(f)).expect("gradient faces conform to the grid")
}
