//! Weak-form verification of simulated trajectories against finite families
//! of test functions.
//!
//! Checks provided:
//! - the variational inequality of the coupled quantity `u^-a v^-b`
//!   (equality for the regularized system, so the slack must vanish under
//!   refinement),
//! - the measure-augmented weak signal equation, whose residual pairing is
//!   the saturation defect,
//! - discrete normal-trace audits via an exact Gauss-Green identity,
//! - the pointwise key identity behind the energy estimate, as a space-time
//!   L1 residual for convergence studies.
//!
//! Test functions carry analytic values and gradients; nothing is
//! differentiated numerically. Temporal profiles are C1 bumps compactly
//! supported inside the run horizon, plus one profile with `psi(0) = 1`.

use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::{div_flux_neumann, gradient_faces, FaceField, Field, Grid};
use crate::params::ModelParams;
use crate::solver::{State, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakFormConfig {
    /// Trace-space exponent, in `(1, n/(n-1))` for reporting dimension `n`.
    pub trace_exponent: f64,
    /// Number of cosine modes in the spatial basis.
    pub spatial_modes: usize,
    /// Number of temporal profiles (one initial profile plus bumps).
    pub temporal_modes: usize,
    /// Relative slack threshold for the weak-form checks.
    pub tolerance: f64,
}

impl Default for WeakFormConfig {
    fn default() -> Self {
        WeakFormConfig {
            trace_exponent: 1.5,
            spatial_modes: 6,
            temporal_modes: 5,
            tolerance: 1e-2,
        }
    }
}

impl WeakFormConfig {
    pub fn validate(&self, n: u32) -> Result<()> {
        let upper = if n <= 1 {
            f64::INFINITY
        } else {
            n as f64 / (n as f64 - 1.0)
        };
        if !(self.trace_exponent > 1.0 && self.trace_exponent < upper) {
            return Err(Error::Domain(format!(
                "trace exponent {} outside (1, {upper}) for n = {n}",
                self.trace_exponent
            )));
        }
        if self.spatial_modes == 0 || self.temporal_modes == 0 {
            return Err(Error::Domain("need at least one mode per basis".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Domain(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// Nonnegative spatial profile with analytic cell values and face gradients.
/// Cosine modes have exactly vanishing normal derivative on the boundary.
#[derive(Debug, Clone)]
pub struct SpatialTestFn {
    pub id: String,
    pub values: Field,
    pub grad: FaceField,
}

impl SpatialTestFn {
    /// Tensor cosine mode `prod_axis (1 + cos(m pi x / L))`, shifted to be
    /// nonnegative with exact zero normal derivative on the boundary.
    pub fn cosine_mode(grid: &Grid, modes: [usize; 2]) -> Self {
        let (lx, ly) = (grid.extents()[0], if grid.dims() == 2 { grid.extents()[1] } else { 1.0 });
        let (mx, my) = (modes[0] as f64, modes[1] as f64);
        let pi = std::f64::consts::PI;
        let fx = |x: f64| 1.0 + (mx * pi * x / lx).cos();
        let fy = |y: f64| {
            if grid.dims() == 2 {
                1.0 + (my * pi * y / ly).cos()
            } else {
                1.0
            }
        };
        let dfx = |x: f64| -(mx * pi / lx) * (mx * pi * x / lx).sin();
        let dfy = |y: f64| -(my * pi / ly) * (my * pi * y / ly).sin();

        let values = grid.field_from_fn(|x| fx(x[0]) * fy(x[1]));
        let mut grad = grid.zero_faces();
        let (nx, ny) = (grid.nx(), grid.ny());
        for iy in 0..ny {
            let y = (iy as f64 + 0.5) * grid.hy();
            for fxi in 1..nx {
                let x = fxi as f64 * grid.hx();
                grad.x[grid.x_face_index(fxi, iy)] = dfx(x) * fy(y);
            }
        }
        if grid.dims() == 2 {
            for fyi in 1..ny {
                let y = fyi as f64 * grid.hy();
                for ix in 0..nx {
                    let x = (ix as f64 + 0.5) * grid.hx();
                    grad.y[grid.y_face_index(ix, fyi)] = fx(x) * dfy(y);
                }
            }
        }
        let id = if grid.dims() == 2 {
            format!("cos{}x{}", modes[0], modes[1])
        } else {
            format!("cos{}", modes[0])
        };
        SpatialTestFn { id, values, grad }
    }

    /// The constant representative `phi = 1`.
    pub fn constant(grid: &Grid) -> Self {
        SpatialTestFn {
            id: "const".into(),
            values: grid.constant_field(1.0),
            grad: grid.zero_faces(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum TemporalKind {
    /// `(1 - (t/w)^2)^2` on `[0, w]`; value 1 and zero slope at `t = 0`.
    Initial { width: f64 },
    /// `(1 - ((t-c)/w)^2)^2` on `[c-w, c+w]`.
    Bump { center: f64, width: f64 },
}

/// Nonnegative C1 temporal profile compactly supported in the run horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalTestFn {
    pub id: String,
    kind: TemporalKind,
}

impl TemporalTestFn {
    pub fn bump(center: f64, width: f64, horizon: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::Domain(format!("bump width must be positive, got {width}")));
        }
        if center - width < 0.0 || center + width > horizon {
            return Err(Error::Support(format!(
                "bump support [{}, {}] not inside [0, {horizon}]",
                center - width,
                center + width
            )));
        }
        Ok(TemporalTestFn {
            id: format!("bump@{center:.4}"),
            kind: TemporalKind::Bump { center, width },
        })
    }

    pub fn initial(width: f64, horizon: f64) -> Result<Self> {
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::Domain(format!("width must be positive, got {width}")));
        }
        if width > horizon {
            return Err(Error::Support(format!(
                "initial profile support [0, {width}] not inside [0, {horizon}]"
            )));
        }
        Ok(TemporalTestFn {
            id: "initial".into(),
            kind: TemporalKind::Initial { width },
        })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.kind {
            TemporalKind::Initial { width } => {
                if !(0.0..=width).contains(&t) {
                    return 0.0;
                }
                let r = t / width;
                let s = 1.0 - r * r;
                s * s
            }
            TemporalKind::Bump { center, width } => {
                let r = (t - center) / width;
                if r.abs() >= 1.0 {
                    return 0.0;
                }
                let s = 1.0 - r * r;
                s * s
            }
        }
    }

    pub fn deriv(&self, t: f64) -> f64 {
        match self.kind {
            TemporalKind::Initial { width } => {
                if !(0.0..=width).contains(&t) {
                    return 0.0;
                }
                let r = t / width;
                -4.0 * r * (1.0 - r * r) / width
            }
            TemporalKind::Bump { center, width } => {
                let r = (t - center) / width;
                if r.abs() >= 1.0 {
                    return 0.0;
                }
                -4.0 * r * (1.0 - r * r) / width
            }
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self.kind {
            TemporalKind::Initial { width } => (0.0, width),
            TemporalKind::Bump { center, width } => (center - width, center + width),
        }
    }

    /// Exact integral of the profile.
    pub fn l1_norm(&self) -> f64 {
        match self.kind {
            TemporalKind::Initial { width } => 8.0 * width / 15.0,
            TemporalKind::Bump { width, .. } => 16.0 * width / 15.0,
        }
    }
}

/// One spatial and one temporal profile, paired for the weak-form checks.
#[derive(Debug, Clone)]
pub struct TestFunctionPair {
    pub phi: SpatialTestFn,
    pub psi: TemporalTestFn,
}

/// Ordered tensor modes: by total order, then x-major.
fn mode_list(dims: usize, count: usize) -> Vec<[usize; 2]> {
    let mut out = Vec::with_capacity(count);
    if dims == 1 {
        for m in 0..count {
            out.push([m, 0]);
        }
    } else {
        'outer: for total in 0usize.. {
            for mx in (0..=total).rev() {
                out.push([mx, total - mx]);
                if out.len() == count {
                    break 'outer;
                }
            }
        }
    }
    out
}

pub fn build_spatial_basis(grid: &Grid, cfg: &WeakFormConfig) -> Vec<SpatialTestFn> {
    mode_list(grid.dims(), cfg.spatial_modes)
        .into_iter()
        .map(|m| SpatialTestFn::cosine_mode(grid, m))
        .collect()
}

pub fn build_temporal_basis(horizon: f64, cfg: &WeakFormConfig) -> Result<Vec<TemporalTestFn>> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::Domain(format!(
            "temporal basis needs a positive horizon, got {horizon}"
        )));
    }
    let mut out = Vec::with_capacity(cfg.temporal_modes);
    out.push(TemporalTestFn::initial(0.35 * horizon, horizon)?);
    let bumps = cfg.temporal_modes - 1;
    for j in 0..bumps {
        let center = horizon * (2 * j + 1) as f64 / (2 * bumps) as f64;
        let width = 0.95 * horizon / (2 * bumps) as f64;
        out.push(TemporalTestFn::bump(center, width, horizon)?);
    }
    Ok(out)
}

/// Full tensor family of test-function pairs.
pub fn build_bases(
    grid: &Grid,
    horizon: f64,
    cfg: &WeakFormConfig,
) -> Result<Vec<TestFunctionPair>> {
    let spatial = build_spatial_basis(grid, cfg);
    let temporal = build_temporal_basis(horizon, cfg)?;
    let mut out = Vec::with_capacity(spatial.len() * temporal.len());
    for psi in &temporal {
        for phi in &spatial {
            out.push(TestFunctionPair {
                phi: phi.clone(),
                psi: psi.clone(),
            });
        }
    }
    Ok(out)
}

/// Cellwise spatial pieces of the key identity at one state.
struct IdentityFields {
    /// `u^-a v^-b`.
    energy: Vec<f64>,
    /// Dissipation quadratic form at cell-centered gradients.
    q_cell: Vec<f64>,
    /// Divergence of `grad(u^-a v^-b) + chi a u^-a v^-b-1 grad v`.
    div_p: Vec<f64>,
    /// Face flux whose divergence is `div_p`.
    p_faces: FaceField,
    /// Saturated reaction `u^(1-a)/(1 + u/k) v^-b-1`.
    react: Vec<f64>,
}

/// Per-axis mean of the two adjacent face values, one pair per cell.
fn faces_to_cell_means(ff: &FaceField) -> (Vec<f64>, Vec<f64>) {
    let g = ff.grid;
    let (nx, ny) = (g.nx(), g.ny());
    let mut cx = vec![0.0; g.cell_count()];
    let mut cy = vec![0.0; g.cell_count()];
    for iy in 0..ny {
        for ix in 0..nx {
            let i = g.cell_index(ix, iy);
            cx[i] = 0.5 * (ff.x[g.x_face_index(ix, iy)] + ff.x[g.x_face_index(ix + 1, iy)]);
        }
    }
    if g.dims() == 2 {
        for iy in 0..ny {
            for ix in 0..nx {
                let i = g.cell_index(ix, iy);
                cy[i] = 0.5 * (ff.y[g.y_face_index(ix, iy)] + ff.y[g.y_face_index(ix, iy + 1)]);
            }
        }
    }
    (cx, cy)
}

/// Face values of `coef * grad(f)` with the coefficient averaged onto faces.
fn weighted_grad(coef: &Field, f: &Field) -> FaceField {
    crate::diagnostics::weighted_gradient_faces(coef, f)
}

fn identity_fields(state: &State, p: &ModelParams) -> Result<IdentityFields> {
    if state.u.min() <= 0.0 || state.v.min() <= 0.0 {
        return Err(Error::Positivity {
            t: state.t,
            detail: "identity evaluation needs strictly positive fields".into(),
        });
    }
    let (a, b, chi, k) = (p.a, p.b, p.chi, p.k);
    let u = &state.u;
    let v = &state.v;

    let energy_field = u.zip_map(v, |u, v| u.powf(-a) * v.powf(-b));
    let w = u.zip_map(v, |u, v| u.powf(-a / 2.0) * v.powf(-b / 2.0));
    let cross_coef = u.zip_map(v, |u, v| u.powf(-a / 2.0) * v.powf(-b / 2.0 - 1.0));
    let grad_w = gradient_faces(&w);
    let cross = weighted_grad(&cross_coef, v);
    let (wx, wy) = faces_to_cell_means(&grad_w);
    let (gx, gy) = faces_to_cell_means(&cross);

    let c_uu = 4.0 * (a + 1.0) / a;
    let c_uv = 4.0 * (b / a + chi * (a + 1.0) / 2.0);
    let c_vv = b * b / a + b + chi * b;
    let q_cell: Vec<f64> = (0..u.values.len())
        .map(|i| {
            let uu = wx[i] * wx[i] + wy[i] * wy[i];
            let uv = wx[i] * gx[i] + wy[i] * gy[i];
            let vv = gx[i] * gx[i] + gy[i] * gy[i];
            c_uu * uu + c_uv * uv + c_vv * vv
        })
        .collect();

    let pr_coef = u.zip_map(v, |u, v| u.powf(-a) * v.powf(-b - 1.0));
    let grad_e = gradient_faces(&energy_field);
    let chem = weighted_grad(&pr_coef, v);
    let p_faces = FaceField {
        grid: state.u.grid,
        x: grad_e
            .x
            .iter()
            .zip(&chem.x)
            .map(|(&ge, &c)| ge + chi * a * c)
            .collect(),
        y: grad_e
            .y
            .iter()
            .zip(&chem.y)
            .map(|(&ge, &c)| ge + chi * a * c)
            .collect(),
    };
    let div_p = div_flux_neumann(&p_faces)?.values;

    let react = u
        .zip_map(v, |u, v| u.powf(1.0 - a) / (1.0 + u / k) * v.powf(-b - 1.0))
        .values;

    Ok(IdentityFields {
        energy: energy_field.values,
        q_cell,
        div_p,
        p_faces,
        react,
    })
}

/// Weighted cell sum `sum_i f_i phi_i vol`.
fn cell_pairing(grid: &Grid, f: &[f64], phi: &Field) -> f64 {
    f.iter()
        .zip(&phi.values)
        .map(|(&a, &b)| a * b)
        .sum::<f64>()
        * grid.cell_volume()
}

/// Face sum `sum_f F_f G_f vol`.
fn face_pairing(grid: &Grid, f: &FaceField, g: &FaceField) -> f64 {
    let sx: f64 = f.x.iter().zip(&g.x).map(|(&a, &b)| a * b).sum();
    let sy: f64 = f.y.iter().zip(&g.y).map(|(&a, &b)| a * b).sum();
    (sx + sy) * grid.cell_volume()
}

/// Both sides of the variational inequality for the coupled quantity,
/// together with the absolute mass of all assembled blocks (`scale`).
#[derive(Debug, Clone, Copy)]
pub struct SuperUCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// Sum of absolute values of every quadratured block; tolerance anchor.
    pub scale: f64,
}

impl SuperUCheck {
    pub fn slack(&self) -> f64 {
        self.lhs - self.rhs
    }
}

fn support_check(traj: &Trajectory, psi: &TemporalTestFn) -> Result<()> {
    let horizon = traj.final_state().t;
    let (lo, hi) = psi.support();
    if lo < -1e-12 || hi > horizon * (1.0 + 1e-12) {
        return Err(Error::Support(format!(
            "psi support [{lo}, {hi}] exceeds trajectory horizon [0, {horizon}]"
        )));
    }
    Ok(())
}

/// Assembles the weak form of the coupled-quantity identity:
/// time-derivative block and initial block on the left; dissipation block,
/// flux block and reaction block on the right. The reaction block carries
/// the trajectory's saturation factor, so the regularized system satisfies
/// lhs = rhs up to discretization error, and the unsaturated limit form is
/// recovered as `k -> infinity`.
pub fn assemble_superu(
    traj: &Trajectory,
    pair: &TestFunctionPair,
    p: &ModelParams,
) -> Result<SuperUCheck> {
    support_check(traj, &pair.psi)?;
    let grid = traj.grid;
    let phi = &pair.phi;
    let psi = &pair.psi;
    let (mut lhs, mut rhs, mut scale) = (0.0, 0.0, 0.0);

    let x0 = {
        let f = identity_fields(&traj.states[0], p)?;
        cell_pairing(&grid, &f.energy, &phi.values)
    };
    lhs -= psi.eval(0.0) * x0;
    scale += (psi.eval(0.0) * x0).abs();

    for win in traj.states.windows(2) {
        let (s0, s1) = (&win[0], &win[1]);
        let dt = s1.t - s0.t;
        let f = identity_fields(s0, p)?;
        let x_n = cell_pairing(&grid, &f.energy, &phi.values);
        let dpsi = psi.deriv(s0.t);
        lhs -= dpsi * x_n * dt;
        scale += (dpsi * x_n * dt).abs();

        let w = psi.eval(s0.t);
        if w != 0.0 {
            let q_block = cell_pairing(&grid, &f.q_cell, &phi.values);
            let flux_block = face_pairing(&grid, &f.p_faces, &phi.grad);
            let react_block: f64 = f
                .energy
                .iter()
                .zip(&f.react)
                .zip(&phi.values.values)
                .map(|((&e, &r), &ph)| p.b * (e - r) * ph)
                .sum::<f64>()
                * grid.cell_volume();
            rhs += w * dt * (-q_block - flux_block + react_block);
            scale += w * dt * (q_block.abs() + flux_block.abs() + react_block.abs());
        }
    }
    Ok(SuperUCheck { lhs, rhs, scale })
}

/// Residual of the weak signal equation against the pair `psi (x) phi`:
/// the mass the saturated source withholds from the signal. For the
/// regularized trajectory it equals the defect pairing up to first-order
/// quadrature error, and it is nonnegative for nonnegative pairs.
pub fn assemble_superv(
    traj: &Trajectory,
    pair: &TestFunctionPair,
    p: &ModelParams,
) -> Result<f64> {
    let _ = p;
    support_check(traj, &pair.psi)?;
    let grid = traj.grid;
    let phi = &pair.phi;
    let psi = &pair.psi;

    let y0 = cell_pairing(&grid, &traj.states[0].v.values, &phi.values);
    let mut residual = psi.eval(0.0) * y0;

    for win in traj.states.windows(2) {
        let (s0, s1) = (&win[0], &win[1]);
        let dt = s1.t - s0.t;
        let y_n = cell_pairing(&grid, &s0.v.values, &phi.values);
        residual += psi.deriv(s0.t) * y_n * dt;
        let w = psi.eval(s0.t);
        if w != 0.0 {
            let grad_v = gradient_faces(&s0.v);
            let grad_pair = face_pairing(&grid, &grad_v, &phi.grad);
            let source: f64 = s0
                .u
                .values
                .iter()
                .zip(&s0.v.values)
                .zip(&phi.values.values)
                .map(|((&u, &v), &ph)| (u - v) * ph)
                .sum::<f64>()
                * grid.cell_volume();
            residual += w * dt * (-grad_pair + source);
        }
    }
    Ok(residual)
}

/// Time-quadratured pairing of the saturation-gap density
/// `u^2/(k+u)` against `psi (x) phi`, on the same timeline as the
/// weak-form assemblies.
pub fn defect_pairing(traj: &Trajectory, pair: &TestFunctionPair, p: &ModelParams) -> Result<f64> {
    support_check(traj, &pair.psi)?;
    let grid = traj.grid;
    let mut total = 0.0;
    for win in traj.states.windows(2) {
        let (s0, s1) = (&win[0], &win[1]);
        let dt = s1.t - s0.t;
        let w = pair.psi.eval(s0.t);
        if w != 0.0 {
            let gap: f64 = s0
                .u
                .values
                .iter()
                .zip(&pair.phi.values.values)
                .map(|(&u, &ph)| u * u / (p.k + u) * ph)
                .sum::<f64>()
                * grid.cell_volume();
            total += w * dt * gap;
        }
    }
    Ok(total)
}

/// Which time-integrated field the normal-trace audit inspects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceField {
    /// `grad(u^-a v^-b) + chi a u^-a v^-b-1 grad v`.
    FluxPr,
    /// `grad v`.
    GradV,
}

/// Discrete Gauss-Green boundary pairing
/// `sum_f F . Dphi vol + sum_i (div F) phi vol`, with `Dphi` the difference
/// quotient of the cell values of `phi`. For a field with zero boundary
/// faces this telescopes to zero exactly; in general it equals the outward
/// boundary flux weighted by `phi` at the adjacent cells.
pub fn gauss_green_pairing(flux: &FaceField, phi: &Field) -> Result<(f64, f64)> {
    let grid = flux.grid;
    let div = div_flux_neumann(flux)?;
    let dphi = gradient_faces(phi);
    let face_part = face_pairing(&grid, flux, &dphi);
    let cell_part = cell_pairing(&grid, &div.values, phi);
    let pairing = face_part + cell_part;
    let scale = {
        let sx: f64 = flux
            .x
            .iter()
            .zip(&dphi.x)
            .map(|(&a, &b)| (a * b).abs())
            .sum();
        let sy: f64 = flux
            .y
            .iter()
            .zip(&dphi.y)
            .map(|(&a, &b)| (a * b).abs())
            .sum();
        let sc: f64 = div
            .values
            .iter()
            .zip(&phi.values)
            .map(|(&a, &b)| (a * b).abs())
            .sum();
        ((sx + sy) + sc) * grid.cell_volume()
    };
    Ok((pairing, scale))
}

/// psi-weighted time integral of the selected face field along a trajectory.
pub fn time_integrated_flux(
    traj: &Trajectory,
    psi: &TemporalTestFn,
    which: TraceField,
    p: &ModelParams,
) -> Result<FaceField> {
    support_check(traj, psi)?;
    let grid = traj.grid;
    let mut acc = grid.zero_faces();
    for win in traj.states.windows(2) {
        let (s0, s1) = (&win[0], &win[1]);
        let dt = s1.t - s0.t;
        let w = psi.eval(s0.t);
        if w == 0.0 {
            continue;
        }
        let ff = match which {
            TraceField::GradV => gradient_faces(&s0.v),
            TraceField::FluxPr => identity_fields(s0, p)?.p_faces,
        };
        for (a, b) in acc.x.iter_mut().zip(&ff.x) {
            *a += w * dt * b;
        }
        for (a, b) in acc.y.iter_mut().zip(&ff.y) {
            *a += w * dt * b;
        }
    }
    Ok(acc)
}

/// Maximum absolute Gauss-Green boundary pairing of the selected
/// time-integrated field over the spatial basis. The solver's fluxes vanish
/// on boundary faces, so the value is a pure rounding residual.
pub fn trace_check(
    traj: &Trajectory,
    psi: &TemporalTestFn,
    which: TraceField,
    basis: &[SpatialTestFn],
    p: &ModelParams,
) -> Result<f64> {
    let flux = time_integrated_flux(traj, psi, which, p)?;
    let mut worst: f64 = 0.0;
    for phi in basis {
        let (pairing, _) = gauss_green_pairing(&flux, &phi.values)?;
        worst = worst.max(pairing.abs());
    }
    Ok(worst)
}

/// Space-time L1 norm of the pointwise key-identity residual
/// `d/dt(u^-a v^-b) + Q - div P - b u^-a v^-b + b react` along a trajectory
/// stored at every step. First order in dt, second order in h on smooth
/// central-mode runs.
pub fn key_identity_residual(traj: &Trajectory, p: &ModelParams) -> Result<f64> {
    if traj.states.len() < 2 {
        return Err(Error::Domain(
            "identity residual needs at least two stored states".into(),
        ));
    }
    let grid = traj.grid;
    let vol = grid.cell_volume();
    let mut total = 0.0;
    let mut fields_n = identity_fields(&traj.states[0], p)?;
    for win in traj.states.windows(2) {
        let (s0, s1) = (&win[0], &win[1]);
        let dt = s1.t - s0.t;
        let fields_next = identity_fields(s1, p)?;
        let mut l1 = 0.0;
        for i in 0..grid.cell_count() {
            let de = (fields_next.energy[i] - fields_n.energy[i]) / dt;
            let r = de + fields_n.q_cell[i] - fields_n.div_p[i] - p.b * fields_n.energy[i]
                + p.b * fields_n.react[i];
            l1 += r.abs();
        }
        total += l1 * vol * dt;
        fields_n = fields_next;
    }
    Ok(total)
}

/// One row of the verification report.
#[derive(Debug, Clone)]
pub struct CheckRow {
    pub check: String,
    pub phi_id: String,
    pub psi_id: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub pass: bool,
}

pub const VERIFICATION_CSV_HEADER: &str = "check,phi_id,psi_id,lhs,rhs,slack,pass";

/// Absolute floor below which the nonnegativity of the weak-v residual is
/// not contested.
const SUPERV_NONNEG_TOL: f64 = 1e-8;

/// Runs every weak-form check over the tensor basis and collects rows.
pub fn verify_trajectory(
    traj: &Trajectory,
    p: &ModelParams,
    cfg: &WeakFormConfig,
) -> Result<Vec<CheckRow>> {
    cfg.validate(p.n)?;
    let horizon = traj.final_state().t;
    let spatial = build_spatial_basis(&traj.grid, cfg);
    let temporal = build_temporal_basis(horizon, cfg)?;
    let mut rows = Vec::new();
    for psi in &temporal {
        for phi in &spatial {
            let pair = TestFunctionPair {
                phi: phi.clone(),
                psi: psi.clone(),
            };
            let su = assemble_superu(traj, &pair, p)?;
            rows.push(CheckRow {
                check: "superu".into(),
                phi_id: phi.id.clone(),
                psi_id: psi.id.clone(),
                lhs: su.lhs,
                rhs: su.rhs,
                slack: su.slack(),
                pass: su.lhs <= su.rhs + cfg.tolerance * su.scale,
            });
            let residual = assemble_superv(traj, &pair, p)?;
            let dp = defect_pairing(traj, &pair, p)?;
            let scale = residual.abs().max(dp.abs()).max(1e-30);
            rows.push(CheckRow {
                check: "superv".into(),
                phi_id: phi.id.clone(),
                psi_id: psi.id.clone(),
                lhs: residual,
                rhs: dp,
                slack: residual - dp,
                pass: (residual - dp).abs() <= cfg.tolerance * scale
                    && residual >= -SUPERV_NONNEG_TOL * scale.max(1.0),
            });
        }
        for which in [TraceField::FluxPr, TraceField::GradV] {
            let flux = time_integrated_flux(traj, psi, which, p)?;
            let name = match which {
                TraceField::FluxPr => "trace_flux_pr",
                TraceField::GradV => "trace_grad_v",
            };
            for phi in &spatial {
                let (pairing, scale) = gauss_green_pairing(&flux, &phi.values)?;
                rows.push(CheckRow {
                    check: name.into(),
                    phi_id: phi.id.clone(),
                    psi_id: psi.id.clone(),
                    lhs: pairing,
                    rhs: 0.0,
                    slack: pairing,
                    pass: pairing.abs() <= 1e-10 * scale.max(f64::MIN_POSITIVE),
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_verification_csv(rows: &[CheckRow], mut w: impl Write) -> Result<()> {
    writeln!(w, "{VERIFICATION_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{:.16e},{:.16e},{:.16e},{}",
            r.check, r.phi_id, r.psi_id, r.lhs, r.rhs, r.slack, r.pass
        )?;
    }
    Ok(())
}
