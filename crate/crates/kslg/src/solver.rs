//! Time integration of the regularized system
//!
//! ```text
//! du/dt = div(grad u - chi (u/v) grad v)
//! dv/dt = lap v - v + u / (1 + u/k)
//! ```
//!
//! with zero-flux boundaries. The explicit scheme is forward Euler under a
//! CFL rule covering both the diffusive and the advective part; the IMEX
//! scheme treats diffusion (and the `-v` decay) with backward Euler solved
//! matrix-free by conjugate gradients, and advection/reaction explicitly.
//! Positivity is enforced by the step-size rule and audited after every
//! step; a violation aborts the run rather than clipping, so the mass
//! ledger stays honest.

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::grid::{div_flux_neumann, gradient_faces, laplacian_neumann, FaceField, Field, Grid};
use crate::params::ModelParams;

/// Relative residual target of the conjugate-gradient solves.
pub const CG_REL_TOL: f64 = 1e-10;

/// Smallest admissible effective step, relative to the horizon.
const DT_FLOOR_REL: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Explicit,
    Imex,
}

/// How the `u/v` factor is placed on faces inside the chemotactic flux.
///
/// Upwinding preserves positivity and is the default; central averaging is
/// second-order consistent and intended for convergence studies only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdvectionMode {
    Upwind,
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Upper bound on the step; the CFL rule may shorten it further.
    pub dt_max: f64,
    /// Safety factor in `(0, 1]` applied to the stability limits.
    pub cfl_safety: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub advection: AdvectionMode,
    /// Diagnostics cadence: a record every this many steps (>= 1).
    pub record_stride: usize,
    /// State retention cadence: 0 keeps only the initial and final states.
    pub snapshot_stride: usize,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_max > 0.0) || !self.dt_max.is_finite() {
            return Err(Error::Domain(format!("dt_max must be positive, got {}", self.dt_max)));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::Domain(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::Domain(format!("t_end must be >= 0, got {}", self.t_end)));
        }
        if self.record_stride == 0 {
            return Err(Error::Domain("record_stride must be >= 1".into()));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt_max: 1e-3,
            cfl_safety: 0.9,
            t_end: 1.0,
            scheme: Scheme::Explicit,
            advection: AdvectionMode::Upwind,
            record_stride: 1,
            snapshot_stride: 0,
        }
    }
}

/// Time-stamped solution pair; both components strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: Field,
    pub v: Field,
}

impl State {
    pub fn validate_positive(&self) -> Result<()> {
        if !self.u.is_finite() || !self.v.is_finite() {
            return Err(Error::Positivity {
                t: self.t,
                detail: "non-finite field values".into(),
            });
        }
        if self.u.min() <= 0.0 {
            return Err(Error::Positivity {
                t: self.t,
                detail: format!("min(u) = {}", self.u.min()),
            });
        }
        if self.v.min() <= 0.0 {
            return Err(Error::Positivity {
                t: self.t,
                detail: format!("min(v) = {}", self.v.min()),
            });
        }
        Ok(())
    }
}

/// Completed run: snapshot-strided states plus the diagnostics time series.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: Grid,
    pub params: ModelParams,
    pub states: Vec<State>,
    pub records: Vec<DiagnosticsRecord>,
}

impl Trajectory {
    pub fn initial(&self) -> &State {
        &self.states[0]
    }

    pub fn final_state(&self) -> &State {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

/// Clamp construction for the initial data:
/// `u_0 -> max(k^(-b/a), min(u_0, k))` and `v_0 -> max(k^(-a/b), min(v_0, k))`.
///
/// The outputs are strictly positive, bounded by `k`, and satisfy the
/// cellwise product bound
/// `u^-a v^-b <= max(u_0^-a v_0^-b, 1)` wherever the raw data is positive.
pub fn regularize_initial_data(
    u0: &Field,
    v0: &Field,
    p: &ModelParams,
) -> Result<(Field, Field)> {
    for (name, f) in [("u0", u0), ("v0", v0)] {
        if f.min() < 0.0 {
            return Err(Error::Domain(format!(
                "{name} must be nonnegative, min = {}",
                f.min()
            )));
        }
        if f.values.iter().all(|&v| v == 0.0) {
            return Err(Error::Domain(format!("{name} must not be identically zero")));
        }
    }
    let u_floor = p.k.powf(-p.b / p.a);
    let v_floor = p.k.powf(-p.a / p.b);
    let uk0 = u0.map(|u| u_floor.max(u.min(p.k)));
    let vk0 = v0.map(|v| v_floor.max(v.min(p.k)));
    Ok((uk0, vk0))
}

/// Face flux `grad u - chi (u/v)|_face grad v` with the ratio taken from the
/// upwind cell (w.r.t. the sign of `chi dv`) or centrally averaged.
/// Boundary faces are exactly zero.
pub fn chemotactic_flux(state: &State, p: &ModelParams, mode: AdvectionMode) -> Result<FaceField> {
    if state.v.min() <= 0.0 {
        return Err(Error::Positivity {
            t: state.t,
            detail: format!("chemotactic flux needs v > 0, min(v) = {}", state.v.min()),
        });
    }
    let mut flux = advective_flux(state, p, mode);
    let grad_u = gradient_faces(&state.u);
    for (f, g) in flux.x.iter_mut().zip(&grad_u.x) {
        *f += g;
    }
    for (f, g) in flux.y.iter_mut().zip(&grad_u.y) {
        *f += g;
    }
    Ok(flux)
}

/// Advective part only: `-chi (u/v)|_face grad v` on faces.
fn advective_flux(state: &State, p: &ModelParams, mode: AdvectionMode) -> FaceField {
    let g = state.u.grid;
    let (nx, ny) = (g.nx(), g.ny());
    let chi = p.chi;
    let u = &state.u.values;
    let v = &state.v.values;
    let mut out = g.zero_faces();
    let ratio = |l: usize, r: usize, dv: f64| -> f64 {
        match mode {
            AdvectionMode::Upwind => {
                if chi * dv > 0.0 {
                    u[l] / v[l]
                } else {
                    u[r] / v[r]
                }
            }
            AdvectionMode::Central => 0.5 * (u[l] / v[l] + u[r] / v[r]),
        }
    };
    for iy in 0..ny {
        for fx in 1..nx {
            let l = g.cell_index(fx - 1, iy);
            let r = g.cell_index(fx, iy);
            let dv = (v[r] - v[l]) / g.hx();
            out.x[g.x_face_index(fx, iy)] = -chi * ratio(l, r, dv) * dv;
        }
    }
    if g.dims() == 2 {
        for fy in 1..ny {
            for ix in 0..nx {
                let d = g.cell_index(ix, fy - 1);
                let up = g.cell_index(ix, fy);
                let dv = (v[up] - v[d]) / g.hy();
                out.y[g.y_face_index(ix, fy)] = -chi * ratio(d, up, dv) * dv;
            }
        }
    }
    out
}

/// Largest stable advective step: `min over axes h / (chi max |dv|/v_up)`.
fn advective_dt_limit(state: &State, p: &ModelParams) -> f64 {
    let g = state.u.grid;
    let (nx, ny) = (g.nx(), g.ny());
    let v = &state.v.values;
    let chi = p.chi;
    let mut limit = f64::INFINITY;
    let mut rate_x: f64 = 0.0;
    for iy in 0..ny {
        for fx in 1..nx {
            let l = g.cell_index(fx - 1, iy);
            let r = g.cell_index(fx, iy);
            let dv = (v[r] - v[l]) / g.hx();
            let v_up = if chi * dv > 0.0 { v[l] } else { v[r] };
            rate_x = rate_x.max(dv.abs() / v_up);
        }
    }
    if rate_x > 0.0 {
        limit = limit.min(g.hx() / (chi * rate_x));
    }
    if g.dims() == 2 {
        let mut rate_y: f64 = 0.0;
        for fy in 1..ny {
            for ix in 0..nx {
                let d = g.cell_index(ix, fy - 1);
                let up = g.cell_index(ix, fy);
                let dv = (v[up] - v[d]) / g.hy();
                let v_up = if chi * dv > 0.0 { v[d] } else { v[up] };
                rate_y = rate_y.max(dv.abs() / v_up);
            }
        }
        if rate_y > 0.0 {
            limit = limit.min(g.hy() / (chi * rate_y));
        }
    }
    limit
}

/// Step actually taken from this state:
/// `dt = min(dt_max, cfl * h^2/(2 dims), cfl * h/(chi max|dv|/v_up))` for the
/// explicit scheme; the diffusive limit drops out under IMEX.
pub fn effective_dt(state: &State, p: &ModelParams, cfg: &SolverConfig) -> Result<f64> {
    let mut dt = cfg.dt_max;
    if cfg.scheme == Scheme::Explicit {
        dt = dt.min(cfg.cfl_safety * state.u.grid.diffusive_dt_limit());
    }
    dt = dt.min(cfg.cfl_safety * advective_dt_limit(state, p));
    if !(dt > DT_FLOOR_REL * cfg.t_end.max(1.0)) || !dt.is_finite() {
        return Err(Error::Stability {
            t: state.t,
            detail: format!("effective dt degenerated to {dt}"),
        });
    }
    Ok(dt)
}

fn saturated_source(state: &State, p: &ModelParams) -> Field {
    state.u.map(|u| p.sat(u))
}

/// One step of the configured scheme with the step size chosen by
/// `effective_dt`.
pub fn step(state: &State, p: &ModelParams, cfg: &SolverConfig) -> Result<State> {
    state.validate_positive()?;
    let dt = effective_dt(state, p, cfg)?;
    step_with_dt(state, p, cfg, dt)
}

fn step_with_dt(state: &State, p: &ModelParams, cfg: &SolverConfig, dt: f64) -> Result<State> {
    let next = match cfg.scheme {
        Scheme::Explicit => {
            let flux = chemotactic_flux(state, p, cfg.advection)?;
            let du = div_flux_neumann(&flux)?;
            let lap_v = laplacian_neumann(&state.v);
            let sat = saturated_source(state, p);
            let u = Field {
                grid: state.u.grid,
                values: state
                    .u
                    .values
                    .iter()
                    .zip(&du.values)
                    .map(|(&u, &d)| u + dt * d)
                    .collect(),
            };
            let v = Field {
                grid: state.v.grid,
                values: state
                    .v
                    .values
                    .iter()
                    .zip(lap_v.values.iter().zip(&sat.values))
                    .map(|(&v, (&l, &s))| v + dt * (l - v + s))
                    .collect(),
            };
            State {
                t: state.t + dt,
                u,
                v,
            }
        }
        Scheme::Imex => {
            if state.v.min() <= 0.0 {
                return Err(Error::Positivity {
                    t: state.t,
                    detail: format!("min(v) = {}", state.v.min()),
                });
            }
            let grid = state.u.grid;
            let adv = advective_flux(state, p, cfg.advection);
            let div_adv = div_flux_neumann(&adv)?;
            // (I - dt lap) u_new = u + dt div(adv). Starting CG from the
            // right-hand side keeps every iterate in rhs + span{lap(...)},
            // so the discrete mass is conserved regardless of when the
            // iteration stops.
            let rhs_u: Vec<f64> = state
                .u
                .values
                .iter()
                .zip(&div_adv.values)
                .map(|(&u, &d)| u + dt * d)
                .collect();
            let u_new = cg_solve(&grid, 1.0, dt, &rhs_u, rhs_u.clone(), state.t)?;
            // ((1 + dt) I - dt lap) v_new = v + dt sat(u).
            let sat = saturated_source(state, p);
            let rhs_v: Vec<f64> = state
                .v
                .values
                .iter()
                .zip(&sat.values)
                .map(|(&v, &s)| v + dt * s)
                .collect();
            let guess: Vec<f64> = rhs_v.iter().map(|&r| r / (1.0 + dt)).collect();
            let v_new = cg_solve(&grid, 1.0 + dt, dt, &rhs_v, guess, state.t)?;
            State {
                t: state.t + dt,
                u: Field {
                    grid,
                    values: u_new,
                },
                v: Field {
                    grid,
                    values: v_new,
                },
            }
        }
    };
    next.validate_positive()?;
    Ok(next)
}

/// Matrix-free conjugate gradients for `(alpha I - dt lap) x = b`.
/// The operator is symmetric positive definite for `alpha >= 1`, `dt > 0`.
fn cg_solve(
    grid: &Grid,
    alpha: f64,
    dt: f64,
    b: &[f64],
    x0: Vec<f64>,
    t: f64,
) -> Result<Vec<f64>> {
    let apply = |x: &[f64]| -> Vec<f64> {
        let field = Field {
            grid: *grid,
            values: x.to_vec(),
        };
        let lap = laplacian_neumann(&field);
        x.iter()
            .zip(&lap.values)
            .map(|(&xi, &li)| alpha * xi - dt * li)
            .collect()
    };
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };

    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(vec![0.0; b.len()]);
    }
    let mut x = x0;
    let ax = apply(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let max_iter = 20 * b.len() + 200;
    for _ in 0..max_iter {
        if rr.sqrt() <= CG_REL_TOL * b_norm {
            return Ok(x);
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        let a = rr / pap;
        for ((xi, pi), (ri, api)) in x
            .iter_mut()
            .zip(&p)
            .zip(r.iter_mut().zip(&ap))
        {
            *xi += a * pi;
            *ri -= a * api;
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
        rr = rr_new;
    }
    Err(Error::Stability {
        t,
        detail: format!(
            "conjugate gradients stalled at relative residual {:.3e}",
            rr.sqrt() / b_norm
        ),
    })
}

/// Advances the regularized initial data to `t_end`, recording diagnostics
/// every `record_stride` steps and retaining states every `snapshot_stride`
/// steps (plus the initial and final states). `sink` sees every record as it
/// is produced.
pub fn run(
    u0: &Field,
    v0: &Field,
    p: &ModelParams,
    cfg: &SolverConfig,
    mut sink: impl FnMut(&DiagnosticsRecord),
) -> Result<Trajectory> {
    cfg.validate()?;
    if u0.grid != v0.grid {
        return Err(Error::Shape("u0 and v0 live on different grids".into()));
    }
    let grid = u0.grid;
    let (uk0, vk0) = regularize_initial_data(u0, v0, p)?;
    let mut state = State {
        t: 0.0,
        u: uk0,
        v: vk0,
    };
    state.validate_positive()?;
    let energy0 = diagnostics::energy(&state, p)?;

    let mut records = Vec::new();
    let mut states = Vec::new();
    let first = diagnostics::record_for(&state, p, energy0)?;
    sink(&first);
    records.push(first);
    states.push(state.clone());

    let mut step_count: usize = 0;
    while state.t < cfg.t_end {
        let dt_stable = effective_dt(&state, p, cfg)?;
        let remaining = cfg.t_end - state.t;
        // Swallow a vanishing tail step into the final one.
        let dt = if remaining <= dt_stable * (1.0 + 1e-9) {
            remaining
        } else {
            dt_stable
        };
        state = step_with_dt(&state, p, cfg, dt)?;
        step_count += 1;
        let done = state.t >= cfg.t_end - 1e-15 * cfg.t_end.max(1.0);
        if done {
            state.t = cfg.t_end;
        }
        if step_count % cfg.record_stride == 0 || done {
            let rec = diagnostics::record_for(&state, p, energy0)?;
            sink(&rec);
            records.push(rec);
        }
        if done || (cfg.snapshot_stride > 0 && step_count % cfg.snapshot_stride == 0) {
            states.push(state.clone());
        }
        if done {
            break;
        }
    }
    if states.len() == 1 {
        // t_end = 0: the initial state doubles as the final one.
        states.push(state);
    }
    Ok(Trajectory {
        grid,
        params: *p,
        states,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::integrate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(chi: f64, a: f64, b: f64, k: f64) -> ModelParams {
        ModelParams::new(chi, a, b, 3, k).unwrap()
    }

    fn cfg(scheme: Scheme, dt_max: f64, t_end: f64) -> SolverConfig {
        SolverConfig {
            dt_max,
            cfl_safety: 0.9,
            t_end,
            scheme,
            advection: AdvectionMode::Upwind,
            record_stride: 1,
            snapshot_stride: 0,
        }
    }

    #[test]
    fn regularize_clamp_cases() {
        let g = Grid::new_1d(1.0, 8).unwrap();
        let p = params(1.0, 1.0, 1.0, 10.0);
        let v0 = g.constant_field(1.0);

        let (u, _) = regularize_initial_data(&g.constant_field(5.0), &v0, &p).unwrap();
        assert!(u.values.iter().all(|&x| x == 5.0));

        let (u, _) = regularize_initial_data(&g.constant_field(0.01), &v0, &p).unwrap();
        assert!(u.values.iter().all(|&x| (x - 0.1).abs() < 1e-15));

        let (u, _) = regularize_initial_data(&g.constant_field(100.0), &v0, &p).unwrap();
        assert!(u.values.iter().all(|&x| x == 10.0));
    }

    #[test]
    fn regularize_rejects_bad_input() {
        let g = Grid::new_1d(1.0, 8).unwrap();
        let p = params(1.0, 1.0, 1.0, 10.0);
        let mut neg = g.constant_field(1.0);
        neg.values[0] = -0.5;
        assert!(regularize_initial_data(&neg, &g.constant_field(1.0), &p).is_err());
        let zero = g.constant_field(0.0);
        assert!(regularize_initial_data(&zero, &g.constant_field(1.0), &p).is_err());
    }

    #[test]
    fn regularize_product_bound() {
        // u^-a v^-b after clamping <= max(u0^-a v0^-b, 1) cellwise.
        let g = Grid::new_1d(1.0, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let a = rng.gen_range(0.2..3.0);
            let b = rng.gen_range(0.2..3.0);
            let k = rng.gen_range(2.0..100.0);
            let p = params(1.0, a, b, k);
            let u0 = g
                .field_from_values((0..64).map(|_| 10f64.powf(rng.gen_range(-6.0..4.0))).collect())
                .unwrap();
            let v0 = g
                .field_from_values((0..64).map(|_| 10f64.powf(rng.gen_range(-6.0..4.0))).collect())
                .unwrap();
            let (uk, vk) = regularize_initial_data(&u0, &v0, &p).unwrap();
            for i in 0..64 {
                let reg = uk.values[i].powf(-a) * vk.values[i].powf(-b);
                let raw = u0.values[i].powf(-a) * v0.values[i].powf(-b);
                let bound = raw.max(1.0);
                assert!(
                    reg <= bound * (1.0 + 1e-12),
                    "cell {i}: reg {reg} bound {bound}"
                );
                assert!(uk.values[i] > 0.0 && vk.values[i] > 0.0);
                assert!(uk.values[i] <= k && vk.values[i] <= k);
            }
        }
    }

    #[test]
    fn flux_vanishes_for_constants() {
        let g = Grid::new_1d(1.0, 8).unwrap();
        let p = params(1.0, 1.0, 1.0, 8.0);
        let s = State {
            t: 0.0,
            u: g.constant_field(2.0),
            v: g.constant_field(3.0),
        };
        for mode in [AdvectionMode::Upwind, AdvectionMode::Central] {
            let f = chemotactic_flux(&s, &p, mode).unwrap();
            assert!(f.x.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn flux_reduces_to_diffusion_without_chemotaxis() {
        let g = Grid::new_1d(1.0, 16).unwrap();
        let p = ModelParams::new(f64::MIN_POSITIVE, 1.0, 1.0, 3, 8.0).unwrap();
        let u = g.field_from_fn(|x| 1.0 + x[0] * x[0]);
        let s = State {
            t: 0.0,
            u: u.clone(),
            v: g.constant_field(1.0),
        };
        let f = chemotactic_flux(&s, &p, AdvectionMode::Upwind).unwrap();
        let grad = gradient_faces(&u);
        for (a, b) in f.x.iter().zip(&grad.x) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn flux_upwind_hand_case() {
        // u = 1, v = 1 + x on four cells of width 1: dv = 1 at interior
        // faces, chi dv > 0, so the ratio is taken from the left cell.
        let g = Grid::new_1d(4.0, 4).unwrap();
        let p = params(1.0, 1.0, 1.0, 1e15);
        let v = g.field_from_fn(|x| 1.0 + x[0]);
        let s = State {
            t: 0.0,
            u: g.constant_field(1.0),
            v: v.clone(),
        };
        let f = chemotactic_flux(&s, &p, AdvectionMode::Upwind).unwrap();
        for fx in 1..4 {
            let v_left = v.values[fx - 1];
            let expect = 0.0 - (1.0 / v_left) * 1.0;
            assert!((f.x[fx] - expect).abs() < 1e-14, "face {fx}");
        }
        assert_eq!(f.x[0], 0.0);
        assert_eq!(f.x[4], 0.0);
    }

    #[test]
    fn flux_rejects_nonpositive_v() {
        let g = Grid::new_1d(1.0, 4).unwrap();
        let p = params(1.0, 1.0, 1.0, 8.0);
        let mut v = g.constant_field(1.0);
        v.values[1] = 0.0;
        let s = State {
            t: 0.5,
            u: g.constant_field(1.0),
            v,
        };
        assert!(matches!(
            chemotactic_flux(&s, &p, AdvectionMode::Upwind),
            Err(Error::Positivity { .. })
        ));
    }

    #[test]
    fn constant_state_is_fixed_point_at_huge_k() {
        let g = Grid::new_1d(1.0, 8).unwrap();
        let p = params(1.0, 1.0, 1.0, 1e15);
        let c = 2.5;
        let s = State {
            t: 0.0,
            u: g.constant_field(c),
            v: g.constant_field(c),
        };
        for scheme in [Scheme::Explicit, Scheme::Imex] {
            let next = step(&s, &p, &cfg(scheme, 1e-3, 1.0)).unwrap();
            for &u in &next.u.values {
                assert!((u - c).abs() < 1e-12);
            }
            for &v in &next.v.values {
                assert!((v - c).abs() < 1e-3 * c / 1e12);
            }
        }
    }

    #[test]
    fn scalar_reaction_oracle() {
        // Constant fields act as a single scalar: one explicit step from
        // u = 1, v = 2 with chi = 1, k = 2 gives v <- 2 + dt (0 - 2 + 2/3).
        let g = Grid::new_1d(1.0, 4).unwrap();
        let p = params(1.0, 1.0, 1.0, 2.0);
        let s = State {
            t: 0.0,
            u: g.constant_field(1.0),
            v: g.constant_field(2.0),
        };
        let c = cfg(Scheme::Explicit, 1e-3, 1.0);
        let dt = effective_dt(&s, &p, &c).unwrap();
        let next = step(&s, &p, &c).unwrap();
        for &v in &next.v.values {
            assert!((v - (2.0 - dt * 4.0 / 3.0)).abs() < 1e-15);
        }
        for &u in &next.u.values {
            assert_eq!(u, 1.0);
        }
    }

    #[test]
    fn explicit_heat_equation_conserves_mass_per_step() {
        let g = Grid::new_1d(1.0, 64).unwrap();
        let p = ModelParams::new(f64::MIN_POSITIVE, 1.0, 1.0, 3, 8.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = g
            .field_from_values((0..64).map(|_| rng.gen_range(0.5..2.0)).collect())
            .unwrap();
        let mut s = State {
            t: 0.0,
            u,
            v: g.constant_field(1.0),
        };
        let c = cfg(Scheme::Explicit, 1.0, 1.0);
        let m0 = integrate(&s.u);
        for _ in 0..50 {
            s = step(&s, &p, &c).unwrap();
            let m = integrate(&s.u);
            assert!((m - m0).abs() <= 1e-13 * m0.abs());
        }
    }

    #[test]
    fn run_t_end_zero_yields_single_record() {
        let g = Grid::new_1d(1.0, 8).unwrap();
        let p = params(1.0, 1.0, 1.0, 8.0);
        let mut seen = 0;
        let traj = run(
            &g.constant_field(1.0),
            &g.constant_field(1.0),
            &p,
            &cfg(Scheme::Explicit, 1e-3, 0.0),
            |_| seen += 1,
        )
        .unwrap();
        assert_eq!(traj.records.len(), 1);
        assert_eq!(seen, 1);
        assert_eq!(traj.states.len(), 2);
        assert_eq!(traj.final_state().t, 0.0);
    }

    #[test]
    fn run_is_deterministic() {
        let g = Grid::new_1d(1.0, 32).unwrap();
        let p = params(1.0, 1.0, 1.0, 8.0);
        let u0 = g.field_from_fn(|x| 0.5 + (-((x[0] - 0.5) / 0.1).powi(2)).exp());
        let v0 = g.constant_field(1.0);
        let c = cfg(Scheme::Explicit, 1e-4, 0.05);
        let t1 = run(&u0, &v0, &p, &c, |_| {}).unwrap();
        let t2 = run(&u0, &v0, &p, &c, |_| {}).unwrap();
        assert_eq!(t1.records.len(), t2.records.len());
        for (a, b) in t1.records.iter().zip(&t2.records) {
            assert_eq!(a, b);
        }
        assert_eq!(t1.final_state().u.values, t2.final_state().u.values);
    }

    #[test]
    fn heat_equation_matches_discrete_eigenmode_decay() {
        // With chi ~ 0 the u-equation is the discrete heat equation, whose
        // exact solution under fixed-dt forward Euler is known mode by mode:
        // cos(m pi (i + 1/2)/N) decays by (1 + dt lambda_m) per step with
        // lambda_m = -(4/h^2) sin^2(m pi / (2N)).
        let n = 32;
        let g = Grid::new_1d(1.0, n).unwrap();
        let p = ModelParams::new(f64::MIN_POSITIVE, 1.0, 1.0, 3, 8.0).unwrap();
        let h = g.hx();
        let modes = [0usize, 1, 3, 7];
        let coef = [2.0, 0.3, 0.2, 0.1];
        let u0 = g.field_from_values(
            (0..n)
                .map(|i| {
                    modes
                        .iter()
                        .zip(&coef)
                        .map(|(&m, &c)| {
                            c * (m as f64 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64)
                                .cos()
                        })
                        .sum()
                })
                .collect(),
        )
        .unwrap();
        let dt = 0.4 * h * h; // below the explicit limit h^2/2
        let steps = 200;
        let c = SolverConfig {
            dt_max: dt,
            cfl_safety: 1.0,
            t_end: dt * steps as f64,
            scheme: Scheme::Explicit,
            advection: AdvectionMode::Upwind,
            record_stride: usize::MAX - 1,
            snapshot_stride: 0,
        };
        let traj = run(&u0, &g.constant_field(1.0), &p, &c, |_| {}).unwrap();
        let fin = traj.final_state();
        for i in 0..n {
            let expect: f64 = modes
                .iter()
                .zip(&coef)
                .map(|(&m, &cf)| {
                    let lam = -(4.0 / (h * h))
                        * (m as f64 * std::f64::consts::PI / (2.0 * n as f64)).sin().powi(2);
                    cf * (1.0 + dt * lam).powi(steps)
                        * (m as f64 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64).cos()
                })
                .sum();
            assert!(
                (fin.u.values[i] - expect).abs() < 1e-11,
                "cell {i}: {} vs {expect}",
                fin.u.values[i]
            );
        }
        // Max-norm distance to the mean keeps shrinking with the horizon.
        let mean = integrate(&fin.u) / g.measure();
        let dev = fin
            .u
            .values
            .iter()
            .map(|&x| (x - mean).abs())
            .fold(0.0, f64::max);
        let dev0 = u0
            .values
            .iter()
            .map(|&x| (x - mean).abs())
            .fold(0.0, f64::max);
        assert!(dev < 0.5 * dev0);
    }

    #[test]
    fn cg_solves_manufactured_system() {
        let g = Grid::new_1d(1.0, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x_true: Vec<f64> = (0..64).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let dt = 1e-2;
        let field = Field {
            grid: g,
            values: x_true.clone(),
        };
        let lap = laplacian_neumann(&field);
        let b: Vec<f64> = x_true
            .iter()
            .zip(&lap.values)
            .map(|(&x, &l)| 1.5 * x - dt * l)
            .collect();
        let x = cg_solve(&g, 1.5, dt, &b, b.clone(), 0.0).unwrap();
        let err = x
            .iter()
            .zip(&x_true)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "cg error {err}");
    }

    #[test]
    fn imex_conserves_mass_over_run() {
        let g = Grid::new_1d(1.0, 64).unwrap();
        let p = params(1.0, 1.0, 1.0, 8.0);
        let u0 = g.field_from_fn(|x| 0.3 + 2.0 * (-((x[0] - 0.5) / 0.1).powi(2)).exp());
        let v0 = g.constant_field(0.5);
        let c = SolverConfig {
            dt_max: 2e-4,
            t_end: 0.2,
            scheme: Scheme::Imex,
            ..SolverConfig::default()
        };
        let traj = run(&u0, &v0, &p, &c, |_| {}).unwrap();
        let m0 = traj.records[0].mass_u;
        for r in &traj.records {
            assert!(
                (r.mass_u - m0).abs() <= 1e-10 * m0,
                "t = {}: drift {}",
                r.t,
                (r.mass_u - m0) / m0
            );
        }
    }

    #[test]
    fn imex_agrees_with_explicit_on_smooth_run() {
        let g = Grid::new_1d(1.0, 32).unwrap();
        let p = params(1.0, 1.0, 1.0, 8.0);
        let u0 = g.field_from_fn(|x| 0.5 + (-((x[0] - 0.5) / 0.15).powi(2)).exp());
        let v0 = g.constant_field(1.0);
        let t_end = 0.02;
        let explicit = run(
            &u0,
            &v0,
            &p,
            &cfg(Scheme::Explicit, 1e-5, t_end),
            |_| {},
        )
        .unwrap();
        let imex = run(&u0, &v0, &p, &cfg(Scheme::Imex, 1e-5, t_end), |_| {}).unwrap();
        let ue = &explicit.final_state().u;
        let ui = &imex.final_state().u;
        let diff = ue
            .values
            .iter()
            .zip(&ui.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-3, "imex vs explicit diff {diff}");
    }

    #[test]
    fn config_validation() {
        let mut c = SolverConfig::default();
        c.dt_max = 0.0;
        assert!(c.validate().is_err());
        let mut c = SolverConfig::default();
        c.cfl_safety = 1.5;
        assert!(c.validate().is_err());
        let mut c = SolverConfig::default();
        c.record_stride = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn run_propagates_positivity_abort() {
        // A step from a state with a zero v cell must abort with the time.
        let g = Grid::new_1d(1.0, 8).unwrap();
        let p = params(1.0, 1.0, 1.0, 8.0);
        let mut v = g.constant_field(1.0);
        v.values[3] = 0.0;
        let s = State {
            t: 0.25,
            u: g.constant_field(1.0),
            v,
        };
        match step(&s, &p, &cfg(Scheme::Explicit, 1e-4, 1.0)) {
            Err(Error::Positivity { t, .. }) => assert_eq!(t, 0.25),
            other => panic!("expected positivity abort, got {other:?}"),
        }
    }
}
