//! Per-step monitors: masses, extrema, the energy functional `int u^-a v^-b`,
//! its three dissipation channels, the saturation defect, and the
//! exponential envelope used by the Gronwall audit.
//!
//! Dissipation time integrals are accumulated with left-endpoint rectangles,
//! aligned with the explicit stepper's bookkeeping.

use std::io::Write;

use crate::error::{Error, Result};
use crate::grid::{gradient_faces, integrate, FaceField, Grid};
use crate::params::{coercivity_constant, ModelParams};
use crate::solver::State;
use crate::weakform::TemporalTestFn;

/// One row of the diagnostics time series.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass_u: f64,
    pub mass_v: f64,
    pub min_u: f64,
    pub min_v: f64,
    pub max_u: f64,
    pub max_v: f64,
    /// `int u^-a v^-b`.
    pub energy: f64,
    /// `|grad(u^-a/2 v^-b/2)|^2` integrated over the domain.
    pub diss_grad: f64,
    /// `|u^-a/2 v^-b/2-1 grad v|^2` integrated over the domain.
    pub diss_cross: f64,
    /// `int u^(1-a) / (1 + u/k) v^-b-1`.
    pub diss_react: f64,
    /// Saturation gap `int u^2 / (k + u)`.
    pub defect: f64,
    /// `e^(b t) * energy(0)`.
    pub gronwall_bound: f64,
}

pub const CSV_HEADER: &str =
    "t,mass_u,mass_v,min_u,min_v,max_u,max_v,energy,diss_grad,diss_cross,diss_react,defect,gronwall_bound";

/// Energy functional `int u^-a v^-b`.
pub fn energy(state: &State, p: &ModelParams) -> Result<f64> {
    if state.u.min() <= 0.0 || state.v.min() <= 0.0 {
        return Err(Error::Positivity {
            t: state.t,
            detail: "energy needs strictly positive fields".into(),
        });
    }
    let integrand = state
        .u
        .zip_map(&state.v, |u, v| u.powf(-p.a) * v.powf(-p.b));
    Ok(integrate(&integrand))
}

/// `sum f^2 * vol` over faces; boundary faces carry zeros by construction.
fn face_l2_sq(grid: &Grid, faces: &FaceField) -> f64 {
    let vol = grid.cell_volume();
    let sx: f64 = faces.x.iter().map(|g| g * g).sum();
    let sy: f64 = faces.y.iter().map(|g| g * g).sum();
    (sx + sy) * vol
}

/// Face values of `coef * grad(v)` with the cellwise coefficient averaged
/// onto interior faces.
pub(crate) fn weighted_gradient_faces(coef: &crate::grid::Field, v: &crate::grid::Field) -> FaceField {
    let g = coef.grid;
    let mut out = gradient_faces(v);
    let (nx, ny) = (g.nx(), g.ny());
    for iy in 0..ny {
        for fx in 1..nx {
            let l = g.cell_index(fx - 1, iy);
            let r = g.cell_index(fx, iy);
            out.x[g.x_face_index(fx, iy)] *= 0.5 * (coef.values[l] + coef.values[r]);
        }
    }
    if g.dims() == 2 {
        for fy in 1..ny {
            for ix in 0..nx {
                let d = g.cell_index(ix, fy - 1);
                let u = g.cell_index(ix, fy);
                out.y[g.y_face_index(ix, fy)] *= 0.5 * (coef.values[d] + coef.values[u]);
            }
        }
    }
    out
}

/// Instantaneous integrands of the three dissipation channels:
/// the gradient of the coupled root `w = u^-a/2 v^-b/2`, the weighted
/// cross gradient `u^-a/2 v^-b/2-1 grad v`, and the saturated reaction term.
pub fn dissipation_terms(state: &State, p: &ModelParams) -> Result<(f64, f64, f64)> {
    if state.u.min() <= 0.0 || state.v.min() <= 0.0 {
        return Err(Error::Positivity {
            t: state.t,
            detail: "dissipation terms need strictly positive fields".into(),
        });
    }
    let grid = state.u.grid;
    let (a, b, k) = (p.a, p.b, p.k);
    let w = state
        .u
        .zip_map(&state.v, |u, v| u.powf(-a / 2.0) * v.powf(-b / 2.0));
    let grad_w = gradient_faces(&w);
    let diss_grad = face_l2_sq(&grid, &grad_w);

    let cross_coef = state
        .u
        .zip_map(&state.v, |u, v| u.powf(-a / 2.0) * v.powf(-b / 2.0 - 1.0));
    let cross = weighted_gradient_faces(&cross_coef, &state.v);
    let diss_cross = face_l2_sq(&grid, &cross);

    let react = state.u.zip_map(&state.v, |u, v| {
        u.powf(1.0 - a) / (1.0 + u / k) * v.powf(-b - 1.0)
    });
    let diss_react = integrate(&react);

    Ok((diss_grad, diss_cross, diss_react))
}

/// Saturation gap `int u^2 / (k + u)`: the density withheld from the signal
/// source by the regularization; nonnegative and decreasing in `k`.
pub fn defect(state: &State, p: &ModelParams) -> f64 {
    integrate(&state.u.map(|u| u * u / (p.k + u)))
}

/// Full diagnostics row; `energy0` is the energy of the regularized initial
/// state and feeds the exponential envelope.
pub fn record_for(state: &State, p: &ModelParams, energy0: f64) -> Result<DiagnosticsRecord> {
    let (diss_grad, diss_cross, diss_react) = dissipation_terms(state, p)?;
    Ok(DiagnosticsRecord {
        t: state.t,
        mass_u: integrate(&state.u),
        mass_v: integrate(&state.v),
        min_u: state.u.min(),
        min_v: state.v.min(),
        max_u: state.u.max(),
        max_v: state.v.max(),
        energy: energy(state, p)?,
        diss_grad,
        diss_cross,
        diss_react,
        defect: defect(state, p),
        gronwall_bound: (p.b * state.t).exp() * energy0,
    })
}

/// Outcome of the exponential-envelope audit.
#[derive(Debug, Clone, Copy)]
pub struct GronwallReport {
    /// Maximum of `(lhs - rhs)/rhs` over records; negative values mean the
    /// bound holds with margin.
    pub max_slack: f64,
    /// Record time at which the maximum slack occurs.
    pub argmax_t: f64,
    pub passed: bool,
}

/// Checks `E(t) + C_low sum (diss_grad + diss_cross) dt + b sum diss_react dt
/// <= e^(b t) E(0) (1 + tol)` per record and returns the worst relative slack.
pub fn gronwall_check(
    records: &[DiagnosticsRecord],
    p: &ModelParams,
    tol: f64,
) -> Result<GronwallReport> {
    if records.is_empty() {
        return Err(Error::Domain("gronwall_check needs at least one record".into()));
    }
    let c_low = coercivity_constant(p);
    let e0 = records[0].energy;
    let mut accumulated = 0.0;
    let mut max_slack = f64::NEG_INFINITY;
    let mut argmax_t = records[0].t;
    for (n, rec) in records.iter().enumerate() {
        let lhs = rec.energy + accumulated;
        let rhs = (p.b * rec.t).exp() * e0;
        let slack = (lhs - rhs) / rhs;
        if slack > max_slack {
            max_slack = slack;
            argmax_t = rec.t;
        }
        if n + 1 < records.len() {
            let dt = records[n + 1].t - rec.t;
            accumulated +=
                (c_low * (rec.diss_grad + rec.diss_cross) + p.b * rec.diss_react) * dt;
        }
    }
    Ok(GronwallReport {
        max_slack,
        argmax_t,
        passed: max_slack <= tol,
    })
}

/// Outcome of the mass-control audit.
#[derive(Debug, Clone, Copy)]
pub struct MassControlReport {
    /// `sum psi (sat_mass + defect) dt`.
    pub lhs: f64,
    /// `mass_u(0) * sum psi dt`.
    pub rhs: f64,
    pub slack: f64,
}

/// Audits the time-weighted mass budget: the saturated source mass plus the
/// defect must reproduce the conserved initial mass against any nonnegative
/// temporal profile supported inside the run horizon. The profile norm is
/// quadratured on the same record timeline, so equality holds up to the
/// conservation drift of the run itself.
pub fn mass_control_check(
    records: &[DiagnosticsRecord],
    psi: &TemporalTestFn,
    _p: &ModelParams,
) -> Result<MassControlReport> {
    if records.len() < 2 {
        return Err(Error::Domain(
            "mass_control_check needs at least two records".into(),
        ));
    }
    let horizon = records.last().unwrap().t;
    let (lo, hi) = psi.support();
    if lo < -1e-12 || hi > horizon * (1.0 + 1e-12) {
        return Err(Error::Support(format!(
            "psi support [{lo}, {hi}] exceeds run horizon [0, {horizon}]"
        )));
    }
    let mut lhs = 0.0;
    let mut psi_l1 = 0.0;
    for pair in records.windows(2) {
        let dt = pair[1].t - pair[0].t;
        let w = psi.eval(pair[0].t);
        let sat_mass = pair[0].mass_u - pair[0].defect;
        lhs += w * (sat_mass + pair[0].defect) * dt;
        psi_l1 += w * dt;
    }
    let rhs = records[0].mass_u * psi_l1;
    Ok(MassControlReport {
        lhs,
        rhs,
        slack: lhs - rhs,
    })
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the diagnostics time series with the fixed header and floats at
/// 17 significant digits.
pub fn write_diagnostics_csv(records: &[DiagnosticsRecord], mut w: impl Write) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt(r.t),
            fmt(r.mass_u),
            fmt(r.mass_v),
            fmt(r.min_u),
            fmt(r.min_v),
            fmt(r.max_u),
            fmt(r.max_v),
            fmt(r.energy),
            fmt(r.diss_grad),
            fmt(r.diss_cross),
            fmt(r.diss_react),
            fmt(r.defect),
            fmt(r.gronwall_bound)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Field, Grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state_from(u: Field, v: Field) -> State {
        State { t: 0.0, u, v }
    }

    fn params(chi: f64, a: f64, b: f64, k: f64) -> ModelParams {
        ModelParams::new(chi, a, b, 3, k).unwrap()
    }

    #[test]
    fn energy_constant_states() {
        let g = Grid::new_1d(1.0, 16).unwrap();
        let p = params(1.0, 1.0, 1.0, 8.0);
        let s = state_from(g.constant_field(1.0), g.constant_field(1.0));
        assert!((energy(&s, &p).unwrap() - 1.0).abs() < 1e-14);
        let s = state_from(g.constant_field(2.0), g.constant_field(2.0));
        assert!((energy(&s, &p).unwrap() - 0.25).abs() < 1e-14);
    }

    #[test]
    fn energy_matches_brute_force() {
        let g = Grid::new_2d([1.0, 1.5], [8, 8]).unwrap();
        let p = params(0.7, 0.6, 1.3, 4.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = g
            .field_from_values((0..64).map(|_| rng.gen_range(0.1..5.0)).collect())
            .unwrap();
        let v = g
            .field_from_values((0..64).map(|_| rng.gen_range(0.1..5.0)).collect())
            .unwrap();
        let mut brute = 0.0;
        for i in 0..64 {
            brute += u.values[i].powf(-0.6) * v.values[i].powf(-1.3);
        }
        brute *= g.cell_volume();
        let s = state_from(u, v);
        let e = energy(&s, &p).unwrap();
        assert!((e - brute).abs() <= 1e-12 * brute);
    }

    #[test]
    fn energy_rejects_nonpositive() {
        let g = Grid::new_1d(1.0, 4).unwrap();
        let p = params(1.0, 1.0, 1.0, 8.0);
        let mut u = g.constant_field(1.0);
        u.values[2] = 0.0;
        let s = state_from(u, g.constant_field(1.0));
        assert!(energy(&s, &p).is_err());
    }

    #[test]
    fn dissipation_constant_states() {
        let g = Grid::new_1d(1.0, 16).unwrap();
        let p = params(1.0, 1.5, 2.0, 8.0);
        let (cu, cv) = (2.0, 3.0);
        let s = state_from(g.constant_field(cu), g.constant_field(cv));
        let (dg, dc, dr) = dissipation_terms(&s, &p).unwrap();
        assert_eq!(dg, 0.0);
        assert_eq!(dc, 0.0);
        let expect = cu.powf(1.0 - p.a) / (1.0 + cu / p.k) * cv.powf(-p.b - 1.0) * g.measure();
        assert!((dr - expect).abs() < 1e-14);
    }

    #[test]
    fn dissipation_unit_state_saturation_off() {
        let g = Grid::new_1d(1.0, 16).unwrap();
        let p = params(1.0, 1.0, 1.0, 1e15);
        let s = state_from(g.constant_field(1.0), g.constant_field(1.0));
        let (_, _, dr) = dissipation_terms(&s, &p).unwrap();
        assert!((dr - g.measure()).abs() < 1e-12);
    }

    #[test]
    fn dissipation_matches_independent_quadrature() {
        // Second, structurally different quadrature of the same three
        // integrals: explicit loops over faces and cells, no Field helpers.
        let g = Grid::new_1d(1.0, 64).unwrap();
        let p = params(0.9, 0.8, 1.1, 6.0);
        let u = g.field_from_fn(|x| 1.0 + 0.5 * (-((x[0] - 0.4) / 0.15).powi(2)).exp());
        let v = g.field_from_fn(|x| 0.8 + 0.3 * (-((x[0] - 0.6) / 0.2).powi(2)).exp());
        let s = state_from(u.clone(), v.clone());
        let (dg, dc, dr) = dissipation_terms(&s, &p).unwrap();

        let h = g.hx();
        let n = g.nx();
        let wcell: Vec<f64> = (0..n)
            .map(|i| u.values[i].powf(-p.a / 2.0) * v.values[i].powf(-p.b / 2.0))
            .collect();
        let ccell: Vec<f64> = (0..n)
            .map(|i| u.values[i].powf(-p.a / 2.0) * v.values[i].powf(-p.b / 2.0 - 1.0))
            .collect();
        let mut dg2 = 0.0;
        let mut dc2 = 0.0;
        for f in 1..n {
            let gw = (wcell[f] - wcell[f - 1]) / h;
            dg2 += gw * gw * h;
            let gv = (v.values[f] - v.values[f - 1]) / h;
            let coef = 0.5 * (ccell[f] + ccell[f - 1]);
            dc2 += (coef * gv) * (coef * gv) * h;
        }
        let mut dr2 = 0.0;
        for i in 0..n {
            dr2 += u.values[i].powf(1.0 - p.a) / (1.0 + u.values[i] / p.k)
                * v.values[i].powf(-p.b - 1.0)
                * h;
        }
        assert!((dg - dg2).abs() <= 1e-10 * dg2.max(1e-30));
        assert!((dc - dc2).abs() <= 1e-10 * dc2.max(1e-30));
        assert!((dr - dr2).abs() <= 1e-10 * dr2.max(1e-30));
    }

    #[test]
    fn defect_hand_values_and_monotonicity() {
        let g = Grid::new_1d(1.0, 16).unwrap();
        let s = state_from(g.constant_field(1.0), g.constant_field(1.0));
        assert!((defect(&s, &params(1.0, 1.0, 1.0, 2.0)) - 1.0 / 3.0).abs() < 1e-14);
        let mut pk = params(1.0, 1.0, 1.0, 2.0);
        pk.k = 3.0;
        assert!((defect(&s, &pk) - 0.25).abs() < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let u = g
                .field_from_values((0..16).map(|_| rng.gen_range(0.01..50.0)).collect())
                .unwrap();
            let st = state_from(u, g.constant_field(1.0));
            let mut prev = f64::INFINITY;
            for k in [2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0] {
                let d = defect(&st, &params(1.0, 1.0, 1.0, k));
                assert!(d >= 0.0);
                assert!(d <= prev, "defect not decreasing in k");
                prev = d;
            }
        }
    }

    #[test]
    fn defect_k1_half() {
        // u = 1, k = 1 on a unit domain: integrand 1/(1+1) = 1/2.
        let g = Grid::new_1d(1.0, 8).unwrap();
        let s = state_from(g.constant_field(1.0), g.constant_field(1.0));
        let mut p = params(1.0, 1.0, 1.0, 2.0);
        p.k = 1.0;
        assert!((defect(&s, &p) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gronwall_constant_steady_state_passes() {
        let g = Grid::new_1d(1.0, 8).unwrap();
        let p = params(1.0, 1.0, 1.0, 1e15);
        let c = 2.0;
        let s = state_from(g.constant_field(c), g.constant_field(c));
        let e0 = energy(&s, &p).unwrap();
        let records: Vec<_> = (0..50)
            .map(|i| {
                let mut r = record_for(&s, &p, e0).unwrap();
                r.t = i as f64 * 0.01;
                r.gronwall_bound = (p.b * r.t).exp() * e0;
                r
            })
            .collect();
        let rep = gronwall_check(&records, &p, 1e-2).unwrap();
        assert!(rep.passed);
        assert!(rep.max_slack <= 0.0 + 1e-12);
    }

    #[test]
    fn gronwall_empty_records_error() {
        let p = params(1.0, 1.0, 1.0, 8.0);
        assert!(gronwall_check(&[], &p, 1e-2).is_err());
    }

    #[test]
    fn csv_format_and_header() {
        let g = Grid::new_1d(1.0, 8).unwrap();
        let p = params(1.0, 1.0, 1.0, 8.0);
        let s = state_from(g.constant_field(1.0), g.constant_field(1.0));
        let e0 = energy(&s, &p).unwrap();
        let rec = record_for(&s, &p, e0).unwrap();
        let mut buf = Vec::new();
        write_diagnostics_csv(&[rec], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let row = lines.next().unwrap();
        assert_eq!(row.split(',').count(), 13);
        // 17 significant digits: mantissa has 16 fractional digits.
        assert!(row.split(',').all(|f| f.contains('.') && f.contains('e')));
        let mass: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(mass, 1.0);
    }
}
