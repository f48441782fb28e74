//! Model parameters and closed-form admissibility analysis.
//!
//! The chemotactic flux carries a sensitivity `chi`, and the dissipation
//! structure of the coupled quantity `u^-a v^-b` is coercive exactly when
//! `b` lies above the frontier `b_plus(a) = (1+a)/2 (sqrt(1+chi^2 a) - 1)`.
//! Three equivalent characterizations are exposed: the frontier comparison,
//! the sign of the discriminant, and the sign of the smallest eigenvalue of
//! the quadratic-form matrix. They must agree away from the frontier.

use crate::error::{Error, Result};

/// Physical and regularization constants of one model configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Chemotactic sensitivity, `chi > 0`.
    pub chi: f64,
    /// Exponent of `u` in the coupled quantity, `a > 0`.
    pub a: f64,
    /// Exponent of `v` in the coupled quantity, `b > 0`.
    pub b: f64,
    /// Space dimension used for threshold reporting, `n >= 1`.
    pub n: u32,
    /// Saturation level of the source regularization, `k >= 2`.
    pub k: f64,
}

impl ModelParams {
    pub fn new(chi: f64, a: f64, b: f64, n: u32, k: f64) -> Result<Self> {
        if !(chi > 0.0) || !chi.is_finite() {
            return Err(Error::Domain(format!("chi must be positive, got {chi}")));
        }
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::Domain(format!("a must be positive, got {a}")));
        }
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::Domain(format!("b must be positive, got {b}")));
        }
        if n < 1 {
            return Err(Error::Domain(format!("n must be >= 1, got {n}")));
        }
        if !(k >= 2.0) || !k.is_finite() {
            return Err(Error::Domain(format!("k must be >= 2, got {k}")));
        }
        Ok(Self { chi, a, b, n, k })
    }

    /// Saturated source `u / (1 + u/k)`.
    #[inline]
    pub fn sat(&self, u: f64) -> f64 {
        u / (1.0 + u / self.k)
    }

    pub fn admissibility(&self) -> AdmissibilityReport {
        AdmissibilityReport::new(self)
    }
}

/// Outcome of the admissibility analysis for one parameter triple.
#[derive(Debug, Clone, Copy)]
pub struct AdmissibilityReport {
    /// Upper frontier value `b_plus(a)`.
    pub b_plus: f64,
    /// Lower branch `b_minus(a)`; classifier only, always negative.
    pub b_minus: f64,
    /// `chi^2 (a+1)^2/4 - (b+a+1) b / a`; negative iff admissible.
    pub discriminant: f64,
    /// Largest `C` with `Q(U,V) >= C (|U|^2 + |V|^2)`.
    pub coercivity: f64,
    /// Strict admissibility, `discriminant < 0`.
    pub admissible: bool,
    /// Set when the configuration sits on the frontier within rounding.
    pub frontier: bool,
}

impl AdmissibilityReport {
    pub fn new(p: &ModelParams) -> Self {
        let disc = discriminant(p);
        let scale = 1.0 + p.chi * p.chi * (p.a + 1.0) * (p.a + 1.0) / 4.0
            + (p.b + p.a + 1.0) * p.b / p.a;
        AdmissibilityReport {
            b_plus: b_plus(p.a, p.chi).expect("validated params"),
            b_minus: b_minus(p.a, p.chi).expect("validated params"),
            discriminant: disc,
            coercivity: coercivity_constant(p),
            admissible: disc < 0.0,
            frontier: disc.abs() <= 1e-12 * scale,
        }
    }
}

/// Admissibility frontier `b_plus(a) = (1+a)/2 (sqrt(1 + chi^2 a) - 1)`.
///
/// Strictly increasing in `a` for fixed `chi > 0` and tends to 0 as `a -> 0`.
pub fn b_plus(a: f64, chi: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!("a must be positive, got {a}")));
    }
    if !(chi >= 0.0) || !chi.is_finite() {
        return Err(Error::Domain(format!("chi must be >= 0, got {chi}")));
    }
    Ok(0.5 * (1.0 + a) * ((1.0 + chi * chi * a).sqrt() - 1.0))
}

/// Lower branch `b_minus(a) = -(1+a)/2 (sqrt(1 + chi^2 a) + 1)`.
///
/// Always negative; the dissipation sign structure is lost there, so it is
/// reported for classification only and never used to configure a run.
pub fn b_minus(a: f64, chi: f64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!("a must be positive, got {a}")));
    }
    if !(chi >= 0.0) || !chi.is_finite() {
        return Err(Error::Domain(format!("chi must be >= 0, got {chi}")));
    }
    Ok(-0.5 * (1.0 + a) * ((1.0 + chi * chi * a).sqrt() + 1.0))
}

/// Cross-term discriminant `chi^2 (a+1)^2 / 4 - (b+a+1) b / a`.
///
/// Negative exactly in the admissible region, zero on the frontier
/// `b = b_plus(a)`, positive below it.
pub fn discriminant(p: &ModelParams) -> f64 {
    let (chi, a, b) = (p.chi, p.a, p.b);
    chi * chi * (a + 1.0) * (a + 1.0) / 4.0 - (b + a + 1.0) * b / a
}

/// Same discriminant assembled from the quadratic-form coefficients,
/// `(b/a + chi (a+1)/2)^2 - (a+1)/a (b^2/a + b + chi b)`.
///
/// Used as an independent algebraic route in tests.
pub fn discriminant_coeff_form(p: &ModelParams) -> f64 {
    let (chi, a, b) = (p.chi, p.a, p.b);
    let cross = b / a + chi * (a + 1.0) / 2.0;
    cross * cross - (a + 1.0) / a * (b * b / a + b + chi * b)
}

/// Symmetric 2x2 matrix of the dissipation quadratic form, acting blockwise
/// on the pair of gradient magnitudes.
pub fn q_matrix(p: &ModelParams) -> [[f64; 2]; 2] {
    let (chi, a, b) = (p.chi, p.a, p.b);
    let m11 = 4.0 * (a + 1.0) / a;
    let m12 = 2.0 * (b / a + chi * (a + 1.0) / 2.0);
    let m22 = b * b / a + b + chi * b;
    [[m11, m12], [m12, m22]]
}

/// Largest `C` such that `Q(U,V) >= C (|U|^2 + |V|^2)`: the smallest
/// eigenvalue of the quadratic-form matrix. Positive iff admissible,
/// zero on the frontier.
pub fn coercivity_constant(p: &ModelParams) -> f64 {
    let m = q_matrix(p);
    let half_tr = 0.5 * (m[0][0] + m[1][1]);
    let half_diff = 0.5 * (m[0][0] - m[1][1]);
    half_tr - (half_diff * half_diff + m[0][1] * m[0][1]).sqrt()
}

/// Dissipation quadratic form
/// `Q(U,V) = 4((a+1)/a |U|^2 + (b/a + chi (a+1)/2) U.V + 1/4 (b^2/a + b + chi b) |V|^2)`.
pub fn q_eval(p: &ModelParams, u_vec: &[f64], v_vec: &[f64]) -> Result<f64> {
    if u_vec.len() != v_vec.len() {
        return Err(Error::Shape(format!(
            "q_eval expects equal dimensions, got {} and {}",
            u_vec.len(),
            v_vec.len()
        )));
    }
    let (chi, a, b) = (p.chi, p.a, p.b);
    let uu: f64 = u_vec.iter().map(|x| x * x).sum();
    let vv: f64 = v_vec.iter().map(|x| x * x).sum();
    let uv: f64 = u_vec.iter().zip(v_vec).map(|(x, y)| x * y).sum();
    Ok(4.0 * ((a + 1.0) / a * uu + (b / a + chi * (a + 1.0) / 2.0) * uv)
        + (b * b / a + b + chi * b) * vv)
}

/// Global-solvability threshold on `chi` from the positive-power theory:
/// unbounded for `n = 2`, `sqrt(8)` for `n = 3`, `n/(n-2)` for `n >= 4`.
///
/// Reported only to locate a configured `chi` relative to the classical
/// smallness regime; the admissibility frontier itself has no such cap.
pub fn chi_threshold_lw(n: u32) -> Result<f64> {
    match n {
        0 | 1 => Err(Error::Domain(format!(
            "threshold defined for n >= 2, got {n}"
        ))),
        2 => Ok(f64::INFINITY),
        3 => Ok(8.0_f64.sqrt()),
        n => Ok(n as f64 / (n as f64 - 2.0)),
    }
}
