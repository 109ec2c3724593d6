use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{positive, AnalysisError};

/// Single-qubit density matrix `[[a, b], [b*, c]]` at time `t_f` together
/// with the initial amplitudes it evolved from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbDensityMatrix {
    pub a: f64,
    pub c: f64,
    pub b: Complex64,
    pub t_f: f64,
    pub alpha0: Complex64,
    pub beta0: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbRates {
    pub gamma1: f64,
    /// `+∞` when `b = 0`.
    pub gamma2: f64,
    /// Wrapped to `(−π/t_f, π/t_f]`.
    pub delta_omega: f64,
    /// Non-fatal observations: trace off by more than 1e-9, `|b|² > a·c`.
    pub flags: Vec<String>,
}

/// Bloch–Redfield evolution of `α0|0⟩ + β0|1⟩` to time `t`.
pub fn synthesize_rb_state(
    alpha0: Complex64,
    beta0: Complex64,
    gamma1: f64,
    gamma2: f64,
    delta_omega: f64,
    t: f64,
) -> Result<RbDensityMatrix, AnalysisError> {
    let norm = alpha0.norm_sqr() + beta0.norm_sqr();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(AnalysisError::Unphysical(format!("|alpha0|^2 + |beta0|^2 = {norm}, expected 1")));
    }
    let decay1 = (-gamma1 * t).exp();
    Ok(RbDensityMatrix {
        a: 1.0 + (alpha0.norm_sqr() - 1.0) * decay1,
        c: beta0.norm_sqr() * decay1,
        b: alpha0 * beta0.conj() * Complex64::from_polar((-gamma2 * t).exp(), delta_omega * t),
        t_f: t,
        alpha0,
        beta0,
    })
}

/// Inverts the Bloch–Redfield form for `(Γ1, Γ2, δω)`.
pub fn rb_extract(rho: &RbDensityMatrix) -> Result<RbRates, AnalysisError> {
    positive("t_f", rho.t_f)?;
    positive("c", rho.c)?;
    let pop = rho.beta0.norm_sqr();
    let coherence = rho.alpha0 * rho.beta0.conj();
    if pop == 0.0 || coherence.norm() == 0.0 {
        return Err(AnalysisError::Unphysical("alpha0 and beta0 must both be nonzero".into()));
    }
    if rho.c > pop * (1.0 + 1e-12) {
        return Err(AnalysisError::Unphysical(format!(
            "c = {} exceeds |beta0|^2 = {pop}: negative gamma1",
            rho.c
        )));
    }
    let t = rho.t_f;
    let gamma1 = -(rho.c / pop).ln() / t;
    let ratio = rho.b / coherence;
    let gamma2 = if ratio.norm() == 0.0 { f64::INFINITY } else { -ratio.norm().ln() / t };
    let mut phase = ratio.arg();
    if phase <= -PI {
        phase += 2.0 * PI;
    }
    let mut flags = Vec::new();
    if (rho.a + rho.c - 1.0).abs() > 1e-9 {
        flags.push(format!("trace a + c = {} differs from 1", rho.a + rho.c));
    }
    if rho.b.norm_sqr() > rho.a * rho.c * (1.0 + 1e-12) {
        flags.push("|b|^2 > a*c: matrix is not positive semidefinite".into());
    }
    Ok(RbRates { gamma1: gamma1.max(0.0), gamma2, delta_omega: phase / t, flags })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn half() -> Complex64 {
        Complex64::new(FRAC_1_SQRT_2, 0.0)
    }

    #[test]
    fn no_decay() {
        let rho = RbDensityMatrix { a: 0.5, c: 0.5, b: Complex64::new(0.5, 0.0), t_f: 1e-6, alpha0: half(), beta0: half() };
        let r = rb_extract(&rho).unwrap();
        assert!(r.gamma1.abs() < 1e-9 && r.gamma2.abs() < 1e-9 && r.delta_omega == 0.0);
        assert!(r.flags.is_empty());
    }

    #[test]
    fn diagonal_inversion() {
        let c = 0.5 * (-1.0f64).exp();
        let rho = RbDensityMatrix { a: 1.0 - c, c, b: Complex64::new(0.1, 0.0), t_f: 1e-6, alpha0: half(), beta0: half() };
        let r = rb_extract(&rho).unwrap();
        assert!((r.gamma1 - 1e6).abs() < 1e-6);
    }

    #[test]
    fn round_trip() {
        let rho = synthesize_rb_state(half(), half(), 1e6, 2e6, 2.0 * PI * 1e5, 1e-6).unwrap();
        assert!((rho.a + rho.c - 1.0).abs() < 1e-15);
        let r = rb_extract(&rho).unwrap();
        assert!((r.gamma1 / 1e6 - 1.0).abs() < 1e-12);
        assert!((r.gamma2 / 2e6 - 1.0).abs() < 1e-12);
        assert!((r.delta_omega / (2.0 * PI * 1e5) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn limits_and_errors() {
        let start = synthesize_rb_state(half(), half(), 1e6, 1e6, 0.0, 0.0).unwrap();
        assert!((start.a - 0.5).abs() < 1e-15 && (start.c - 0.5).abs() < 1e-15);
        assert!((start.b.re - 0.5).abs() < 1e-15);
        let late = synthesize_rb_state(half(), half(), 1e6, 1e6, 0.0, 1.0).unwrap();
        assert_eq!((late.a, late.c, late.b.norm()), (1.0, 0.0, 0.0));
        let bad = RbDensityMatrix { a: 0.2, c: 0.8, b: Complex64::new(0.1, 0.0), t_f: 1e-6, alpha0: half(), beta0: half() };
        assert!(matches!(rb_extract(&bad), Err(AnalysisError::Unphysical(_))));
        let zero_b = RbDensityMatrix { b: Complex64::new(0.0, 0.0), c: 0.4, a: 0.6, ..bad };
        assert_eq!(rb_extract(&zero_b).unwrap().gamma2, f64::INFINITY);
        let flagged = RbDensityMatrix { a: 0.7, c: 0.4, b: Complex64::new(0.6, 0.0), ..bad };
        assert_eq!(rb_extract(&flagged).unwrap().flags.len(), 2);
        assert!(synthesize_rb_state(half(), Complex64::new(1.0, 0.0), 1.0, 1.0, 0.0, 1.0).is_err());
    }
}
