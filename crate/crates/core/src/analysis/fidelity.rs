use serde::{Deserialize, Serialize};

use super::{positive, AnalysisError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityInput {
    pub n_qubits: u64,
    /// Operating time. Without `gamma2` it absorbs the `Γ2 ≈ 2Γ1`
    /// assumption; with `gamma2` it is the bare operating time.
    pub tau_op: f64,
    pub gamma1: f64,
    pub gamma2: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityResult {
    pub f: f64,
    pub infidelity: f64,
    pub prefactor: f64,
    /// The linear formula left [0, 1] and `f` was clamped.
    pub saturated: bool,
}

/// `N·2^N / (2(2^N + 1))`, evaluated as `N / (2(1 + 2^−N))` so it never
/// overflows.
pub fn prefactor(n: u64) -> f64 {
    let n = n as f64;
    n / (2.0 * (1.0 + (-n).exp2()))
}

pub fn fidelity(input: &FidelityInput) -> Result<FidelityResult, AnalysisError> {
    if input.n_qubits == 0 {
        return Err(AnalysisError::NotPositive { field: "n_qubits", value: 0.0 });
    }
    positive("tau_op", input.tau_op)?;
    positive("gamma1", input.gamma1)?;
    let rate = match input.gamma2 {
        Some(g2) => {
            positive("gamma2", g2)?;
            input.gamma1 + g2
        }
        None => input.gamma1,
    };
    let prefactor = prefactor(input.n_qubits);
    let infidelity = prefactor * input.tau_op * rate;
    let raw = 1.0 - infidelity;
    let f = raw.clamp(0.0, 1.0);
    Ok(FidelityResult { f, infidelity, prefactor, saturated: f != raw })
}
