//! Experiment configuration: one JSON document, every section optional.

use std::path::Path;

use anyhow::{anyhow, Context, Result};
use qsim_core::analysis::AnalysisConfig;
use qsim_core::montecarlo::VariationConfig;
use qsim_core::sweep::SweepPlan;
use qsim_core::topology::{ArrayConfig, DriveSpec, QubitUnitParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub qubit: QubitUnitParams,
    pub drive: DriveSpec,
    pub array: ArrayConfig,
    pub sweep: SweepPlan,
    pub variation: VariationConfig,
    pub analysis: AnalysisConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            anyhow!("config key `{path}`: {}", e.into_inner())
        })
    }

    pub fn load(path: Option<&Path>) -> Result<(Self, Vec<u8>)> {
        match path {
            None => Ok((Self::default(), Vec::new())),
            Some(p) => {
                let bytes = std::fs::read(p).with_context(|| format!("reading config {}", p.display()))?;
                let text = std::str::from_utf8(&bytes).with_context(|| format!("config {} is not UTF-8", p.display()))?;
                Ok((Self::from_json(text)?, bytes))
            }
        }
    }

    /// Semantic checks, reported with the section they belong to.
    pub fn validate(&self) -> Result<()> {
        self.qubit.validate().map_err(|e| anyhow!("qubit: {e}"))?;
        self.drive.validate().map_err(|e| anyhow!("drive: {e}"))?;
        self.array.validate().map_err(|e| anyhow!("array: {e}"))?;
        self.sweep.validate().map_err(|e| anyhow!("sweep: {e}"))?;
        self.variation.validate().map_err(|e| anyhow!("variation: {e}"))?;
        if !(self.analysis.tau_op_s > 0.0 && self.analysis.tau_op_s.is_finite()) {
            return Err(anyhow!("analysis.tau_op_s: must be positive, got {}", self.analysis.tau_op_s));
        }
        if self.analysis.n_qubits_for_fidelity == Some(0) {
            return Err(anyhow!("analysis.n_qubits_for_fidelity: must be positive"));
        }
        Ok(())
    }
}
