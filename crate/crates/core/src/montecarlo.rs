//! Seeded Gaussian parameter variation and ensemble sweeps.
//!
//! Every random draw comes from its own stream keyed by
//! `(seed, sample_id, parameter path)`, so a parameter table depends only
//! on those three values, never on scheduling or on which other
//! parameters are perturbed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::mna::Solver;
use crate::sweep::{run_sweep_with, Spectrum, SweepError, SweepPlan};
use crate::topology::{
    build_from_table, parameter_table, ArrayConfig, DriveSpec, ParameterTable, QubitUnitParams, TopologyError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McError {
    #[error("invalid variation config: {0}")]
    Config(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error("parameter `{0}` stayed nonpositive after {1} redraws")]
    Resample(String, u32),
}

/// Perturbable physical parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    FQ,
    FR,
    T1Q,
    CQ,
    CG,
    CC,
    CR,
    CQq,
}

impl Target {
    pub const ALL: [Target; 8] =
        [Target::FQ, Target::FR, Target::T1Q, Target::CQ, Target::CG, Target::CC, Target::CR, Target::CQq];

    pub fn name(self) -> &'static str {
        match self {
            Target::FQ => "f_q",
            Target::FR => "f_r",
            Target::T1Q => "t1_q",
            Target::CQ => "c_q",
            Target::CG => "c_g",
            Target::CC => "c_c",
            Target::CR => "c_r",
            Target::CQq => "c_qq",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VariationConfig {
    /// Relative standard deviation.
    pub delta: f64,
    pub targets: Vec<Target>,
    pub n_runs: usize,
    pub seed: u64,
    /// Draws are clamped to `|z| ≤ truncation`.
    pub truncation: f64,
}

impl Default for VariationConfig {
    fn default() -> Self {
        Self { delta: 0.01, targets: Target::ALL.to_vec(), n_runs: 10, seed: 0, truncation: 4.0 }
    }
}

impl VariationConfig {
    pub fn validate(&self) -> Result<(), McError> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(McError::Config(format!("delta must be non-negative, got {}", self.delta)));
        }
        if self.n_runs == 0 {
            return Err(McError::Config("n_runs must be at least 1".into()));
        }
        if !(self.truncation > 0.0) {
            return Err(McError::Config(format!("truncation must be positive, got {}", self.truncation)));
        }
        Ok(())
    }
}

const MAX_REDRAWS: u32 = 1000;

/// Independent standard-normal stream for one parameter of one sample.
pub fn stream(seed: u64, sample_id: u64, path: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(sample_id.to_le_bytes());
    h.update(path.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbed {
    pub table: ParameterTable,
    /// Draws rejected because the perturbed value was not positive.
    pub resampled: u32,
}

fn draw(x0: f64, cfg: &VariationConfig, sample_id: u64, path: &str, resampled: &mut u32) -> Result<f64, McError> {
    if cfg.delta == 0.0 {
        return Ok(x0);
    }
    let mut rng = stream(cfg.seed, sample_id, path);
    for _ in 0..MAX_REDRAWS {
        let z: f64 = StandardNormal.sample(&mut rng);
        let z = z.clamp(-cfg.truncation, cfg.truncation);
        let x = x0 * (1.0 + z * cfg.delta);
        if x > 0.0 {
            return Ok(x);
        }
        *resampled += 1;
    }
    Err(McError::Resample(path.to_string(), MAX_REDRAWS))
}

/// Applies `X0·(1 + z·δ)` to every targeted parameter of `table`.
/// Element values (L, R) follow from the perturbed table when it is built.
pub fn perturb(table: &ParameterTable, cfg: &VariationConfig, sample_id: u64) -> Result<Perturbed, McError> {
    cfg.validate()?;
    let mut out = table.clone();
    let mut resampled = 0;
    let on = |t: Target| cfg.targets.contains(&t);
    for (i, u) in out.units.iter_mut().enumerate() {
        let fields: [(Target, &mut f64); 7] = [
            (Target::FQ, &mut u.f_q),
            (Target::FR, &mut u.f_r),
            (Target::T1Q, &mut u.t1_q),
            (Target::CQ, &mut u.c_q),
            (Target::CG, &mut u.c_g),
            (Target::CC, &mut u.c_c),
            (Target::CR, &mut u.c_r),
        ];
        for (t, x) in fields {
            if on(t) {
                *x = draw(*x, cfg, sample_id, &format!("unit/{i}/{}", t.name()), &mut resampled)?;
            }
        }
    }
    if on(Target::CQq) {
        for (k, e) in out.edges.iter_mut().enumerate() {
            e.c_qq = draw(e.c_qq, cfg, sample_id, &format!("edge/{k}/c_qq"), &mut resampled)?;
        }
    }
    Ok(Perturbed { table: out, resampled })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub sample_id: u64,
    pub table: ParameterTable,
    pub resampled: u32,
    pub spectrum: Option<Spectrum>,
    /// Set when this run's build or sweep failed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub runs: Vec<RunRecord>,
    pub config: VariationConfig,
    pub base_digest: String,
}

/// Perturb, rebuild and sweep `v.n_runs` samples. Per-run failures are
/// recorded on the run; setup failures are returned.
pub fn run_ensemble(
    cfg: &ArrayConfig,
    p: &QubitUnitParams,
    d: &DriveSpec,
    v: &VariationConfig,
    plan: &SweepPlan,
) -> Result<Ensemble, McError> {
    v.validate()?;
    plan.validate()?;
    let nominal = parameter_table(cfg, p)?;
    let base = build_from_table(cfg, &nominal, d)?;
    let solver = Solver::new(&base).map_err(SweepError::from)?;

    let runs = (0..v.n_runs as u64)
        .into_par_iter()
        .map(|sample_id| -> Result<RunRecord, McError> {
            let Perturbed { table, resampled } = perturb(&nominal, v, sample_id)?;
            let result = build_from_table(cfg, &table, d)
                .map_err(|e| e.to_string())
                .and_then(|n| run_sweep_with(&solver, &n, plan).map_err(|e| e.to_string()));
            let (spectrum, error) = match result {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(e)),
            };
            Ok(RunRecord { sample_id, table, resampled, spectrum, error })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Ensemble { runs, config: v.clone(), base_digest: base.digest() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Arrangement;

    fn table() -> ParameterTable {
        parameter_table(&ArrayConfig::default(), &QubitUnitParams::default()).unwrap()
    }

    #[test]
    fn zero_delta_is_identity() {
        let t = table();
        for seed in [0, 1, u64::MAX] {
            let v = VariationConfig { delta: 0.0, seed, ..Default::default() };
            assert_eq!(perturb(&t, &v, 7).unwrap().table, t);
        }
    }

    #[test]
    fn deterministic_and_independent_per_path() {
        let t = table();
        let v = VariationConfig { delta: 0.03, seed: 42, ..Default::default() };
        let a = perturb(&t, &v, 3).unwrap();
        assert_eq!(a, perturb(&t, &v, 3).unwrap());
        assert_ne!(a.table, perturb(&t, &v, 4).unwrap().table);
        // Dropping a target leaves the other parameters' draws unchanged.
        let only_cq = VariationConfig { targets: vec![Target::CQ], ..v.clone() };
        let b = perturb(&t, &only_cq, 3).unwrap();
        for (x, y) in a.table.units.iter().zip(&b.table.units) {
            assert_eq!(x.c_q, y.c_q);
        }
        assert_eq!(b.table.units[0].f_q, t.units[0].f_q);
    }

    #[test]
    fn sample_statistics() {
        let c0 = 30e-15;
        let delta = 0.01;
        let v = VariationConfig { delta, targets: vec![Target::CQ], seed: 9, ..Default::default() };
        let unit = ParameterTable { units: vec![QubitUnitParams::default()], edges: vec![] };
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|i| perturb(&unit, &v, i).unwrap().table.units[0].c_q).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sigma = delta * c0;
        assert!((mean - c0).abs() < 3.0 * sigma / (n as f64).sqrt());
        assert!((var.sqrt() / sigma - 1.0).abs() < 0.01);
    }

    #[test]
    fn truncation_and_resampling() {
        let unit = ParameterTable { units: vec![QubitUnitParams::default()], edges: vec![] };
        let v = VariationConfig { delta: 0.5, truncation: 1.0, targets: vec![Target::CQ], ..Default::default() };
        for i in 0..2000 {
            let c = perturb(&unit, &v, i).unwrap().table.units[0].c_q;
            assert!(c >= 15e-15 * (1.0 - 1e-12) && c <= 45e-15 * (1.0 + 1e-12));
        }
        // δ = 2 at 4σ can go negative; those draws are redrawn and counted.
        let wide = VariationConfig { delta: 2.0, targets: vec![Target::CQ], ..Default::default() };
        let total: u32 = (0..500).map(|i| perturb(&unit, &wide, i).unwrap().resampled).sum();
        assert!(total > 0);
        for i in 0..500 {
            assert!(perturb(&unit, &wide, i).unwrap().table.units[0].c_q > 0.0);
        }
    }

    #[test]
    fn config_validation() {
        assert!(VariationConfig { n_runs: 0, ..Default::default() }.validate().is_err());
        assert!(VariationConfig { delta: -0.1, ..Default::default() }.validate().is_err());
        let json = serde_json::to_string(&VariationConfig::default()).unwrap();
        assert!(json.contains("\"c_qq\""));
        let back: VariationConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, VariationConfig::default());
    }

    #[test]
    fn small_ensemble() {
        let cfg = ArrayConfig { arrangement: Arrangement::Linear, n_qubits: 1, ..Default::default() };
        let plan = SweepPlan::linear(7.8e9, 8.1e9, 61);
        let v = VariationConfig { delta: 0.0, n_runs: 3, ..Default::default() };
        let e = run_ensemble(&cfg, &QubitUnitParams::default(), &DriveSpec::default(), &v, &plan).unwrap();
        assert_eq!(e.runs.len(), 3);
        assert!(e.runs.iter().all(|r| r.error.is_none()));
        assert_eq!(e.runs[0].spectrum, e.runs[2].spectrum);
        assert_eq!(e.runs.iter().map(|r| r.sample_id).collect::<Vec<_>>(), vec![0, 1, 2]);
    }
}
