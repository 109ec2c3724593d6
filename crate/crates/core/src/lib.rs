//! Frequency-domain simulation of superconducting-qubit readout circuits.
//!
//! Qubits and their readout resonators are modelled as parallel LCR tanks.
//! The crate builds array netlists from physical device parameters, solves
//! the complex nodal admittance system over a frequency grid, applies
//! seeded Gaussian parameter variations, and turns transmission-peak
//! linewidths into relaxation rates and circuit infidelity.
//!
//! The pipeline, end to end:
//!
//! ```
//! use qsim_core::prelude::*;
//!
//! let unit = QubitUnitParams::default();
//! let drive = DriveSpec::default();
//! let netlist = topology::build_unit(&unit, &drive).unwrap();
//! assert!(netlist::validate(&netlist).is_empty());
//!
//! let plan = SweepPlan::linear(7.9e9, 8.1e9, 401);
//! let spectrum = sweep::run_sweep(&netlist, &plan).unwrap();
//! let peaks = analysis::find_peaks(&spectrum, "out1", (7.9e9, 8.1e9), &PeakOptions::default()).unwrap();
//! assert_eq!(peaks.len(), 1);
//! ```

pub mod analysis;
pub mod mna;
pub mod montecarlo;
pub mod netlist;
pub mod sweep;
pub mod topology;
pub mod units;

pub use num_complex::Complex64;

/// Reduced Planck constant in J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

pub mod prelude {
    pub use crate::analysis::{
        self, FidelityInput, FidelityResult, FwhmMode, Peak, PeakOptions, RbDensityMatrix,
    };
    pub use crate::mna::{self, AcSystem, Solution, SolveOptions, Solver};
    pub use crate::montecarlo::{self, Ensemble, VariationConfig};
    pub use crate::netlist::{self, Element, ElementKind, Netlist, NodeId};
    pub use crate::sweep::{self, Spacing, Spectrum, SweepPlan};
    pub use crate::topology::{
        self, Arrangement, ArrayConfig, CouplingSite, DriveSpec, QubitUnitParams,
    };
    pub use crate::Complex64;
}
