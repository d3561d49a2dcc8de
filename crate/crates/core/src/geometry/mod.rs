//! Direction families, decomposition lemmas, Mikado pipes and their shifts.

pub mod decomp;
pub mod families;
pub mod lattice;
pub mod pipes;
pub mod shifts;

pub use decomp::{gamma_coeffs, lambda_coeffs, measure_n0, FluxDecomposition, Mat3, StressDecomposition};
pub use families::{build_families, class_of, DirectionFamilies, FluxFrame, IVec3, StressFamily};
pub use lattice::{line_distance, TransverseLattice};
pub use pipes::{build_pipe, Pipe, PipeFourier, PipeKind, PipeMode};
pub use shifts::{choose_shifts, ShiftTable, SLOTS};
