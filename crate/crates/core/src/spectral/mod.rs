//! Fields on the periodic box and their Fourier-side calculus.

pub mod antidiv;
pub mod calculus;
pub mod fft;
pub mod field;
pub mod grid;
pub mod holder;
pub mod io;
pub mod lp;

pub use antidiv::{antidiv_scalar, antidiv_tensor};
pub use calculus::{advect, advect_pointwise, curl, dealiased_product, div, grad, gradient_matrix, laplacian};
pub use fft::{from_spectrum, to_spectrum, Spectrum};
pub use field::{sym_index, Rank, TorusField};
pub use grid::GridSpec;
pub use holder::{fourier_majorant_norm, holder_norm, holder_seminorm};
pub use io::{read_snapshot, write_snapshot};
pub use lp::{cutoff_exponent, lp_project, LpBand, LpKind};
