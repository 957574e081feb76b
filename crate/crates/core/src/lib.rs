//! Numerical laboratory for the diffuse optical tomography inverse problem
//! `∇·γ∇u + Du + k²u = 0`: phantoms and the Liouville transform, a
//! finite-difference Dirichlet solver with discrete Dirichlet-to-Neumann maps,
//! Bourgain-weighted spectral norms, complex geometrical optics (CGO)
//! solutions, and the CGO-pairing recovery of Fourier modes of `Q₂ - Q₁`.

pub mod banded;
pub mod boundary;
pub mod cgo;
pub mod error;
pub mod field;
pub mod fields;
pub mod forward;
pub mod grid;
pub mod io;
pub mod oracle;
pub mod recovery;
pub mod spectral;

pub use error::{Error, Result};
pub use field::{ComplexField, Field, RealField};
pub use grid::Grid;
