//! Numerical laboratory for the coercivity and Gamma-convergence of the
//! p-energy of sphere-valued maps below the critical exponent.
//!
//! The geometric layer (points, domains, currents, flat norm, greedy
//! decomposition, cubical grids) is generic over the scalar type; the lattice
//! fields, energies, minimizer and recovery sweeps work in `f64`.

pub mod assignment;
pub mod constants;
pub mod currents;
pub mod decomposition;
pub mod error;
pub mod flat;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod jacobian;
pub mod lattice;
pub mod minimizer;
pub mod recovery;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Point2 = geometry::Point<f64, 2>;
pub type Point3 = geometry::Point<f64, 3>;
pub type BoxDomain2 = geometry::BoxDomain<f64, 2>;
pub type BoxDomain3 = geometry::BoxDomain<f64, 3>;
pub type ZeroCurrent2 = currents::ZeroCurrent<f64, 2>;
pub type ZeroCurrent3 = currents::ZeroCurrent<f64, 3>;
pub type OneCurrent2 = currents::OneCurrent<f64, 2>;
pub type OneCurrent3 = currents::OneCurrent<f64, 3>;
pub type DecompParams64 = decomposition::DecompParams<f64>;
