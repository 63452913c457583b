//! Numerical toolkit for ballistic orbits of the near-integrable ABC flow.
//!
//! ```text
//! x' = A sin z + C cos y
//! y' = B sin x + A cos z
//! z' = C sin y + B cos x
//! ```
//!
//! The perturbation amplitude `A` is written `epsilon` throughout. Modules:
//!
//! * [`flow`]: vector field, stream function, cell lattice, time-reversal symmetries
//! * [`integrate`]: adaptive and fixed-step integration with dense output and events
//! * [`hamiltform`]: `(x, p)` form with `z` as time and the spectral spiral-orbit solver
//! * [`edge`]: shooting for periodic edge orbits and their lattice translations
//! * [`perturb`]: heteroclinic orbits and first-order corrections along a cell edge
//! * [`scan`]: KAM masks, growth classification, growth fractions, sections, speed functional

pub mod edge;
mod error;
pub mod flow;
pub mod hamiltform;
pub mod integrate;
pub mod perturb;
mod quad;
pub mod scan;

pub use error::{Error, Result};
pub use flow::{AbcParams, CellIndex, CellLocation, State, SymmetryId, TimePoint, Trajectory};
pub use integrate::{Direction, EventFunctional, EventHit, EventSpec, IntegratorConfig, Method};
