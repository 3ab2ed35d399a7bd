//! Numerical certification of dominated splittings, cone fields and
//! partial hyperbolicity for torus endomorphisms with critical points.
//!
//! All norms and angles use the flat metric of R².

pub mod arcs;
pub mod cone;
pub mod homology;
pub mod linalg;
pub mod orbit;
pub mod perturb;
pub mod pipeline;
pub mod splitting;
pub mod surface_map;

pub use linalg::{Mat2, ScaledMatrix, TangentVector};
pub use surface_map::{canonical, LiftPoint, LinearPart, SurfaceEndomorphism, TorusMap, TorusPoint};
