//! Toolkit for averaging operators `T_Q f(x,x') = integral over [-1,1]^n of
//! f(x+t, x'+Q(x,t)) dt` attached to bilinear maps `Q`: feasibility of
//! nonvanishing rotational curvature by dimension and codimension, explicit
//! matrix-family constructions with exact verification, numerical curvature
//! verdicts, sublevel-set exponent estimation, and desk-scale checks of the
//! restricted L^p -> L^q behavior.

pub mod bench;
pub mod bilinear;
pub mod curvature;
pub mod error;
pub mod hurwitz;
pub mod io;
pub mod matrix;
pub mod rng;
pub mod scalar;
pub mod sublevel;

pub use bilinear::{BilinearMap, PerturbationVector};
pub use error::{Error, Result};
