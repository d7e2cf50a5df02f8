//! Local bifurcation analysis for delay-differential equations with discrete
//! state-dependent delays.

pub mod continuation;
pub mod derivs;
pub mod error;
pub mod histfun;
pub mod ivp;
pub mod model;
pub mod normalform;
pub mod spectral;

pub use error::{Error, Result};
pub use histfun::ExpPoly;
pub use model::{parse_model, ConstantHistory, History, Model};
