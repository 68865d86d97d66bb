//! Coordinate tensor calculus on metric jets.

mod curvature;
mod frame;
mod ops;

pub(crate) use curvature::fma_nz;
pub use curvature::{
    christoffel, norm_sq, raise_first, ricci, riemann, scalar_curv, trace, Christoffel,
    CurvatureFrame,
};
pub use frame::{MetricJetFrame, SymJets};
pub use ops::CovDerivative;
