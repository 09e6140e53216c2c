//! Concrete inverse problems: the four-parameter toy and a finite-difference
//! advection-diffusion surrogate for contaminant sensor placement.

mod advection;
mod toy;

pub use advection::{
    assemble_ad_problem, AdConfig, AdModel, GaussianBump, PriorConfig, Rect, VelocityField,
};
pub use toy::{is_toy_problem, toy_problem};
