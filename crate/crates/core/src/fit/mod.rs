//! Inverse problem: recovering model parameters from synthesized or
//! measured data.

pub mod curvature;
pub mod honeycomb;
pub mod linecut;
pub mod lines;
pub mod lm;
pub mod shift;
pub mod thermal;
