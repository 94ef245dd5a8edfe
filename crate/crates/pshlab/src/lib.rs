//! Numerical toolkit for plurisubharmonic approximation and bounded
//! plurisubharmonic exhaustion functions on graph domains of low boundary
//! regularity (Lipschitz, Hoelder, Log-Lipschitz), together with a
//! verification layer that checks plurisubharmonicity and the quantitative
//! distance, approximation and exhaustion bounds at desk scale.

pub mod catalog;
pub mod cover;
pub mod domain;
pub mod exhaustion;
pub mod geometry;
pub mod harness;
pub mod mergelyan;
pub mod optim;
pub mod psh;
pub mod special;

pub use special::{
    cusp_profile, lambert_w, lambert_w0, lambert_wm1, GainForm, GainFunction, LambertBranch,
    SpecialError,
};
