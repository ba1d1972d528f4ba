//! Synthesis of compatible control Lyapunov functions (CLF) and control
//! barrier functions (CBF) for polynomial control-affine systems.
//!
//! The pipeline: describe a system `ẋ = f(x) + G(x)u` with allowable set
//! `{wᵢ ≤ 0}` and operating region `{r ≤ 0}` ([`certs::ProblemSpec`]), compile
//! sum-of-squares feasibility conditions into semidefinite programs
//! ([`soscomp`], [`sdp`]), run the alternating bilinear synthesis loop
//! ([`alternate`]), and validate the resulting certificates and the shared
//! rational controller `u = p/s₁` numerically ([`verify`]).

pub mod alternate;
pub mod certfile;
pub mod certs;
pub mod pipeline;
pub mod poly;
pub mod probfile;
pub mod sampling;
pub mod sdp;
pub mod soscomp;
pub mod verify;

/// Tool version recorded into certificate files.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
