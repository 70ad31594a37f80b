//! Covariance-control synthesis and verification for stochastic discrete-time
//! linear systems
//!
//! ```text
//! x_{k+1} = (A(θ) + Ā(ξ_k)) x_k + B(θ) u_k + w_k
//! ```
//!
//! with i.i.d. zero-mean parametric noise `Ā(ξ_k)`, additive noise `w_k`, and
//! polytopic uncertainty `θ` on the mean matrices.
//!
//! Modules, bottom-up:
//!
//! * [`matlib`]: dense matrix kernel (Kronecker products, vectorization,
//!   eigensolvers, linear solves), generic over [`Scalar`].
//! * [`moments`]: `C_p^A = E[Ā⊗Ā]` and the factorized second moment of
//!   `[vec Ã; vec B̃]`.
//! * [`covdyn`]: the lifted covariance recursion and its steady state.
//! * [`lmi`]: LMI problems over named matrix variables, and the S-variable,
//!   polytopic and baseline design conditions.
//! * [`sdp`]: primal-dual interior-point feasibility solver, SDPA I/O.
//! * [`synth`]: gain extraction, variance sweeps, timing, gain verification.
//! * [`mcsim`]: Monte Carlo validation of the covariance recursion.
//! * [`bench`]: scripted reproduction scenarios with tolerance bands.

pub mod bench;
pub mod covdyn;
pub mod lmi;
pub mod matlib;
pub mod mcsim;
pub mod moments;
pub mod report;
pub mod rng;
pub mod sdp;
mod scalar;
pub mod synth;
pub mod system;
pub mod system_file;

pub use scalar::Scalar;

/// Double-precision matrix, the working type of the solver stack.
pub type Mat = matlib::Matrix<f64>;
/// Double-precision symmetric matrix.
pub type SymMat = matlib::SymMatrix<f64>;
/// Single-precision matrix.
pub type Mat32 = matlib::Matrix<f32>;
/// Single-precision symmetric matrix.
pub type SymMat32 = matlib::SymMatrix<f32>;

pub type CovarianceDynamics = covdyn::CovarianceDynamics<f64>;
