//! Gradients of the RoPE attention regression loss
//! `L(X) = 0.5 ‖D(X)^{-1} A(X) A3 Y - E‖_F^2` with respect to `X = X1 ⊗ X2`.
//!
//! Two routes are provided:
//!
//! * [`exact`]: the closed form `dL/dx = Ã^T vec(Γ)` assembled lag by lag in `O(n^2 d^2)`,
//!   with an entrywise oracle for cross-checking.
//! * [`lowrank`]: an almost-linear path that factors the softmax through a polynomial
//!   approximation of `exp` ([`poly`]) and contracts the low-rank `Γ` with FFT
//!   cross-correlations ([`spectral`]).

pub mod error;
pub mod exact;
pub mod lowrank;
pub mod poly;
pub mod rope;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};
