//! Gaussian densities and potentials in canonical (information) form.
//!
//! A [`CanonicalFactor`] is an unnormalized potential `exp(-½xᵀΛx + ζᵀx)` over an
//! ordered scope of [`VariableKey`] blocks. Normalization constants are never
//! tracked. Sums align scopes by zero padding, marginals use the Schur complement
//! and conditionals are the joint minus the marginal of the conditioning set.

mod density;
mod factor;
mod key;
mod wire;

pub use density::{CanonicalDensity, MomentGaussian};
pub use factor::{factor_sum, factor_sum_over, union_scope, CanonicalFactor};
pub use key::{scope_dim, scope_offsets, VariableKey};

pub(crate) use wire::{read_u16, read_u32, read_u8};
