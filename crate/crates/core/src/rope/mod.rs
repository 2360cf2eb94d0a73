//! Problem inputs, RoPE weight families and the exact forward pass.

mod forward;
mod instance;
mod io;
mod weights;

#[cfg(test)]
pub(crate) mod testutil;

pub use forward::{
    build_tilde_a_block, forward, forward_big_x, forward_factors, forward_from_logits, logit,
    logits_from_big_x, logits_from_qk, loss_double_sum, normalize_rows, self_consistent_target,
    ForwardState, MATERIALIZE_LIMIT,
};
pub use instance::{Instance, InstanceParts, MAX_LOGIT_BOUND};
pub use io::InstanceFile;
pub use weights::{
    make_rotary_weights, rotary_frequencies, RopeWeights, SparseEntry, WeightMode, SUPPORT_FACTOR,
};
