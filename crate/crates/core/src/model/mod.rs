//! Gated-attention MIL network.
//!
//! ```text
//! h_i   = ReLU(W x_i + b)                               extractor, per instance
//! s_i   = w_attnᵀ (tanh(V h_i) ⊙ sigm(U h_i))            gated attention score
//! a     = softmax(s)                                     over the bag's instances
//! z     = Σ a_i h_i
//! p     = softmax(W_c z + b_c),  loss = −ln p[y]
//! ```
//!
//! All weights live in one flat vector ([`Params`]) so FedAvg and Lookahead are
//! plain vector arithmetic.

mod checkpoint;
mod network;
mod params;
mod train;

pub use checkpoint::{decode_params, encode_params, load_params, save_params, CHECKPOINT_MAGIC};
pub use network::{accumulate_gradient, attention_pool, backward, extract_features, forward, forward_loss, Trace};
pub use params::{ModelConfig, ModelShape, Params, Segment};
pub use train::{full_batch_gradient, mean_loss, train_local, LocalOutcome, LookaheadConfig};
