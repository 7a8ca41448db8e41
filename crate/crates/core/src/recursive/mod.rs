//! Multi-answer extraction by recursive span linking.

mod chain;
mod pretrain;

pub use chain::{chain_loss, decode_chain, decode_chain_with, DecodeLimits, LinkChain, Termination, DEFAULT_MAX_CHAIN_LEN};
pub use pretrain::{pretrain_csv, pretrain_spans, PretrainLog};
