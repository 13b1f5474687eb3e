//! Minimax decoding: truncation-normalization strategies that are optimal
//! against an adversary perturbing the model's next-token distribution
//! within a total-variation ball.

pub mod adversary;
pub mod error;
pub mod metrics;
pub mod multistep;
pub mod objective;
pub mod oracle;
pub mod prob;
pub mod sampler;
pub mod strategist;

pub use error::{GameError, Result};
pub use objective::{classify_assumption, AssumptionCase, CaseKind, Objective};
pub use prob::{from_logits, tv_distance, validate_dist, ProbVector, RawDist};
pub use sampler::{sample_token, truncate, truncate_raw, RngState, SamplerConfig, TruncationResult};
