//! Translated Poisson approximation for occupancy statistics.
//!
//! `n` balls are thrown independently into boxes `1, 2, ...` with
//! probabilities `p_1 >= p_2 >= ...`. This crate computes, simulates and checks
//! approximations of the number of occupied boxes `K_n` and of the number of
//! boxes holding exactly `r` balls `K_{n,r}` by translated Poisson laws.
//!
//! Modules:
//! - [`weights`]: weight sequences and their cutoffs (`j_0`, `P_0`, `j_n`, `n_0`).
//! - [`tpoisson`]: the translated Poisson family.
//! - [`metrics`]: mass functions, total variation and local distances.
//! - [`moments`]: means and variances of the statistics.
//! - [`exactdist`]: exact laws by dynamic programming, enumeration and Poissonization.
//! - [`occusim`]: Monte Carlo samplers and the two-stage conditional decomposition.
//! - [`lemmas`]: brute-force checks of the auxiliary moment and sum inequalities.
//! - [`experiments`]: rate studies and the Le Cam report.

pub mod error;
pub mod exactdist;
pub mod experiments;
pub mod lemmas;
pub mod metrics;
pub mod moments;
pub mod occusim;
pub mod special;
pub mod tpoisson;
pub mod weights;

pub use error::{Error, Result};
pub use metrics::{Distance, Pmf};
pub use moments::{MomentMode, MomentSummary, StatKind, Statistic};
pub use tpoisson::TranslatedPoisson;
pub use weights::{ModelKind, ModelSpec, TailProfile, WeightModel};
