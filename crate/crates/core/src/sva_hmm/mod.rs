//! Optimizers for the two HMM objectives: exact-delta coordinate descent
//! for the combinatorial form and alternating Viterbi/closed-form updates
//! for the direct form.

mod combinatorial;
mod direct;
mod viterbi;

pub use combinatorial::{fit_hmm_combinatorial, fit_hmm_combinatorial_with_init};
pub use direct::{
    fit_hmm_direct, fit_hmm_direct_sweep, transition_counts, update_shared_weights,
    update_transition_rows, DirectSweepOutcome,
};
pub use viterbi::{path_cost, viterbi_path};
