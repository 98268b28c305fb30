//! Shared fixtures for the criterion benches in `benches/`.

use scorecast_core::attentive::{tokenize, TokenizedSequence, Vocab};
use scorecast_core::corpus::{build_sequences, generate_synthetic, SynthConfig, SyntheticCorpus};

/// Planted corpus at roughly the acceptance scale.
pub fn corpus(n_users: usize) -> SyntheticCorpus {
    generate_synthetic(&SynthConfig {
        n_users,
        growth_mean: 1.5,
        growth_sd: 0.5,
        seed: 11,
        ..SynthConfig::default()
    })
    .expect("valid synthetic config")
}

/// Token sequences of every user, truncated to `max_len`.
pub fn token_sequences(c: &SyntheticCorpus, max_len: usize) -> (Vocab, Vec<TokenizedSequence>) {
    let vocab = Vocab::build(&c.interactions);
    let seqs =
        build_sequences(&c.interactions, max_len).iter().map(|s| tokenize(s, &vocab, max_len).seq).collect();
    (vocab, seqs)
}
