//! Keyed random substreams.
//!
//! Every random draw made by a kernel step is taken from a ChaCha8 substream
//! addressed by `(seed, chain, iteration, lane, index)`. The seed selects the
//! ChaCha key, the chain selects the ChaCha stream, and the remaining triple
//! selects a disjoint window of the keystream through the word position.
//! Results are therefore independent of how candidate evaluations are
//! scheduled across worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const WORDS_BITS: u32 = 20;
const INDEX_BITS: u32 = 14;
const LANE_BITS: u32 = 2;
const ITERATION_BITS: u32 = 32;

/// Largest candidate/reference index addressable within one step.
pub const MAX_INDEX: usize = (1 << INDEX_BITS) - 1;

/// Largest iteration addressable for one chain.
pub const MAX_ITERATION: u64 = (1 << ITERATION_BITS) - 1;

/// Role of a substream within a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lane {
    /// Selection noise and the accept/reject uniform.
    Control = 0,
    /// Proposal draws from the current state.
    Candidate = 1,
    /// Reference draws from the selected candidate.
    Reference = 2,
    /// Extra draws (ideal-scheme normalizer estimates, MC samplers).
    Auxiliary = 3,
}

/// Root of all substreams of one chain.
#[derive(Debug, Clone)]
pub struct StreamKey {
    seed: u64,
    chain: u64,
    base: ChaCha8Rng,
}

impl StreamKey {
    pub fn new(seed: u64, chain: u64) -> Self {
        let mut base = ChaCha8Rng::seed_from_u64(seed);
        base.set_stream(chain);
        Self { seed, chain, base }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn chain(&self) -> u64 {
        self.chain
    }

    /// Substreams for a single iteration of the chain.
    pub fn step(&self, iteration: u64) -> StepStreams<'_> {
        assert!(
            iteration <= MAX_ITERATION,
            "iteration {iteration} exceeds substream capacity"
        );
        StepStreams {
            key: self,
            iteration,
        }
    }

    fn substream(&self, iteration: u64, lane: Lane, index: usize) -> ChaCha8Rng {
        assert!(index <= MAX_INDEX, "substream index {index} out of range");
        let pos = ((iteration as u128) << (LANE_BITS + INDEX_BITS + WORDS_BITS))
            | ((lane as u128) << (INDEX_BITS + WORDS_BITS))
            | ((index as u128) << WORDS_BITS);
        let mut rng = self.base.clone();
        rng.set_word_pos(pos);
        rng
    }
}

/// The substreams available to one kernel step.
#[derive(Debug, Clone, Copy)]
pub struct StepStreams<'a> {
    key: &'a StreamKey,
    iteration: u64,
}

impl StepStreams<'_> {
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn control(&self) -> ChaCha8Rng {
        self.key.substream(self.iteration, Lane::Control, 0)
    }

    pub fn candidate(&self, index: usize) -> ChaCha8Rng {
        self.key.substream(self.iteration, Lane::Candidate, index)
    }

    pub fn reference(&self, index: usize) -> ChaCha8Rng {
        self.key.substream(self.iteration, Lane::Reference, index)
    }

    pub fn auxiliary(&self, index: usize) -> ChaCha8Rng {
        self.key.substream(self.iteration, Lane::Auxiliary, index)
    }
}
