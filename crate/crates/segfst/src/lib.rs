//! Segmentation of long unpunctuated token streams into sentence-like units.
//!
//! Speech recognizers emit long stretches of lowercase text with no
//! punctuation. Downstream consumers (translation, subtitling) want short,
//! independently processable units. This crate restores those unit
//! boundaries by decoding with a pluggable next-token scorer under a
//! finite-state constraint: the output must be the input token sequence
//! with optional boundary markers inserted, nothing else.
//!
//! The pieces, bottom-up:
//!
//! - [`text`]: token sequences and boundary sets, the shared vocabulary of
//!   every other module.
//! - [`fst`]: a small weighted automaton library over the tropical
//!   semiring (acceptors, transducers, composition, determinization, path
//!   counting).
//! - [`constraints`]: the segmentation transducer and its compiled
//!   per-window acceptor, plus a BIO tag-sequence constraint showing the
//!   interface generalizes.
//! - [`align`]: Levenshtein alignment and boundary projection, used both
//!   to repair unconstrained decoder output and to project reference
//!   punctuation onto transcripts.
//! - [`scoring`]: the scorer contract, an add-k smoothed n-gram model,
//!   deterministic mock scorers, and a line-delimited JSON protocol for
//!   external scorer processes.
//! - [`decode`]: greedy and beam search over a constraint automaton, the
//!   unconstrained fallback, and wellformedness checking.
//! - [`window`]: sliding-window driving for passages longer than one
//!   decoder window, with overlap-based context and deterministic
//!   stitching.
//! - [`eval`]: boundary precision/recall/F1, baselines, and segment
//!   length histograms.

pub mod align;
pub mod constraints;
pub mod decode;
pub mod eval;
pub mod fst;
pub mod scoring;
pub mod text;
pub mod window;

pub use decode::{decode_window, DecodeConfig, DecodeMode, DecodeOutcome};
pub use scoring::{Scorer, ScorerContext};
pub use text::{Segmentation, TokenSeq, DELIMITER_TEXT};
pub use window::{segment_passage, WindowSpec};
