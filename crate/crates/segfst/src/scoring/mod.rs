//! Scorer abstraction and the mock scorers used throughout the tests.
//!
//! A scorer assigns a log-probability to each candidate continuation of
//! a partial output. The decoder is generic over this trait, so "model"
//! can mean an n-gram model trained in-process, an external process
//! speaking the line protocol, or one of the deliberately misbehaving
//! mocks below.

pub mod external;
pub mod ngram;

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::fst::{Candidate, Label, SymbolTable};
use crate::text::{TokenSeq, END_TEXT, UNKNOWN_TEXT};

/// Stand-in for minus infinity. Large enough to lose every comparison
/// that matters, small enough to stay finite under summation.
pub const NEG_INFINITY_SURROGATE: f64 = -1.0e9;

#[derive(Debug, thiserror::Error)]
pub enum ScoringError {
    #[error("scorer unavailable: {0}")]
    Unavailable(String),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("n-gram order must be at least 1, got {0}")]
    InvalidOrder(usize),
    #[error("smoothing constant must be positive, got {0}")]
    InvalidSmoothing(f64),
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed model file: {0}")]
    MalformedModel(String),
}

/// Everything a scorer may condition on: the input window, the output
/// prefix generated so far, and the symbol table that renders labels
/// back to text.
pub struct ScorerContext<'a> {
    pub window: &'a TokenSeq,
    pub prefix: &'a [Label],
    pub table: &'a SymbolTable,
}

impl<'a> ScorerContext<'a> {
    /// Number of window tokens the prefix has consumed, i.e. its
    /// non-delimiter length.
    pub fn consumed(&self) -> usize {
        self.prefix.iter().filter(|l| !matches!(l, Label::Delimiter)).count()
    }

    /// The prefix rendered to text.
    pub fn prefix_text(&self) -> Vec<&'a str> {
        self.prefix.iter().map(|&l| self.label_text(l)).collect()
    }

    pub fn label_text(&self, label: Label) -> &'a str {
        self.table.text(label).expect("prefix labels come from this table")
    }

    pub fn candidate_text(&self, candidate: Candidate) -> &'a str {
        match candidate {
            Candidate::Emit(label) => self.label_text(label),
            Candidate::End => END_TEXT,
        }
    }
}

/// A model of output continuations.
///
/// `score_next` returns one finite log-probability per candidate, in
/// candidate order. Scores need not be normalized; the decoder only
/// compares them. Implementations must be deterministic for a given
/// (window, prefix, candidate) triple, and must score each candidate
/// independently of which other candidates were asked about.
pub trait Scorer {
    fn score_next(
        &self,
        ctx: &ScorerContext<'_>,
        candidates: &[Candidate],
    ) -> Result<Vec<f64>, ScoringError>;
}

/// Scores faithful copying highest: the next unconsumed window token
/// gets 0, ending exactly at the window end gets 0, everything else is
/// effectively impossible. Never inserts a delimiter.
#[derive(Debug, Default)]
pub struct CopyScorer;

impl Scorer for CopyScorer {
    fn score_next(
        &self,
        ctx: &ScorerContext<'_>,
        candidates: &[Candidate],
    ) -> Result<Vec<f64>, ScoringError> {
        let consumed = ctx.consumed();
        let want = ctx.window.get(consumed);
        Ok(candidates
            .iter()
            .map(|&cand| match cand {
                Candidate::Emit(label) => {
                    if want == Some(ctx.label_text(label)) {
                        0.0
                    } else {
                        NEG_INFINITY_SURROGATE
                    }
                }
                Candidate::End => {
                    if consumed == ctx.window.len() {
                        0.0
                    } else {
                        NEG_INFINITY_SURROGATE
                    }
                }
            })
            .collect())
    }
}

/// Prefers the unknown token over everything, the delimiter over real
/// tokens, and ending least of all. Free-running decoding under this
/// scorer produces garbage; constrained decoding cannot.
#[derive(Debug, Default)]
pub struct HallucinateScorer;

impl Scorer for HallucinateScorer {
    fn score_next(
        &self,
        ctx: &ScorerContext<'_>,
        candidates: &[Candidate],
    ) -> Result<Vec<f64>, ScoringError> {
        Ok(candidates
            .iter()
            .map(|&cand| match cand {
                Candidate::Emit(label) if ctx.label_text(label) == UNKNOWN_TEXT => 0.0,
                Candidate::Emit(Label::Delimiter) => -1.0,
                Candidate::Emit(_) => -2.0,
                Candidate::End => -3.0,
            })
            .collect())
    }
}

/// Deterministic pseudo-random scores in [-10, 0], a pure function of
/// (seed, window, prefix, candidate). Used to fuzz the decoder without
/// giving up reproducibility.
#[derive(Debug, Clone, Copy)]
pub struct RandomScorer {
    seed: u64,
}

impl RandomScorer {
    pub fn new(seed: u64) -> Self {
        RandomScorer { seed }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(h: u64, v: u64) -> u64 {
    splitmix64(h ^ v.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn mix_str(mut h: u64, s: &str) -> u64 {
    for b in s.as_bytes() {
        h = h.wrapping_mul(0x0000_0100_0000_01B3) ^ u64::from(*b);
    }
    splitmix64(h)
}

fn label_code(label: Label) -> u64 {
    match label {
        Label::Epsilon => 0,
        Label::Delimiter => 1,
        Label::Token(id) => 16 + u64::from(id),
    }
}

impl Scorer for RandomScorer {
    fn score_next(
        &self,
        ctx: &ScorerContext<'_>,
        candidates: &[Candidate],
    ) -> Result<Vec<f64>, ScoringError> {
        let mut h = mix(0x5EED_F00D, self.seed);
        for tok in ctx.window.tokens() {
            h = mix_str(h, tok);
        }
        for &label in ctx.prefix {
            h = mix(h, label_code(label));
        }
        Ok(candidates
            .iter()
            .map(|&cand| {
                let code = match cand {
                    Candidate::Emit(label) => label_code(label),
                    Candidate::End => 2,
                };
                let bits = mix(h, code);
                let unit = (bits >> 11) as f64 / (1u64 << 53) as f64;
                -10.0 * unit
            })
            .collect())
    }
}

/// Copies the window but prefers a delimiter whenever the next window
/// token equals the marker. Handy for making a known segmentation fall
/// out of decoding.
#[derive(Debug)]
pub struct MarkerScorer {
    marker: String,
}

impl MarkerScorer {
    pub fn new(marker: impl Into<String>) -> Self {
        MarkerScorer { marker: marker.into() }
    }
}

impl Scorer for MarkerScorer {
    fn score_next(
        &self,
        ctx: &ScorerContext<'_>,
        candidates: &[Candidate],
    ) -> Result<Vec<f64>, ScoringError> {
        let consumed = ctx.consumed();
        let want = ctx.window.get(consumed);
        let cut_here = want == Some(self.marker.as_str())
            && consumed > 0
            && ctx.prefix.last() != Some(&Label::Delimiter);
        Ok(candidates
            .iter()
            .map(|&cand| match cand {
                Candidate::Emit(Label::Delimiter) => {
                    if cut_here {
                        0.0
                    } else {
                        NEG_INFINITY_SURROGATE
                    }
                }
                Candidate::Emit(label) => {
                    if !cut_here && want == Some(ctx.label_text(label)) {
                        0.0
                    } else {
                        NEG_INFINITY_SURROGATE
                    }
                }
                Candidate::End => {
                    if consumed == ctx.window.len() {
                        0.0
                    } else {
                        NEG_INFINITY_SURROGATE
                    }
                }
            })
            .collect())
    }
}

/// Wraps another scorer and records how it is called. Lets tests pin
/// down how many candidates the decoder actually asks about.
pub struct CountingScorer<'a> {
    inner: &'a dyn Scorer,
    calls: AtomicUsize,
    max_candidates: AtomicUsize,
}

impl<'a> CountingScorer<'a> {
    pub fn new(inner: &'a dyn Scorer) -> Self {
        CountingScorer { inner, calls: AtomicUsize::new(0), max_candidates: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn max_candidates(&self) -> usize {
        self.max_candidates.load(Ordering::Relaxed)
    }
}

impl Scorer for CountingScorer<'_> {
    fn score_next(
        &self,
        ctx: &ScorerContext<'_>,
        candidates: &[Candidate],
    ) -> Result<Vec<f64>, ScoringError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.max_candidates.fetch_max(candidates.len(), Ordering::Relaxed);
        self.inner.score_next(ctx, candidates)
    }
}
