//! Beam-search decoding over a scorer, with or without an output-space
//! constraint.
//!
//! Constrained decoding walks a deterministic acceptor and only ever
//! scores the labels that can extend an accepting path, so the result
//! is admissible by construction. Unconstrained decoding gives the
//! scorer free rein over the window vocabulary plus delimiter and
//! unknown token; whatever comes out is checked after the fact and,
//! in repair mode, aligned back onto the input.

use crate::align::repair_output;
use crate::constraints::compile_window_constraint;
use crate::fst::{Automaton, Candidate, FstError, Label, StateId, SymbolTable};
use crate::scoring::{Scorer, ScorerContext, ScoringError};
use crate::text::{Segmentation, TokenSeq, DELIMITER_TEXT, UNKNOWN_TEXT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    /// Free generation; output may be ill-formed.
    Unconstrained,
    /// Walk the per-window constraint automaton.
    FstConstrained,
    /// Free generation, then alignment repair of whatever came out.
    LevenshteinRepair,
}

#[derive(Debug, Clone)]
pub struct DecodeConfig {
    pub beam_size: usize,
    pub mode: DecodeMode,
    /// Cap on generated length in unconstrained modes, after which only
    /// ending is offered. Defaults to `2n + 1` for an `n`-token window,
    /// enough for every admissible output and one spare.
    pub max_output_len: Option<usize>,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig { beam_size: 4, mode: DecodeMode::FstConstrained, max_output_len: None }
    }
}

/// What one window decoded to.
#[derive(Debug, Clone)]
pub struct DecodeOutcome {
    /// Raw output tokens, delimiters included.
    pub generated: Vec<String>,
    /// Accumulated log-probability of the returned sequence.
    pub score: f64,
    /// Whether the raw output was admissible as-is.
    pub wellformed: bool,
    /// The induced segmentation. `None` only for ill-formed output in
    /// unconstrained mode; repair mode always produces one.
    pub segmentation: Option<Segmentation>,
}

#[derive(Debug, thiserror::Error)]
pub enum DecodeError {
    #[error("invalid decode configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Fst(#[from] FstError),
}

/// Why a raw output fails admissibility.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum NotWellformed {
    #[error("delimiter before any token")]
    LeadingDelimiter,
    #[error("delimiter after the last token")]
    TrailingDelimiter,
    #[error("two delimiters in a row before token {position}")]
    DoubleDelimiter { position: usize },
    #[error("output token {position} is {found:?} where the input has {expected:?}")]
    TokenMismatch { position: usize, found: String, expected: String },
    #[error("output covers {found} tokens but the input has {expected}")]
    LengthMismatch { expected: usize, found: usize },
}

/// Splits an output into its tokens and boundary positions, rejecting
/// leading, trailing, and doubled delimiters.
pub fn parse_annotated(generated: &[String]) -> Result<(Vec<String>, Segmentation), NotWellformed> {
    let mut tokens = Vec::with_capacity(generated.len());
    let mut boundaries = Vec::new();
    let mut pending_delimiter = false;
    for tok in generated {
        if tok == DELIMITER_TEXT {
            if tokens.is_empty() {
                return Err(NotWellformed::LeadingDelimiter);
            }
            if pending_delimiter {
                return Err(NotWellformed::DoubleDelimiter { position: tokens.len() });
            }
            pending_delimiter = true;
        } else {
            if pending_delimiter {
                boundaries.push(tokens.len());
            }
            tokens.push(tok.clone());
            pending_delimiter = false;
        }
    }
    if pending_delimiter {
        return Err(NotWellformed::TrailingDelimiter);
    }
    let len = tokens.len();
    Ok((tokens, Segmentation::new(len, boundaries).expect("boundaries are internal")))
}

/// Checks a raw output against its window: delimiter placement first,
/// then token-for-token copying.
pub fn parse_segmentation(
    generated: &[String],
    input: &TokenSeq,
) -> Result<Segmentation, NotWellformed> {
    let (tokens, seg) = parse_annotated(generated)?;
    for (position, (found, expected)) in tokens.iter().zip(input.tokens()).enumerate() {
        if found != expected {
            return Err(NotWellformed::TokenMismatch {
                position,
                found: found.clone(),
                expected: expected.clone(),
            });
        }
    }
    if tokens.len() != input.len() {
        return Err(NotWellformed::LengthMismatch { expected: input.len(), found: tokens.len() });
    }
    Ok(seg)
}

/// Decodes one window under `cfg`.
pub fn decode_window(
    scorer: &dyn Scorer,
    window: &TokenSeq,
    cfg: &DecodeConfig,
) -> Result<DecodeOutcome, DecodeError> {
    if window.is_empty() {
        return Err(FstError::EmptyInput.into());
    }
    if cfg.beam_size == 0 {
        return Err(DecodeError::InvalidConfig("beam size must be at least 1".to_owned()));
    }
    let mut table = SymbolTable::new();

    match cfg.mode {
        DecodeMode::FstConstrained => {
            let constraint = compile_window_constraint(window, &mut table)?;
            let (labels, score) = search_automaton(scorer, window, &table, &constraint, cfg.beam_size)?;
            let generated = labels_to_text(&labels, &table);
            let segmentation =
                parse_segmentation(&generated, window).expect("constrained output is admissible");
            Ok(DecodeOutcome { generated, score, wellformed: true, segmentation: Some(segmentation) })
        }
        DecodeMode::Unconstrained | DecodeMode::LevenshteinRepair => {
            for tok in window.tokens() {
                table.intern(tok)?;
            }
            table.intern(UNKNOWN_TEXT)?;
            let max_len = cfg.max_output_len.unwrap_or(2 * window.len() + 1);
            let space = FreeSpace { candidates: free_candidates(&table), max_len };
            let (labels, score) = run_with_rescue(&space, scorer, window, &table, cfg.beam_size)?;
            let generated = labels_to_text(&labels, &table);
            let parsed = parse_segmentation(&generated, window);
            let wellformed = parsed.is_ok();
            let segmentation = match (cfg.mode, parsed) {
                (_, Ok(seg)) => Some(seg),
                (DecodeMode::LevenshteinRepair, Err(_)) => Some(repair_output(&generated, window)),
                (_, Err(_)) => None,
            };
            Ok(DecodeOutcome { generated, score, wellformed, segmentation })
        }
    }
}

/// Beam search over the paths of a deterministic acceptor. Exposed on
/// its own so callers can decode under constraints other than
/// segmentation; returns the winning label sequence and its score.
pub fn search_automaton(
    scorer: &dyn Scorer,
    window: &TokenSeq,
    table: &SymbolTable,
    constraint: &Automaton,
    beam_size: usize,
) -> Result<(Vec<Label>, f64), DecodeError> {
    if beam_size == 0 {
        return Err(DecodeError::InvalidConfig("beam size must be at least 1".to_owned()));
    }
    if !constraint.is_deterministic() {
        return Err(DecodeError::InvalidConfig(
            "constraint automaton must be deterministic".to_owned(),
        ));
    }
    run_with_rescue(&AutomatonSpace { fst: constraint }, scorer, window, table, beam_size)
}

/// A search space: the decoder explores label sequences, the space says
/// which continuations exist.
trait SearchSpace {
    fn start(&self) -> StateId;
    fn moves(&self, state: StateId, len: usize) -> Vec<Candidate>;
    fn advance(&self, state: StateId, label: Label) -> StateId;
}

struct AutomatonSpace<'a> {
    fst: &'a Automaton,
}

impl SearchSpace for AutomatonSpace<'_> {
    fn start(&self) -> StateId {
        self.fst.start()
    }

    fn moves(&self, state: StateId, _len: usize) -> Vec<Candidate> {
        self.fst.allowed(state).expect("state came from this automaton")
    }

    fn advance(&self, state: StateId, label: Label) -> StateId {
        self.fst
            .step(state, label)
            .expect("state came from this automaton")
            .expect("label came from moves")
    }
}

/// Unconstrained generation: any candidate at any time, ending forced
/// once the length cap is reached.
struct FreeSpace {
    candidates: Vec<Candidate>,
    max_len: usize,
}

impl SearchSpace for FreeSpace {
    fn start(&self) -> StateId {
        0
    }

    fn moves(&self, _state: StateId, len: usize) -> Vec<Candidate> {
        if len >= self.max_len {
            vec![Candidate::End]
        } else {
            self.candidates.clone()
        }
    }

    fn advance(&self, state: StateId, _label: Label) -> StateId {
        state
    }
}

fn free_candidates(table: &SymbolTable) -> Vec<Candidate> {
    let mut candidates = vec![Candidate::Emit(Label::Delimiter)];
    candidates.extend(table.token_ids().map(|id| Candidate::Emit(Label::Token(id))));
    candidates.push(Candidate::End);
    candidates
}

#[derive(Clone)]
struct Hypothesis {
    labels: Vec<Label>,
    score: f64,
    state: StateId,
}

type Finished = (Vec<Label>, f64);

/// Runs the beam at the requested width, and at width 1 as well when
/// they differ, keeping the better finish. A wider beam can abandon the
/// greedy path before it pays off, so this guarantees widening the beam
/// never returns something worse.
fn run_with_rescue(
    space: &dyn SearchSpace,
    scorer: &dyn Scorer,
    window: &TokenSeq,
    table: &SymbolTable,
    beam_size: usize,
) -> Result<Finished, DecodeError> {
    let mut best = beam_run(space, scorer, window, table, beam_size)?;
    if beam_size > 1 {
        if let Some(greedy) = beam_run(space, scorer, window, table, 1)? {
            best = Some(match best {
                Some(b) if !prefer(&greedy, &b) => b,
                _ => greedy,
            });
        }
    }
    Ok(best.expect("search space admits at least one finished sequence"))
}

/// Whether `a` wins over `b`: higher score, lexicographically smaller
/// labels on ties.
fn prefer(a: &Finished, b: &Finished) -> bool {
    a.1 > b.1 || (a.1 == b.1 && a.0 < b.0)
}

fn beam_run(
    space: &dyn SearchSpace,
    scorer: &dyn Scorer,
    window: &TokenSeq,
    table: &SymbolTable,
    beam_size: usize,
) -> Result<Option<Finished>, DecodeError> {
    let mut live =
        vec![Hypothesis { labels: Vec::new(), score: 0.0, state: space.start() }];
    let mut best: Option<Finished> = None;

    while !live.is_empty() {
        let mut extended: Vec<Hypothesis> = Vec::new();
        for hyp in &live {
            let moves = space.moves(hyp.state, hyp.labels.len());
            if moves.is_empty() {
                continue;
            }
            let ctx = ScorerContext { window, prefix: &hyp.labels, table };
            let scores = scorer.score_next(&ctx, &moves)?;
            if scores.len() != moves.len() {
                return Err(ScoringError::Unavailable(format!(
                    "scorer returned {} scores for {} candidates",
                    scores.len(),
                    moves.len()
                ))
                .into());
            }
            for (&mv, &logprob) in moves.iter().zip(&scores) {
                if !logprob.is_finite() {
                    return Err(ScoringError::Unavailable(format!(
                        "scorer returned a non-finite log-probability: {logprob}"
                    ))
                    .into());
                }
                let score = hyp.score + logprob;
                match mv {
                    Candidate::End => {
                        let finished = (hyp.labels.clone(), score);
                        if best.as_ref().map_or(true, |b| prefer(&finished, b)) {
                            best = Some(finished);
                        }
                    }
                    Candidate::Emit(label) => {
                        let mut labels = Vec::with_capacity(hyp.labels.len() + 1);
                        labels.extend_from_slice(&hyp.labels);
                        labels.push(label);
                        extended.push(Hypothesis {
                            labels,
                            score,
                            state: space.advance(hyp.state, label),
                        });
                    }
                }
            }
        }
        extended.sort_by(|a, b| {
            b.score.total_cmp(&a.score).then_with(|| a.labels.cmp(&b.labels))
        });
        extended.truncate(beam_size);
        live = extended;
    }
    Ok(best)
}

fn labels_to_text(labels: &[Label], table: &SymbolTable) -> Vec<String> {
    labels
        .iter()
        .map(|&l| table.text(l).expect("labels come from this table").to_owned())
        .collect()
}
