//! Output-space constraints compiled to automata the decoder can walk.
//!
//! The segmentation constraint is the workhorse: for a window
//! `t_1 .. t_n` the admissible outputs are exactly the `2^(n-1)` strings
//! that copy the window and optionally insert one boundary delimiter
//! before each token except the first. No leading, trailing, or doubled
//! delimiters; every emitted token is the next input token verbatim.
//!
//! A second family, BIO tag sequences, exists to keep the decoder
//! honest: nothing in the search knows about segmentation, it just walks
//! whatever deterministic acceptor it is handed.

use crate::fst::{
    canonicalize, Arc, Automaton, AutomatonKind, FstError, Label, SymbolTable, TropicalWeight,
};
use crate::text::TokenSeq;

/// A constraint family, compilable per window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstraintSpec {
    /// Copy the window, optionally inserting a delimiter before each
    /// token except the first.
    Segmentation,
    /// Emit one BIO tag per window token, forbidding `I-x` except after
    /// `B-x` or `I-x`.
    BioTagging { labels: Vec<String> },
}

impl ConstraintSpec {
    /// Compiles the deterministic acceptor over admissible outputs for
    /// one window.
    pub fn compile(
        &self,
        window: &TokenSeq,
        table: &mut SymbolTable,
    ) -> Result<Automaton, FstError> {
        match self {
            ConstraintSpec::Segmentation => compile_window_constraint(window, table),
            ConstraintSpec::BioTagging { labels } => {
                let tags = build_bio_constraint(labels, table)?;
                unroll_to_length(&tags, window.len())
            }
        }
    }
}

/// The segmentation transducer: maps any token sequence over `table`'s
/// vocabulary to the same sequence with zero or one delimiters emitted
/// (on an epsilon-input arc) before each token except the first.
///
/// Three states: nothing consumed yet, mid-sequence, and just-emitted-a-
/// delimiter. The last state is non-final and only token arcs leave it,
/// which is what rules out trailing and doubled delimiters.
pub fn build_segmentation_transducer(table: &SymbolTable) -> Automaton {
    let one = TropicalWeight::one();
    let mut fst = Automaton::new(AutomatonKind::Transducer);
    let fresh = fst.add_state();
    let mid = fst.add_state();
    let cut = fst.add_state();
    fst.set_start(fresh);
    fst.set_final(mid, one);
    for id in table.token_ids() {
        let tok = Label::Token(id);
        for from in [fresh, mid, cut] {
            fst.add_arc(from, Arc::new(tok, tok, one, mid)).expect("token arc");
        }
    }
    fst.add_arc(mid, Arc::new(Label::Epsilon, Label::Delimiter, one, cut)).expect("delimiter arc");
    fst
}

/// Compiles the admissible-output acceptor for one window directly, in
/// its canonical "sawtooth" shape: a token chain of `n + 1` states plus
/// one detour state per optional delimiter slot, `2n` states in all.
///
/// Language-equal to routing the window through
/// [`build_segmentation_transducer`], projection, epsilon removal and
/// determinization; the tests hold the two routes against each other.
pub fn compile_window_constraint(
    window: &TokenSeq,
    table: &mut SymbolTable,
) -> Result<Automaton, FstError> {
    if window.is_empty() {
        return Err(FstError::EmptyInput);
    }
    let one = TropicalWeight::one();
    let n = window.len();
    let mut fst = Automaton::new(AutomatonKind::Acceptor);
    let chain: Vec<_> = (0..=n).map(|_| fst.add_state()).collect();
    fst.set_start(chain[0]);
    fst.set_final(chain[n], one);
    for (i, token) in window.tokens().iter().enumerate() {
        let label = Label::Token(table.intern(token)?);
        fst.add_arc(chain[i], Arc::acceptor(label, one, chain[i + 1]))?;
        if i > 0 {
            let detour = fst.add_state();
            fst.add_arc(chain[i], Arc::acceptor(Label::Delimiter, one, detour))?;
            fst.add_arc(detour, Arc::acceptor(label, one, chain[i + 1]))?;
        }
    }
    Ok(canonicalize(&fst))
}

/// Acceptor over BIO tag sequences for the given label inventory:
/// `O`, and `B-x`/`I-x` per label, with `I-x` admissible only directly
/// after `B-x` or `I-x`. Cyclic; all states accept.
pub fn build_bio_constraint(
    labels: &[String],
    table: &mut SymbolTable,
) -> Result<Automaton, FstError> {
    if labels.is_empty() {
        return Err(FstError::EmptyInput);
    }
    let one = TropicalWeight::one();
    let mut fst = Automaton::new(AutomatonKind::Acceptor);
    let outside = fst.add_state();
    fst.set_start(outside);
    fst.set_final(outside, one);
    let o_tag = Label::Token(table.intern("O")?);

    let mut inside = Vec::with_capacity(labels.len());
    for label in labels {
        let state = fst.add_state();
        fst.set_final(state, one);
        let begin = Label::Token(table.intern(&format!("B-{label}"))?);
        let continue_ = Label::Token(table.intern(&format!("I-{label}"))?);
        inside.push((state, begin, continue_));
    }
    for from in std::iter::once(outside).chain(inside.iter().map(|&(s, _, _)| s)) {
        fst.add_arc(from, Arc::acceptor(o_tag, one, outside))?;
        for &(state, begin, _) in &inside {
            fst.add_arc(from, Arc::acceptor(begin, one, state))?;
        }
    }
    for &(state, _, continue_) in &inside {
        fst.add_arc(state, Arc::acceptor(continue_, one, state))?;
    }
    Ok(fst)
}

/// Product of a (possibly cyclic) acceptor with a length counter:
/// accepts exactly the length-`n` strings of the input's language.
fn unroll_to_length(fst: &Automaton, n: usize) -> Result<Automaton, FstError> {
    if n == 0 {
        return Err(FstError::EmptyInput);
    }
    let one = TropicalWeight::one();
    let mut out = Automaton::new(fst.kind());
    let mut ids = std::collections::HashMap::new();
    let mut queue = std::collections::VecDeque::new();
    let start = out.add_state();
    out.set_start(start);
    ids.insert((0usize, fst.start()), start);
    queue.push_back((0usize, fst.start()));
    while let Some((depth, state)) = queue.pop_front() {
        let here = ids[&(depth, state)];
        if depth == n && fst.is_final(state) {
            out.set_final(here, one);
        }
        if depth == n {
            continue;
        }
        for arc in fst.arcs(state) {
            let key = (depth + 1, arc.next);
            let next = match ids.get(&key) {
                Some(&id) => id,
                None => {
                    let id = out.add_state();
                    ids.insert(key, id);
                    queue.push_back(key);
                    id
                }
            };
            out.add_arc(here, Arc::new(arc.ilabel, arc.olabel, arc.weight, next))?;
        }
    }
    Ok(canonicalize(&out))
}
