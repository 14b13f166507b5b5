//! A small weighted finite-state library over the tropical semiring.
//!
//! Weights are negative log-probabilities combined with `(min, +)`: path
//! weight is the sum of arc weights, and the best of two paths is the
//! minimum. The same machinery serves three jobs here: compiling the
//! segmentation output space per window, walking that space from the
//! decoder (`step` / `allowed`), and cross-checking edit-distance costs
//! as shortest paths.
//!
//! This is deliberately not a general FST toolkit. Composition supports
//! epsilons on the matched tape of one operand only, and determinization
//! handles the acyclic unweighted machines this crate builds. Both
//! restrictions are guarded by errors rather than silently wrong output.

mod algo;

pub use algo::{
    build_linear_acceptor, canonicalize, compose, count_paths, determinize_acyclic,
    enumerate_paths, project_output, remove_epsilon, shortest_distance, topological_order, Path,
};

use std::collections::HashMap;
use std::fmt;

use crate::text::DELIMITER_TEXT;

/// Text form of the epsilon label in dumps.
pub const EPSILON_TEXT: &str = "<eps>";

pub type StateId = usize;
pub type SymbolId = u32;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FstError {
    #[error("empty input sequence")]
    EmptyInput,
    #[error("state {0} out of range")]
    InvalidState(StateId),
    #[error("acceptor arc must carry equal input and output labels")]
    AcceptorLabelMismatch,
    #[error("composition requires the left output alphabet to be covered by the right input alphabet (missing {0:?})")]
    AlphabetMismatch(String),
    #[error("composition with epsilons on the matched tape of both operands is not supported")]
    EpsilonConflict,
    #[error("automaton contains a cycle")]
    NotAcyclic,
    #[error("cannot determinize: {0}")]
    NotDeterminizable(&'static str),
    #[error("{0:?} is reserved and cannot be interned as a token")]
    ReservedSymbol(String),
}

/// Arc and query labels. Token ids index a [`SymbolTable`], whose ids 0
/// and 1 are reserved for epsilon and the boundary delimiter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Epsilon,
    Delimiter,
    Token(SymbolId),
}

impl Label {
    pub fn is_epsilon(self) -> bool {
        self == Label::Epsilon
    }
}

/// One admissible decoder move: emit a label, or finish the sequence.
/// `End` is offered exactly at final states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Candidate {
    Emit(Label),
    End,
}

/// Tropical semiring weight: `plus` is min, `times` is addition, zero is
/// positive infinity and one is 0.0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TropicalWeight(f64);

impl TropicalWeight {
    pub const fn new(value: f64) -> Self {
        TropicalWeight(value)
    }

    pub const fn zero() -> Self {
        TropicalWeight(f64::INFINITY)
    }

    pub const fn one() -> Self {
        TropicalWeight(0.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::INFINITY
    }

    pub fn plus(self, other: Self) -> Self {
        TropicalWeight(self.0.min(other.0))
    }

    pub fn times(self, other: Self) -> Self {
        TropicalWeight(self.0 + other.0)
    }

    /// Total-order key, used when sorting arcs into canonical order.
    pub(crate) fn order_bits(self) -> u64 {
        self.0.to_bits()
    }
}

impl Eq for TropicalWeight {}

impl fmt::Display for TropicalWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Bijective map between token strings and symbol ids.
///
/// Ids 0 (`<eps>`) and 1 (`<SENT>`) are reserved at construction and are
/// stable across save/load; transcript tokens start at id 2 and can never
/// collide with the reserved names.
#[derive(Debug, Clone)]
pub struct SymbolTable {
    names: Vec<String>,
    index: HashMap<String, SymbolId>,
}

impl SymbolTable {
    pub fn new() -> Self {
        let mut table = SymbolTable { names: Vec::new(), index: HashMap::new() };
        table.push(EPSILON_TEXT);
        table.push(DELIMITER_TEXT);
        table
    }

    fn push(&mut self, name: &str) -> SymbolId {
        let id = self.names.len() as SymbolId;
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    /// Returns the id for `token`, inserting it if new. The reserved
    /// names cannot be interned as ordinary tokens.
    pub fn intern(&mut self, token: &str) -> Result<SymbolId, FstError> {
        if token == EPSILON_TEXT || token == DELIMITER_TEXT {
            return Err(FstError::ReservedSymbol(token.to_owned()));
        }
        match self.index.get(token) {
            Some(&id) => Ok(id),
            None => Ok(self.push(token)),
        }
    }

    /// Interns a token and wraps it as a label; the delimiter surface
    /// form maps to [`Label::Delimiter`] rather than a token id.
    pub fn intern_label(&mut self, token: &str) -> Result<Label, FstError> {
        if token == DELIMITER_TEXT {
            Ok(Label::Delimiter)
        } else {
            Ok(Label::Token(self.intern(token)?))
        }
    }

    pub fn get(&self, token: &str) -> Option<SymbolId> {
        self.index.get(token).copied()
    }

    /// Read-only counterpart of [`SymbolTable::intern_label`].
    pub fn label(&self, token: &str) -> Option<Label> {
        if token == DELIMITER_TEXT {
            Some(Label::Delimiter)
        } else {
            self.get(token).map(Label::Token)
        }
    }

    pub fn name(&self, id: SymbolId) -> Option<&str> {
        self.names.get(id as usize).map(String::as_str)
    }

    /// Text form of a label, e.g. for dumps and wire requests.
    pub fn text(&self, label: Label) -> Option<&str> {
        match label {
            Label::Epsilon => Some(EPSILON_TEXT),
            Label::Delimiter => Some(DELIMITER_TEXT),
            Label::Token(id) => {
                if id < 2 {
                    None
                } else {
                    self.name(id)
                }
            }
        }
    }

    /// Number of entries including the two reserved ids.
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Ids of the non-reserved tokens, in insertion order.
    pub fn token_ids(&self) -> impl Iterator<Item = SymbolId> + '_ {
        (2..self.names.len() as SymbolId).into_iter()
    }

    /// Flat name list for persistence; `from_names` restores the table.
    pub fn to_names(&self) -> Vec<String> {
        self.names.clone()
    }

    pub fn from_names(names: Vec<String>) -> Result<Self, FstError> {
        let mut table = SymbolTable::new();
        for name in names.iter().skip(2) {
            table.intern(name)?;
        }
        if names.first().map(String::as_str) != Some(EPSILON_TEXT)
            || names.get(1).map(String::as_str) != Some(DELIMITER_TEXT)
        {
            return Err(FstError::ReservedSymbol(names.into_iter().next().unwrap_or_default()));
        }
        Ok(table)
    }
}

impl Default for SymbolTable {
    fn default() -> Self {
        SymbolTable::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AutomatonKind {
    Acceptor,
    Transducer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arc {
    pub ilabel: Label,
    pub olabel: Label,
    pub weight: TropicalWeight,
    pub next: StateId,
}

impl Arc {
    pub fn new(ilabel: Label, olabel: Label, weight: TropicalWeight, next: StateId) -> Self {
        Arc { ilabel, olabel, weight, next }
    }

    /// Acceptor arc: one label on both tapes.
    pub fn acceptor(label: Label, weight: TropicalWeight, next: StateId) -> Self {
        Arc::new(label, label, weight, next)
    }
}

/// A weighted automaton with dense integer states. Immutable once built;
/// the `add_*`/`set_*` methods are the builder surface.
#[derive(Debug, Clone, PartialEq)]
pub struct Automaton {
    kind: AutomatonKind,
    start: StateId,
    arcs: Vec<Vec<Arc>>,
    finals: Vec<Option<TropicalWeight>>,
}

impl Automaton {
    pub fn new(kind: AutomatonKind) -> Self {
        Automaton { kind, start: 0, arcs: Vec::new(), finals: Vec::new() }
    }

    pub fn kind(&self) -> AutomatonKind {
        self.kind
    }

    pub fn add_state(&mut self) -> StateId {
        self.arcs.push(Vec::new());
        self.finals.push(None);
        self.arcs.len() - 1
    }

    pub fn set_start(&mut self, state: StateId) {
        debug_assert!(state < self.num_states());
        self.start = state;
    }

    pub fn start(&self) -> StateId {
        self.start
    }

    pub fn set_final(&mut self, state: StateId, weight: TropicalWeight) {
        self.finals[state] = Some(weight);
    }

    /// Adds an arc, checking state ids and the acceptor label invariant.
    pub fn add_arc(&mut self, from: StateId, arc: Arc) -> Result<(), FstError> {
        if from >= self.num_states() {
            return Err(FstError::InvalidState(from));
        }
        if arc.next >= self.num_states() {
            return Err(FstError::InvalidState(arc.next));
        }
        if self.kind == AutomatonKind::Acceptor && arc.ilabel != arc.olabel {
            return Err(FstError::AcceptorLabelMismatch);
        }
        self.arcs[from].push(arc);
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.arcs.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.arcs.iter().map(Vec::len).sum()
    }

    pub fn arcs(&self, state: StateId) -> &[Arc] {
        &self.arcs[state]
    }

    pub fn final_weight(&self, state: StateId) -> Option<TropicalWeight> {
        self.finals.get(state).copied().flatten()
    }

    pub fn is_final(&self, state: StateId) -> bool {
        self.final_weight(state).is_some()
    }

    /// States with a final weight, in id order.
    pub fn final_states(&self) -> impl Iterator<Item = (StateId, TropicalWeight)> + '_ {
        self.finals.iter().enumerate().filter_map(|(s, w)| w.map(|w| (s, w)))
    }

    pub fn has_input_epsilons(&self) -> bool {
        self.arcs.iter().flatten().any(|a| a.ilabel.is_epsilon())
    }

    pub fn has_output_epsilons(&self) -> bool {
        self.arcs.iter().flatten().any(|a| a.olabel.is_epsilon())
    }

    /// True when no state has two arcs sharing an input label and the
    /// input tape is epsilon-free.
    pub fn is_deterministic(&self) -> bool {
        for arcs in &self.arcs {
            let mut seen = Vec::with_capacity(arcs.len());
            for arc in arcs {
                if arc.ilabel.is_epsilon() || seen.contains(&arc.ilabel) {
                    return false;
                }
                seen.push(arc.ilabel);
            }
        }
        true
    }

    /// Follows the unique arc labeled `label` out of `state`.
    ///
    /// Intended for deterministic automata; on nondeterministic input it
    /// follows the first matching arc.
    pub fn step(&self, state: StateId, label: Label) -> Result<Option<StateId>, FstError> {
        if state >= self.num_states() {
            return Err(FstError::InvalidState(state));
        }
        Ok(self.arcs[state].iter().find(|a| a.ilabel == label).map(|a| a.next))
    }

    /// The decoder's view of a state: every label with an outgoing arc,
    /// in label order, plus [`Candidate::End`] iff the state is final.
    pub fn allowed(&self, state: StateId) -> Result<Vec<Candidate>, FstError> {
        if state >= self.num_states() {
            return Err(FstError::InvalidState(state));
        }
        let mut labels: Vec<Label> = self.arcs[state].iter().map(|a| a.ilabel).collect();
        labels.sort_unstable();
        labels.dedup();
        let mut moves: Vec<Candidate> = labels.into_iter().map(Candidate::Emit).collect();
        if self.is_final(state) {
            moves.push(Candidate::End);
        }
        Ok(moves)
    }

    /// Input-tape acceptance by NFA simulation with epsilon closure.
    pub fn accepts(&self, labels: &[Label]) -> bool {
        if self.num_states() == 0 {
            return false;
        }
        let mut frontier = vec![false; self.num_states()];
        frontier[self.start] = true;
        self.close_epsilon(&mut frontier);
        for &label in labels {
            let mut next = vec![false; self.num_states()];
            for state in 0..self.num_states() {
                if !frontier[state] {
                    continue;
                }
                for arc in &self.arcs[state] {
                    if arc.ilabel == label {
                        next[arc.next] = true;
                    }
                }
            }
            self.close_epsilon(&mut next);
            frontier = next;
            if !frontier.iter().any(|&b| b) {
                return false;
            }
        }
        frontier.iter().enumerate().any(|(s, &live)| live && self.is_final(s))
    }

    fn close_epsilon(&self, set: &mut [bool]) {
        let mut stack: Vec<StateId> = set
            .iter()
            .enumerate()
            .filter_map(|(s, &live)| live.then_some(s))
            .collect();
        while let Some(state) = stack.pop() {
            for arc in &self.arcs[state] {
                if arc.ilabel.is_epsilon() && !set[arc.next] {
                    set[arc.next] = true;
                    stack.push(arc.next);
                }
            }
        }
    }

    /// Text dump: one arc per line (`src dst ilabel olabel weight`,
    /// tab-separated), final states listed last (`state weight`).
    pub fn dump_text(&self, table: &SymbolTable) -> String {
        let label = |l: Label| table.text(l).map(str::to_owned).unwrap_or_else(|| format!("#{l:?}"));
        let mut out = String::new();
        for (state, arcs) in self.arcs.iter().enumerate() {
            for arc in arcs {
                out.push_str(&format!(
                    "{state}\t{}\t{}\t{}\t{}\n",
                    arc.next,
                    label(arc.ilabel),
                    label(arc.olabel),
                    arc.weight
                ));
            }
        }
        for (state, weight) in self.final_states() {
            out.push_str(&format!("{state}\t{weight}\n"));
        }
        out
    }
}
