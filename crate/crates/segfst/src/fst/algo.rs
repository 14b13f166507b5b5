//! Automaton algorithms: construction, composition, epsilon removal,
//! determinization, and path queries.
//!
//! Every algorithm that builds a new machine returns it in canonical
//! form: dead states trimmed, states renumbered in topological order
//! from the start, arcs sorted. Identical inputs therefore yield
//! byte-identical dumps, which the golden tests rely on.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, VecDeque};

use super::{Arc, Automaton, AutomatonKind, FstError, Label, StateId, SymbolTable, TropicalWeight};
use crate::text::TokenSeq;

/// A single accepting path: input and output label sequences (epsilons
/// dropped) and the accumulated weight including the final weight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub ilabels: Vec<Label>,
    pub olabels: Vec<Label>,
    pub weight: TropicalWeight,
}

/// Chain acceptor for one token sequence: `n + 1` states, `n` arcs, all
/// weights semiring-one. Tokens are interned into `table` as needed.
pub fn build_linear_acceptor(
    tokens: &TokenSeq,
    table: &mut SymbolTable,
) -> Result<Automaton, FstError> {
    if tokens.is_empty() {
        return Err(FstError::EmptyInput);
    }
    let mut fst = Automaton::new(AutomatonKind::Acceptor);
    let mut state = fst.add_state();
    fst.set_start(state);
    for token in tokens.tokens() {
        let label = Label::Token(table.intern(token)?);
        let next = fst.add_state();
        fst.add_arc(state, Arc::acceptor(label, TropicalWeight::one(), next))?;
        state = next;
    }
    fst.set_final(state, TropicalWeight::one());
    Ok(fst)
}

/// Composes `a` with `b`, matching `a`'s output tape against `b`'s input
/// tape. Weights combine with tropical times (addition).
///
/// Epsilons are supported on the matched tape of at most one operand;
/// the full three-way epsilon filter is out of scope and requests that
/// would need it fail with [`FstError::EpsilonConflict`]. Every
/// non-epsilon output label of `a` must appear on `b`'s input tape.
pub fn compose(a: &Automaton, b: &Automaton) -> Result<Automaton, FstError> {
    if a.has_output_epsilons() && b.has_input_epsilons() {
        return Err(FstError::EpsilonConflict);
    }
    let b_inputs: BTreeSet<Label> = all_labels(b, |arc| arc.ilabel);
    for label in all_labels(a, |arc| arc.olabel) {
        if !b_inputs.contains(&label) {
            return Err(FstError::AlphabetMismatch(format!("{label:?}")));
        }
    }

    let kind = if a.kind() == AutomatonKind::Acceptor && b.kind() == AutomatonKind::Acceptor {
        AutomatonKind::Acceptor
    } else {
        AutomatonKind::Transducer
    };
    let mut fst = Automaton::new(kind);
    let mut ids: HashMap<(StateId, StateId), StateId> = HashMap::new();
    let mut queue = VecDeque::new();

    let start = fst.add_state();
    fst.set_start(start);
    ids.insert((a.start(), b.start()), start);
    queue.push_back((a.start(), b.start()));

    while let Some((qa, qb)) = queue.pop_front() {
        let here = ids[&(qa, qb)];
        if let (Some(wa), Some(wb)) = (a.final_weight(qa), b.final_weight(qb)) {
            fst.set_final(here, wa.times(wb));
        }
        let push = |fst: &mut Automaton,
                    ids: &mut HashMap<(StateId, StateId), StateId>,
                    queue: &mut VecDeque<(StateId, StateId)>,
                    pair: (StateId, StateId)| {
            *ids.entry(pair).or_insert_with(|| {
                queue.push_back(pair);
                fst.add_state()
            })
        };
        for arc_a in a.arcs(qa) {
            if arc_a.olabel.is_epsilon() {
                // `a` moves alone; `b` holds still.
                let next = push(&mut fst, &mut ids, &mut queue, (arc_a.next, qb));
                fst.add_arc(here, Arc::new(arc_a.ilabel, Label::Epsilon, arc_a.weight, next))?;
                continue;
            }
            for arc_b in b.arcs(qb) {
                if arc_b.ilabel == arc_a.olabel {
                    let next = push(&mut fst, &mut ids, &mut queue, (arc_a.next, arc_b.next));
                    let weight = arc_a.weight.times(arc_b.weight);
                    fst.add_arc(here, Arc::new(arc_a.ilabel, arc_b.olabel, weight, next))?;
                }
            }
        }
        for arc_b in b.arcs(qb) {
            if arc_b.ilabel.is_epsilon() {
                // `b` moves alone; `a` holds still.
                let next = push(&mut fst, &mut ids, &mut queue, (qa, arc_b.next));
                fst.add_arc(here, Arc::new(Label::Epsilon, arc_b.olabel, arc_b.weight, next))?;
            }
        }
    }
    Ok(canonicalize(&fst))
}

fn all_labels(fst: &Automaton, pick: impl Fn(&Arc) -> Label) -> BTreeSet<Label> {
    let mut labels = BTreeSet::new();
    for state in 0..fst.num_states() {
        for arc in fst.arcs(state) {
            let label = pick(arc);
            if !label.is_epsilon() {
                labels.insert(label);
            }
        }
    }
    labels
}

/// Keeps the output tape: every arc's input label is replaced by its
/// output label and the result is an acceptor over output strings.
pub fn project_output(fst: &Automaton) -> Automaton {
    let mut out = Automaton::new(AutomatonKind::Acceptor);
    for _ in 0..fst.num_states() {
        out.add_state();
    }
    out.set_start(fst.start());
    for (state, weight) in fst.final_states() {
        out.set_final(state, weight);
    }
    for state in 0..fst.num_states() {
        for arc in fst.arcs(state) {
            out.add_arc(state, Arc::acceptor(arc.olabel, arc.weight, arc.next))
                .expect("projected arc is label-balanced by construction");
        }
    }
    out
}

/// Removes arcs that are epsilon on every tape, folding their weights
/// into the arcs and final weights reachable through them. Requires an
/// acyclic machine.
pub fn remove_epsilon(fst: &Automaton) -> Result<Automaton, FstError> {
    let order = topological_order(fst)?;
    let is_eps = |arc: &Arc| arc.ilabel.is_epsilon() && arc.olabel.is_epsilon();

    // closures[s]: states reachable from s by epsilon arcs alone, with
    // the tropical-best weight of getting there. Computed leaf-first.
    let mut closures: Vec<BTreeMap<StateId, TropicalWeight>> = vec![BTreeMap::new(); fst.num_states()];
    for &state in order.iter().rev() {
        let mut closure = BTreeMap::from([(state, TropicalWeight::one())]);
        for arc in fst.arcs(state) {
            if !is_eps(arc) {
                continue;
            }
            for (&target, &weight) in &closures[arc.next] {
                let via = arc.weight.times(weight);
                closure
                    .entry(target)
                    .and_modify(|w| *w = w.plus(via))
                    .or_insert(via);
            }
        }
        closures[state] = closure;
    }

    let mut out = Automaton::new(fst.kind());
    for _ in 0..fst.num_states() {
        out.add_state();
    }
    out.set_start(fst.start());
    for state in 0..fst.num_states() {
        let mut final_weight = TropicalWeight::zero();
        for (&target, &weight) in &closures[state] {
            if let Some(fw) = fst.final_weight(target) {
                final_weight = final_weight.plus(weight.times(fw));
            }
            for arc in fst.arcs(target) {
                if !is_eps(arc) {
                    out.add_arc(
                        state,
                        Arc::new(arc.ilabel, arc.olabel, weight.times(arc.weight), arc.next),
                    )?;
                }
            }
        }
        if !final_weight.is_zero() {
            out.set_final(state, final_weight);
        }
    }
    Ok(canonicalize(&out))
}

/// Subset-construction determinization for acyclic, epsilon-free,
/// unweighted machines (every weight semiring-one). That covers the
/// segmentation output spaces this crate compiles; weighted input is
/// rejected rather than mishandled.
pub fn determinize_acyclic(fst: &Automaton) -> Result<Automaton, FstError> {
    topological_order(fst)?;
    let one = TropicalWeight::one();
    for state in 0..fst.num_states() {
        if let Some(w) = fst.final_weight(state) {
            if w != one {
                return Err(FstError::NotDeterminizable("final weights must be semiring-one"));
            }
        }
        for arc in fst.arcs(state) {
            if arc.weight != one {
                return Err(FstError::NotDeterminizable("arc weights must be semiring-one"));
            }
            if arc.ilabel.is_epsilon() && arc.olabel.is_epsilon() {
                return Err(FstError::NotDeterminizable("run remove_epsilon first"));
            }
        }
    }

    let mut out = Automaton::new(fst.kind());
    let mut ids: HashMap<Vec<StateId>, StateId> = HashMap::new();
    let mut queue: VecDeque<Vec<StateId>> = VecDeque::new();

    let first: Vec<StateId> = vec![fst.start()];
    let start = out.add_state();
    out.set_start(start);
    ids.insert(first.clone(), start);
    queue.push_back(first);

    while let Some(subset) = queue.pop_front() {
        let here = ids[&subset];
        if subset.iter().any(|&s| fst.is_final(s)) {
            out.set_final(here, one);
        }
        let mut moves: BTreeMap<(Label, Label), BTreeSet<StateId>> = BTreeMap::new();
        for &state in &subset {
            for arc in fst.arcs(state) {
                moves.entry((arc.ilabel, arc.olabel)).or_default().insert(arc.next);
            }
        }
        for ((ilabel, olabel), targets) in moves {
            let key: Vec<StateId> = targets.into_iter().collect();
            let next = match ids.get(&key) {
                Some(&id) => id,
                None => {
                    let id = out.add_state();
                    ids.insert(key.clone(), id);
                    queue.push_back(key);
                    id
                }
            };
            out.add_arc(here, Arc::new(ilabel, olabel, one, next))?;
        }
    }
    Ok(canonicalize(&out))
}

/// Number of accepting paths from the start state. Requires an acyclic
/// machine; paths through states that cannot reach a final contribute
/// nothing.
pub fn count_paths(fst: &Automaton) -> Result<u64, FstError> {
    let order = topological_order(fst)?;
    let mut counts = vec![0u64; fst.num_states()];
    for &state in order.iter().rev() {
        let mut total: u64 = u64::from(fst.is_final(state));
        for arc in fst.arcs(state) {
            total = total
                .checked_add(counts[arc.next])
                .expect("path count overflows u64");
        }
        counts[state] = total;
    }
    Ok(counts[fst.start()])
}

/// Tropical shortest distance from start to any final state, or `None`
/// when the language is empty. Requires an acyclic machine.
pub fn shortest_distance(fst: &Automaton) -> Result<Option<TropicalWeight>, FstError> {
    let order = topological_order(fst)?;
    let mut best = vec![TropicalWeight::zero(); fst.num_states()];
    for &state in order.iter().rev() {
        let mut here = fst.final_weight(state).unwrap_or_else(TropicalWeight::zero);
        for arc in fst.arcs(state) {
            here = here.plus(arc.weight.times(best[arc.next]));
        }
        best[state] = here;
    }
    let d = best[fst.start()];
    Ok(if d.is_zero() { None } else { Some(d) })
}

/// All accepting paths of an acyclic machine, in depth-first arc order.
/// Exponential in general; intended for small machines in tests and
/// oracles.
pub fn enumerate_paths(fst: &Automaton) -> Result<Vec<Path>, FstError> {
    topological_order(fst)?;
    let mut paths = Vec::new();
    let mut ilabels = Vec::new();
    let mut olabels = Vec::new();
    walk(fst, fst.start(), TropicalWeight::one(), &mut ilabels, &mut olabels, &mut paths);
    Ok(paths)
}

fn walk(
    fst: &Automaton,
    state: StateId,
    weight: TropicalWeight,
    ilabels: &mut Vec<Label>,
    olabels: &mut Vec<Label>,
    paths: &mut Vec<Path>,
) {
    if let Some(fw) = fst.final_weight(state) {
        paths.push(Path {
            ilabels: ilabels.clone(),
            olabels: olabels.clone(),
            weight: weight.times(fw),
        });
    }
    for arc in fst.arcs(state) {
        let pushed_i = !arc.ilabel.is_epsilon();
        let pushed_o = !arc.olabel.is_epsilon();
        if pushed_i {
            ilabels.push(arc.ilabel);
        }
        if pushed_o {
            olabels.push(arc.olabel);
        }
        walk(fst, arc.next, weight.times(arc.weight), ilabels, olabels, paths);
        if pushed_i {
            ilabels.pop();
        }
        if pushed_o {
            olabels.pop();
        }
    }
}

/// Kahn's algorithm over the whole state set, smallest id first, so the
/// order is a deterministic function of the machine. Fails with
/// [`FstError::NotAcyclic`] if any cycle exists.
pub fn topological_order(fst: &Automaton) -> Result<Vec<StateId>, FstError> {
    let mut indegree = vec![0usize; fst.num_states()];
    for state in 0..fst.num_states() {
        for arc in fst.arcs(state) {
            indegree[arc.next] += 1;
        }
    }
    let mut ready: BinaryHeap<Reverse<StateId>> = indegree
        .iter()
        .enumerate()
        .filter_map(|(s, &d)| (d == 0).then_some(Reverse(s)))
        .collect();
    let mut order = Vec::with_capacity(fst.num_states());
    while let Some(Reverse(state)) = ready.pop() {
        order.push(state);
        for arc in fst.arcs(state) {
            indegree[arc.next] -= 1;
            if indegree[arc.next] == 0 {
                ready.push(Reverse(arc.next));
            }
        }
    }
    if order.len() == fst.num_states() {
        Ok(order)
    } else {
        Err(FstError::NotAcyclic)
    }
}

/// Canonical form: states unreachable from the start or unable to reach
/// a final state are dropped, the rest are renumbered in topological
/// order from the start (breadth-first order for cyclic machines), and
/// arcs are sorted. A machine with an empty language collapses to a
/// single non-final state.
pub fn canonicalize(fst: &Automaton) -> Automaton {
    let keep = live_states(fst);
    let mut out = Automaton::new(fst.kind());
    if !keep[fst.start()] {
        let start = out.add_state();
        out.set_start(start);
        return out;
    }

    let order = state_order(fst, &keep);
    let mut renumber: HashMap<StateId, StateId> = HashMap::with_capacity(order.len());
    for &old in &order {
        let new = out.add_state();
        renumber.insert(old, new);
    }
    out.set_start(renumber[&fst.start()]);
    for &old in &order {
        let new = renumber[&old];
        if let Some(w) = fst.final_weight(old) {
            out.set_final(new, w);
        }
        let mut arcs: Vec<Arc> = fst
            .arcs(old)
            .iter()
            .filter(|a| keep[a.next])
            .map(|a| Arc::new(a.ilabel, a.olabel, a.weight, renumber[&a.next]))
            .collect();
        arcs.sort_by_key(|a| (a.ilabel, a.olabel, a.next, a.weight.order_bits()));
        for arc in arcs {
            out.add_arc(new, arc).expect("renumbered arc stays valid");
        }
    }
    out
}

fn live_states(fst: &Automaton) -> Vec<bool> {
    let n = fst.num_states();
    if n == 0 {
        return Vec::new();
    }
    let mut forward = vec![false; n];
    let mut stack = vec![fst.start()];
    forward[fst.start()] = true;
    while let Some(state) = stack.pop() {
        for arc in fst.arcs(state) {
            if !forward[arc.next] {
                forward[arc.next] = true;
                stack.push(arc.next);
            }
        }
    }
    let mut reverse: Vec<Vec<StateId>> = vec![Vec::new(); n];
    for state in 0..n {
        for arc in fst.arcs(state) {
            reverse[arc.next].push(state);
        }
    }
    let mut backward = vec![false; n];
    let mut stack: Vec<StateId> = fst.final_states().map(|(s, _)| s).collect();
    for &s in &stack {
        backward[s] = true;
    }
    while let Some(state) = stack.pop() {
        for &prev in &reverse[state] {
            if !backward[prev] {
                backward[prev] = true;
                stack.push(prev);
            }
        }
    }
    forward.into_iter().zip(backward).map(|(f, b)| f && b).collect()
}

/// Topological order over the kept states, or breadth-first order from
/// the start when the kept subgraph is cyclic.
fn state_order(fst: &Automaton, keep: &[bool]) -> Vec<StateId> {
    let mut indegree = vec![0usize; fst.num_states()];
    for state in 0..fst.num_states() {
        if !keep[state] {
            continue;
        }
        for arc in fst.arcs(state) {
            if keep[arc.next] {
                indegree[arc.next] += 1;
            }
        }
    }
    let mut ready: BinaryHeap<Reverse<StateId>> = BinaryHeap::new();
    for (state, &kept) in keep.iter().enumerate() {
        if kept && indegree[state] == 0 {
            ready.push(Reverse(state));
        }
    }
    let total = keep.iter().filter(|&&k| k).count();
    let mut order = Vec::with_capacity(total);
    while let Some(Reverse(state)) = ready.pop() {
        order.push(state);
        for arc in fst.arcs(state) {
            if keep[arc.next] {
                indegree[arc.next] -= 1;
                if indegree[arc.next] == 0 {
                    ready.push(Reverse(arc.next));
                }
            }
        }
    }
    if order.len() == total {
        return order;
    }

    let mut seen = vec![false; fst.num_states()];
    let mut order = Vec::with_capacity(total);
    let mut queue = VecDeque::from([fst.start()]);
    seen[fst.start()] = true;
    while let Some(state) = queue.pop_front() {
        order.push(state);
        for arc in fst.arcs(state) {
            if keep[arc.next] && !seen[arc.next] {
                seen[arc.next] = true;
                queue.push_back(arc.next);
            }
        }
    }
    order
}
