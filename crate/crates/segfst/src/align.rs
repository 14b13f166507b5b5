//! Token-level Levenshtein alignment and boundary projection.
//!
//! When decoding runs without the output-space constraint, the model is
//! free to drop, invent, or rewrite tokens. The repair path recovers a
//! valid segmentation of the true input anyway: strip the delimiters
//! from the raw output, align the stripped tokens to the input, and
//! carry each boundary through the alignment.

use crate::text::{Segmentation, TokenSeq, DELIMITER_TEXT};

/// One step of an alignment between a source and a target sequence.
/// Indices are 0-based positions in the respective sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    Match { src: usize, tgt: usize },
    Substitute { src: usize, tgt: usize },
    Delete { src: usize },
    Insert { tgt: usize },
}

/// A minimum-cost edit script, under unit costs for substitution,
/// deletion, and insertion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentPath {
    ops: Vec<EditOp>,
    cost: usize,
    src_len: usize,
    tgt_len: usize,
}

impl AlignmentPath {
    pub fn ops(&self) -> &[EditOp] {
        &self.ops
    }

    pub fn cost(&self) -> usize {
        self.cost
    }

    pub fn src_len(&self) -> usize {
        self.src_len
    }

    pub fn tgt_len(&self) -> usize {
        self.tgt_len
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum AlignError {
    #[error("segmentation covers {seg} tokens but the alignment source covers {path}")]
    SourceLengthMismatch { seg: usize, path: usize },
    #[error("target length {given} does not match the alignment target {path}")]
    TargetLengthMismatch { given: usize, path: usize },
}

/// Aligns `src` to `tgt` with minimum edit cost. Ties are broken
/// deterministically, preferring Match, then Substitute, then Delete,
/// then Insert at each step of the backtrace.
pub fn levenshtein_align(src: &[String], tgt: &[String]) -> AlignmentPath {
    let m = src.len();
    let k = tgt.len();
    let mut dist = vec![vec![0usize; k + 1]; m + 1];
    for i in 0..=m {
        dist[i][0] = i;
    }
    for j in 0..=k {
        dist[0][j] = j;
    }
    for i in 1..=m {
        for j in 1..=k {
            let sub = dist[i - 1][j - 1] + usize::from(src[i - 1] != tgt[j - 1]);
            let del = dist[i - 1][j] + 1;
            let ins = dist[i][j - 1] + 1;
            dist[i][j] = sub.min(del).min(ins);
        }
    }

    let mut ops = Vec::with_capacity(m.max(k));
    let (mut i, mut j) = (m, k);
    while i > 0 || j > 0 {
        let here = dist[i][j];
        if i > 0 && j > 0 && src[i - 1] == tgt[j - 1] && dist[i - 1][j - 1] == here {
            ops.push(EditOp::Match { src: i - 1, tgt: j - 1 });
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && dist[i - 1][j - 1] + 1 == here {
            ops.push(EditOp::Substitute { src: i - 1, tgt: j - 1 });
            i -= 1;
            j -= 1;
        } else if i > 0 && dist[i - 1][j] + 1 == here {
            ops.push(EditOp::Delete { src: i - 1 });
            i -= 1;
        } else {
            ops.push(EditOp::Insert { tgt: j - 1 });
            j -= 1;
        }
    }
    ops.reverse();
    AlignmentPath { ops, cost: dist[m][k], src_len: m, tgt_len: k }
}

/// Carries boundaries of the alignment source over to the target.
///
/// A boundary before source token `p` lands before the target image of
/// the first source token at or after `p`. Skipping forward over
/// deleted tokens attaches the boundary to the right, which keeps it
/// next to the material it actually precedes. Boundaries that fall off
/// either end of the target are dropped, and collisions collapse.
pub fn project_boundaries(
    seg: &Segmentation,
    path: &AlignmentPath,
    tgt_len: usize,
) -> Result<Segmentation, AlignError> {
    if seg.passage_len() != path.src_len() {
        return Err(AlignError::SourceLengthMismatch {
            seg: seg.passage_len(),
            path: path.src_len(),
        });
    }
    if tgt_len != path.tgt_len() {
        return Err(AlignError::TargetLengthMismatch { given: tgt_len, path: path.tgt_len() });
    }

    // Source-to-target images of aligned (matched or substituted)
    // tokens, in increasing src order by construction.
    let aligned: Vec<(usize, usize)> = path
        .ops()
        .iter()
        .filter_map(|op| match *op {
            EditOp::Match { src, tgt } | EditOp::Substitute { src, tgt } => Some((src, tgt)),
            _ => None,
        })
        .collect();

    let mut projected = Vec::new();
    for &p in seg.boundaries() {
        let slot = aligned.partition_point(|&(src, _)| src < p);
        if let Some(&(_, tgt)) = aligned.get(slot) {
            if tgt > 0 && tgt < tgt_len {
                projected.push(tgt);
            }
        }
    }
    Ok(Segmentation::new(tgt_len, projected).expect("projected boundaries are internal"))
}

/// Repairs a raw decoder output into a segmentation of `input`.
///
/// Delimiters are stripped out of `generated`, the remaining tokens are
/// aligned to `input`, and each boundary is projected through the
/// alignment. Total: any output, including one that shares no tokens
/// with the input, yields some valid segmentation.
pub fn repair_output(generated: &[String], input: &TokenSeq) -> Segmentation {
    let mut stripped = Vec::with_capacity(generated.len());
    let mut cuts = Vec::new();
    for tok in generated {
        if tok == DELIMITER_TEXT {
            cuts.push(stripped.len());
        } else {
            stripped.push(tok.clone());
        }
    }
    let cuts: Vec<usize> = cuts.into_iter().filter(|&c| c > 0 && c < stripped.len()).collect();
    let raw = Segmentation::new(stripped.len(), cuts).expect("cuts filtered to internal range");
    let path = levenshtein_align(&stripped, input.tokens());
    project_boundaries(&raw, &path, input.len()).expect("alignment spans both sequences")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fst::{shortest_distance, Arc, Automaton, AutomatonKind, Label, TropicalWeight};
    use proptest::prelude::*;

    fn toks(line: &str) -> Vec<String> {
        line.split_whitespace().map(str::to_owned).collect()
    }

    fn seq(line: &str) -> TokenSeq {
        TokenSeq::from_line("t", line)
    }

    #[test]
    fn substitution_in_the_middle() {
        let path = levenshtein_align(&toks("a b c"), &toks("a x c"));
        assert_eq!(path.cost(), 1);
        assert_eq!(
            path.ops(),
            &[
                EditOp::Match { src: 0, tgt: 0 },
                EditOp::Substitute { src: 1, tgt: 1 },
                EditOp::Match { src: 2, tgt: 2 },
            ]
        );
    }

    #[test]
    fn deletion_at_the_end() {
        let path = levenshtein_align(&toks("a b"), &toks("a"));
        assert_eq!(path.cost(), 1);
        assert_eq!(path.ops(), &[EditOp::Match { src: 0, tgt: 0 }, EditOp::Delete { src: 1 }]);
    }

    #[test]
    fn insertion_at_the_front() {
        let path = levenshtein_align(&toks("a"), &toks("b a"));
        assert_eq!(path.cost(), 1);
        assert_eq!(path.ops(), &[EditOp::Insert { tgt: 0 }, EditOp::Match { src: 0, tgt: 1 }]);
    }

    #[test]
    fn ties_prefer_substitution_over_indels() {
        let path = levenshtein_align(&toks("a b"), &toks("b a"));
        assert_eq!(path.cost(), 2);
        assert_eq!(
            path.ops(),
            &[EditOp::Substitute { src: 0, tgt: 0 }, EditOp::Substitute { src: 1, tgt: 1 }]
        );
    }

    #[test]
    fn empty_sides() {
        let path = levenshtein_align(&[], &toks("a b"));
        assert_eq!(path.cost(), 2);
        assert_eq!(path.ops(), &[EditOp::Insert { tgt: 0 }, EditOp::Insert { tgt: 1 }]);
        let path = levenshtein_align(&toks("a b"), &[]);
        assert_eq!(path.cost(), 2);
        let path = levenshtein_align(&[], &[]);
        assert_eq!(path.cost(), 0);
        assert!(path.ops().is_empty());
    }

    #[test]
    fn projection_through_identity_is_identity() {
        let src = toks("w1 w2 w3 w4");
        let path = levenshtein_align(&src, &src);
        let seg = Segmentation::new(4, vec![1, 3]).unwrap();
        let projected = project_boundaries(&seg, &path, 4).unwrap();
        assert_eq!(projected.boundaries(), &[1, 3]);
    }

    #[test]
    fn boundary_after_deleted_token_attaches_right() {
        // Boundary before "c"; "b" is deleted. The projected boundary
        // must still sit before "c", not drift left.
        let path = levenshtein_align(&toks("a b c d"), &toks("a c d"));
        let seg = Segmentation::new(4, vec![2]).unwrap();
        let projected = project_boundaries(&seg, &path, 3).unwrap();
        assert_eq!(projected.boundaries(), &[1]);
    }

    #[test]
    fn boundary_projecting_to_an_edge_is_dropped() {
        // The only source token before the boundary is deleted, so the
        // boundary would land at position 0 of the target.
        let path = levenshtein_align(&toks("a b c"), &toks("b c"));
        let seg = Segmentation::new(3, vec![1]).unwrap();
        let projected = project_boundaries(&seg, &path, 2).unwrap();
        assert!(projected.boundaries().is_empty());
    }

    #[test]
    fn colliding_boundaries_collapse() {
        // Both boundaries surround a deleted token and project to the
        // same target position.
        let path = levenshtein_align(&toks("a b c"), &toks("a c"));
        let seg = Segmentation::new(3, vec![1, 2]).unwrap();
        let projected = project_boundaries(&seg, &path, 2).unwrap();
        assert_eq!(projected.boundaries(), &[1]);
    }

    #[test]
    fn length_mismatches_are_rejected() {
        let path = levenshtein_align(&toks("a b"), &toks("a b"));
        let seg = Segmentation::new(3, vec![1]).unwrap();
        assert_eq!(
            project_boundaries(&seg, &path, 2),
            Err(AlignError::SourceLengthMismatch { seg: 3, path: 2 })
        );
        let seg = Segmentation::new(2, vec![1]).unwrap();
        assert_eq!(
            project_boundaries(&seg, &path, 5),
            Err(AlignError::TargetLengthMismatch { given: 5, path: 2 })
        );
    }

    #[test]
    fn repair_passes_exact_output_through() {
        let input = seq("i am hungry i am sleepy");
        let generated = toks("i am hungry <SENT> i am sleepy");
        let seg = repair_output(&generated, &input);
        assert_eq!(seg.boundaries(), &[3]);
    }

    #[test]
    fn repair_survives_hallucinated_and_dropped_tokens() {
        let input = seq("i am hungry i am sleepy");
        // "very" invented, "am" dropped, boundary kept in place.
        let generated = toks("i am very hungry <SENT> i sleepy");
        let seg = repair_output(&generated, &input);
        assert_eq!(seg.boundaries(), &[3]);
    }

    #[test]
    fn repair_of_pure_garbage_still_lands_on_the_input() {
        // The garbage tokens align as substitutions (one insertion at
        // the front), so the boundary survives, shifted to sit between
        // the substituted positions.
        let input = seq("i am hungry");
        let generated = toks("<unk> <SENT> <unk>");
        let seg = repair_output(&generated, &input);
        assert_eq!(seg.passage_len(), 3);
        assert_eq!(seg.boundaries(), &[2]);
    }

    #[test]
    fn repair_drops_edge_and_doubled_delimiters() {
        let input = seq("a b");
        let generated = toks("<SENT> a <SENT> <SENT> b <SENT>");
        let seg = repair_output(&generated, &input);
        assert_eq!(seg.boundaries(), &[1]);
    }

    /// Grid automaton over edit operations: one state per DP cell, a
    /// diagonal arc weighted by token equality plus unit-cost gap arcs.
    /// Its shortest distance must equal the DP cost.
    fn edit_grid_cost(src: &[String], tgt: &[String]) -> f64 {
        let m = src.len();
        let k = tgt.len();
        let mut fst = Automaton::new(AutomatonKind::Acceptor);
        for _ in 0..(m + 1) * (k + 1) {
            fst.add_state();
        }
        let id = |i: usize, j: usize| i * (k + 1) + j;
        let step = Label::Token(2);
        for i in 0..=m {
            for j in 0..=k {
                if i < m && j < k {
                    let w = if src[i] == tgt[j] { 0.0 } else { 1.0 };
                    fst.add_arc(id(i, j), Arc::acceptor(step, TropicalWeight::new(w), id(i + 1, j + 1)))
                        .unwrap();
                }
                if i < m {
                    fst.add_arc(id(i, j), Arc::acceptor(step, TropicalWeight::new(1.0), id(i + 1, j)))
                        .unwrap();
                }
                if j < k {
                    fst.add_arc(id(i, j), Arc::acceptor(step, TropicalWeight::new(1.0), id(i, j + 1)))
                        .unwrap();
                }
            }
        }
        fst.set_final(id(m, k), TropicalWeight::one());
        shortest_distance(&fst).unwrap().expect("grid reaches its corner").value()
    }

    proptest! {
        #[test]
        fn cost_matches_the_edit_grid_automaton(
            src in proptest::collection::vec("[ab c]{1}", 0..8),
            tgt in proptest::collection::vec("[abc d]{1}", 0..8),
        ) {
            let path = levenshtein_align(&src, &tgt);
            prop_assert_eq!(path.cost() as f64, edit_grid_cost(&src, &tgt));
        }

        #[test]
        fn ops_are_monotone_and_cost_counts_non_matches(
            src in proptest::collection::vec("[abcd]{1,2}", 0..10),
            tgt in proptest::collection::vec("[abcd]{1,2}", 0..10),
        ) {
            let path = levenshtein_align(&src, &tgt);
            let mut non_match = 0;
            let (mut next_src, mut next_tgt) = (0usize, 0usize);
            for op in path.ops() {
                match *op {
                    EditOp::Match { src: s, tgt: t } => {
                        prop_assert_eq!((s, t), (next_src, next_tgt));
                        prop_assert_eq!(&src[s], &tgt[t]);
                        next_src += 1;
                        next_tgt += 1;
                    }
                    EditOp::Substitute { src: s, tgt: t } => {
                        prop_assert_eq!((s, t), (next_src, next_tgt));
                        prop_assert_ne!(&src[s], &tgt[t]);
                        next_src += 1;
                        next_tgt += 1;
                        non_match += 1;
                    }
                    EditOp::Delete { src: s } => {
                        prop_assert_eq!(s, next_src);
                        next_src += 1;
                        non_match += 1;
                    }
                    EditOp::Insert { tgt: t } => {
                        prop_assert_eq!(t, next_tgt);
                        next_tgt += 1;
                        non_match += 1;
                    }
                }
            }
            prop_assert_eq!((next_src, next_tgt), (src.len(), tgt.len()));
            prop_assert_eq!(path.cost(), non_match);
        }

        #[test]
        fn repair_is_total_and_valid(
            generated in proptest::collection::vec(
                prop_oneof![Just("<SENT>".to_owned()), "[abc]{1,2}".prop_map(String::from)],
                0..12,
            ),
            input in proptest::collection::vec("[abd]{1,2}", 1..8),
        ) {
            let input = TokenSeq::new("t", input);
            let seg = repair_output(&generated, &input);
            prop_assert_eq!(seg.passage_len(), input.len());
            for &b in seg.boundaries() {
                prop_assert!(b > 0 && b < input.len());
            }
        }
    }
}
