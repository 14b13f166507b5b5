//! Token sequences and segmentations, the domain types everything else
//! consumes.
//!
//! A passage is a flat list of tokens; a segmentation is the set of cut
//! points splitting it into units. Boundaries are indices into the gap
//! *before* a token, so they range over `1..n` for a passage of `n`
//! tokens: position 0 (before the first token) and position `n` (after
//! the last) are not boundaries, they are the passage edges.

use std::fmt;

/// Surface form of the boundary marker in all text I/O.
pub const DELIMITER_TEXT: &str = "<SENT>";

/// Surface form of the out-of-window token offered to unconstrained
/// decoding.
pub const UNKNOWN_TEXT: &str = "<unk>";

/// Surface form of the end-of-window event in the external scorer
/// protocol.
pub const END_TEXT: &str = "</s>";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TextError {
    #[error("boundary position {position} out of range for passage of {len} tokens")]
    BoundaryOutOfRange { position: usize, len: usize },
}

/// An ordered list of tokens with an identifier for diagnostics.
///
/// Tokens are expected to be lowercase and punctuation-free; this type
/// does not enforce that (the CLI warns instead) because the decoder and
/// aligner work on arbitrary strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    id: String,
    tokens: Vec<String>,
}

impl TokenSeq {
    pub fn new(id: impl Into<String>, tokens: Vec<String>) -> Self {
        TokenSeq { id: id.into(), tokens }
    }

    /// Whitespace-tokenizes one line of input.
    pub fn from_line(id: impl Into<String>, line: &str) -> Self {
        TokenSeq::new(id, tokenize(line))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, idx: usize) -> Option<&str> {
        self.tokens.get(idx).map(String::as_str)
    }

    /// A sub-sequence covering `start..end`, with a derived id.
    pub fn window(&self, start: usize, end: usize) -> TokenSeq {
        TokenSeq {
            id: format!("{}[{start}..{end}]", self.id),
            tokens: self.tokens[start..end].to_vec(),
        }
    }
}

impl std::ops::Deref for TokenSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.tokens
    }
}

/// Splits a line on whitespace into owned tokens.
pub fn tokenize(line: &str) -> Vec<String> {
    line.split_whitespace().map(str::to_owned).collect()
}

/// A set of cut points over a passage of known length.
///
/// Always valid by construction: boundaries are sorted, unique, and
/// strictly inside `(0, len)`. The empty set is the one-segment
/// segmentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    len: usize,
    boundaries: Vec<usize>,
}

impl Segmentation {
    /// Builds a segmentation from arbitrary positions, sorting and
    /// deduplicating them. Positions outside `(0, len)` are rejected.
    pub fn new(len: usize, positions: impl IntoIterator<Item = usize>) -> Result<Self, TextError> {
        let mut boundaries: Vec<usize> = positions.into_iter().collect();
        boundaries.sort_unstable();
        boundaries.dedup();
        for &position in &boundaries {
            if position == 0 || position >= len {
                return Err(TextError::BoundaryOutOfRange { position, len });
            }
        }
        Ok(Segmentation { len, boundaries })
    }

    pub fn empty(len: usize) -> Self {
        Segmentation { len, boundaries: Vec::new() }
    }

    /// Length of the underlying passage in tokens.
    pub fn passage_len(&self) -> usize {
        self.len
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn contains(&self, position: usize) -> bool {
        self.boundaries.binary_search(&position).is_ok()
    }

    /// Token count of each segment, in order. A passage of `n > 0`
    /// tokens with `b` boundaries has `b + 1` segments summing to `n`.
    pub fn segment_lengths(&self) -> Vec<usize> {
        let mut lengths = Vec::with_capacity(self.boundaries.len() + 1);
        let mut prev = 0;
        for &b in &self.boundaries {
            lengths.push(b - prev);
            prev = b;
        }
        lengths.push(self.len - prev);
        lengths
    }

    /// Segments as `(start, end)` half-open spans.
    pub fn segment_spans(&self) -> Vec<(usize, usize)> {
        let mut spans = Vec::with_capacity(self.boundaries.len() + 1);
        let mut prev = 0;
        for &b in &self.boundaries {
            spans.push((prev, b));
            prev = b;
        }
        spans.push((prev, self.len));
        spans
    }
}

impl fmt::Display for Segmentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, b) in self.boundaries.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{b}")?;
        }
        write!(f, "}}/{}", self.len)
    }
}

/// Interleaves delimiter tokens into a passage at the segmentation's
/// boundaries.
///
/// Panics if the segmentation was built for a different passage length.
pub fn annotate(tokens: &[String], seg: &Segmentation) -> Vec<String> {
    assert_eq!(tokens.len(), seg.passage_len(), "segmentation built for a different passage");
    let mut out = Vec::with_capacity(tokens.len() + seg.boundaries().len());
    for (i, tok) in tokens.iter().enumerate() {
        if i > 0 && seg.contains(i) {
            out.push(DELIMITER_TEXT.to_owned());
        }
        out.push(tok.clone());
    }
    out
}

/// Renders a passage with `<SENT>` markers as a single line.
pub fn render(tokens: &[String], seg: &Segmentation) -> String {
    annotate(tokens, seg).join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_splits_on_any_whitespace() {
        assert_eq!(tokenize("i came\ti saw  i conquered"), vec!["i", "came", "i", "saw", "i", "conquered"]);
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn segmentation_sorts_and_dedups() {
        let seg = Segmentation::new(10, vec![7, 3, 7, 5]).unwrap();
        assert_eq!(seg.boundaries(), &[3, 5, 7]);
    }

    #[test]
    fn segmentation_rejects_edges() {
        assert_eq!(
            Segmentation::new(4, vec![0]),
            Err(TextError::BoundaryOutOfRange { position: 0, len: 4 })
        );
        assert_eq!(
            Segmentation::new(4, vec![4]),
            Err(TextError::BoundaryOutOfRange { position: 4, len: 4 })
        );
        assert!(Segmentation::new(4, vec![1, 2, 3]).is_ok());
    }

    #[test]
    fn segment_lengths_sum_to_passage_len() {
        let seg = Segmentation::new(9, vec![2, 6]).unwrap();
        assert_eq!(seg.segment_lengths(), vec![2, 4, 3]);
        assert_eq!(seg.segment_spans(), vec![(0, 2), (2, 6), (6, 9)]);
        let none = Segmentation::empty(5);
        assert_eq!(none.segment_lengths(), vec![5]);
    }

    #[test]
    fn annotate_inserts_markers_at_boundaries() {
        let tokens = tokenize("i am hungry i am sleepy");
        let seg = Segmentation::new(6, vec![3]).unwrap();
        assert_eq!(render(&tokens, &seg), "i am hungry <SENT> i am sleepy");
        assert_eq!(render(&tokens, &Segmentation::empty(6)), "i am hungry i am sleepy");
    }

    #[test]
    fn window_slices_and_renames() {
        let seq = TokenSeq::from_line("p1", "a b c d e");
        let win = seq.window(1, 4);
        assert_eq!(win.tokens(), &["b", "c", "d"]);
        assert_eq!(win.id(), "p1[1..4]");
    }
}
