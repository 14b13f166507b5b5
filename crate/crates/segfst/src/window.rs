//! Sliding-window inference over passages longer than one window.
//!
//! Windows of `w` tokens advance by `w - b`, so consecutive windows
//! share `b` tokens of context. Each window decodes independently;
//! a boundary is adopted only if it falls in the window's own adoption
//! span, which splits every overlap `r` tokens before the following
//! window starts. The spans partition the passage, so every position is
//! adjudicated by exactly one window and stitching is order-free.

use std::ops::Range;

use crate::decode::{decode_window, DecodeConfig, DecodeError, DecodeOutcome};
use crate::scoring::Scorer;
use crate::text::{Segmentation, TokenSeq};

/// Window geometry: window size `w`, overlap `b`, and split-back `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    window: usize,
    overlap: usize,
    split_back: usize,
}

impl WindowSpec {
    pub fn new(window: usize, overlap: usize, split_back: usize) -> Result<Self, WindowError> {
        if split_back > overlap || overlap >= window {
            return Err(WindowError::InvalidSpec { window, overlap, split_back });
        }
        Ok(WindowSpec { window, overlap, split_back })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn overlap(&self) -> usize {
        self.overlap
    }

    pub fn split_back(&self) -> usize {
        self.split_back
    }
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec { window: 40, overlap: 10, split_back: 5 }
    }
}

/// One planned window: the token span it decodes and the span of
/// boundary positions it owns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedWindow {
    pub span: Range<usize>,
    pub adopt: Range<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum WindowError {
    #[error("window geometry needs split_back <= overlap < window, got ({window}, {overlap}, {split_back})")]
    InvalidSpec { window: usize, overlap: usize, split_back: usize },
    #[error("cannot plan windows over an empty passage")]
    EmptyPassage,
    #[error("window {index} over tokens {span:?} failed: {source}")]
    Decode { index: usize, span: Range<usize>, source: DecodeError },
}

/// Plans the window spans and adoption spans for an `n`-token passage.
///
/// The adoption spans partition `[0, n)`: the first window owns
/// everything up to `r` tokens before its end, each later window picks
/// up from there, and the last window runs through the end of the
/// passage.
pub fn make_windows(n: usize, spec: &WindowSpec) -> Result<Vec<PlannedWindow>, WindowError> {
    if n == 0 {
        return Err(WindowError::EmptyPassage);
    }
    if n <= spec.window {
        return Ok(vec![PlannedWindow { span: 0..n, adopt: 0..n }]);
    }
    let stride = spec.window - spec.overlap;
    let handoff = spec.overlap - spec.split_back;
    let mut plan = Vec::new();
    for k in 0.. {
        let start = k * stride;
        let last = start + spec.window >= n;
        let span = start..if last { n } else { start + spec.window };
        let adopt_start = if k == 0 { 0 } else { start + handoff };
        let adopt_end = if last { n } else { span.end - spec.split_back };
        plan.push(PlannedWindow { span, adopt: adopt_start..adopt_end });
        if last {
            break;
        }
    }
    Ok(plan)
}

/// Per-window record kept alongside the stitched result.
#[derive(Debug)]
pub struct WindowOutcome {
    pub index: usize,
    pub span: Range<usize>,
    pub adopt: Range<usize>,
    pub decode: DecodeOutcome,
}

/// A segmented passage with its per-window diagnostics.
#[derive(Debug)]
pub struct PassageOutcome {
    pub segmentation: Segmentation,
    pub windows: Vec<WindowOutcome>,
}

impl PassageOutcome {
    /// Fraction of windows whose raw output was admissible.
    pub fn wellformed_rate(&self) -> f64 {
        crate::eval::wellformed_rate(
            &self.windows.iter().map(|w| w.decode.wellformed).collect::<Vec<_>>(),
        )
    }
}

/// Segments a whole passage: plan windows, decode each, adopt each
/// window's boundaries within its own span, and merge.
pub fn segment_passage(
    passage: &TokenSeq,
    spec: &WindowSpec,
    scorer: &dyn Scorer,
    cfg: &DecodeConfig,
) -> Result<PassageOutcome, WindowError> {
    let plan = make_windows(passage.len(), spec)?;
    let mut boundaries = Vec::new();
    let mut windows = Vec::with_capacity(plan.len());
    for (index, planned) in plan.into_iter().enumerate() {
        let tokens = passage.window(planned.span.start, planned.span.end);
        let decode = decode_window(scorer, &tokens, cfg).map_err(|source| {
            WindowError::Decode { index, span: planned.span.clone(), source }
        })?;
        if let Some(seg) = &decode.segmentation {
            for &b in seg.boundaries() {
                let global = planned.span.start + b;
                if planned.adopt.contains(&global) {
                    boundaries.push(global);
                }
            }
        }
        log::debug!(
            "window {index} {:?} adopt {:?} wellformed={} score={:.3}",
            planned.span,
            planned.adopt,
            decode.wellformed,
            decode.score
        );
        windows.push(WindowOutcome { index, span: planned.span, adopt: planned.adopt, decode });
    }
    let segmentation =
        Segmentation::new(passage.len(), boundaries).expect("adopted boundaries are internal");
    Ok(PassageOutcome { segmentation, windows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::{CopyScorer, MarkerScorer, RandomScorer};

    fn spec(w: usize, b: usize, r: usize) -> WindowSpec {
        WindowSpec::new(w, b, r).unwrap()
    }

    #[test]
    fn geometry_is_validated() {
        assert!(WindowSpec::new(40, 10, 5).is_ok());
        assert!(WindowSpec::new(40, 10, 10).is_ok());
        assert!(WindowSpec::new(40, 10, 11).is_err());
        assert!(WindowSpec::new(40, 40, 5).is_err());
        assert!(WindowSpec::new(1, 0, 0).is_ok());
    }

    #[test]
    fn short_passages_get_one_window() {
        let plan = make_windows(40, &spec(40, 10, 5)).unwrap();
        assert_eq!(plan, vec![PlannedWindow { span: 0..40, adopt: 0..40 }]);
        let plan = make_windows(3, &spec(40, 10, 5)).unwrap();
        assert_eq!(plan, vec![PlannedWindow { span: 0..3, adopt: 0..3 }]);
    }

    #[test]
    fn hundred_token_passage_plans_three_windows() {
        let plan = make_windows(100, &spec(40, 10, 5)).unwrap();
        let spans: Vec<_> = plan.iter().map(|p| p.span.clone()).collect();
        let adopts: Vec<_> = plan.iter().map(|p| p.adopt.clone()).collect();
        assert_eq!(spans, vec![0..40, 30..70, 60..100]);
        assert_eq!(adopts, vec![0..35, 35..65, 65..100]);
    }

    #[test]
    fn barely_overlong_passage_plans_two_windows() {
        let plan = make_windows(41, &spec(40, 10, 5)).unwrap();
        let spans: Vec<_> = plan.iter().map(|p| p.span.clone()).collect();
        let adopts: Vec<_> = plan.iter().map(|p| p.adopt.clone()).collect();
        assert_eq!(spans, vec![0..40, 30..41]);
        assert_eq!(adopts, vec![0..35, 35..41]);
    }

    #[test]
    fn empty_passages_are_rejected() {
        assert!(matches!(make_windows(0, &spec(40, 10, 5)), Err(WindowError::EmptyPassage)));
    }

    #[test]
    fn adoption_spans_partition_every_length() {
        for n in 1..=500 {
            for spec in [spec(40, 10, 5), spec(7, 3, 0), spec(7, 3, 3), spec(2, 1, 1)] {
                let plan = make_windows(n, &spec).unwrap();
                let mut cursor = 0;
                for (i, p) in plan.iter().enumerate() {
                    assert_eq!(p.adopt.start, cursor, "gap before window {i} at n={n} {spec:?}");
                    assert!(p.adopt.end > p.adopt.start, "empty adoption at n={n} {spec:?}");
                    assert!(p.adopt.start >= p.span.start && p.adopt.end <= p.span.end);
                    assert!(p.span.end - p.span.start <= spec.window());
                    cursor = p.adopt.end;
                }
                assert_eq!(cursor, n, "spans stop short at n={n} {spec:?}");
            }
        }
    }

    #[test]
    fn single_window_passage_matches_direct_decoding() {
        let passage = TokenSeq::from_line("p", "a b cut c d cut e");
        let scorer = MarkerScorer::new("cut");
        let cfg = DecodeConfig::default();
        let direct = decode_window(&scorer, &passage, &cfg).unwrap();
        let out = segment_passage(&passage, &spec(40, 10, 5), &scorer, &cfg).unwrap();
        assert_eq!(out.windows.len(), 1);
        assert_eq!(out.segmentation, direct.segmentation.unwrap());
        assert_eq!(out.windows[0].decode.generated, direct.generated);
    }

    #[test]
    fn long_passage_recovers_marked_boundaries_across_windows() {
        // 60 tokens, a marker every 6: boundaries at 6, 12, .., 54,
        // spanning multiple windows of 16.
        let tokens: Vec<String> = (0..60)
            .map(|i| if i % 6 == 0 && i > 0 { "cut".to_owned() } else { format!("w{}", i % 4) })
            .collect();
        let passage = TokenSeq::new("p", tokens);
        let out = segment_passage(
            &passage,
            &spec(16, 6, 3),
            &MarkerScorer::new("cut"),
            &DecodeConfig::default(),
        )
        .unwrap();
        let want: Vec<usize> = (1..10).map(|i| i * 6).collect();
        assert_eq!(out.segmentation.boundaries(), want.as_slice());
        assert!((out.wellformed_rate() - 1.0).abs() < f64::EPSILON);
    }

    #[test]
    fn copy_scorer_yields_no_boundaries_anywhere() {
        let tokens: Vec<String> = (0..137).map(|i| format!("w{}", i % 11)).collect();
        let passage = TokenSeq::new("p", tokens);
        let out = segment_passage(
            &passage,
            &spec(20, 8, 4),
            &CopyScorer,
            &DecodeConfig::default(),
        )
        .unwrap();
        assert!(out.segmentation.boundaries().is_empty());
        assert_eq!(out.segmentation.passage_len(), 137);
    }

    #[test]
    fn stitching_is_exactly_the_adoption_filter() {
        let tokens: Vec<String> = (0..90).map(|i| format!("w{}", i % 7)).collect();
        let passage = TokenSeq::new("p", tokens);
        let out = segment_passage(
            &passage,
            &spec(25, 10, 5),
            &RandomScorer::new(42),
            &DecodeConfig::default(),
        )
        .unwrap();
        let mut expected = std::collections::BTreeSet::new();
        for window in &out.windows {
            let seg = window.decode.segmentation.as_ref().unwrap();
            for &b in seg.boundaries() {
                let global = window.span.start + b;
                if window.adopt.contains(&global) {
                    expected.insert(global);
                }
            }
        }
        let expected: Vec<usize> = expected.into_iter().collect();
        assert_eq!(out.segmentation.boundaries(), expected.as_slice());
        // The random scorer should cut somewhere, or this asserts nothing.
        assert!(!expected.is_empty());
    }

    #[test]
    fn decode_failures_name_the_window() {
        struct FailAfterFirst;
        impl crate::scoring::Scorer for FailAfterFirst {
            fn score_next(
                &self,
                ctx: &crate::scoring::ScorerContext<'_>,
                candidates: &[crate::fst::Candidate],
            ) -> Result<Vec<f64>, crate::scoring::ScoringError> {
                if ctx.window.id().contains("[25..") {
                    return Err(crate::scoring::ScoringError::Unavailable("down".to_owned()));
                }
                Ok(vec![0.0; candidates.len()])
            }
        }
        let tokens: Vec<String> = (0..80).map(|i| format!("w{i}")).collect();
        let passage = TokenSeq::new("p", tokens);
        let err = segment_passage(
            &passage,
            &spec(40, 15, 5),
            &FailAfterFirst,
            &DecodeConfig::default(),
        )
        .unwrap_err();
        match err {
            WindowError::Decode { index, span, .. } => {
                assert_eq!(index, 1);
                assert_eq!(span, 25..65);
            }
            other => panic!("wrong error: {other}"),
        }
    }
}
