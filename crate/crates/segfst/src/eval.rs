//! Segmentation quality: boundary precision/recall/F1, baseline
//! segmenters, reference extraction from punctuated text, and length
//! diagnostics.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::align::{levenshtein_align, project_boundaries};
use crate::text::{Segmentation, TokenSeq};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("predicted segmentation covers {pred} tokens but the reference covers {gold}")]
    LengthMismatch { pred: usize, gold: usize },
}

/// Precision, recall, and their harmonic mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Micro-average accumulator: counts pool across passages, so long
/// passages weigh more than short ones.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PrfCounts {
    pub predicted: u64,
    pub gold: u64,
    pub matched: u64,
}

impl PrfCounts {
    /// Adds one passage, matching on boundary positions.
    pub fn observe_boundaries(
        &mut self,
        pred: &Segmentation,
        gold: &Segmentation,
    ) -> Result<(), EvalError> {
        check_lengths(pred, gold)?;
        self.predicted += pred.boundaries().len() as u64;
        self.gold += gold.boundaries().len() as u64;
        self.matched += intersection(pred.boundaries(), gold.boundaries());
        Ok(())
    }

    /// Adds one passage, matching on whole segments: a segment counts
    /// only if both its endpoints agree.
    pub fn observe_segments(
        &mut self,
        pred: &Segmentation,
        gold: &Segmentation,
    ) -> Result<(), EvalError> {
        check_lengths(pred, gold)?;
        let pred_spans = pred.segment_spans();
        let gold_spans = gold.segment_spans();
        self.predicted += pred_spans.len() as u64;
        self.gold += gold_spans.len() as u64;
        self.matched +=
            pred_spans.iter().filter(|span| gold_spans.binary_search(span).is_ok()).count() as u64;
        Ok(())
    }

    pub fn prf(&self) -> Prf {
        if self.predicted == 0 && self.gold == 0 {
            return Prf { precision: 1.0, recall: 1.0, f1: 1.0 };
        }
        let precision =
            if self.predicted == 0 { 0.0 } else { self.matched as f64 / self.predicted as f64 };
        let recall = if self.gold == 0 { 0.0 } else { self.matched as f64 / self.gold as f64 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf { precision, recall, f1 }
    }
}

fn check_lengths(pred: &Segmentation, gold: &Segmentation) -> Result<(), EvalError> {
    if pred.passage_len() != gold.passage_len() {
        return Err(EvalError::LengthMismatch {
            pred: pred.passage_len(),
            gold: gold.passage_len(),
        });
    }
    Ok(())
}

fn intersection(a: &[usize], b: &[usize]) -> u64 {
    let set: BTreeSet<usize> = a.iter().copied().collect();
    b.iter().filter(|x| set.contains(x)).count() as u64
}

/// Boundary-level scores for a single passage. Two empty boundary sets
/// count as perfect agreement.
pub fn boundary_prf(pred: &Segmentation, gold: &Segmentation) -> Result<Prf, EvalError> {
    let mut counts = PrfCounts::default();
    counts.observe_boundaries(pred, gold)?;
    Ok(counts.prf())
}

/// Segment-level scores for a single passage: stricter than boundary
/// scores, since one wrong boundary spoils its two segments.
pub fn segment_prf(pred: &Segmentation, gold: &Segmentation) -> Result<Prf, EvalError> {
    let mut counts = PrfCounts::default();
    counts.observe_segments(pred, gold)?;
    Ok(counts.prf())
}

/// Baseline segmenter: a boundary every `every` tokens.
pub fn fixed_length_segment(n: usize, every: usize) -> Segmentation {
    assert!(every >= 1, "segment length must be at least 1");
    let boundaries: Vec<usize> = (1..).map(|i| i * every).take_while(|&b| b < n).collect();
    Segmentation::new(n, boundaries).expect("multiples below n are internal")
}

/// Knobs for reading boundaries out of punctuated reference text.
#[derive(Debug, Clone, Default)]
pub struct OracleOptions {
    /// Lowercased token cores that keep a trailing period from ending a
    /// sentence, e.g. "dr" for "Dr.".
    pub abbreviations: BTreeSet<String>,
}

/// Extracts sentence boundaries from punctuated, cased reference text
/// and normalizes the tokens into transcript-like form: terminal
/// punctuation in `. ! ?` marks a boundary, then each token is
/// lowercased and stripped of leading and trailing punctuation. Tokens
/// that were nothing but punctuation disappear.
pub fn reference_boundaries(
    tokens: &[String],
    opts: &OracleOptions,
) -> (Vec<String>, Segmentation) {
    let mut stripped = Vec::with_capacity(tokens.len());
    let mut cuts = Vec::new();
    for raw in tokens {
        let core: String = raw
            .trim_matches(|c: char| !c.is_alphanumeric())
            .to_lowercase();
        let terminal = raw.ends_with(['.', '!', '?'])
            && !(raw.ends_with('.') && opts.abbreviations.contains(&core));
        if !core.is_empty() {
            stripped.push(core);
        }
        if terminal && !stripped.is_empty() {
            cuts.push(stripped.len());
        }
    }
    let len = stripped.len();
    let cuts: Vec<usize> = cuts.into_iter().filter(|&c| c < len).collect();
    (stripped, Segmentation::new(len, cuts).expect("cuts are internal"))
}

/// Projects reference sentence boundaries onto a transcript that may
/// disagree with the reference token-for-token. The reference is
/// normalized, aligned to the transcript, and its boundaries carried
/// through the alignment.
pub fn oracle_segment(
    reference: &[String],
    transcript: &TokenSeq,
    opts: &OracleOptions,
) -> Segmentation {
    let (stripped, cuts) = reference_boundaries(reference, opts);
    let path = levenshtein_align(&stripped, transcript.tokens());
    project_boundaries(&cuts, &path, transcript.len()).expect("alignment spans both sequences")
}

/// Fraction of passages (or windows) whose raw output was admissible.
/// Vacuously 1 when nothing was decoded.
pub fn wellformed_rate(flags: &[bool]) -> f64 {
    if flags.is_empty() {
        return 1.0;
    }
    flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64
}

/// Histogram geometry: fixed-width bins with one open-ended overflow
/// bin at the top.
#[derive(Debug, Clone, Copy)]
pub struct HistogramSpec {
    pub bin_width: usize,
    pub overflow_from: usize,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        HistogramSpec { bin_width: 10, overflow_from: 50 }
    }
}

/// Distribution of segment lengths.
#[derive(Debug, Clone)]
pub struct LengthHistogram {
    spec: HistogramSpec,
    counts: Vec<u64>,
}

impl LengthHistogram {
    pub fn new(spec: HistogramSpec) -> Self {
        assert!(spec.bin_width >= 1, "bins must be at least one token wide");
        assert!(spec.overflow_from >= spec.bin_width, "overflow below the first bin");
        let bins = spec.overflow_from.div_ceil(spec.bin_width) + 1;
        LengthHistogram { spec, counts: vec![0; bins] }
    }

    pub fn observe(&mut self, seg: &Segmentation) {
        for len in seg.segment_lengths() {
            let bin = if len >= self.spec.overflow_from {
                self.counts.len() - 1
            } else {
                len / self.spec.bin_width
            };
            self.counts[bin] += 1;
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin labels like `0-9`, `10-19`, .., `>=50`.
    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = (0..self.counts.len() - 1)
            .map(|i| {
                let lo = i * self.spec.bin_width;
                let hi = ((i + 1) * self.spec.bin_width - 1).min(self.spec.overflow_from - 1);
                format!("{lo}-{hi}")
            })
            .collect();
        labels.push(format!(">={}", self.spec.overflow_from));
        labels
    }

    /// Two-column CSV: bin label, count.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("segment_length,count\n");
        for (label, count) in self.labels().iter().zip(&self.counts) {
            out.push_str(&format!("{label},{count}\n"));
        }
        out
    }
}

/// One-shot histogram of a single segmentation.
pub fn length_histogram(seg: &Segmentation, spec: &HistogramSpec) -> LengthHistogram {
    let mut hist = LengthHistogram::new(*spec);
    hist.observe(seg);
    hist
}

/// Corpus-level evaluation summary, ready to serialize.
#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub passages: usize,
    pub unit: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub predicted: u64,
    pub gold: u64,
    pub matched: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wellformed_rate: Option<f64>,
    pub length_histogram: Vec<HistogramRow>,
    pub per_passage: Vec<PassageRow>,
}

#[derive(Debug, Serialize)]
pub struct HistogramRow {
    pub bin: String,
    pub count: u64,
}

#[derive(Debug, Serialize)]
pub struct PassageRow {
    pub line: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub predicted: u64,
    pub gold: u64,
    pub matched: u64,
}

impl LengthHistogram {
    pub fn rows(&self) -> Vec<HistogramRow> {
        self.labels()
            .into_iter()
            .zip(&self.counts)
            .map(|(bin, &count)| HistogramRow { bin, count })
            .collect()
    }
}
