//! Count-based n-gram scorer with add-k smoothing.
//!
//! Trained on delimited text, the model treats the boundary delimiter
//! as an ordinary vocabulary item, which is all it takes to score
//! segmentation candidates: decoding asks how plausible a delimiter is
//! here versus copying on.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::fst::Candidate;
use crate::scoring::{Scorer, ScorerContext, ScoringError};
use crate::text::END_TEXT;

/// Add-k smoothed n-gram model over whitespace tokens.
///
/// The vocabulary is exactly the set of token types observed in
/// training. Unseen words (and the end-of-sequence event, which is
/// scored but never counted) get the zero-count probability
/// `k / (c(h) + k|V|)`; contexts back off to their longest observed
/// suffix before smoothing applies.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    order: usize,
    k: f64,
    counts: BTreeMap<String, ContextCounts>,
    vocab: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
struct ContextCounts {
    total: u64,
    follows: BTreeMap<String, u64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    order: usize,
    k: f64,
    counts: BTreeMap<String, BTreeMap<String, u64>>,
}

const MODEL_VERSION: u32 = 1;

impl NgramModel {
    /// Counts n-grams of every length up to `order` over the corpus,
    /// one token sequence per entry.
    pub fn train(corpus: &[Vec<String>], order: usize, k: f64) -> Result<Self, ScoringError> {
        if order == 0 {
            return Err(ScoringError::InvalidOrder(order));
        }
        if !(k > 0.0) || !k.is_finite() {
            return Err(ScoringError::InvalidSmoothing(k));
        }
        let mut counts: BTreeMap<String, ContextCounts> = BTreeMap::new();
        let mut seen = false;
        for line in corpus {
            for (t, word) in line.iter().enumerate() {
                seen = true;
                for ctx_len in 0..order.min(t + 1) {
                    let context = line[t - ctx_len..t].join(" ");
                    let entry = counts.entry(context).or_default();
                    *entry.follows.entry(word.clone()).or_insert(0) += 1;
                    entry.total += 1;
                }
            }
        }
        if !seen {
            return Err(ScoringError::EmptyCorpus);
        }
        let vocab = counts[""].follows.keys().cloned().collect();
        Ok(NgramModel { order, k, counts, vocab })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn smoothing(&self) -> f64 {
        self.k
    }

    pub fn vocab(&self) -> &BTreeSet<String> {
        &self.vocab
    }

    /// Natural-log probability of `word` after `context`. The context
    /// is truncated to the model order and backed off to the longest
    /// suffix that was observed in training.
    pub fn logprob(&self, context: &[&str], word: &str) -> f64 {
        let start = context.len().saturating_sub(self.order - 1);
        let mut context = &context[start..];
        let entry = loop {
            if let Some(entry) = self.counts.get(&context.join(" ")) {
                break entry;
            }
            context = &context[1..];
        };
        let count = entry.follows.get(word).copied().unwrap_or(0);
        let v = self.vocab.len() as f64;
        let p = (count as f64 + self.k) / (entry.total as f64 + self.k * v);
        p.ln()
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            version: MODEL_VERSION,
            order: self.order,
            k: self.k,
            counts: self
                .counts
                .iter()
                .map(|(ctx, entry)| (ctx.clone(), entry.follows.clone()))
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ScoringError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| ScoringError::MalformedModel(e.to_string()))?;
        if file.version != MODEL_VERSION {
            return Err(ScoringError::UnsupportedVersion(file.version));
        }
        if file.order == 0 {
            return Err(ScoringError::InvalidOrder(file.order));
        }
        if !(file.k > 0.0) || !file.k.is_finite() {
            return Err(ScoringError::InvalidSmoothing(file.k));
        }
        let counts: BTreeMap<String, ContextCounts> = file
            .counts
            .into_iter()
            .map(|(ctx, follows)| {
                let total = follows.values().sum();
                (ctx, ContextCounts { total, follows })
            })
            .collect();
        let empty = counts
            .get("")
            .ok_or_else(|| ScoringError::MalformedModel("missing empty context".to_owned()))?;
        if empty.follows.is_empty() {
            return Err(ScoringError::MalformedModel("empty vocabulary".to_owned()));
        }
        let vocab = empty.follows.keys().cloned().collect();
        Ok(NgramModel { order: file.order, k: file.k, counts, vocab })
    }
}

/// [`Scorer`] view of an [`NgramModel`]: the output prefix is the
/// conditioning context and candidates are rendered to their surface
/// forms, with the end candidate scored as an (always unseen)
/// end-of-sequence word.
#[derive(Debug)]
pub struct NgramScorer {
    model: NgramModel,
}

impl NgramScorer {
    pub fn new(model: NgramModel) -> Self {
        NgramScorer { model }
    }

    pub fn model(&self) -> &NgramModel {
        &self.model
    }
}

impl Scorer for NgramScorer {
    fn score_next(
        &self,
        ctx: &ScorerContext<'_>,
        candidates: &[Candidate],
    ) -> Result<Vec<f64>, ScoringError> {
        let context = ctx.prefix_text();
        Ok(candidates
            .iter()
            .map(|&cand| {
                let word = match cand {
                    Candidate::Emit(label) => ctx.label_text(label),
                    Candidate::End => END_TEXT,
                };
                self.model.logprob(&context, word)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::DELIMITER_TEXT;

    fn corpus(lines: &[&str]) -> Vec<Vec<String>> {
        lines.iter().map(|l| l.split_whitespace().map(str::to_owned).collect()).collect()
    }

    fn close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-12, "{a} != {b}");
    }

    #[test]
    fn bigram_counts_give_the_expected_smoothed_probability() {
        // After "a": one "b", one delimiter, one "a". With k = 0.1 and
        // three vocabulary types, p(delimiter | a) = 1.1 / 3.3.
        let model =
            NgramModel::train(&corpus(&["a b a <SENT> a a"]), 2, 0.1).unwrap();
        assert_eq!(model.vocab().len(), 3);
        close(model.logprob(&["a"], DELIMITER_TEXT), (1.1f64 / 3.3).ln());
        close(model.logprob(&["a"], "a"), (1.1f64 / 3.3).ln());
        close(model.logprob(&["a"], "b"), (1.1f64 / 3.3).ln());
    }

    #[test]
    fn unseen_words_and_end_get_the_zero_count_probability() {
        let model = NgramModel::train(&corpus(&["a b a"]), 2, 0.5).unwrap();
        // Vocabulary {a, b}; after "b": one "a".
        close(model.logprob(&["b"], "a"), (1.5f64 / 2.0).ln());
        close(model.logprob(&["b"], "zzz"), (0.5f64 / 2.0).ln());
        close(model.logprob(&["b"], END_TEXT), (0.5f64 / 2.0).ln());
    }

    #[test]
    fn distributions_sum_to_one_over_the_vocabulary() {
        let model = NgramModel::train(&corpus(&["a b c a b", "b c c a"]), 3, 0.1).unwrap();
        for context in [vec![], vec!["a"], vec!["a", "b"], vec!["c", "c"], vec!["zzz"]] {
            let total: f64 =
                model.vocab().iter().map(|w| model.logprob(&context, w).exp()).sum();
            assert!((total - 1.0).abs() < 1e-9, "sum over vocab was {total} for {context:?}");
        }
    }

    #[test]
    fn unseen_contexts_back_off_to_shorter_suffixes() {
        let model = NgramModel::train(&corpus(&["a b c"]), 3, 0.1).unwrap();
        // "x b" was never seen; the suffix "b" was, and predicts "c".
        close(model.logprob(&["x", "b"], "c"), model.logprob(&["b"], "c"));
        // A fully unseen context falls back to unigram frequencies.
        close(model.logprob(&["x", "y"], "a"), model.logprob(&[], "a"));
    }

    #[test]
    fn context_is_truncated_to_the_model_order() {
        let model = NgramModel::train(&corpus(&["a b c d"]), 2, 0.1).unwrap();
        close(model.logprob(&["a", "b", "c"], "d"), model.logprob(&["c"], "d"));
    }

    #[test]
    fn training_rejects_bad_parameters() {
        let lines = corpus(&["a b"]);
        assert!(matches!(NgramModel::train(&lines, 0, 0.1), Err(ScoringError::InvalidOrder(0))));
        assert!(matches!(
            NgramModel::train(&lines, 2, 0.0),
            Err(ScoringError::InvalidSmoothing(_))
        ));
        assert!(matches!(
            NgramModel::train(&corpus(&[]), 2, 0.1),
            Err(ScoringError::EmptyCorpus)
        ));
        assert!(matches!(
            NgramModel::train(&corpus(&["", ""]), 2, 0.1),
            Err(ScoringError::EmptyCorpus)
        ));
    }

    #[test]
    fn json_round_trip_preserves_scores() {
        let model = NgramModel::train(&corpus(&["a b <SENT> c a", "c b a"]), 3, 0.1).unwrap();
        let restored = NgramModel::from_json(&model.to_json()).unwrap();
        assert_eq!(model, restored);
        close(
            model.logprob(&["a", "b"], DELIMITER_TEXT),
            restored.logprob(&["a", "b"], DELIMITER_TEXT),
        );
    }

    #[test]
    fn malformed_model_files_are_rejected() {
        assert!(matches!(
            NgramModel::from_json("not json"),
            Err(ScoringError::MalformedModel(_))
        ));
        let future = r#"{"version": 2, "order": 2, "k": 0.1, "counts": {"": {"a": 1}}}"#;
        assert!(matches!(
            NgramModel::from_json(future),
            Err(ScoringError::UnsupportedVersion(2))
        ));
        let no_unigrams = r#"{"version": 1, "order": 2, "k": 0.1, "counts": {}}"#;
        assert!(matches!(
            NgramModel::from_json(no_unigrams),
            Err(ScoringError::MalformedModel(_))
        ));
    }

    #[test]
    fn scorer_reads_the_decoder_prefix_as_context() {
        use crate::fst::{Label, SymbolTable};
        use crate::text::TokenSeq;

        let model = NgramModel::train(&corpus(&["a b <SENT> a b"]), 2, 0.1).unwrap();
        let scorer = NgramScorer::new(model);
        let window = TokenSeq::from_line("t", "a b a b");
        let mut table = SymbolTable::new();
        for tok in window.tokens() {
            table.intern(tok).unwrap();
        }
        let prefix = [table.label("a").unwrap(), table.label("b").unwrap()];
        let ctx = ScorerContext { window: &window, prefix: &prefix, table: &table };
        let candidates = [Candidate::Emit(Label::Delimiter), Candidate::Emit(table.label("a").unwrap())];
        let scores = scorer.score_next(&ctx, &candidates).unwrap();
        // After "b" the corpus always saw the delimiter.
        assert!(scores[0] > scores[1]);
    }
}
