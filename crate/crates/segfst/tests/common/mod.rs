//! Shared fixtures for the integration tests: a deterministic RNG and
//! a synthetic spoken-style corpus with known sentence boundaries.

use segfst::text::Segmentation;
use segfst::TokenSeq;

/// splitmix64; deterministic and seedable, which is all the tests need.
pub struct Rng(u64);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `lo..=hi`.
    pub fn range(&mut self, lo: usize, hi: usize) -> usize {
        lo + (self.next_u64() % (hi - lo + 1) as u64) as usize
    }

    pub fn pick<'a>(&mut self, items: &[&'a str]) -> &'a str {
        items[self.range(0, items.len() - 1)]
    }
}

pub const STARTERS: [&str; 5] = ["well", "so", "now", "okay", "yes"];
pub const ENDERS: [&str; 5] = ["today", "tonight", "friend", "sir", "indeed"];
pub const FILLERS: [&str; 15] = [
    "the", "cat", "dog", "runs", "sees", "big", "small", "fast", "house", "tree", "bird", "man",
    "woman", "walks", "talks",
];

/// One sentence: a starter, some fillers, and an ender that appears
/// nowhere else, so even a low-order model can learn where sentences
/// stop.
pub fn synthetic_sentence(rng: &mut Rng) -> Vec<String> {
    let len = rng.range(5, 30);
    let mut tokens = Vec::with_capacity(len);
    tokens.push(rng.pick(&STARTERS).to_owned());
    for _ in 0..len - 2 {
        tokens.push(rng.pick(&FILLERS).to_owned());
    }
    tokens.push(rng.pick(&ENDERS).to_owned());
    tokens
}

/// A passage of 5 to 15 sentences with its reference segmentation.
pub fn synthetic_passage(id: &str, rng: &mut Rng) -> (TokenSeq, Segmentation) {
    let sentences = rng.range(5, 15);
    let mut tokens = Vec::new();
    let mut boundaries = Vec::new();
    for s in 0..sentences {
        if s > 0 {
            boundaries.push(tokens.len());
        }
        tokens.extend(synthetic_sentence(rng));
    }
    let len = tokens.len();
    (TokenSeq::new(id, tokens), Segmentation::new(len, boundaries).unwrap())
}

pub fn synthetic_corpus(seed: u64, passages: usize) -> Vec<(TokenSeq, Segmentation)> {
    let mut rng = Rng::new(seed);
    (0..passages).map(|i| synthetic_passage(&format!("p{i}"), &mut rng)).collect()
}

/// Passages rendered with delimiters in place, for training.
pub fn delimited_lines(seed: u64, passages: usize) -> Vec<Vec<String>> {
    synthetic_corpus(seed, passages)
        .into_iter()
        .map(|(tokens, seg)| segfst::text::annotate(tokens.tokens(), &seg))
        .collect()
}
