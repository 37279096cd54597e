//! Seeded English-like prose, used when no corpus files are supplied.
//!
//! Sentences come from a small phrase grammar over a fixed word list with
//! Zipf-like word frequencies, so the text has realistic byte statistics,
//! word-level regularities and long-range document structure.

use std::fs;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Corpus;
use crate::Error;

const NOUNS: &[&str] = &[
    "time", "man", "house", "world", "water", "night", "hand", "king", "river", "door", "road", "voice",
    "heart", "city", "garden", "ship", "letter", "mother", "father", "child", "friend", "sea", "field",
    "window", "morning", "fire", "horse", "stone", "tree", "village", "mountain", "book", "table", "church",
    "captain", "doctor", "forest", "wind", "light", "story", "question", "answer", "evening", "winter",
    "summer", "island", "bridge", "market", "soldier", "stranger", "daughter", "brother", "sister", "lamp",
];
const NAMES: &[&str] = &[
    "Elizabeth", "John", "Margaret", "Thomas", "Anne", "William", "Mary", "Henry", "Catherine", "George",
    "Edward", "Alice", "Robert", "Jane", "Charles", "Emma",
];
const VERBS: &[&str] = &[
    "saw", "found", "took", "made", "heard", "left", "knew", "kept", "held", "brought", "followed", "watched",
    "opened", "closed", "carried", "remembered", "wanted", "loved", "feared", "answered", "called", "met",
    "crossed", "built", "lost", "reached", "turned", "read", "wrote", "asked",
];
const INTRANS: &[&str] = &[
    "walked", "waited", "smiled", "laughed", "slept", "returned", "listened", "fell", "rose", "wept",
    "spoke", "stood", "sat", "ran", "arrived", "vanished",
];
const ADJS: &[&str] = &[
    "old", "little", "great", "long", "dark", "young", "small", "white", "cold", "quiet", "strange", "poor",
    "good", "last", "red", "deep", "bright", "gentle", "heavy", "narrow", "silent", "broken", "golden",
];
const ADVS: &[&str] = &[
    "slowly", "quickly", "again", "softly", "never", "always", "suddenly", "once", "still", "perhaps",
];
const PREPS: &[&str] = &["in", "on", "by", "near", "under", "over", "through", "behind", "across", "beside", "toward"];
const DETS: &[&str] = &["the", "a", "that", "this", "every", "his", "her", "their", "no"];
const CONJ: &[&str] = &["and", "but", "while", "because", "although", "when", "until"];
const PLACES: &[&str] = &[
    "London", "the north", "the valley", "the coast", "Paris", "the old town", "the hills", "the harbour",
];

struct Lexicon {
    tables: Vec<(&'static [&'static str], WeightedIndex<f64>)>,
}

const N: usize = 0;
const NM: usize = 1;
const V: usize = 2;
const VI: usize = 3;
const A: usize = 4;
const AD: usize = 5;
const P: usize = 6;
const D: usize = 7;
const C: usize = 8;
const PL: usize = 9;

impl Lexicon {
    fn new() -> Self {
        let zipf = |n: usize| WeightedIndex::new((1..=n).map(|r| 1.0 / r as f64)).expect("non-empty");
        let lists: [&'static [&'static str]; 10] = [NOUNS, NAMES, VERBS, INTRANS, ADJS, ADVS, PREPS, DETS, CONJ, PLACES];
        Self {
            tables: lists.iter().map(|l| (*l, zipf(l.len()))).collect(),
        }
    }

    fn word(&self, class: usize, rng: &mut ChaCha8Rng) -> &'static str {
        let (list, dist) = &self.tables[class];
        list[dist.sample(rng)]
    }
}

fn noun_phrase(lex: &Lexicon, rng: &mut ChaCha8Rng, out: &mut Vec<String>) {
    if rng.random_bool(0.15) {
        out.push(lex.word(NM, rng).into());
        return;
    }
    out.push(lex.word(D, rng).into());
    if rng.random_bool(0.4) {
        out.push(lex.word(A, rng).into());
    }
    out.push(lex.word(N, rng).into());
    if rng.random_bool(0.15) {
        out.push("of".into());
        out.push("the".into());
        out.push(lex.word(N, rng).into());
    }
}

fn clause(lex: &Lexicon, rng: &mut ChaCha8Rng, out: &mut Vec<String>) {
    noun_phrase(lex, rng, out);
    if rng.random_bool(0.2) {
        out.push(lex.word(AD, rng).into());
    }
    if rng.random_bool(0.65) {
        out.push(lex.word(V, rng).into());
        noun_phrase(lex, rng, out);
    } else {
        out.push(lex.word(VI, rng).into());
    }
    if rng.random_bool(0.35) {
        out.push(lex.word(P, rng).into());
        if rng.random_bool(0.2) {
            out.push(lex.word(PL, rng).into());
        } else {
            noun_phrase(lex, rng, out);
        }
    }
}

fn sentence(lex: &Lexicon, rng: &mut ChaCha8Rng) -> String {
    let mut words = Vec::new();
    clause(lex, rng, &mut words);
    if rng.random_bool(0.35) {
        let last = words.pop().expect("non-empty clause");
        words.push(format!("{last},"));
        words.push(lex.word(C, rng).into());
        clause(lex, rng, &mut words);
    }
    let mut s = words.join(" ");
    if let Some(first) = s.get(..1) {
        s = first.to_uppercase() + &s[1..];
    }
    s.push(if rng.random_bool(0.1) { '?' } else { '.' });
    if rng.random_bool(0.08) {
        s.pop();
        s = format!("\"{s},\" said {}.", lex.word(NM, rng));
    }
    s
}

/// Documents whose total size is at least `bytes`, deterministic in `seed`.
fn documents(bytes: usize, seed: u64) -> Vec<String> {
    let lex = Lexicon::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut docs = Vec::new();
    let mut total = 0;
    while total < bytes {
        let mut doc = String::new();
        let chapter = docs.len() + 1;
        doc.push_str(&format!("CHAPTER {chapter}\n\n"));
        for _ in 0..rng.random_range(3..12) {
            let sentences: Vec<String> = (0..rng.random_range(2..8)).map(|_| sentence(&lex, &mut rng)).collect();
            doc.push_str(&sentences.join(" "));
            doc.push_str("\n\n");
        }
        total += doc.len();
        docs.push(doc);
    }
    docs
}

/// In-memory synthetic corpus of at least `bytes` bytes.
pub fn synthetic_corpus(bytes: usize, seed: u64) -> Corpus {
    Corpus::from_documents(documents(bytes.max(1), seed)).expect("non-empty")
}

/// Writes the synthetic corpus as one file per document under `dir`.
pub fn write_synthetic_corpus(dir: &Path, bytes: usize, seed: u64) -> Result<Vec<PathBuf>, Error> {
    fs::create_dir_all(dir)?;
    documents(bytes.max(1), seed)
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            let p = dir.join(format!("doc{i:06}.txt"));
            fs::write(&p, d)?;
            Ok(p)
        })
        .collect()
}
