//! Tokenization and TF-IDF cosine relevance.

use std::collections::{BTreeMap, BTreeSet};

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "among", "an", "and", "any", "are", "as", "at", "be", "been",
    "between", "but", "by", "can", "compared", "did", "do", "does", "during", "each", "for", "from",
    "had", "has", "have", "however", "in", "into", "is", "it", "its", "may", "more", "most", "no",
    "not", "of", "on", "or", "other", "our", "over", "such", "than", "that", "the", "their", "them",
    "these", "they", "this", "those", "through", "to", "under", "was", "we", "were", "what", "when",
    "which", "while", "who", "will", "with", "within", "without",
];

/// Lowercased alphanumeric tokens, stopwords and single characters removed.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() > 1)
        .map(str::to_lowercase)
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .collect()
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

/// `|A ∩ B| / |A ∪ B|`; 0 when both are empty.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// TF-IDF model over a small corpus. Term frequency is the raw count;
/// IDF is smoothed, `ln((1 + N) / (1 + df)) + 1`, so terms present in every
/// document keep a positive weight.
#[derive(Debug, Clone)]
pub struct TfIdf {
    idf: BTreeMap<String, f64>,
    n_docs: usize,
}

impl TfIdf {
    pub fn fit<S: AsRef<str>>(corpus: &[S]) -> Self {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in corpus {
            for t in token_set(doc.as_ref()) {
                *df.entry(t).or_default() += 1;
            }
        }
        let n = corpus.len();
        let idf = df
            .into_iter()
            .map(|(t, d)| (t, ((1.0 + n as f64) / (1.0 + d as f64)).ln() + 1.0))
            .collect();
        Self { idf, n_docs: n }
    }

    fn weight(&self, term: &str) -> f64 {
        self.idf
            .get(term)
            .copied()
            .unwrap_or_else(|| (1.0 + self.n_docs as f64).ln() + 1.0)
    }

    pub fn vector(&self, text: &str) -> BTreeMap<String, f64> {
        let mut tf: BTreeMap<String, f64> = BTreeMap::new();
        for t in tokenize(text) {
            *tf.entry(t).or_default() += 1.0;
        }
        tf.into_iter().map(|(t, c)| {
            let w = c * self.weight(&t);
            (t, w)
        }).collect()
    }

    /// Cosine of the two TF-IDF vectors, clipped to [0, 1]; 0 if either
    /// text has no tokens.
    pub fn cosine(&self, a: &str, b: &str) -> f64 {
        let va = self.vector(a);
        let vb = self.vector(b);
        let dot: f64 = va.iter().filter_map(|(t, x)| vb.get(t).map(|y| x * y)).sum();
        let na = va.values().map(|x| x * x).sum::<f64>().sqrt();
        let nb = vb.values().map(|x| x * x).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            return 0.0;
        }
        (dot / (na * nb)).clamp(0.0, 1.0)
    }
}
