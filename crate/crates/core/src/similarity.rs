//! TF-IDF cosine similarity over a fixed document pool.

use std::collections::BTreeMap;

/// Lowercased alphanumeric tokens; every other character separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn term_counts(tokens: Vec<String>) -> BTreeMap<String, f64> {
    let mut tf = BTreeMap::new();
    for t in tokens {
        *tf.entry(t).or_insert(0.0) += 1.0;
    }
    tf
}

/// Smoothed IDF table plus pre-weighted document vectors.
///
/// `idf(t) = ln((1 + N) / (1 + df(t))) + 1`, so terms absent from the pool
/// still carry weight in a query. Term maps are ordered so floating-point
/// sums, and with them tie breaks, are identical across runs.
#[derive(Debug, Clone)]
pub struct TfIdfIndex {
    idf: BTreeMap<String, f64>,
    unseen_idf: f64,
    docs: Vec<(BTreeMap<String, f64>, f64)>,
}

impl TfIdfIndex {
    pub fn new<S: AsRef<str>>(docs: &[S]) -> Self {
        let counts: Vec<BTreeMap<String, f64>> =
            docs.iter().map(|d| term_counts(tokenize(d.as_ref()))).collect();
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in &counts {
            for term in doc.keys() {
                *df.entry(term.clone()).or_default() += 1;
            }
        }
        let n = docs.len() as f64;
        let idf: BTreeMap<String, f64> = df
            .into_iter()
            .map(|(t, d)| (t, ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0))
            .collect();
        let unseen_idf = (1.0 + n).ln() + 1.0;
        let mut index = Self {
            idf,
            unseen_idf,
            docs: Vec::new(),
        };
        index.docs = counts.into_iter().map(|c| index.weigh(c)).collect();
        index
    }

    fn weigh(&self, counts: BTreeMap<String, f64>) -> (BTreeMap<String, f64>, f64) {
        let weighted: BTreeMap<String, f64> = counts
            .into_iter()
            .map(|(t, c)| {
                let w = c * self.idf.get(&t).copied().unwrap_or(self.unseen_idf);
                (t, w)
            })
            .collect();
        let norm = weighted.values().map(|w| w * w).sum::<f64>().sqrt();
        (weighted, norm)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Cosine similarity of `query` against every pool document, in pool order.
    pub fn scores(&self, query: &str) -> Vec<f64> {
        let (q, q_norm) = self.weigh(term_counts(tokenize(query)));
        self.docs
            .iter()
            .map(|(d, d_norm)| {
                if q_norm == 0.0 || *d_norm == 0.0 {
                    return 0.0;
                }
                let dot: f64 = q
                    .iter()
                    .filter_map(|(t, w)| d.get(t).map(|dw| w * dw))
                    .sum();
                dot / (q_norm * d_norm)
            })
            .collect()
    }

    /// Indices of the `k` most similar documents, ties broken by pool order.
    pub fn top_k(&self, query: &str, k: usize) -> Vec<usize> {
        let scores = self.scores(query);
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        order.truncate(k);
        order
    }
}
