//! Brute-force similarity ranking.

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Corpus indices ordered by descending cosine similarity to `query`, ties
/// (scores within 1e-12) by ascending index. Selection sort over all pairs.
pub fn rank(query: &[f64], corpus: &[Vec<f64>]) -> Vec<usize> {
    let scores: Vec<f64> = corpus.iter().map(|v| cosine(query, v)).collect();
    let mut remaining: Vec<usize> = (0..corpus.len()).collect();
    let mut out = Vec::new();
    while !remaining.is_empty() {
        let mut best = 0;
        for pos in 1..remaining.len() {
            let (i, j) = (remaining[pos], remaining[best]);
            if scores[i] > scores[j] + 1e-12 || ((scores[i] - scores[j]).abs() <= 1e-12 && i < j) {
                best = pos;
            }
        }
        out.push(remaining.remove(best));
    }
    out
}

pub fn scores(query: &[f64], corpus: &[Vec<f64>]) -> Vec<f64> {
    corpus.iter().map(|v| cosine(query, v)).collect()
}
