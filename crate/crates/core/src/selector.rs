//! Top-k exemplar selection by cosine similarity of query embeddings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::embed::{cosine_sim, EmbedError, Embedder, Embedding, SimilarityError};
use crate::exemplar::{ExemplarSet, ExpertPair};

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("exemplar corpus is empty")]
    EmptyCorpus,
    #[error("k must be at least 1")]
    ZeroK,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error("embedding cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionConfig {
    pub k: usize,
    pub embedder_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ranked {
    pub index: usize,
    pub score: f64,
}

/// Scores closer than this are ties.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Ranks `corpus` by descending similarity to `query`; ties keep corpus order.
pub fn rank_by_similarity(query: &Embedding, corpus: &[Embedding]) -> Result<Vec<Ranked>, SimilarityError> {
    let mut ranked = corpus
        .iter()
        .enumerate()
        .map(|(index, v)| Ok(Ranked { index, score: cosine_sim(query, v)? }))
        .collect::<Result<Vec<_>, SimilarityError>>()?;
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.index.cmp(&b.index)));
    let mut start = 0;
    for end in 1..=ranked.len() {
        if end == ranked.len() || ranked[end - 1].score - ranked[end].score > TIE_TOLERANCE {
            ranked[start..end].sort_by_key(|r| r.index);
            start = end;
        }
    }
    Ok(ranked)
}

pub struct Selector {
    corpus: ExemplarSet,
    vectors: Vec<Embedding>,
    embedder: Arc<dyn Embedder>,
}

impl Selector {
    /// Embeds the corpus queries, reusing `cache` when it holds them.
    pub fn new(
        corpus: ExemplarSet,
        embedder: Arc<dyn Embedder>,
        cache: Option<&EmbeddingCache>,
    ) -> Result<Self, SelectError> {
        if corpus.is_empty() {
            return Err(SelectError::EmptyCorpus);
        }
        let vectors = match cache {
            Some(c) => c.load_or_compute(embedder.as_ref(), &corpus)?,
            None => {
                let texts: Vec<String> = corpus.pairs.iter().map(|p| p.query.clone()).collect();
                embedder.embed_batch(&texts)?
            }
        };
        Ok(Self {
            corpus,
            vectors,
            embedder,
        })
    }

    pub fn corpus(&self) -> &ExemplarSet {
        &self.corpus
    }

    pub fn embedder_id(&self) -> String {
        self.embedder.id()
    }

    pub fn rank(&self, query: &str) -> Result<Vec<Ranked>, SelectError> {
        let q = self.embedder.embed(query)?;
        Ok(rank_by_similarity(&q, &self.vectors)?)
    }

    /// The `min(k, |E|)` most similar pairs, most similar first.
    pub fn select_top_k(&self, query: &str, k: usize) -> Result<Vec<ExpertPair>, SelectError> {
        if k == 0 {
            return Err(SelectError::ZeroK);
        }
        Ok(self
            .rank(query)?
            .into_iter()
            .take(k)
            .map(|r| self.corpus.pairs[r.index].clone())
            .collect())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheFile {
    embedder: String,
    corpus: String,
    /// Hex SHA-256 of the text -> vector.
    vectors: BTreeMap<String, Embedding>,
}

/// On-disk embedding cache, one JSON file per (embedder, corpus digest).
#[derive(Debug)]
pub struct EmbeddingCache {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

fn text_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl EmbeddingCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            write_lock: Mutex::new(()),
        }
    }

    pub fn file_for(&self, embedder_id: &str, corpus_digest: &str) -> PathBuf {
        let safe: String = embedder_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
            .collect();
        self.dir.join(format!("embeddings-{safe}-{}.json", &corpus_digest[..16]))
    }

    pub fn load_or_compute(&self, embedder: &dyn Embedder, corpus: &ExemplarSet) -> Result<Vec<Embedding>, SelectError> {
        let id = embedder.id();
        let digest = corpus.digest();
        let path = self.file_for(&id, &digest);
        if let Some(file) = read_cache(&path) {
            if file.embedder == id && file.corpus == digest {
                let hit: Option<Vec<Embedding>> = corpus
                    .pairs
                    .iter()
                    .map(|p| file.vectors.get(&text_digest(&p.query)).cloned())
                    .collect();
                if let Some(v) = hit {
                    return Ok(v);
                }
            }
        }
        let texts: Vec<String> = corpus.pairs.iter().map(|p| p.query.clone()).collect();
        let vectors = embedder.embed_batch(&texts)?;
        let file = CacheFile {
            embedder: id,
            corpus: digest,
            vectors: texts.iter().map(|t| text_digest(t)).zip(vectors.iter().cloned()).collect(),
        };
        self.write(&path, &file)?;
        Ok(vectors)
    }

    fn write(&self, path: &Path, file: &CacheFile) -> Result<(), SelectError> {
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        std::fs::create_dir_all(&self.dir).map_err(|e| SelectError::Cache(e.to_string()))?;
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string(file).map_err(|e| SelectError::Cache(e.to_string()))?;
        std::fs::write(&tmp, text).map_err(|e| SelectError::Cache(e.to_string()))?;
        std::fs::rename(&tmp, path).map_err(|e| SelectError::Cache(e.to_string()))
    }
}

fn read_cache(path: &Path) -> Option<CacheFile> {
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}
