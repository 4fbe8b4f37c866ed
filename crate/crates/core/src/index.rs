//! Ephemeral per-image vector index with cosine top-k retrieval.
//!
//! The index lives in memory only and is dropped when the question session
//! ends; nothing is ever written to disk.

use crate::chunk::Chunk;
use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};

/// A unit-norm dense embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// L2-normalizes `raw`. Exact-zero or non-finite inputs are rejected.
    pub fn unit(raw: Vec<f64>) -> Result<Self> {
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutOfRange("non-finite embedding entry".into()));
        }
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(EmbeddingVector {
            values: raw.into_iter().map(|v| v / norm).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Cosine similarity `dot(a,b) / (|a||b|)`, clamped to `[-1, 1]`.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            context: "cosine",
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let na = a.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// A chunk with its embedding and insertion position.
#[derive(Debug, Clone)]
pub struct EmbeddedChunk {
    pub chunk: Chunk,
    pub vector: EmbeddingVector,
    pub insertion_ordinal: usize,
}

/// Identifies which provider produced an index's vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderFingerprint {
    pub name: String,
    pub dimension: usize,
}

/// In-memory vector store over one image's chunks.
#[derive(Debug)]
pub struct EphemeralIndex {
    image_id: String,
    entries: Vec<EmbeddedChunk>,
    fingerprint: ProviderFingerprint,
}

impl EphemeralIndex {
    pub fn new(image_id: impl Into<String>, provider: &dyn EmbeddingProvider) -> Self {
        EphemeralIndex {
            image_id: image_id.into(),
            entries: Vec::new(),
            fingerprint: ProviderFingerprint {
                name: provider.name().to_string(),
                dimension: provider.dimension(),
            },
        }
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn fingerprint(&self) -> &ProviderFingerprint {
        &self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[EmbeddedChunk] {
        &self.entries
    }

    /// Embeds and appends a chunk. On any provider error the index is left
    /// unchanged.
    pub fn insert(&mut self, chunk: Chunk, provider: &dyn EmbeddingProvider) -> Result<()> {
        if chunk.source_image != self.image_id {
            return Err(Error::CrossImageChunk {
                chunk_image: chunk.source_image,
                index_image: self.image_id.clone(),
            });
        }
        let fp = ProviderFingerprint {
            name: provider.name().to_string(),
            dimension: provider.dimension(),
        };
        if fp != self.fingerprint {
            return Err(Error::Provider {
                provider: fp.name,
                message: format!(
                    "provider mismatch: index built with {} (dim {})",
                    self.fingerprint.name, self.fingerprint.dimension
                ),
            });
        }
        let vector = crate::embed::embed(&chunk.text, provider)?;
        self.entries.push(EmbeddedChunk {
            chunk,
            vector,
            insertion_ordinal: self.entries.len(),
        });
        Ok(())
    }

    /// Returns up to `k` chunks ranked by cosine similarity descending, exact
    /// ties broken by lower insertion ordinal. An empty index yields an empty
    /// result.
    pub fn top_k(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<(Chunk, f64)>> {
        if self.entries.is_empty() {
            return Ok(Vec::new());
        }
        if query.dim() != self.fingerprint.dimension {
            return Err(Error::Dimension {
                context: "top_k query",
                expected: self.fingerprint.dimension,
                actual: query.dim(),
            });
        }
        let mut scored: Vec<(usize, f64)> = self
            .entries
            .iter()
            .map(|e| Ok((e.insertion_ordinal, cosine(query, &e.vector)?)))
            .collect::<Result<_>>()?;
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(ordinal, score)| (self.entries[ordinal].chunk.clone(), score))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashEmbedder;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Provider returning fixed vectors, for driving the index directly.
    struct FixedProvider {
        name: String,
        dim: usize,
        vectors: std::sync::Mutex<Vec<Vec<f64>>>,
    }

    impl FixedProvider {
        fn new(dim: usize, vectors: Vec<Vec<f64>>) -> Self {
            FixedProvider {
                name: "fixed".into(),
                dim,
                vectors: std::sync::Mutex::new(vectors),
            }
        }
    }

    impl EmbeddingProvider for FixedProvider {
        fn name(&self) -> &str {
            &self.name
        }

        fn dimension(&self) -> usize {
            self.dim
        }

        fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
            let mut vectors = self.vectors.lock().unwrap();
            if vectors.len() < texts.len() {
                return Err(Error::Provider {
                    provider: "fixed".into(),
                    message: "exhausted".into(),
                });
            }
            Ok(vectors.drain(..texts.len()).collect())
        }
    }

    fn chunk(image: &str, category: &str) -> Chunk {
        Chunk {
            category: category.to_string(),
            text: format!("{category}: 1, location: [center], relationships: none"),
            source_image: image.to_string(),
        }
    }

    #[test]
    fn cosine_identical_unit_vectors() {
        let a = EmbeddingVector::unit(vec![1.0, 0.0]).unwrap();
        assert_eq!(cosine(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn cosine_orthogonal() {
        let a = EmbeddingVector::unit(vec![1.0, 0.0]).unwrap();
        let b = EmbeddingVector::unit(vec![0.0, 1.0]).unwrap();
        assert_eq!(cosine(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn cosine_diagonal() {
        let a = EmbeddingVector::unit(vec![1.0, 1.0]).unwrap();
        let b = EmbeddingVector::unit(vec![1.0, 0.0]).unwrap();
        assert!((cosine(&a, &b).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn cosine_dimension_mismatch() {
        let a = EmbeddingVector::unit(vec![1.0, 0.0]).unwrap();
        let b = EmbeddingVector::unit(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(cosine(&a, &b).is_err());
    }

    #[test]
    fn unit_rejects_zero_vector() {
        assert!(matches!(
            EmbeddingVector::unit(vec![0.0, 0.0]),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn unit_normalizes() {
        let v = EmbeddingVector::unit(vec![3.0, 4.0]).unwrap();
        let norm: f64 = v.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn insert_assigns_increasing_ordinals() {
        let provider = HashEmbedder::new(16, 1).unwrap();
        let mut idx = EphemeralIndex::new("img", &provider);
        for cat in ["car", "man", "tree"] {
            idx.insert(chunk("img", cat), &provider).unwrap();
        }
        let ordinals: Vec<usize> = idx.entries().iter().map(|e| e.insertion_ordinal).collect();
        assert_eq!(ordinals, vec![0, 1, 2]);
    }

    #[test]
    fn insert_rejects_cross_image_chunk() {
        let provider = HashEmbedder::new(16, 1).unwrap();
        let mut idx = EphemeralIndex::new("img_a", &provider);
        let err = idx.insert(chunk("img_b", "car"), &provider).unwrap_err();
        assert!(matches!(err, Error::CrossImageChunk { .. }));
        assert!(idx.is_empty());
    }

    #[test]
    fn insert_after_provider_failure_leaves_index_unchanged() {
        let provider = FixedProvider::new(2, vec![vec![1.0, 0.0]]);
        let mut idx = EphemeralIndex::new("img", &provider);
        idx.insert(chunk("img", "car"), &provider).unwrap();
        assert!(idx.insert(chunk("img", "man"), &provider).is_err());
        assert_eq!(idx.len(), 1);
        assert_eq!(idx.entries()[0].chunk.category, "car");
    }

    #[test]
    fn insert_rejects_mixed_providers() {
        let p1 = HashEmbedder::new(16, 1).unwrap();
        let p2 = HashEmbedder::new(32, 1).unwrap();
        let mut idx = EphemeralIndex::new("img", &p1);
        assert!(idx.insert(chunk("img", "car"), &p2).is_err());
    }

    #[test]
    fn top_k_returns_all_when_fewer_than_k() {
        let provider = HashEmbedder::new(16, 1).unwrap();
        let mut idx = EphemeralIndex::new("img", &provider);
        for cat in ["car", "man", "tree"] {
            idx.insert(chunk("img", cat), &provider).unwrap();
        }
        let query = crate::embed::hash_embed("anything at all", 16, 1).unwrap();
        let hits = idx.top_k(&query, 4).unwrap();
        assert_eq!(hits.len(), 3);
    }

    #[test]
    fn top_k_exact_match_first_with_score_one() {
        let provider = FixedProvider::new(
            3,
            vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]],
        );
        let mut idx = EphemeralIndex::new("img", &provider);
        for cat in ["a", "b", "c"] {
            idx.insert(chunk("img", cat), &provider).unwrap();
        }
        let query = EmbeddingVector::unit(vec![1.0, 0.0, 0.0]).unwrap();
        let hits = idx.top_k(&query, 4).unwrap();
        assert_eq!(hits[0].0.category, "c");
        assert_eq!(hits[0].1, 1.0);
    }

    #[test]
    fn top_k_empty_index_is_empty_result() {
        let provider = HashEmbedder::new(16, 1).unwrap();
        let idx = EphemeralIndex::new("img", &provider);
        let query = crate::embed::hash_embed("q", 16, 1).unwrap();
        assert!(idx.top_k(&query, 4).unwrap().is_empty());
    }

    #[test]
    fn top_k_dimension_mismatch() {
        let provider = HashEmbedder::new(16, 1).unwrap();
        let mut idx = EphemeralIndex::new("img", &provider);
        idx.insert(chunk("img", "car"), &provider).unwrap();
        let query = crate::embed::hash_embed("q", 32, 1).unwrap();
        assert!(idx.top_k(&query, 4).is_err());
    }

    #[test]
    fn top_k_ties_break_by_insertion_ordinal() {
        let same = vec![1.0, 0.0];
        let provider = FixedProvider::new(2, vec![same.clone(), same.clone(), same.clone()]);
        let mut idx = EphemeralIndex::new("img", &provider);
        for cat in ["first", "second", "third"] {
            idx.insert(chunk("img", cat), &provider).unwrap();
        }
        let query = EmbeddingVector::unit(vec![1.0, 0.0]).unwrap();
        let hits = idx.top_k(&query, 2).unwrap();
        assert_eq!(hits[0].0.category, "first");
        assert_eq!(hits[1].0.category, "second");
    }

    #[test]
    fn top_k_matches_brute_force_on_seeded_corpus() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let dim = 8;
        let mut vectors: Vec<Vec<f64>> = Vec::new();
        for i in 0..100 {
            if i % 7 == 3 && i > 0 {
                // Duplicate an earlier vector to force exact ties.
                let j = i / 2;
                vectors.push(vectors[j].clone());
            } else {
                vectors.push((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect());
            }
        }
        let provider = FixedProvider::new(dim, vectors.clone());
        let mut idx = EphemeralIndex::new("img", &provider);
        for i in 0..100 {
            idx.insert(chunk("img", &format!("c{i:03}")), &provider).unwrap();
        }
        let query = EmbeddingVector::unit((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();

        let hits = idx.top_k(&query, 4).unwrap();

        // Brute force: score everything, stable sort by descending score.
        let mut all: Vec<(usize, f64)> = idx
            .entries()
            .iter()
            .map(|e| (e.insertion_ordinal, cosine(&query, &e.vector).unwrap()))
            .collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1));
        let expected: Vec<(String, f64)> = all
            .iter()
            .take(4)
            .map(|(ord, score)| (idx.entries()[*ord].chunk.category.clone(), *score))
            .collect();
        let got: Vec<(String, f64)> = hits
            .iter()
            .map(|(c, s)| (c.category.clone(), *s))
            .collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn top_k_scores_are_non_increasing() {
        let provider = HashEmbedder::new(32, 9).unwrap();
        let mut idx = EphemeralIndex::new("img", &provider);
        for i in 0..20 {
            idx.insert(chunk("img", &format!("cat{i}")), &provider).unwrap();
        }
        let query = crate::embed::hash_embed("cat5 location center", 32, 9).unwrap();
        let hits = idx.top_k(&query, 20).unwrap();
        for pair in hits.windows(2) {
            assert!(pair[0].1 >= pair[1].1);
        }
    }
}
