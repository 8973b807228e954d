use std::cmp::Ordering;
use std::io::{Read, Write};

use super::{Candidate, CandidateSource, RetrievalError};

const MAGIC: &[u8; 4] = b"CWDI";
const VERSION: u32 = 2;

/// Exact cosine-similarity vector store.
///
/// Vectors are kept as given and their norms precomputed in f64, so the
/// similarity is `dot(q, v) / (|q| |v|)` evaluated entirely in f64. Storing
/// unit vectors instead would round every component to f32 and could reorder
/// exact ties.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex {
    dim: usize,
    ids: Vec<String>,
    /// Row-major `ids.len() x dim`.
    vectors: Vec<f32>,
    norms: Vec<f64>,
}

impl DenseIndex {
    /// Builds an index. Zero vectors are rejected since they have no direction.
    pub fn new(ids: Vec<String>, vectors: Vec<Vec<f32>>) -> Result<Self, RetrievalError> {
        if ids.len() != vectors.len() {
            return Err(RetrievalError::Format(format!("{} ids for {} vectors", ids.len(), vectors.len())));
        }
        let dim = vectors.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(ids.len() * dim);
        for v in &vectors {
            if v.len() != dim {
                return Err(RetrievalError::Dimension { expected: dim, got: v.len() });
            }
            flat.extend_from_slice(v);
        }
        Self::from_flat(dim, ids, flat)
    }

    fn from_flat(dim: usize, ids: Vec<String>, vectors: Vec<f32>) -> Result<Self, RetrievalError> {
        let mut norms = Vec::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            let v = &vectors[i * dim..(i + 1) * dim];
            if v.iter().any(|x| !x.is_finite()) {
                return Err(RetrievalError::Format(format!("non-finite embedding for '{id}'")));
            }
            let norm = l2(v);
            if norm == 0.0 {
                return Err(RetrievalError::Format(format!("zero embedding for '{id}'")));
            }
            norms.push(norm);
        }
        Ok(Self { dim, ids, vectors, norms })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    /// Cosine similarity between `query` and stored row `i`.
    pub fn similarity(&self, query: &[f32], i: usize) -> Result<f64, RetrievalError> {
        let qn = self.check_query(query)?;
        Ok(self.cosine(query, qn, i))
    }

    fn check_query(&self, query: &[f32]) -> Result<f64, RetrievalError> {
        if query.len() != self.dim {
            return Err(RetrievalError::Dimension { expected: self.dim, got: query.len() });
        }
        let norm = l2(query);
        if norm == 0.0 || !norm.is_finite() {
            return Err(RetrievalError::ZeroQuery);
        }
        Ok(norm)
    }

    fn cosine(&self, query: &[f32], query_norm: f64, i: usize) -> f64 {
        let dot: f64 = query.iter().zip(self.vector(i)).map(|(a, b)| f64::from(*a) * f64::from(*b)).sum();
        (dot / (query_norm * self.norms[i])).clamp(-1.0, 1.0)
    }

    /// Top-`p` stored vectors by cosine similarity, descending; ties by id.
    pub fn search(&self, query: &[f32], p: usize) -> Result<Vec<Candidate>, RetrievalError> {
        self.search_filtered(query, p, |_| true)
    }

    /// Like [`search`](Self::search) but only over rows accepted by `keep`.
    pub fn search_filtered(
        &self,
        query: &[f32],
        p: usize,
        keep: impl Fn(usize) -> bool,
    ) -> Result<Vec<Candidate>, RetrievalError> {
        let qn = self.check_query(query)?;
        let scored: Vec<(usize, f64)> =
            (0..self.len()).filter(|&i| keep(i)).map(|i| (i, self.cosine(query, qn, i))).collect();
        Ok(top_p(scored, p, &self.ids, CandidateSource::Dense))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.ids.len() as u64).to_le_bytes())?;
        for x in &self.vectors {
            w.write_all(&x.to_le_bytes())?;
        }
        for id in &self.ids {
            w.write_all(&(id.len() as u32).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(20 + self.vectors.len() * 4 + self.ids.len() * 12);
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, RetrievalError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(RetrievalError::Format("not a dense index file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(RetrievalError::Format(format!("unsupported dense index version {version}")));
        }
        let dim = read_u32(&mut r)? as usize;
        let count = read_u64(&mut r)? as usize;
        let mut vectors = Vec::with_capacity(count * dim);
        let mut buf = [0u8; 4];
        for _ in 0..count * dim {
            r.read_exact(&mut buf)?;
            vectors.push(f32::from_le_bytes(buf));
        }
        let mut ids = Vec::with_capacity(count);
        for _ in 0..count {
            let len = read_u32(&mut r)? as usize;
            let mut bytes = vec![0u8; len];
            r.read_exact(&mut bytes)?;
            ids.push(String::from_utf8(bytes).map_err(|e| RetrievalError::Format(e.to_string()))?);
        }
        Self::from_flat(dim, ids, vectors)
    }
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn l2(v: &[f32]) -> f64 {
    v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt()
}

/// Sorts by score descending then id ascending, and keeps the first `p`.
pub(crate) fn top_p(
    mut scored: Vec<(usize, f64)>,
    p: usize,
    ids: &[String],
    source: CandidateSource,
) -> Vec<Candidate> {
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| ids[a.0].cmp(&ids[b.0]))
    });
    scored.truncate(p);
    scored
        .into_iter()
        .map(|(i, score)| Candidate { clause_id: ids[i].clone(), score, source })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn self_query_ranks_first_with_unit_similarity() {
        let vs = vec![vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 0.0], vec![0.0, 0.0, 1.0]];
        let idx = DenseIndex::new(ids(3), vs.clone()).unwrap();
        let hits = idx.search(&vs[1], 3).unwrap();
        assert_eq!(hits[0].clause_id, "c1");
        assert!((hits[0].score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn orthogonal_query_scores_zero() {
        let idx = DenseIndex::new(ids(2), vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let hits = idx.search(&[0.0, 0.0, 5.0], 2).unwrap();
        assert!(hits.iter().all(|h| h.score == 0.0));
        // Ties resolved by id.
        assert_eq!(hits[0].clause_id, "c0");
    }

    #[test]
    fn zero_query_and_wrong_dimension() {
        let idx = DenseIndex::new(ids(1), vec![vec![1.0, 0.0]]).unwrap();
        assert!(matches!(idx.search(&[0.0, 0.0], 1), Err(RetrievalError::ZeroQuery)));
        assert!(matches!(idx.search(&[1.0], 1), Err(RetrievalError::Dimension { .. })));
    }

    #[test]
    fn construction_checks() {
        assert!(DenseIndex::new(ids(2), vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(DenseIndex::new(ids(1), vec![vec![0.0, 0.0]]).is_err());
        assert!(DenseIndex::new(ids(1), vec![vec![f32::NAN]]).is_err());
        assert!(DenseIndex::new(ids(2), vec![vec![1.0]]).is_err());
    }

    #[test]
    fn scale_does_not_change_similarity() {
        let idx = DenseIndex::new(ids(2), vec![vec![1.0, 2.0], vec![4.0, 8.0]]).unwrap();
        let q = [3.0, 9.0];
        // Power-of-two scaling is exact, so this is a true tie, broken by id.
        assert_eq!(idx.similarity(&q, 0).unwrap(), idx.similarity(&q, 1).unwrap());
        let hits = idx.search(&q, 2).unwrap();
        assert_eq!(hits[0].clause_id, "c0");
    }

    #[test]
    fn binary_round_trip() {
        let idx = DenseIndex::new(ids(3), vec![vec![1.0, 2.0], vec![0.5, -1.0], vec![0.0, 1.0]]).unwrap();
        let bytes = idx.to_bytes();
        assert_eq!(&bytes[..4], b"CWDI");
        assert_eq!(DenseIndex::read_from(bytes.as_slice()).unwrap(), idx);
        assert!(DenseIndex::read_from(&b"NOPE"[..]).is_err());
    }
}
