//! Dynamic graph construction from embeddings via thresholded cosine
//! similarity, and cross-domain cost assembly.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::ot::CostMatrix;

/// A set of named embedding vectors (one row per item).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    ids: Vec<String>,
    vectors: Array2<f64>,
}

impl EmbeddingSet {
    /// Validates: one id per row, unique ids, finite entries, and a strictly
    /// positive Euclidean norm on every row (cosine geometry needs it).
    pub fn new(ids: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        if ids.len() != vectors.nrows() {
            return Err(Error::DimensionMismatch {
                context: "embedding ids vs rows",
                expected: format!("{}", vectors.nrows()),
                got: format!("{}", ids.len()),
            });
        }
        if vectors.nrows() == 0 || vectors.ncols() == 0 {
            return Err(Error::EmptyInput {
                context: "embedding set",
            });
        }
        let mut seen = std::collections::HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId { id: id.clone() });
            }
        }
        for (i, row) in vectors.outer_iter().enumerate() {
            let mut norm_sq = 0.0;
            for &x in row {
                if !x.is_finite() {
                    return Err(Error::InvalidValue {
                        context: "embedding set",
                        message: format!("row {i} contains a non-finite value"),
                    });
                }
                norm_sq += x * x;
            }
            if norm_sq <= 0.0 {
                return Err(Error::ZeroNormRow { index: i });
            }
        }
        Ok(Self { ids, vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    /// Rows rescaled to unit norm; the cosine of two items is then a plain
    /// dot product.
    pub(crate) fn unit_rows(&self) -> Array2<f64> {
        let mut unit = self.vectors.clone();
        for mut row in unit.outer_iter_mut() {
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            row.mapv_inplace(|x| x / norm);
        }
        unit
    }
}

/// A weighted similarity graph over one embedding set.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphRep {
    embeddings: EmbeddingSet,
    adjacency: Array2<f64>,
    threshold: f64,
}

impl GraphRep {
    pub fn embeddings(&self) -> &EmbeddingSet {
        &self.embeddings
    }

    /// Symmetric, zero-diagonal edge weights `max(cos - tau, 0)`.
    pub fn adjacency(&self) -> &Array2<f64> {
        &self.adjacency
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Number of undirected edges with positive weight.
    pub fn edge_count(&self) -> usize {
        let n = self.adjacency.nrows();
        let mut count = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                if self.adjacency[(i, j)] > 0.0 {
                    count += 1;
                }
            }
        }
        count
    }

    /// The adjacency viewed as an intra-graph cost matrix for the structural
    /// transport term.
    pub fn intra_cost(&self) -> CostMatrix {
        CostMatrix::new(self.adjacency.clone()).expect("adjacency is nonnegative and finite")
    }
}

fn check_same_dim(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            context: "embedding dimensions",
            expected: format!("{}", a.dim()),
            got: format!("{}", b.dim()),
        });
    }
    Ok(())
}

fn clamp_cosine(c: f64) -> f64 {
    c.clamp(-1.0, 1.0)
}

/// Pairwise cosine similarities between two sets; entry `(i, j)` is
/// `cos(a_i, b_j)` in `[-1, 1]`.
pub fn cosine_similarity_matrix(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<Array2<f64>> {
    check_same_dim(a, b)?;
    let ua = a.unit_rows();
    let ub = b.unit_rows();
    let mut sim = ua.dot(&ub.t());
    sim.mapv_inplace(clamp_cosine);
    Ok(sim)
}

/// Thresholded similarity graph: an edge of weight `cos(x_i, x_j) - tau`
/// joins `i != j` whenever the cosine exceeds `tau`.
pub fn build_graph(embeddings: &EmbeddingSet, tau: f64) -> Result<GraphRep> {
    if !(-1.0..=1.0).contains(&tau) {
        return Err(Error::InvalidValue {
            context: "graph threshold",
            message: format!("tau must lie in [-1, 1], got {tau}"),
        });
    }
    let unit = embeddings.unit_rows();
    let n = embeddings.len();
    let mut adjacency = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let cos = clamp_cosine(unit.row(i).dot(&unit.row(j)));
            let w = (cos - tau).max(0.0);
            adjacency[(i, j)] = w;
            adjacency[(j, i)] = w;
        }
    }
    Ok(GraphRep {
        embeddings: embeddings.clone(),
        adjacency,
        threshold: tau,
    })
}

/// Cross-domain cost `1 - cos(x_i, y_j)`, in `[0, 2]`.
pub fn cross_cost_matrix(patches: &EmbeddingSet, labels: &EmbeddingSet) -> Result<CostMatrix> {
    let sim = cosine_similarity_matrix(patches, labels)?;
    CostMatrix::new(sim.mapv(|c| (1.0 - c).max(0.0)))
}

/// Nearest neighbour of each row of `a` among the rows of `b` by cosine.
pub fn nearest_by_cosine(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<Vec<usize>> {
    let sim = cosine_similarity_matrix(a, b)?;
    Ok(sim
        .outer_iter()
        .map(|row| {
            let mut best = 0usize;
            let mut best_sim = f64::NEG_INFINITY;
            for (j, &s) in row.iter().enumerate() {
                if s > best_sim {
                    best_sim = s;
                    best = j;
                }
            }
            best
        })
        .collect())
}

/// Convenience: embedding set from parallel id/vector slices.
pub fn embedding_set_from_rows(ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<EmbeddingSet> {
    if rows.is_empty() {
        return Err(Error::EmptyInput {
            context: "embedding rows",
        });
    }
    let dim = rows[0].len();
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                context: "embedding row width",
                expected: format!("{dim}"),
                got: format!("{} at row {i}", row.len()),
            });
        }
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let vectors = Array2::from_shape_vec((flat.len() / dim, dim), flat).map_err(|e| {
        Error::InvalidValue {
            context: "embedding rows",
            message: e.to_string(),
        }
    })?;
    EmbeddingSet::new(ids, vectors)
}
