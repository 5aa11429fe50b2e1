use crate::error::{Error, Result};

/// Complete, symmetric, nonnegative similarity graph over `n` points,
/// stored as a dense row-major matrix. The diagonal is unused and kept at 0.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityGraph {
    n: usize,
    weights: Vec<f64>,
}

impl SimilarityGraph {
    /// Builds the graph from a weight function evaluated once per unordered pair.
    pub fn from_fn(n: usize, mut w: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut weights = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let x = w(i, j);
                if !(x.is_finite() && x >= 0.0) {
                    return Err(Error::Input(format!("weight w({i},{j}) = {x} is not a nonnegative number")));
                }
                weights[i * n + j] = x;
                weights[j * n + i] = x;
            }
        }
        Ok(Self { n, weights })
    }

    /// Builds the graph from a full square matrix, which must be symmetric.
    pub fn from_matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("similarity matrix is not square".into()));
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::Input(format!("similarity matrix is not symmetric at ({i},{j})")));
                }
            }
        }
        Self::from_fn(n, |i, j| rows[i][j])
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n..(i + 1) * self.n]
    }

    /// Sum of all pair weights.
    pub fn total_weight(&self) -> f64 {
        (0..self.n).map(|i| self.row(i)[i + 1..].iter().sum::<f64>()).sum()
    }
}
