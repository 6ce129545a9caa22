//! Co-consumption distances and the diversity scores built on them.
//!
//! Two categories are close when the same users consume them: the distance
//! between categories `i` and `j` is one minus the cosine similarity of the
//! corresponding columns of a [`ConsumptionMatrix`]. A user's Rao-Stirling
//! score is then `Σ_i Σ_j p_i p_j d(i, j)` over all ordered pairs, which
//! rewards spreading consumption over categories that few other users
//! combine. Shannon entropy and category count are kept as baselines that
//! ignore the distances entirely.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::ingest::ConsumptionMatrix;

/// Symmetric category-to-category distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    categories: Vec<String>,
    d: Vec<Vec<f64>>,
}

const SYMMETRY_TOLERANCE: f64 = 1e-12;

impl DistanceMatrix {
    /// Validates a square, symmetric matrix with entries in `[0, 1]`.
    pub fn new(categories: Vec<String>, d: Vec<Vec<f64>>) -> Result<Self> {
        let m = Self::dissimilarities(categories, d)?;
        if m.d.iter().flatten().any(|&x| x > 1.0) {
            return Err(Error::Domain("distance above 1".into()));
        }
        Ok(m)
    }

    /// Like [`DistanceMatrix::new`] but without the upper bound, for
    /// embedding arbitrary metric data.
    pub fn dissimilarities(categories: Vec<String>, d: Vec<Vec<f64>>) -> Result<Self> {
        let n = categories.len();
        if d.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: d.len(),
            });
        }
        for (i, row) in d.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: row.len(),
                });
            }
            if row[i] != 0.0 {
                return Err(Error::Domain(format!(
                    "nonzero diagonal at {}",
                    categories[i]
                )));
            }
            for (j, &x) in row.iter().enumerate() {
                if !(x >= 0.0) || !x.is_finite() {
                    return Err(Error::Domain(format!("invalid distance {x}")));
                }
                if (x - d[j][i]).abs() > SYMMETRY_TOLERANCE {
                    return Err(Error::Domain(format!(
                        "asymmetric distance between {} and {}",
                        categories[i], categories[j]
                    )));
                }
            }
        }
        Ok(DistanceMatrix { categories, d })
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.d
    }

    pub fn max(&self) -> f64 {
        self.d.iter().flatten().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiversityReport {
    pub user_id: String,
    pub rao_stirling: f64,
    /// Shannon entropy in nats.
    pub entropy: f64,
    pub volume: usize,
}

/// Cosine distances between the columns of `cm`.
pub fn cosine_distance_matrix(cm: &ConsumptionMatrix) -> Result<DistanceMatrix> {
    let n = cm.n_categories();
    if n < 2 {
        return Err(Error::TooFew {
            what: "categories",
            needed: 2,
            got: n,
        });
    }
    let columns: Vec<Vec<f64>> = (0..n).map(|j| cm.column(j).collect()).collect();
    let sq_norms: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>())
        .collect();
    if let Some(j) = sq_norms.iter().position(|&x| x == 0.0) {
        return Err(Error::ZeroColumn(cm.categories()[j].clone()));
    }

    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let dist = cosine_with_sq_norms(&columns[i], &columns[j], sq_norms[i], sq_norms[j]);
            d[i][j] = dist;
            d[j][i] = dist;
        }
    }
    Ok(DistanceMatrix {
        categories: cm.categories().to_vec(),
        d,
    })
}

// sqrt of the product keeps identical columns at exactly zero distance
fn cosine_with_sq_norms(a: &[f64], b: &[f64], sq_a: f64, sq_b: f64) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (1.0 - dot / (sq_a * sq_b).sqrt()).clamp(0.0, 1.0)
}

/// One minus cosine similarity, clamped to `[0, 1]`. NaN if either vector is zero.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    cosine_with_sq_norms(a, b, sq(a), sq(b))
}

/// `Σ_i Σ_j p_i p_j d(i, j)` over all ordered pairs.
pub fn rao_stirling(p: &[f64], d: &DistanceMatrix) -> Result<f64> {
    if p.len() != d.len() {
        return Err(Error::DimensionMismatch {
            expected: d.len(),
            actual: p.len(),
        });
    }
    let mut total = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        if pi == 0.0 {
            continue;
        }
        let row = &d.d[i];
        let inner: f64 = p.iter().zip(row).map(|(pj, dij)| pj * dij).sum();
        total += pi * inner;
    }
    Ok(total)
}

/// Shannon entropy in nats; zero entries contribute nothing.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    let h: f64 = p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum();
    // -0.0 for the single-category case
    h.max(0.0)
}

/// Number of entries strictly above `eps`.
pub fn volume(p: &[f64], eps: f64) -> usize {
    p.iter().filter(|&&x| x > eps).count()
}

/// Scores every user of `cm` against `d`, in row order.
pub fn diversity_batch(cm: &ConsumptionMatrix, d: &DistanceMatrix) -> Result<Vec<DiversityReport>> {
    if cm.categories() != d.categories() {
        return Err(Error::Invalid(
            "consumption matrix and distance matrix disagree on category order".into(),
        ));
    }
    cm.users()
        .iter()
        .zip(cm.rows())
        .map(|(user, p)| {
            let rao_stirling = rao_stirling(p, d).map_err(|e| Error::User {
                user: user.clone(),
                source: Box::new(e),
            })?;
            Ok(DiversityReport {
                user_id: user.clone(),
                rao_stirling,
                entropy: shannon_entropy(p),
                volume: volume(p, 0.0),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdsEmbedding {
    pub categories: Vec<String>,
    /// One row per category, one column per requested axis.
    pub coords: Vec<Vec<f64>>,
    /// Leading eigenvalues of the double-centred Gram matrix, descending.
    pub eigenvalues: Vec<f64>,
    /// Set when fewer than the requested number of axes had positive
    /// eigenvalues; missing axes are all zeros.
    pub degenerate: bool,
}

/// Classical (Torgerson) scaling: eigendecomposition of `-½ J D² J`.
///
/// Each axis is signed so that its largest-magnitude coordinate is positive.
pub fn classical_mds(d: &DistanceMatrix, dims: usize) -> Result<MdsEmbedding> {
    let n = d.len();
    if n < 3 {
        return Err(Error::TooFew {
            what: "categories for scaling",
            needed: 3,
            got: n,
        });
    }
    if dims == 0 || dims > n {
        return Err(Error::Invalid(format!(
            "cannot embed {n} points in {dims} dimensions"
        )));
    }

    let sq = DMatrix::from_fn(n, n, |i, j| d.d[i][j] * d.d[i][j]);
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).mean()).collect();
    let grand = sq.mean();
    let b = DMatrix::from_fn(n, n, |i, j| {
        -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand)
    });

    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let scale = eig
        .eigenvalues
        .iter()
        .fold(0.0_f64, |m, x| m.max(x.abs()))
        .max(1.0);
    let positive_tol = 1e-10 * scale;

    let mut coords = vec![vec![0.0; dims]; n];
    let mut eigenvalues = Vec::with_capacity(dims);
    let mut degenerate = false;
    for (axis, &k) in order.iter().take(dims).enumerate() {
        let lambda = eig.eigenvalues[k];
        eigenvalues.push(lambda);
        if lambda <= positive_tol {
            degenerate = true;
            continue;
        }
        let root = lambda.sqrt();
        let v = eig.eigenvectors.column(k);
        let mut axis_vals: Vec<f64> = v.iter().map(|x| x * root).collect();
        let pivot = axis_vals.iter().enumerate().fold(0, |best, (i, x)| {
            if x.abs() > axis_vals[best].abs() {
                i
            } else {
                best
            }
        });
        if axis_vals[pivot] < 0.0 {
            axis_vals.iter_mut().for_each(|x| *x = -*x);
        }
        for (row, x) in coords.iter_mut().zip(axis_vals) {
            row[axis] = x;
        }
    }

    Ok(MdsEmbedding {
        categories: d.categories.clone(),
        coords,
        eigenvalues,
        degenerate,
    })
}
