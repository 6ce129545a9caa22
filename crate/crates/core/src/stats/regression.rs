//! Ordinary least squares with an intercept, coefficient inference and
//! variance inflation factors.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::features::lstsq_with_intercept;
use super::special::{f_survival, t_two_sided_p};
use crate::error::{Error, Result};

/// Relative tolerance on the R diagonal used to detect dependent columns.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Significance marker: `***` < 0.001, `**` < 0.01, `*` < 0.05, `.` < 0.1.
pub fn stars(p: f64) -> &'static str {
    if p.is_nan() {
        ""
    } else if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else if p < 0.1 {
        "."
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub coef: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
    pub stars: &'static str,
    /// Absent for the intercept.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vif: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelFit {
    pub r2: f64,
    pub adj_r2: f64,
    pub rse: f64,
    /// `None` when the response has no variance.
    pub f: Option<f64>,
    pub f_p: Option<f64>,
    pub df1: usize,
    pub df2: usize,
    pub n: usize,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionReport {
    pub intercept: Coefficient,
    pub predictors: Vec<Coefficient>,
    pub model: ModelFit,
}

/// Fits `y ~ 1 + X` by Householder QR.
pub fn ols_regress(y: &[f64], names: &[String], columns: &[Vec<f64>]) -> Result<RegressionReport> {
    let n = y.len();
    let k = columns.len();
    if names.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            actual: names.len(),
        });
    }
    if let Some(c) = columns.iter().find(|c| c.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: c.len(),
        });
    }
    if n <= k + 1 {
        return Err(Error::TooFew {
            what: "observations (need more than predictors + 1)",
            needed: k + 2,
            got: n,
        });
    }

    let x = DMatrix::from_fn(
        n,
        k + 1,
        |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] },
    );
    let col_norms: Vec<f64> = (0..=k).map(|j| x.column(j).norm()).collect();
    let qr = x.clone().qr();
    let r = qr.r();
    for j in 0..=k {
        if r[(j, j)].abs() <= RANK_TOLERANCE * col_norms[j].max(f64::MIN_POSITIVE) {
            let name = if j == 0 {
                "(intercept)"
            } else {
                names[j - 1].as_str()
            };
            return Err(Error::RankDeficient(name.to_string()));
        }
    }

    let yv = DVector::from_column_slice(y);
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Invalid("singular triangular factor".into()))?;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k + 1, k + 1))
        .ok_or_else(|| Error::Invalid("singular triangular factor".into()))?;
    let gram_inv_diag: Vec<f64> = (0..=k).map(|j| r_inv.row(j).norm_squared()).collect();

    let residuals = &yv - &x * &beta;
    let rss = residuals.norm_squared();
    let mean_y = yv.mean();
    let tss: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let df2 = n - k - 1;
    let sigma2 = rss / df2 as f64;
    let degenerate = !(tss > 0.0);

    let (r2, adj_r2, f, f_p) = if degenerate {
        (0.0, 0.0, None, None)
    } else {
        let r2 = (1.0 - rss / tss).clamp(0.0, 1.0);
        let adj = 1.0 - (1.0 - r2) * (n - 1) as f64 / df2 as f64;
        let f = if k == 0 {
            None
        } else if r2 >= 1.0 {
            Some(f64::INFINITY)
        } else {
            Some((r2 / k as f64) / ((1.0 - r2) / df2 as f64))
        };
        let f_p = f.map(|f| f_survival(f, k as f64, df2 as f64));
        (r2, adj, f, f_p)
    };

    let vifs = vif(columns)?;
    let coefficient = |j: usize, name: &str, vif: Option<f64>| {
        let se = (sigma2 * gram_inv_diag[j]).sqrt();
        let (t, p) = if degenerate {
            (f64::NAN, f64::NAN)
        } else {
            let t = beta[j] / se;
            (t, t_two_sided_p(t, df2 as f64))
        };
        Coefficient {
            name: name.to_string(),
            coef: beta[j],
            se,
            t,
            p,
            stars: stars(p),
            vif,
        }
    };

    Ok(RegressionReport {
        intercept: coefficient(0, "(intercept)", None),
        predictors: names
            .iter()
            .enumerate()
            .map(|(j, name)| coefficient(j + 1, name, Some(vifs[j])))
            .collect(),
        model: ModelFit {
            r2,
            adj_r2,
            rse: sigma2.sqrt(),
            f,
            f_p,
            df1: k,
            df2,
            n,
            degenerate,
        },
    })
}

/// Variance inflation factor of each column against all the others.
///
/// Perfectly collinear columns get `f64::INFINITY`.
pub fn vif(columns: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = columns.len();
    let n = columns.first().map_or(0, Vec::len);
    (0..k)
        .map(|j| {
            let target = &columns[j];
            let mean = target.iter().sum::<f64>() / n as f64;
            let tss: f64 = target.iter().map(|v| (v - mean).powi(2)).sum();
            if !(tss > 0.0) {
                return Ok(f64::INFINITY);
            }
            if k == 1 {
                return Ok(1.0);
            }
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..k).filter(|&c| c != j).map(|c| columns[c][i]).collect())
                .collect();
            let beta = lstsq_with_intercept(&rows, target)?;
            let rss: f64 = rows
                .iter()
                .zip(target)
                .map(|(row, y)| {
                    let fit = beta[0]
                        + row
                            .iter()
                            .zip(beta.iter().skip(1))
                            .map(|(x, b)| x * b)
                            .sum::<f64>();
                    (y - fit).powi(2)
                })
                .sum();
            let unexplained = (rss / tss).min(1.0);
            Ok(if unexplained <= RANK_TOLERANCE {
                f64::INFINITY
            } else {
                1.0 / unexplained
            })
        })
        .collect()
}
