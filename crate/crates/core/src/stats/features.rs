//! Per-user explanatory variables with optional missing cells, plus
//! standardization and deterministic single imputation.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Continuous,
    /// Binary factor coded 0/1.
    Factor,
}

impl ColumnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Continuous => "continuous",
            ColumnKind::Factor => "factor",
        }
    }
}

impl std::str::FromStr for ColumnKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "continuous" => Ok(ColumnKind::Continuous),
            "factor" => Ok(ColumnKind::Factor),
            other => Err(Error::Invalid(format!("unknown column kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
    pub values: Vec<Option<f64>>,
}

impl Column {
    pub fn continuous(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        Column {
            name: name.into(),
            kind: ColumnKind::Continuous,
            values,
        }
    }

    pub fn factor(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        Column {
            name: name.into(),
            kind: ColumnKind::Factor,
            values,
        }
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    /// Values of a complete column.
    pub fn dense(&self) -> Result<Vec<f64>> {
        self.values
            .iter()
            .map(|v| {
                v.ok_or_else(|| Error::Invalid(format!("column `{}` has missing cells", self.name)))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    users: Vec<String>,
    columns: Vec<Column>,
}

impl FeatureTable {
    pub fn new(users: Vec<String>, columns: Vec<Column>) -> Result<Self> {
        let mut names = BTreeSet::new();
        for col in &columns {
            if !names.insert(col.name.as_str()) {
                return Err(Error::Invalid(format!("duplicate column `{}`", col.name)));
            }
            if col.values.len() != users.len() {
                return Err(Error::DimensionMismatch {
                    expected: users.len(),
                    actual: col.values.len(),
                });
            }
            if col.kind == ColumnKind::Factor
                && col.values.iter().flatten().any(|v| *v != 0.0 && *v != 1.0)
            {
                return Err(Error::Domain(format!(
                    "factor column `{}` has a value other than 0/1",
                    col.name
                )));
            }
        }
        Ok(FeatureTable { users, columns })
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn n_rows(&self) -> usize {
        self.users.len()
    }
}

/// Sample mean and `n - 1` standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Rescales every column to mean 0 and sample standard deviation 1.
///
/// Factor columns are rescaled as well and become continuous.
pub fn standardize(table: &FeatureTable) -> Result<FeatureTable> {
    if table.n_rows() < 2 {
        return Err(Error::TooFew {
            what: "rows to standardize",
            needed: 2,
            got: table.n_rows(),
        });
    }
    let mut columns = Vec::with_capacity(table.columns.len());
    for col in &table.columns {
        let values = col.dense()?;
        let (mean, sd) = mean_sd(&values);
        if !(sd > 0.0) {
            return Err(Error::ZeroVariance(col.name.clone()));
        }
        columns.push(Column::continuous(
            col.name.clone(),
            values.iter().map(|v| Some((v - mean) / sd)).collect(),
        ));
    }
    FeatureTable::new(table.users.clone(), columns)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputeOptions {
    /// Columns at or above this missing fraction are rejected.
    pub max_missing_frac: f64,
    /// When set, continuous fills get gaussian noise with the residual
    /// standard deviation, drawn from this seed.
    pub noise_seed: Option<u64>,
}

impl Default for ImputeOptions {
    fn default() -> Self {
        ImputeOptions {
            max_missing_frac: 0.10,
            noise_seed: None,
        }
    }
}

/// Least-squares coefficients `[intercept, b_1, ...]` via SVD.
pub(crate) fn lstsq_with_intercept(rows: &[Vec<f64>], y: &[f64]) -> Result<DVector<f64>> {
    let n = y.len();
    let k = rows.first().map_or(0, Vec::len);
    let x = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] });
    let svd = x.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = (1e-10 * smax).max(f64::MIN_POSITIVE);
    svd.solve(&DVector::from_column_slice(y), eps)
        .map_err(|e| Error::Invalid(format!("least squares failed: {e}")))
}

fn predict(beta: &DVector<f64>, row: &[f64]) -> f64 {
    beta[0]
        + row
            .iter()
            .zip(beta.iter().skip(1))
            .map(|(x, b)| x * b)
            .sum::<f64>()
}

/// Fills missing cells from the columns that have none.
///
/// Continuous columns use a least-squares regression on the complete
/// columns; binary factors use a two-class linear discriminant. Only
/// originally complete columns serve as predictors, so the result does not
/// depend on column order.
pub fn impute_missing(table: &FeatureTable, options: &ImputeOptions) -> Result<FeatureTable> {
    let n = table.n_rows();
    for col in &table.columns {
        let missing = col.missing_count();
        if missing == 0 {
            continue;
        }
        let frac = missing as f64 / n as f64;
        if frac >= options.max_missing_frac {
            return Err(Error::TooMuchMissing {
                column: col.name.clone(),
                fraction: frac,
                limit: options.max_missing_frac,
            });
        }
    }

    let complete: Vec<Vec<f64>> = table
        .columns
        .iter()
        .filter(|c| c.is_complete())
        .map(|c| c.dense())
        .collect::<Result<_>>()?;
    let row_of = |i: usize| -> Vec<f64> { complete.iter().map(|c| c[i]).collect() };

    let mut rng = options.noise_seed.map(ChaCha8Rng::seed_from_u64);
    let mut columns = table.columns.clone();
    for col in columns.iter_mut().filter(|c| !c.is_complete()) {
        let observed: Vec<usize> = (0..n).filter(|&i| col.values[i].is_some()).collect();
        if observed.is_empty() {
            return Err(Error::Invalid(format!(
                "column `{}` has no observed values",
                col.name
            )));
        }
        let fills: Vec<(usize, f64)> = match col.kind {
            ColumnKind::Continuous => {
                let xs: Vec<Vec<f64>> = observed.iter().map(|&i| row_of(i)).collect();
                let ys: Vec<f64> = observed.iter().map(|&i| col.values[i].unwrap()).collect();
                let beta = lstsq_with_intercept(&xs, &ys)?;
                let noise = match rng.as_mut() {
                    Some(rng) => {
                        let dof = ys.len().saturating_sub(beta.len()).max(1) as f64;
                        let rss: f64 = xs
                            .iter()
                            .zip(&ys)
                            .map(|(x, y)| (y - predict(&beta, x)).powi(2))
                            .sum();
                        Some((rng, Normal::new(0.0, (rss / dof).sqrt()).unwrap()))
                    }
                    None => None,
                };
                let mut noise = noise;
                (0..n)
                    .filter(|&i| col.values[i].is_none())
                    .map(|i| {
                        let mut v = predict(&beta, &row_of(i));
                        if let Some((rng, dist)) = noise.as_mut() {
                            v += dist.sample(*rng);
                        }
                        (i, v)
                    })
                    .collect()
            }
            ColumnKind::Factor => {
                let lda = Discriminant::fit(
                    observed
                        .iter()
                        .map(|&i| (row_of(i), col.values[i].unwrap() == 1.0)),
                );
                (0..n)
                    .filter(|&i| col.values[i].is_none())
                    .map(|i| (i, if lda.classify(&row_of(i)) { 1.0 } else { 0.0 }))
                    .collect()
            }
        };
        for (i, v) in fills {
            col.values[i] = Some(v);
        }
    }
    FeatureTable::new(table.users.clone(), columns)
}

/// Two-class linear discriminant with a pooled covariance.
enum Discriminant {
    Constant(bool),
    Linear { w: DVector<f64>, threshold: f64 },
}

impl Discriminant {
    fn fit(samples: impl Iterator<Item = (Vec<f64>, bool)>) -> Self {
        let (pos, neg): (Vec<_>, Vec<_>) = samples.partition(|(_, label)| *label);
        if pos.is_empty() || neg.is_empty() {
            return Discriminant::Constant(!pos.is_empty());
        }
        let dim = pos[0].0.len();
        if dim == 0 {
            return Discriminant::Constant(pos.len() > neg.len());
        }
        let mean = |group: &[(Vec<f64>, bool)]| {
            let mut m = DVector::zeros(dim);
            for (x, _) in group {
                m += DVector::from_column_slice(x);
            }
            m / group.len() as f64
        };
        let (m1, m0) = (mean(&pos), mean(&neg));
        let mut scatter = DMatrix::zeros(dim, dim);
        for (group, m) in [(&pos, &m1), (&neg, &m0)] {
            for (x, _) in group.iter() {
                let d = DVector::from_column_slice(x) - m;
                scatter += &d * d.transpose();
            }
        }
        let dof = (pos.len() + neg.len()).saturating_sub(2).max(1) as f64;
        let cov = scatter / dof;
        let inv = cov
            .clone()
            .try_inverse()
            .or_else(|| cov.pseudo_inverse(1e-12).ok())
            .unwrap_or_else(|| DMatrix::identity(dim, dim));
        let w = inv * (&m1 - &m0);
        let prior = (pos.len() as f64 / neg.len() as f64).ln();
        let threshold = w.dot(&((&m1 + &m0) * 0.5)) - prior;
        Discriminant::Linear { w, threshold }
    }

    fn classify(&self, x: &[f64]) -> bool {
        match self {
            Discriminant::Constant(label) => *label,
            Discriminant::Linear { w, threshold } => {
                w.dot(&DVector::from_column_slice(x)) > *threshold
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn users(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("u{i}")).collect()
    }

    fn some(v: &[f64]) -> Vec<Option<f64>> {
        v.iter().copied().map(Some).collect()
    }

    #[test]
    fn standardize_by_hand() {
        let t = FeatureTable::new(
            users(3),
            vec![Column::continuous("x", some(&[1.0, 2.0, 3.0]))],
        )
        .unwrap();
        let s = standardize(&t).unwrap();
        assert_eq!(s.columns()[0].values, some(&[-1.0, 0.0, 1.0]));
        let again = standardize(&s).unwrap();
        for (a, b) in again.columns()[0].values.iter().zip(&s.columns()[0].values) {
            assert!((a.unwrap() - b.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_rejects_constant_and_missing() {
        let t =
            FeatureTable::new(users(3), vec![Column::continuous("c", some(&[4.0; 3]))]).unwrap();
        match standardize(&t) {
            Err(Error::ZeroVariance(name)) => assert_eq!(name, "c"),
            other => panic!("unexpected {other:?}"),
        }
        let t = FeatureTable::new(
            users(3),
            vec![Column::continuous("m", vec![Some(1.0), None, Some(2.0)])],
        )
        .unwrap();
        assert!(standardize(&t).is_err());
    }

    #[test]
    fn table_invariants() {
        assert!(FeatureTable::new(
            users(2),
            vec![
                Column::continuous("a", some(&[1.0, 2.0])),
                Column::continuous("a", some(&[1.0, 2.0]))
            ]
        )
        .is_err());
        assert!(FeatureTable::new(users(2), vec![Column::factor("f", some(&[0.0, 2.0]))]).is_err());
        assert!(FeatureTable::new(users(2), vec![Column::factor("f", some(&[0.0]))]).is_err());
    }

    #[test]
    fn impute_identity_when_complete() {
        let t = FeatureTable::new(
            users(3),
            vec![Column::continuous("x", some(&[1.0, 5.0, 3.0]))],
        )
        .unwrap();
        assert_eq!(impute_missing(&t, &ImputeOptions::default()).unwrap(), t);
    }

    #[test]
    fn impute_rejects_heavy_missingness() {
        // 3 of 25 missing = 12%
        let mut v = some(&(0..25).map(f64::from).collect::<Vec<_>>());
        v[0] = None;
        v[7] = None;
        v[20] = None;
        let t = FeatureTable::new(users(25), vec![Column::continuous("y", v)]).unwrap();
        match impute_missing(&t, &ImputeOptions::default()) {
            Err(Error::TooMuchMissing {
                column, fraction, ..
            }) => {
                assert_eq!(column, "y");
                assert!((fraction - 0.12).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        // exactly at the limit is also rejected
        let mut v = some(&[1.0; 10]);
        v[3] = None;
        let t = FeatureTable::new(users(10), vec![Column::continuous("y", v)]).unwrap();
        assert!(impute_missing(&t, &ImputeOptions::default()).is_err());
    }

    #[test]
    fn impute_recovers_exact_linear_relation() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.7 - 3.0).collect();
        let mut y: Vec<Option<f64>> = x.iter().map(|v| Some(2.0 * v)).collect();
        y[13] = None;
        let t = FeatureTable::new(
            users(20),
            vec![
                Column::continuous("x", some(&x)),
                Column::continuous("y", y),
            ],
        )
        .unwrap();
        let filled = impute_missing(&t, &ImputeOptions::default()).unwrap();
        let got = filled.column("y").unwrap().values[13].unwrap();
        assert!((got - 2.0 * x[13]).abs() < 1e-9);
    }

    #[test]
    fn impute_factor_by_discriminant() {
        // label is 1 exactly when x > 0
        let x: Vec<f64> = (0..40).map(|i| i as f64 - 19.5).collect();
        let mut f: Vec<Option<f64>> = x
            .iter()
            .map(|v| Some(if *v > 0.0 { 1.0 } else { 0.0 }))
            .collect();
        f[2] = None;
        f[37] = None;
        let t = FeatureTable::new(
            users(40),
            vec![Column::continuous("x", some(&x)), Column::factor("f", f)],
        )
        .unwrap();
        let filled = impute_missing(&t, &ImputeOptions::default()).unwrap();
        let col = filled.column("f").unwrap();
        assert_eq!(col.values[2], Some(0.0));
        assert_eq!(col.values[37], Some(1.0));
    }

    #[test]
    fn noisy_imputation_is_seeded() {
        let x: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let mut y: Vec<Option<f64>> = x
            .iter()
            .enumerate()
            .map(|(i, v)| Some(v + (i % 3) as f64 * 0.1))
            .collect();
        y[4] = None;
        let t = FeatureTable::new(
            users(30),
            vec![
                Column::continuous("x", some(&x)),
                Column::continuous("y", y),
            ],
        )
        .unwrap();
        let opts = ImputeOptions {
            noise_seed: Some(7),
            ..ImputeOptions::default()
        };
        let a = impute_missing(&t, &opts).unwrap();
        let b = impute_missing(&t, &opts).unwrap();
        assert_eq!(a, b);
        let plain = impute_missing(&t, &ImputeOptions::default()).unwrap();
        assert_ne!(
            a.column("y").unwrap().values[4],
            plain.column("y").unwrap().values[4]
        );
    }
}
