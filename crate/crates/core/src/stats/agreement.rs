//! Correlation, inter-rater agreement and one-way ANOVA.

use std::path::Path;

use serde::Serialize;

use super::special::{f_survival, t_two_sided_p};
use crate::error::{Error, Result};
use crate::table;

/// Ratings are on a 0..=5 scale.
pub const RATING_LEVELS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correlation {
    pub r: f64,
    pub t: f64,
    pub p: f64,
    pub n: usize,
}

/// Pearson correlation with a two-sided t test on `n - 2` degrees of freedom.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::TooFew {
            what: "paired observations",
            needed: 3,
            got: n,
        });
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if !(sxx > 0.0) {
        return Err(Error::Constant("x".into()));
    }
    if !(syy > 0.0) {
        return Err(Error::Constant("y".into()));
    }
    let r = (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let t = if r.abs() >= 1.0 {
        f64::INFINITY.copysign(r)
    } else {
        r * (df / (1.0 - r * r)).sqrt()
    };
    Ok(Correlation {
        r,
        t,
        p: t_two_sided_p(t, df),
        n,
    })
}

/// Complete subject-by-rater grid of 0..=5 ratings.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingSet {
    subjects: Vec<String>,
    raters: Vec<String>,
    /// `ratings[subject][rater]`.
    ratings: Vec<Vec<u8>>,
}

impl RatingSet {
    pub fn new(subjects: Vec<String>, raters: Vec<String>, ratings: Vec<Vec<u8>>) -> Result<Self> {
        if ratings.len() != subjects.len() {
            return Err(Error::DimensionMismatch {
                expected: subjects.len(),
                actual: ratings.len(),
            });
        }
        for row in &ratings {
            if row.len() != raters.len() {
                return Err(Error::DimensionMismatch {
                    expected: raters.len(),
                    actual: row.len(),
                });
            }
            if let Some(v) = row.iter().find(|v| usize::from(**v) >= RATING_LEVELS) {
                return Err(Error::Domain(format!("rating {v} outside 0..=5")));
            }
        }
        Ok(RatingSet {
            subjects,
            raters,
            ratings,
        })
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn raters(&self) -> &[String] {
        &self.raters
    }

    pub fn ratings(&self) -> &[Vec<u8>] {
        &self.ratings
    }

    /// Mean rating per subject.
    pub fn subject_means(&self) -> Vec<f64> {
        self.ratings
            .iter()
            .map(|row| row.iter().map(|&v| f64::from(v)).sum::<f64>() / row.len() as f64)
            .collect()
    }

    fn rater_column(&self, rater: usize) -> Vec<u8> {
        self.ratings.iter().map(|row| row[rater]).collect()
    }

    fn check_shape(&self) -> Result<()> {
        if self.raters.len() < 2 {
            return Err(Error::TooFew {
                what: "raters",
                needed: 2,
                got: self.raters.len(),
            });
        }
        if self.subjects.len() < 2 {
            return Err(Error::TooFew {
                what: "subjects",
                needed: 2,
                got: self.subjects.len(),
            });
        }
        Ok(())
    }
}

/// Reads `subject_id,<rater1>,<rater2>,...`.
pub fn parse_ratings(path: &Path) -> Result<RatingSet> {
    let (mut reader, header) = table::open_any(path)?;
    if header.get(0).map(str::trim) != Some("subject_id") {
        return Err(Error::parse(path, 1, "first column must be `subject_id`"));
    }
    let raters: Vec<String> = header
        .iter()
        .skip(1)
        .map(|s| s.trim().to_string())
        .collect();
    let mut subjects = Vec::new();
    let mut ratings = Vec::new();
    for row in table::rows(path, &mut reader, header.len()) {
        let (line, rec) = row?;
        subjects.push(rec[0].trim().to_string());
        let vals = rec
            .iter()
            .skip(1)
            .map(|cell| {
                cell.trim()
                    .parse::<u8>()
                    .ok()
                    .filter(|v| usize::from(*v) < RATING_LEVELS)
                    .ok_or_else(|| Error::parse(path, line, format!("invalid rating `{cell}`")))
            })
            .collect::<Result<Vec<u8>>>()?;
        ratings.push(vals);
    }
    RatingSet::new(subjects, raters, ratings)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Kappa {
    pub kappa: f64,
    /// Expected agreement was 1, so kappa is reported as 1 by convention.
    pub degenerate: bool,
}

/// Fleiss' kappa over the six rating categories.
pub fn fleiss_kappa(ratings: &RatingSet) -> Result<Kappa> {
    ratings.check_shape()?;
    let n_subjects = ratings.subjects.len() as f64;
    let n_raters = ratings.raters.len() as f64;
    let mut category_totals = [0.0; RATING_LEVELS];
    let mut observed = 0.0;
    for row in &ratings.ratings {
        let mut counts = [0.0f64; RATING_LEVELS];
        for &v in row {
            counts[usize::from(v)] += 1.0;
        }
        let agree: f64 = counts.iter().map(|c| c * c).sum::<f64>() - n_raters;
        observed += agree / (n_raters * (n_raters - 1.0));
        for (t, c) in category_totals.iter_mut().zip(counts) {
            *t += c;
        }
    }
    let observed = observed / n_subjects;
    let expected: f64 = category_totals
        .iter()
        .map(|t| (t / (n_subjects * n_raters)).powi(2))
        .sum();
    Ok(chance_corrected(observed, expected))
}

fn chance_corrected(observed: f64, expected: f64) -> Kappa {
    if expected >= 1.0 - 1e-15 {
        Kappa {
            kappa: 1.0,
            degenerate: true,
        }
    } else {
        Kappa {
            kappa: (observed - expected) / (1.0 - expected),
            degenerate: false,
        }
    }
}

/// Unweighted Cohen's kappa between two raters.
pub fn cohen_kappa(a: &[u8], b: &[u8]) -> Result<Kappa> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::TooFew {
            what: "subjects",
            needed: 1,
            got: 0,
        });
    }
    let n = a.len() as f64;
    let mut ma = [0.0; RATING_LEVELS];
    let mut mb = [0.0; RATING_LEVELS];
    let mut agree = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        ma[usize::from(x)] += 1.0;
        mb[usize::from(y)] += 1.0;
        if x == y {
            agree += 1.0;
        }
    }
    let expected: f64 = ma.iter().zip(&mb).map(|(p, q)| (p / n) * (q / n)).sum();
    Ok(chance_corrected(agree / n, expected))
}

/// Mean of Cohen's kappa over all rater pairs.
pub fn cohen_kappa_avg(ratings: &RatingSet) -> Result<Kappa> {
    ratings.check_shape()?;
    let m = ratings.raters.len();
    let columns: Vec<Vec<u8>> = (0..m).map(|r| ratings.rater_column(r)).collect();
    let mut sum = 0.0;
    let mut pairs = 0.0;
    let mut degenerate = false;
    for i in 0..m {
        for j in i + 1..m {
            let k = cohen_kappa(&columns[i], &columns[j])?;
            sum += k.kappa;
            pairs += 1.0;
            degenerate |= k.degenerate;
        }
    }
    Ok(Kappa {
        kappa: sum / pairs,
        degenerate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Anova {
    pub f: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p: f64,
    /// Both sums of squares were zero.
    pub degenerate: bool,
}

/// One-way ANOVA across `groups`.
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<Anova> {
    if groups.len() < 2 {
        return Err(Error::TooFew {
            what: "groups",
            needed: 2,
            got: groups.len(),
        });
    }
    if let Some(g) = groups.iter().find(|g| g.len() < 2) {
        return Err(Error::TooFew {
            what: "observations per group",
            needed: 2,
            got: g.len(),
        });
    }
    let total_n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / total_n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        ss_between += g.len() as f64 * (mean - grand).powi(2);
        ss_within += g.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    }
    let df_between = groups.len() - 1;
    let df_within = total_n - groups.len();
    if ss_within == 0.0 && ss_between == 0.0 {
        return Ok(Anova {
            f: f64::NAN,
            df_between,
            df_within,
            p: f64::NAN,
            degenerate: true,
        });
    }
    let f = if ss_within == 0.0 {
        f64::INFINITY
    } else {
        (ss_between / df_between as f64) / (ss_within / df_within as f64)
    };
    Ok(Anova {
        f,
        df_between,
        df_within,
        p: f_survival(f, df_between as f64, df_within as f64),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rating_set(rows: Vec<Vec<u8>>) -> RatingSet {
        let subjects = (0..rows.len()).map(|i| format!("s{i}")).collect();
        let raters = (0..rows[0].len()).map(|i| format!("r{i}")).collect();
        RatingSet::new(subjects, raters, rows).unwrap()
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &x).unwrap().r - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap().r + 1.0).abs() < 1e-15);
        let c = pearson(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((c.r - 0.8).abs() < 1e-12);
        // t = 0.8 * sqrt(2 / 0.36)
        assert!((c.t - 0.8 * (2.0f64 / 0.36).sqrt()).abs() < 1e-12);
        assert!(pearson(&x, &[2.0; 4]).is_err());
        assert!(pearson(&x[..2], &x[..2]).is_err());
    }

    #[test]
    fn kappa_perfect_agreement() {
        let rs = rating_set(vec![vec![1, 1, 1], vec![4, 4, 4], vec![0, 0, 0]]);
        let f = fleiss_kappa(&rs).unwrap();
        assert_eq!(f.kappa, 1.0);
        assert!(!f.degenerate);
        assert_eq!(cohen_kappa_avg(&rs).unwrap().kappa, 1.0);
    }

    #[test]
    fn kappa_degenerate_when_single_category() {
        let rs = rating_set(vec![vec![3, 3], vec![3, 3]]);
        let f = fleiss_kappa(&rs).unwrap();
        assert!(f.degenerate);
        assert_eq!(f.kappa, 1.0);
        assert!(cohen_kappa_avg(&rs).unwrap().degenerate);
    }

    #[test]
    fn fleiss_textbook_value() {
        // two raters, 4 subjects: agree on 2 (cats 1 and 2), disagree on 2
        let rs = rating_set(vec![vec![1, 1], vec![2, 2], vec![1, 2], vec![2, 1]]);
        // observed 0.5, category shares 0.5/0.5 -> expected 0.5 -> kappa 0
        assert!(fleiss_kappa(&rs).unwrap().kappa.abs() < 1e-15);
        assert!(cohen_kappa_avg(&rs).unwrap().kappa.abs() < 1e-15);
    }

    #[test]
    fn kappa_shape_errors() {
        assert!(fleiss_kappa(&rating_set(vec![vec![1], vec![2]])).is_err());
        assert!(fleiss_kappa(&rating_set(vec![vec![1, 2]])).is_err());
        assert!(RatingSet::new(vec!["s".into()], vec!["a".into()], vec![vec![6]]).is_err());
    }

    #[test]
    fn cohen_rater_order_invariant() {
        let rs = rating_set(vec![
            vec![1, 2, 2],
            vec![3, 3, 4],
            vec![0, 1, 0],
            vec![5, 5, 5],
            vec![2, 2, 3],
        ]);
        let swapped = rating_set(
            rs.ratings()
                .iter()
                .map(|r| vec![r[2], r[0], r[1]])
                .collect(),
        );
        let a = cohen_kappa_avg(&rs).unwrap().kappa;
        let b = cohen_kappa_avg(&swapped).unwrap().kappa;
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn anova_cases() {
        let g = vec![1.0, 2.0, 3.0];
        let a = one_way_anova(&[g.clone(), g]).unwrap();
        assert_eq!(a.f, 0.0);
        assert_eq!(a.p, 1.0);

        let lo = vec![0.0, 0.001, -0.001, 0.0005];
        let hi = vec![10.0, 10.001, 9.999, 10.0005];
        let a = one_way_anova(&[lo, hi]).unwrap();
        assert!(a.p < 0.001);
        assert_eq!((a.df_between, a.df_within), (1, 6));

        let a = one_way_anova(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(a.degenerate);
        assert!(one_way_anova(&[vec![1.0, 2.0]]).is_err());
        assert!(one_way_anova(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn anova_two_groups_matches_t_test() {
        // with two groups F = t² and p values coincide
        let a = vec![1.2, 2.3, 1.9, 2.8, 2.0];
        let b = vec![2.9, 3.1, 3.8, 2.6, 3.3, 3.0];
        let anova = one_way_anova(&[a.clone(), b.clone()]).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let ss = |v: &[f64]| {
            let m = mean(v);
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>()
        };
        let df = (a.len() + b.len() - 2) as f64;
        let pooled = (ss(&a) + ss(&b)) / df;
        let t =
            (mean(&a) - mean(&b)) / (pooled * (1.0 / a.len() as f64 + 1.0 / b.len() as f64)).sqrt();
        assert!((anova.f - t * t).abs() < 1e-10);
        assert!((anova.p - t_two_sided_p(t, df)).abs() < 1e-10);
    }
}
