//! Play logs, artist catalogs and interest tables.
//!
//! Raw listening counts are filtered down to each user's top artists and then
//! folded into a row-stochastic [`ConsumptionMatrix`]. An artist tagged with
//! several categories splits its play count equally between them.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::table;

/// Row-sum tolerance for proportion rows.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlayRecord {
    pub user_id: String,
    pub artist_id: String,
    pub play_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct ArtistEntry {
    pub artist_id: String,
    pub name: String,
    #[serde(default)]
    pub genres: Vec<String>,
    #[serde(default)]
    pub subgenres: Vec<String>,
}

impl ArtistEntry {
    pub fn categories(&self, level: Level) -> &[String] {
        match level {
            Level::Genre => &self.genres,
            Level::Subgenre => &self.subgenres,
        }
    }

    /// An artist without any genre never qualifies for a user's top list.
    pub fn is_classified(&self) -> bool {
        !self.genres.is_empty()
    }
}

pub type Catalog = BTreeMap<String, ArtistEntry>;

/// Category granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Level {
    Genre,
    Subgenre,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Genre => "genre",
            Level::Subgenre => "subgenre",
        }
    }
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "genre" => Ok(Level::Genre),
            "subgenre" => Ok(Level::Subgenre),
            other => Err(Error::Invalid(format!("unknown level `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterPolicy {
    pub top_k: usize,
    pub min_plays_per_artist: u64,
    /// Require `play_count > min_plays_per_artist` instead of `>=`.
    pub strict_min_plays: bool,
    pub drop_incomplete_users: bool,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        FilterPolicy {
            top_k: 50,
            min_plays_per_artist: 100,
            strict_min_plays: false,
            drop_incomplete_users: true,
        }
    }
}

impl FilterPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::Invalid("top_k must be at least 1".into()));
        }
        Ok(())
    }

    fn passes_threshold(&self, plays: u64) -> bool {
        if self.strict_min_plays {
            plays > self.min_plays_per_artist
        } else {
            plays >= self.min_plays_per_artist
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct DroppedUser {
    pub user_id: String,
    pub reason: String,
}

/// Output of [`select_top_artists`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Selection {
    /// Per user, `(artist_id, play_count)` in descending play order.
    pub users: BTreeMap<String, Vec<(String, u64)>>,
    pub dropped: Vec<DroppedUser>,
}

/// Dense user-by-category proportion grid. Every row sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsumptionMatrix {
    users: Vec<String>,
    categories: Vec<String>,
    proportions: Vec<Vec<f64>>,
}

impl ConsumptionMatrix {
    /// Validates shape and row-stochasticity.
    pub fn new(
        users: Vec<String>,
        categories: Vec<String>,
        proportions: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if proportions.len() != users.len() {
            return Err(Error::DimensionMismatch {
                expected: users.len(),
                actual: proportions.len(),
            });
        }
        for (user, row) in users.iter().zip(&proportions) {
            if row.len() != categories.len() {
                return Err(Error::DimensionMismatch {
                    expected: categories.len(),
                    actual: row.len(),
                });
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Domain(format!(
                    "user `{user}` has a proportion outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Domain(format!(
                    "user `{user}` proportions sum to {sum}"
                )));
            }
        }
        Ok(ConsumptionMatrix {
            users,
            categories,
            proportions,
        })
    }

    /// Normalizes non-negative per-user category weights into proportions.
    ///
    /// Columns are the union of categories with positive total mass, in
    /// lexicographic order. Users with zero total weight are returned as
    /// dropped with `zero_reason`.
    pub fn from_weights(
        weights: &BTreeMap<String, BTreeMap<String, f64>>,
        zero_reason: &str,
    ) -> (Self, Vec<DroppedUser>) {
        let mut dropped = Vec::new();
        let mut kept: Vec<(&String, &BTreeMap<String, f64>, f64)> = Vec::new();
        for (user, row) in weights {
            let total: f64 = row.values().sum();
            if total > 0.0 {
                kept.push((user, row, total));
            } else {
                dropped.push(DroppedUser {
                    user_id: user.clone(),
                    reason: zero_reason.to_string(),
                });
            }
        }
        let categories: Vec<String> = kept
            .iter()
            .flat_map(|(_, row, _)| row.iter().filter(|(_, w)| **w > 0.0).map(|(c, _)| c))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .cloned()
            .collect();
        let index: BTreeMap<&str, usize> = categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let mut users = Vec::with_capacity(kept.len());
        let mut proportions = Vec::with_capacity(kept.len());
        for (user, row, total) in kept {
            let mut p = vec![0.0; categories.len()];
            for (cat, w) in row {
                if *w > 0.0 {
                    p[index[cat.as_str()]] = w / total;
                }
            }
            users.push(user.clone());
            proportions.push(p);
        }
        (
            ConsumptionMatrix {
                users,
                categories,
                proportions,
            },
            dropped,
        )
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.proportions
    }

    pub fn row(&self, user: usize) -> &[f64] {
        &self.proportions[user]
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn column(&self, category: usize) -> impl Iterator<Item = f64> + '_ {
        self.proportions.iter().map(move |row| row[category])
    }
}

/// Reads `user_id,artist_id,play_count` rows.
pub fn parse_plays(path: &Path) -> Result<Vec<PlayRecord>> {
    let mut reader = table::open(path, &["user_id", "artist_id", "play_count"])?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for row in table::rows(path, &mut reader, 3) {
        let (line, rec) = row?;
        let play_count: u64 = rec[2]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, line, format!("invalid play count `{}`", &rec[2])))?;
        let user_id = rec[0].trim().to_string();
        let artist_id = rec[1].trim().to_string();
        if user_id.is_empty() || artist_id.is_empty() {
            return Err(Error::parse(path, line, "empty identifier"));
        }
        if !seen.insert((user_id.clone(), artist_id.clone())) {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate pair ({user_id}, {artist_id})"),
            ));
        }
        out.push(PlayRecord {
            user_id,
            artist_id,
            play_count,
        });
    }
    Ok(out)
}

fn jsonl_lines(path: &Path) -> Result<impl Iterator<Item = Result<(u64, String)>> + '_> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .filter_map(move |(i, line)| match line {
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(Ok((i as u64 + 1, l))),
            Err(e) => Some(Err(Error::io(path, e))),
        }))
}

fn check_labels(path: &Path, line: u64, labels: &[String]) -> Result<()> {
    let mut seen = HashSet::new();
    for label in labels {
        if label.trim().is_empty() {
            return Err(Error::parse(path, line, "empty category label"));
        }
        if !seen.insert(label.as_str()) {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate label `{label}`"),
            ));
        }
    }
    Ok(())
}

/// Reads one artist object per line.
pub fn parse_catalog(path: &Path) -> Result<Catalog> {
    let mut catalog = Catalog::new();
    for item in jsonl_lines(path)? {
        let (line, text) = item?;
        let entry: ArtistEntry =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, line, e.to_string()))?;
        check_labels(path, line, &entry.genres)?;
        check_labels(path, line, &entry.subgenres)?;
        if catalog.contains_key(&entry.artist_id) {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate artist_id `{}`", entry.artist_id),
            ));
        }
        catalog.insert(entry.artist_id.clone(), entry);
    }
    Ok(catalog)
}

/// Keeps each user's `top_k` qualifying artists.
///
/// An artist qualifies when it is classified in the catalog and clears the
/// play threshold. Ties on play count go to the smaller artist id.
pub fn select_top_artists(
    plays: &[PlayRecord],
    policy: &FilterPolicy,
    catalog: &Catalog,
) -> Selection {
    let mut per_user: BTreeMap<&str, Vec<(&str, u64)>> = BTreeMap::new();
    for rec in plays {
        let entry = per_user.entry(rec.user_id.as_str()).or_default();
        let qualifies = policy.passes_threshold(rec.play_count)
            && catalog
                .get(&rec.artist_id)
                .is_some_and(ArtistEntry::is_classified);
        if qualifies {
            entry.push((rec.artist_id.as_str(), rec.play_count));
        }
    }

    let mut selection = Selection::default();
    for (user, mut artists) in per_user {
        artists.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        artists.truncate(policy.top_k);
        if artists.len() < policy.top_k && policy.drop_incomplete_users {
            selection.dropped.push(DroppedUser {
                user_id: user.to_string(),
                reason: format!("incomplete-top-k ({} of {})", artists.len(), policy.top_k),
            });
            continue;
        }
        selection.users.insert(
            user.to_string(),
            artists
                .into_iter()
                .map(|(a, n)| (a.to_string(), n))
                .collect(),
        );
    }
    selection
}

/// Per-user category weights before normalization.
pub fn category_weights(
    selected: &BTreeMap<String, Vec<(String, u64)>>,
    catalog: &Catalog,
    level: Level,
) -> BTreeMap<String, BTreeMap<String, f64>> {
    selected
        .iter()
        .map(|(user, artists)| {
            let mut row: BTreeMap<String, f64> = BTreeMap::new();
            for (artist, plays) in artists {
                let Some(entry) = catalog.get(artist) else {
                    continue;
                };
                let cats = entry.categories(level);
                if cats.is_empty() {
                    continue;
                }
                let share = *plays as f64 / cats.len() as f64;
                for cat in cats {
                    *row.entry(cat.clone()).or_default() += share;
                }
            }
            (user.clone(), row)
        })
        .collect()
}

/// Builds the proportion matrix at `level`, splitting each artist's plays
/// equally across its categories.
pub fn build_consumption_matrix(
    selected: &BTreeMap<String, Vec<(String, u64)>>,
    catalog: &Catalog,
    level: Level,
) -> (ConsumptionMatrix, Vec<DroppedUser>) {
    let weights = category_weights(selected, catalog, level);
    ConsumptionMatrix::from_weights(&weights, &format!("unclassified-at-{level}"))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Topic {
    pub label: String,
    pub weight: f64,
}

#[derive(Deserialize)]
struct InterestLine {
    user_id: String,
    topics: Vec<Topic>,
}

pub type Interests = BTreeMap<String, Vec<Topic>>;

pub fn parse_interests(path: &Path) -> Result<Interests> {
    let mut out = Interests::new();
    for item in jsonl_lines(path)? {
        let (line, text) = item?;
        let rec: InterestLine =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, line, e.to_string()))?;
        if rec
            .topics
            .iter()
            .any(|t| !(t.weight >= 0.0) || !t.weight.is_finite())
        {
            return Err(Error::parse(
                path,
                line,
                "topic weights must be non-negative",
            ));
        }
        if out.contains_key(&rec.user_id) {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate user_id `{}`", rec.user_id),
            ));
        }
        out.insert(rec.user_id, rec.topics);
    }
    Ok(out)
}

/// Weighted share of topics whose label mentions "music", case-insensitively.
pub fn music_share(topics: &[Topic]) -> Result<f64> {
    let total: f64 = topics.iter().map(|t| t.weight).sum();
    if !(total > 0.0) {
        return Err(Error::Domain("all topic weights are zero".into()));
    }
    let music: f64 = topics
        .iter()
        .filter(|t| t.label.to_lowercase().contains("music"))
        .map(|t| t.weight)
        .sum();
    Ok(music / total)
}

pub fn music_interest_share(interests: &Interests) -> BTreeMap<String, Result<f64>> {
    interests
        .iter()
        .map(|(user, topics)| (user.clone(), music_share(topics)))
        .collect()
}

/// User-by-topic proportion matrix, for interest diversity.
pub fn interest_matrix(interests: &Interests) -> (ConsumptionMatrix, Vec<DroppedUser>) {
    let weights: BTreeMap<String, BTreeMap<String, f64>> = interests
        .iter()
        .map(|(user, topics)| {
            let mut row: BTreeMap<String, f64> = BTreeMap::new();
            for t in topics {
                *row.entry(t.label.clone()).or_default() += t.weight;
            }
            (user.clone(), row)
        })
        .collect();
    ConsumptionMatrix::from_weights(&weights, "no-interest-weight")
}

/// Per-user numeric attributes keyed by column name; empty cells are missing.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Profiles {
    pub columns: Vec<String>,
    pub rows: BTreeMap<String, Vec<Option<f64>>>,
}

impl Profiles {
    pub fn get(&self, user: &str, column: &str) -> Option<Option<f64>> {
        let j = self.columns.iter().position(|c| c == column)?;
        self.rows.get(user).map(|r| r[j])
    }
}

/// Reads `user_id,<attr>,...` with numeric attribute cells.
pub fn parse_profiles(path: &Path) -> Result<Profiles> {
    let (mut reader, header) = table::open_any(path)?;
    if header.get(0).map(str::trim) != Some("user_id") {
        return Err(Error::parse(path, 1, "first column must be `user_id`"));
    }
    let columns: Vec<String> = header
        .iter()
        .skip(1)
        .map(|c| c.trim().to_string())
        .collect();
    check_labels(path, 1, &columns)?;
    let mut rows = BTreeMap::new();
    for row in table::rows(path, &mut reader, header.len()) {
        let (line, rec) = row?;
        let user = rec[0].trim().to_string();
        let values = rec
            .iter()
            .skip(1)
            .map(|cell| table::optional_f64(path, line, cell))
            .collect::<Result<Vec<_>>>()?;
        if rows.insert(user.clone(), values).is_some() {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate user_id `{user}`"),
            ));
        }
    }
    Ok(Profiles { columns, rows })
}
