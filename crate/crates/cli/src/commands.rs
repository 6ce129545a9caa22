use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::Serialize;
use tastediv_core::divcore::{
    classical_mds, cosine_distance_matrix, diversity_batch, DiversityReport,
};
use tastediv_core::geo::{self, racial_diversity_index};
use tastediv_core::ingest::{self, DroppedUser};
use tastediv_core::report::{self, Role, SchemaEntry};
use tastediv_core::stats::{
    cohen_kappa_avg, fleiss_kappa, impute_missing, ols_regress, one_way_anova, parse_ratings,
    pearson, standardize, Anova, Column, ColumnKind, Correlation, FeatureTable, Kappa,
    RegressionReport,
};
use tastediv_core::{DistanceMatrix, Level};

use crate::config::{Input, PipelineConfig};
use crate::staging::Staging;
use crate::CliError;

/// Profile columns copied into the feature table, with their kinds.
const PROFILE_COLUMNS: [(&str, ColumnKind); 9] = [
    ("news_reader", ColumnKind::Factor),
    ("age", ColumnKind::Continuous),
    ("gender", ColumnKind::Factor),
    ("event_attendance", ColumnKind::Continuous),
    ("loved_tracks", ColumnKind::Continuous),
    ("days_registered", ColumnKind::Continuous),
    ("lastfm_friends", ColumnKind::Continuous),
    ("twitter_friends", ColumnKind::Continuous),
    ("timezone_diversity", ColumnKind::Continuous),
];

/// Predictor order in features.csv.
pub const PREDICTORS: [&str; 15] = [
    "income",
    "education",
    "racial_diversity",
    "news_reader",
    "urbanness",
    "age",
    "gender",
    "event_attendance",
    "loved_tracks",
    "days_registered",
    "lastfm_friends",
    "music_interest",
    "twitter_friends",
    "timezone_diversity",
    "interest_diversity",
];

fn csv_bytes<F>(f: F) -> Result<Vec<u8>, CliError>
where
    F: FnOnce(&mut Vec<u8>) -> tastediv_core::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut buf = serde_json::to_vec_pretty(value)
        .map_err(|e| CliError::Compute(format!("serializing report: {e}")))?;
    buf.push(b'\n');
    Ok(buf)
}

fn upstream(cfg: &PipelineConfig, name: &str, producer: &str) -> Result<PathBuf, CliError> {
    let path = cfg.out.join(name);
    if !path.is_file() {
        return Err(CliError::Usage(format!(
            "{} not found; run `tastediv {producer}` first",
            path.display()
        )));
    }
    Ok(path)
}

fn diversity_file(level: Level) -> String {
    format!("diversity_{level}.csv")
}

pub fn diversity(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    let plays = ingest::parse_plays(cfg.require(Input::Plays)?)?;
    let catalog = ingest::parse_catalog(cfg.require(Input::Catalog)?)?;
    let selection = ingest::select_top_artists(&plays, &cfg.policy, &catalog);

    let mut stage = Staging::new(&cfg.out)?;
    let mut dropped: BTreeSet<DroppedUser> = selection.dropped.iter().cloned().collect();
    for level in cfg.level.levels() {
        let (cm, unclassified) =
            ingest::build_consumption_matrix(&selection.users, &catalog, level);
        dropped.extend(unclassified);
        let d = cosine_distance_matrix(&cm)?;
        let reports = diversity_batch(&cm, &d)?;
        stage.write(
            &format!("distances_{level}.csv"),
            &csv_bytes(|b| report::write_distances(b, &d))?,
        )?;
        stage.write(
            &diversity_file(level),
            &csv_bytes(|b| report::write_diversity(b, &reports))?,
        )?;
    }
    let dropped: Vec<_> = dropped.into_iter().collect();
    stage.write(
        "dropped_users.csv",
        &csv_bytes(|b| report::write_dropped(b, &dropped))?,
    )?;
    stage.commit()
}

/// Level drawn by `map`; the genre map when both are requested.
fn map_level(cfg: &PipelineConfig) -> Level {
    cfg.level.levels()[0]
}

fn map_distances(cfg: &PipelineConfig) -> Result<DistanceMatrix, CliError> {
    if cfg.path(Input::Distances).is_some() {
        return Ok(report::read_distances(cfg.require(Input::Distances)?)?);
    }
    let plays = ingest::parse_plays(cfg.require(Input::Plays)?)?;
    let catalog = ingest::parse_catalog(cfg.require(Input::Catalog)?)?;
    let selection = ingest::select_top_artists(&plays, &cfg.policy, &catalog);
    let (cm, _) = ingest::build_consumption_matrix(&selection.users, &catalog, map_level(cfg));
    Ok(cosine_distance_matrix(&cm)?)
}

pub fn map(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    let d = map_distances(cfg)?;
    if d.len() < 3 {
        return Err(CliError::Compute(format!(
            "a map needs at least 3 categories, got {}",
            d.len()
        )));
    }
    let embedding = classical_mds(&d, 2)?;
    let mut stage = Staging::new(&cfg.out)?;
    stage.write("mds.csv", &csv_bytes(|b| report::write_mds(b, &embedding))?)?;
    stage.write("mds.svg", report::mds_svg(&embedding).as_bytes())?;
    stage.commit()
}

pub fn homeloc(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    let pings = geo::parse_pings(cfg.require(Input::Pings)?)?;
    let zips = geo::parse_zips(cfg.require(Input::Zips)?)?;
    let homes = geo::resolve_all(&pings, &zips, &cfg.geo)?;
    let mut stage = Staging::new(&cfg.out)?;
    stage.write("homes.csv", &csv_bytes(|b| report::write_homes(b, &homes))?)?;
    stage.commit()
}

type LevelScores = Vec<(Level, BTreeMap<String, DiversityReport>)>;

fn read_level_scores(cfg: &PipelineConfig) -> Result<LevelScores, CliError> {
    cfg.level
        .levels()
        .into_iter()
        .map(|level| {
            let path = upstream(cfg, &diversity_file(level), "diversity")?;
            let scores = report::read_diversity(&path)?
                .into_iter()
                .map(|r| (r.user_id.clone(), r))
                .collect();
            Ok((level, scores))
        })
        .collect()
}

pub fn features(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    let census = geo::parse_census(cfg.require(Input::Census)?)?;
    let urbanness = geo::parse_urbanness(cfg.require(Input::Urbanness)?)?;
    let interests = ingest::parse_interests(cfg.require(Input::Interests)?)?;
    let profiles = ingest::parse_profiles(cfg.require(Input::Profiles)?)?;
    for (name, _) in PROFILE_COLUMNS {
        if !profiles.columns.iter().any(|c| c == name) {
            return Err(CliError::Compute(format!(
                "profiles table lacks column `{name}`"
            )));
        }
    }
    let scores = read_level_scores(cfg)?;
    let homes: BTreeMap<String, geo::HomeLocation> =
        report::read_homes(&upstream(cfg, "homes.csv", "homeloc")?)?
            .into_iter()
            .map(|h| (h.user_id.clone(), h))
            .collect();

    let music = ingest::music_interest_share(&interests);
    let (interest_cm, _) = ingest::interest_matrix(&interests);
    let interest_div: BTreeMap<String, f64> = if interest_cm.n_users() == 0 {
        BTreeMap::new()
    } else {
        let d = cosine_distance_matrix(&interest_cm)?;
        diversity_batch(&interest_cm, &d)?
            .into_iter()
            .map(|r| (r.user_id, r.rao_stirling))
            .collect()
    };

    // users scored at every requested level
    let mut users: BTreeSet<&String> = scores[0].1.keys().collect();
    for (_, s) in &scores[1..] {
        users.retain(|u| s.contains_key(*u));
    }

    let mut kept = Vec::new();
    let mut rows: Vec<BTreeMap<&str, Option<f64>>> = Vec::new();
    let mut excluded = Vec::new();
    for user in users {
        let exclude = |reason: &str| DroppedUser {
            user_id: user.clone(),
            reason: reason.to_string(),
        };
        let Some(home) = homes.get(user) else {
            excluded.push(exclude(geo::REASON_NO_HOME));
            continue;
        };
        let place = match geo::join_census(home, &census, &urbanness) {
            Ok(p) => p,
            Err(e) => {
                excluded.push(exclude(&e.reason));
                continue;
            }
        };
        let Some(share) = music.get(user) else {
            excluded.push(exclude("no-interests"));
            continue;
        };
        let (Ok(share), Some(&idiv)) = (share, interest_div.get(user)) else {
            excluded.push(exclude("no-interest-weight"));
            continue;
        };
        if !profiles.rows.contains_key(user) {
            excluded.push(exclude("no-profile"));
            continue;
        }
        let mut row: BTreeMap<&str, Option<f64>> = BTreeMap::new();
        row.insert("income", Some(place.median_household_income));
        row.insert("education", Some(place.pct_bachelor));
        row.insert(
            "racial_diversity",
            Some(racial_diversity_index(&place.race_proportions)?),
        );
        row.insert("urbanness", Some(f64::from(place.urbanness)));
        row.insert("music_interest", Some(*share));
        row.insert("interest_diversity", Some(idiv));
        for (name, _) in PROFILE_COLUMNS {
            row.insert(name, profiles.get(user, name).flatten());
        }
        kept.push(user.clone());
        rows.push(row);
    }

    let kind_of = |name: &str| {
        PROFILE_COLUMNS
            .iter()
            .find(|(n, _)| *n == name)
            .map_or(ColumnKind::Continuous, |(_, k)| *k)
    };
    let mut columns: Vec<Column> = PREDICTORS
        .iter()
        .map(|&name| Column {
            name: name.to_string(),
            kind: kind_of(name),
            values: rows.iter().map(|r| r[name]).collect(),
        })
        .collect();
    let mut schema: Vec<SchemaEntry> = columns
        .iter()
        .map(|c| SchemaEntry {
            column: c.name.clone(),
            kind: c.kind,
            role: Role::Predictor,
        })
        .collect();
    for (level, s) in &scores {
        let name = format!("diversity_{level}");
        columns.push(Column::continuous(
            name.clone(),
            kept.iter().map(|u| Some(s[u].rao_stirling)).collect(),
        ));
        schema.push(SchemaEntry {
            column: name,
            kind: ColumnKind::Continuous,
            role: Role::Response,
        });
    }
    let table = FeatureTable::new(kept, columns)?;

    let mut stage = Staging::new(&cfg.out)?;
    stage.write(
        "features.csv",
        &csv_bytes(|b| report::write_features(b, &table))?,
    )?;
    stage.write(
        "features_schema.csv",
        &csv_bytes(|b| report::write_schema(b, &schema))?,
    )?;
    stage.write(
        "features_excluded.csv",
        &csv_bytes(|b| report::write_dropped(b, &excluded))?,
    )?;
    stage.commit()
}

#[derive(Serialize)]
struct NewsReaderCheck {
    income: Anova,
    education: Anova,
}

#[derive(Serialize)]
struct RegressionOutput {
    n: usize,
    imputed_cells: usize,
    models: BTreeMap<String, RegressionReport>,
    /// Income and education of news readers against everyone else.
    news_reader_anova: Option<NewsReaderCheck>,
}

fn news_reader_check(table: &FeatureTable) -> Result<Option<NewsReaderCheck>, CliError> {
    let (Some(news), Some(income), Some(edu)) = (
        table.column("news_reader"),
        table.column("income"),
        table.column("education"),
    ) else {
        return Ok(None);
    };
    let flag = news.dense()?;
    let split = |c: &Column| -> Result<Vec<Vec<f64>>, CliError> {
        let v = c.dense()?;
        let mut groups = vec![Vec::new(), Vec::new()];
        for (x, f) in v.iter().zip(&flag) {
            groups[usize::from(*f > 0.5)].push(*x);
        }
        Ok(groups)
    };
    let (gi, ge) = (split(income)?, split(edu)?);
    if gi.iter().any(|g| g.len() < 2) {
        return Ok(None);
    }
    Ok(Some(NewsReaderCheck {
        income: one_way_anova(&gi)?,
        education: one_way_anova(&ge)?,
    }))
}

pub fn regress(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    let schema = report::read_schema(&upstream(cfg, "features_schema.csv", "features")?)?;
    let raw = report::read_features(&upstream(cfg, "features.csv", "features")?, &schema)?;
    let imputed_cells = raw.columns().iter().map(Column::missing_count).sum();
    let filled = impute_missing(&raw, &cfg.impute)?;
    let scaled = standardize(&filled)?;

    let role_of = |name: &str| schema.iter().find(|s| s.column == name).map(|s| s.role);
    let mut names = Vec::new();
    let mut predictors = Vec::new();
    let mut responses = Vec::new();
    for col in scaled.columns() {
        match role_of(&col.name) {
            Some(Role::Response) => responses.push((col.name.clone(), col.dense()?)),
            _ => {
                names.push(col.name.clone());
                predictors.push(col.dense()?);
            }
        }
    }
    if responses.is_empty() {
        return Err(CliError::Compute(
            "schema declares no response column".into(),
        ));
    }
    let mut models = BTreeMap::new();
    for (name, y) in &responses {
        models.insert(name.clone(), ols_regress(y, &names, &predictors)?);
    }
    let out = RegressionOutput {
        n: scaled.n_rows(),
        imputed_cells,
        models,
        news_reader_anova: news_reader_check(&filled)?,
    };
    let mut stage = Staging::new(&cfg.out)?;
    stage.write("regression_report.json", &json_bytes(&out)?)?;
    stage.commit()
}

#[derive(Serialize)]
struct LevelAgreement {
    n: usize,
    rao_stirling: Option<Correlation>,
    entropy: Option<Correlation>,
    volume: Option<Correlation>,
}

#[derive(Serialize)]
struct AgreementOutput {
    subjects: usize,
    raters: Vec<String>,
    fleiss: Kappa,
    cohen_avg: Kappa,
    correlations: BTreeMap<String, LevelAgreement>,
    /// Rated subjects with no computed score at some level.
    unscored_subjects: Vec<String>,
}

pub fn agreement(cfg: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    let ratings = parse_ratings(cfg.require(Input::Ratings)?)?;
    let scores = read_level_scores(cfg)?;
    let means = ratings.subject_means();

    let mut unscored = BTreeSet::new();
    let mut correlations = BTreeMap::new();
    for (level, s) in &scores {
        let mut rater = Vec::new();
        let mut picked: Vec<&DiversityReport> = Vec::new();
        for (subject, mean) in ratings.subjects().iter().zip(&means) {
            match s.get(subject) {
                Some(r) => {
                    rater.push(*mean);
                    picked.push(r);
                }
                None => {
                    unscored.insert(subject.clone());
                }
            }
        }
        let against = |f: fn(&DiversityReport) -> f64| {
            let xs: Vec<f64> = picked.iter().map(|r| f(r)).collect();
            pearson(&rater, &xs).ok()
        };
        correlations.insert(
            level.to_string(),
            LevelAgreement {
                n: picked.len(),
                rao_stirling: against(|r| r.rao_stirling),
                entropy: against(|r| r.entropy),
                volume: against(|r| r.volume as f64),
            },
        );
    }
    let out = AgreementOutput {
        subjects: ratings.subjects().len(),
        raters: ratings.raters().to_vec(),
        fleiss: fleiss_kappa(&ratings)?,
        cohen_avg: cohen_kappa_avg(&ratings)?,
        correlations,
        unscored_subjects: unscored.into_iter().collect(),
    };
    let mut stage = Staging::new(&cfg.out)?;
    stage.write("agreement_report.json", &json_bytes(&out)?)?;
    stage.commit()
}

/// Inputs each step reads directly; `all` checks them before starting.
pub fn inputs_for(step: &str, cfg: &PipelineConfig) -> Vec<Input> {
    match step {
        "diversity" => vec![Input::Plays, Input::Catalog],
        "map" if cfg.path(Input::Distances).is_some() => vec![Input::Distances],
        "map" => vec![Input::Plays, Input::Catalog],
        "homeloc" => vec![Input::Pings, Input::Zips],
        "features" => vec![
            Input::Census,
            Input::Urbanness,
            Input::Interests,
            Input::Profiles,
        ],
        "agreement" => vec![Input::Ratings],
        _ => Vec::new(),
    }
}

pub fn run_step(step: &str, cfg: &PipelineConfig) -> Result<Vec<PathBuf>, CliError> {
    match step {
        "diversity" => diversity(cfg),
        "map" => map(cfg),
        "homeloc" => homeloc(cfg),
        "features" => features(cfg),
        "regress" => regress(cfg),
        "agreement" => agreement(cfg),
        other => Err(CliError::Usage(format!("unknown step `{other}`"))),
    }
}

pub const ALL_STEPS: [&str; 6] = [
    "diversity",
    "map",
    "homeloc",
    "features",
    "regress",
    "agreement",
];
