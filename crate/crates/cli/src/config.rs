use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use tastediv_core::geo::{GeoConfig, NDaysMode};
use tastediv_core::stats::ImputeOptions;
use tastediv_core::{FilterPolicy, Level};

use crate::CliError;

/// Which category levels a run covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelChoice {
    Genre,
    Subgenre,
    Both,
}

impl LevelChoice {
    pub fn levels(self) -> Vec<Level> {
        match self {
            LevelChoice::Genre => vec![Level::Genre],
            LevelChoice::Subgenre => vec![Level::Subgenre],
            LevelChoice::Both => vec![Level::Genre, Level::Subgenre],
        }
    }
}

impl FromStr for LevelChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "genre" => Ok(LevelChoice::Genre),
            "subgenre" => Ok(LevelChoice::Subgenre),
            "both" => Ok(LevelChoice::Both),
            other => Err(format!(
                "level must be genre, subgenre or both, got `{other}`"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Input {
    Plays,
    Catalog,
    Pings,
    Zips,
    Census,
    Urbanness,
    Interests,
    Profiles,
    Ratings,
    Distances,
}

impl fmt::Display for Input {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Input::Plays => "plays",
            Input::Catalog => "catalog",
            Input::Pings => "pings",
            Input::Zips => "zips",
            Input::Census => "census",
            Input::Urbanness => "urbanness",
            Input::Interests => "interests",
            Input::Profiles => "profiles",
            Input::Ratings => "ratings",
            Input::Distances => "distances",
        })
    }
}

/// The config file: flat `key = value` pairs.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    plays: Option<PathBuf>,
    catalog: Option<PathBuf>,
    pings: Option<PathBuf>,
    zips: Option<PathBuf>,
    census: Option<PathBuf>,
    urbanness: Option<PathBuf>,
    interests: Option<PathBuf>,
    profiles: Option<PathBuf>,
    ratings: Option<PathBuf>,
    distances: Option<PathBuf>,
    out: Option<PathBuf>,
    level: Option<String>,
    seed: Option<u64>,
    top_k: Option<usize>,
    min_plays: Option<u64>,
    strict_min_plays: Option<bool>,
    drop_incomplete_users: Option<bool>,
    max_km: Option<f64>,
    min_days: Option<f64>,
    ndays_mode: Option<String>,
    night_start_hour: Option<u32>,
    night_end_hour: Option<u32>,
    utc_offset_minutes: Option<i32>,
    min_geocoded_pings: Option<usize>,
    max_missing_frac: Option<f64>,
    impute_noise: Option<bool>,
}

/// Command-line values that win over the file.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub level: Option<LevelChoice>,
    pub seed: Option<u64>,
    pub top_k: Option<usize>,
    pub min_plays: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    plays: Option<PathBuf>,
    catalog: Option<PathBuf>,
    pings: Option<PathBuf>,
    zips: Option<PathBuf>,
    census: Option<PathBuf>,
    urbanness: Option<PathBuf>,
    interests: Option<PathBuf>,
    profiles: Option<PathBuf>,
    ratings: Option<PathBuf>,
    distances: Option<PathBuf>,
    pub out: PathBuf,
    pub level: LevelChoice,
    pub policy: FilterPolicy,
    pub geo: GeoConfig,
    pub impute: ImputeOptions,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>, overrides: Overrides) -> Result<Self, CliError> {
        let (file, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Usage(format!("cannot read config {}: {e}", p.display()))
                })?;
                let file: FileConfig = toml::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                (file, base)
            }
            None => (FileConfig::default(), PathBuf::new()),
        };
        let rel = |p: Option<PathBuf>| p.map(|p| if p.is_absolute() { p } else { base.join(p) });

        let level = match (overrides.level, file.level) {
            (Some(l), _) => l,
            (None, Some(s)) => s.parse().map_err(CliError::Usage)?,
            (None, None) => LevelChoice::Genre,
        };
        let seed = overrides.seed.or(file.seed).unwrap_or(0);

        let defaults = FilterPolicy::default();
        let policy = FilterPolicy {
            top_k: overrides.top_k.or(file.top_k).unwrap_or(defaults.top_k),
            min_plays_per_artist: overrides
                .min_plays
                .or(file.min_plays)
                .unwrap_or(defaults.min_plays_per_artist),
            strict_min_plays: file.strict_min_plays.unwrap_or(defaults.strict_min_plays),
            drop_incomplete_users: file
                .drop_incomplete_users
                .unwrap_or(defaults.drop_incomplete_users),
        };
        policy
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;

        let g = GeoConfig::default();
        let ndays_mode = match file.ndays_mode.as_deref() {
            None | Some("span") => NDaysMode::Span,
            Some("distinct-days") => NDaysMode::DistinctDays,
            Some(other) => {
                return Err(CliError::Usage(format!(
                    "ndays_mode must be span or distinct-days, got `{other}`"
                )))
            }
        };
        let geo = GeoConfig {
            max_km: file.max_km.unwrap_or(g.max_km),
            min_days: file.min_days.unwrap_or(g.min_days),
            ndays_mode,
            night_start_hour: file.night_start_hour.unwrap_or(g.night_start_hour),
            night_end_hour: file.night_end_hour.unwrap_or(g.night_end_hour),
            default_utc_offset_minutes: file
                .utc_offset_minutes
                .unwrap_or(g.default_utc_offset_minutes),
            min_geocoded_pings: file.min_geocoded_pings.unwrap_or(g.min_geocoded_pings),
        };
        if geo.night_start_hour > 23 || geo.night_end_hour > 23 {
            return Err(CliError::Usage("night window hours must be 0..=23".into()));
        }
        if !(geo.max_km > 0.0) || !(geo.min_days >= 0.0) {
            return Err(CliError::Usage(
                "max_km must be positive and min_days non-negative".into(),
            ));
        }

        let max_missing_frac = file
            .max_missing_frac
            .unwrap_or(ImputeOptions::default().max_missing_frac);
        if !(0.0..=1.0).contains(&max_missing_frac) {
            return Err(CliError::Usage(
                "max_missing_frac must lie in [0, 1]".into(),
            ));
        }
        let impute = ImputeOptions {
            max_missing_frac,
            noise_seed: file.impute_noise.unwrap_or(false).then_some(seed),
        };

        Ok(PipelineConfig {
            plays: rel(file.plays),
            catalog: rel(file.catalog),
            pings: rel(file.pings),
            zips: rel(file.zips),
            census: rel(file.census),
            urbanness: rel(file.urbanness),
            interests: rel(file.interests),
            profiles: rel(file.profiles),
            ratings: rel(file.ratings),
            distances: rel(file.distances),
            out: overrides
                .out
                .or_else(|| rel(file.out))
                .unwrap_or_else(|| PathBuf::from("out")),
            level,
            policy,
            geo,
            impute,
        })
    }

    pub fn path(&self, input: Input) -> Option<&Path> {
        match input {
            Input::Plays => self.plays.as_deref(),
            Input::Catalog => self.catalog.as_deref(),
            Input::Pings => self.pings.as_deref(),
            Input::Zips => self.zips.as_deref(),
            Input::Census => self.census.as_deref(),
            Input::Urbanness => self.urbanness.as_deref(),
            Input::Interests => self.interests.as_deref(),
            Input::Profiles => self.profiles.as_deref(),
            Input::Ratings => self.ratings.as_deref(),
            Input::Distances => self.distances.as_deref(),
        }
    }

    /// The configured path for `input`, which must exist.
    pub fn require(&self, input: Input) -> Result<&Path, CliError> {
        let path = self.path(input).ok_or_else(|| {
            CliError::Usage(format!(
                "no `{input}` input configured (set `{input} = \"<path>\"` in the config file)"
            ))
        })?;
        if !path.is_file() {
            return Err(CliError::Usage(format!(
                "`{input}` input {} does not exist",
                path.display()
            )));
        }
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, body: &str) -> PathBuf {
        let p = dir.join("config.toml");
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn flags_win_and_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "plays = \"data/plays.csv\"\nlevel = \"subgenre\"\ntop_k = 20\nseed = 3\nimpute_noise = true\n");
        let cfg = PipelineConfig::load(
            Some(&p),
            Overrides {
                top_k: Some(7),
                ..Overrides::default()
            },
        )
        .unwrap();
        assert_eq!(
            cfg.path(Input::Plays).unwrap(),
            dir.path().join("data/plays.csv")
        );
        assert_eq!(cfg.policy.top_k, 7);
        assert_eq!(cfg.level, LevelChoice::Subgenre);
        assert_eq!(cfg.impute.noise_seed, Some(3));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_usage_errors() {
        let dir = tempfile::tempdir().unwrap();
        for body in [
            "colour = 1\n",
            "level = \"tribe\"\n",
            "top_k = 0\n",
            "ndays_mode = \"weeks\"\n",
        ] {
            let p = write(dir.path(), body);
            assert!(matches!(
                PipelineConfig::load(Some(&p), Overrides::default()),
                Err(CliError::Usage(_))
            ));
        }
    }

    #[test]
    fn missing_input_reported() {
        let cfg = PipelineConfig::load(None, Overrides::default()).unwrap();
        let err = cfg.require(Input::Catalog).unwrap_err();
        assert!(matches!(&err, CliError::Usage(m) if m.contains("catalog")));
    }
}
