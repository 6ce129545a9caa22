//! Home-location inference from geotagged pings and census enrichment.
//!
//! Each ping is snapped to the nearest ZIP centroid. Three candidate sets
//! are built per user: the most frequent ZIPs overall, the most frequent
//! ZIPs at night, and the ZIPs the user posted from over a span of at least
//! `min_days` days. The home is taken from their intersection.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, Timelike, Utc};

use crate::error::{Error, Result};
use crate::table;

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Clone, PartialEq)]
pub struct GeoPing {
    pub user_id: String,
    pub timestamp: DateTime<Utc>,
    pub utc_offset_minutes: Option<i32>,
    pub lat: f64,
    pub lon: f64,
}

impl GeoPing {
    pub fn new(
        user_id: impl Into<String>,
        timestamp: DateTime<Utc>,
        utc_offset_minutes: Option<i32>,
        lat: f64,
        lon: f64,
    ) -> Result<Self> {
        check_coords(lat, lon)?;
        Ok(GeoPing {
            user_id: user_id.into(),
            timestamp,
            utc_offset_minutes,
            lat,
            lon,
        })
    }
}

fn check_coords(lat: f64, lon: f64) -> Result<()> {
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return Err(Error::Domain(format!(
            "coordinates ({lat}, {lon}) out of range"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZipRecord {
    pub zip: String,
    pub centroid_lat: f64,
    pub centroid_lon: f64,
    pub fips: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NDaysMode {
    /// Last ping minus first ping.
    Span,
    /// Number of distinct local calendar days with a ping.
    DistinctDays,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoConfig {
    pub max_km: f64,
    pub min_days: f64,
    pub ndays_mode: NDaysMode,
    /// Night window start, local hour (inclusive).
    pub night_start_hour: u32,
    /// Night window end, local hour (exclusive).
    pub night_end_hour: u32,
    /// Applied to pings without their own offset.
    pub default_utc_offset_minutes: i32,
    pub min_geocoded_pings: usize,
}

impl Default for GeoConfig {
    fn default() -> Self {
        GeoConfig {
            max_km: 30.0,
            min_days: 10.0,
            ndays_mode: NDaysMode::Span,
            night_start_hour: 22,
            night_end_hour: 6,
            default_utc_offset_minutes: 0,
            min_geocoded_pings: 10,
        }
    }
}

impl GeoConfig {
    fn is_night(&self, local: NaiveDateTime) -> bool {
        let minute = local.hour() * 60 + local.minute();
        let start = self.night_start_hour * 60;
        let end = self.night_end_hour * 60;
        if start > end {
            minute >= start || minute < end
        } else {
            minute >= start && minute < end
        }
    }
}

/// A ping that landed within range of some ZIP centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct GeocodedPing {
    pub zip: String,
    pub timestamp: DateTime<Utc>,
    pub local_time: NaiveDateTime,
}

/// Great-circle distance in kilometres.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (phi1, phi2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

/// Nearest ZIP centroid within `max_km`; equal distances go to the smaller ZIP.
pub fn reverse_geocode(ping: &GeoPing, zips: &[ZipRecord], max_km: f64) -> Result<Option<String>> {
    if zips.is_empty() {
        return Err(Error::Invalid("empty ZIP lookup table".into()));
    }
    let best = zips
        .iter()
        .map(|z| {
            (
                haversine_km(ping.lat, ping.lon, z.centroid_lat, z.centroid_lon),
                z,
            )
        })
        .min_by(|(da, za), (db, zb)| da.total_cmp(db).then_with(|| za.zip.cmp(&zb.zip)))
        .expect("non-empty table");
    Ok((best.0 <= max_km).then(|| best.1.zip.clone()))
}

/// Geocodes `pings`, dropping those out of range of every centroid.
pub fn geocode_pings(
    pings: &[GeoPing],
    zips: &[ZipRecord],
    config: &GeoConfig,
) -> Result<Vec<GeocodedPing>> {
    let mut out = Vec::with_capacity(pings.len());
    for ping in pings {
        if let Some(zip) = reverse_geocode(ping, zips, config.max_km)? {
            let offset = ping
                .utc_offset_minutes
                .unwrap_or(config.default_utc_offset_minutes);
            out.push(GeocodedPing {
                zip,
                timestamp: ping.timestamp,
                local_time: ping.timestamp.naive_utc() + Duration::minutes(offset.into()),
            });
        }
    }
    Ok(out)
}

fn counts<'a>(zips: impl Iterator<Item = &'a str>) -> BTreeMap<&'a str, usize> {
    let mut c = BTreeMap::new();
    for z in zips {
        *c.entry(z).or_insert(0) += 1;
    }
    c
}

fn modes(counts: &BTreeMap<&str, usize>) -> BTreeSet<String> {
    let Some(&max) = counts.values().max() else {
        return BTreeSet::new();
    };
    counts
        .iter()
        .filter(|(_, &n)| n == max)
        .map(|(z, _)| z.to_string())
        .collect()
}

/// All ZIPs tied for the most pings.
pub fn plurality_zips(pings: &[GeocodedPing]) -> BTreeSet<String> {
    modes(&counts(pings.iter().map(|p| p.zip.as_str())))
}

/// Plurality over pings inside the local night window.
pub fn night_plurality_zips(pings: &[GeocodedPing], config: &GeoConfig) -> BTreeSet<String> {
    modes(&counts(
        pings
            .iter()
            .filter(|p| config.is_night(p.local_time))
            .map(|p| p.zip.as_str()),
    ))
}

/// ZIPs the user was active in for at least `min_days` days.
pub fn n_days_zips(pings: &[GeocodedPing], config: &GeoConfig) -> BTreeSet<String> {
    let mut per_zip: BTreeMap<&str, Vec<&GeocodedPing>> = BTreeMap::new();
    for p in pings {
        per_zip.entry(p.zip.as_str()).or_default().push(p);
    }
    per_zip
        .into_iter()
        .filter(|(_, ps)| {
            let days = match config.ndays_mode {
                NDaysMode::Span => {
                    let first = ps.iter().map(|p| p.timestamp).min().expect("non-empty");
                    let last = ps.iter().map(|p| p.timestamp).max().expect("non-empty");
                    (last - first).num_milliseconds() as f64 / 86_400_000.0
                }
                NDaysMode::DistinctDays => ps
                    .iter()
                    .map(|p| p.local_time.date())
                    .collect::<BTreeSet<NaiveDate>>()
                    .len() as f64,
            };
            days >= config.min_days
        })
        .map(|(z, _)| z.to_string())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomeLocation {
    pub user_id: String,
    pub zip: Option<String>,
    pub fips: Option<String>,
    pub plurality: BTreeSet<String>,
    pub night: BTreeSet<String>,
    pub n_days: BTreeSet<String>,
    pub resolved: bool,
    /// Empty for a clean singleton intersection, otherwise why the home is
    /// missing or how it was chosen.
    pub reason: String,
}

pub const REASON_TOO_FEW_PINGS: &str = "too-few-pings";
pub const REASON_EMPTY_INTERSECTION: &str = "empty-intersection";
pub const REASON_TIE_BREAK: &str = "tie-break";

/// Infers one user's home ZIP from their raw pings.
pub fn resolve_home(
    user_id: &str,
    pings: &[GeoPing],
    zips: &[ZipRecord],
    config: &GeoConfig,
) -> Result<HomeLocation> {
    let geocoded = geocode_pings(pings, zips, config)?;
    let mut home = HomeLocation {
        user_id: user_id.to_string(),
        zip: None,
        fips: None,
        plurality: BTreeSet::new(),
        night: BTreeSet::new(),
        n_days: BTreeSet::new(),
        resolved: false,
        reason: String::new(),
    };
    if geocoded.len() < config.min_geocoded_pings {
        home.reason = REASON_TOO_FEW_PINGS.into();
        return Ok(home);
    }
    home.plurality = plurality_zips(&geocoded);
    home.night = night_plurality_zips(&geocoded, config);
    home.n_days = n_days_zips(&geocoded, config);

    let candidates: Vec<&String> = home
        .plurality
        .iter()
        .filter(|z| home.night.contains(*z) && home.n_days.contains(*z))
        .collect();
    let chosen = match candidates.as_slice() {
        [] => {
            home.reason = REASON_EMPTY_INTERSECTION.into();
            return Ok(home);
        }
        [only] => (*only).clone(),
        many => {
            let totals = counts(geocoded.iter().map(|p| p.zip.as_str()));
            home.reason = REASON_TIE_BREAK.into();
            // BTreeSet order makes the first maximum the smallest ZIP
            let mut best = many[0];
            for z in &many[1..] {
                if totals[z.as_str()] > totals[best.as_str()] {
                    best = z;
                }
            }
            best.clone()
        }
    };
    home.fips = zips
        .iter()
        .find(|z| z.zip == chosen)
        .map(|z| z.fips.clone());
    home.zip = Some(chosen);
    home.resolved = true;
    Ok(home)
}

/// Resolves every user present in `pings`, ordered by user id.
pub fn resolve_all(
    pings: &[GeoPing],
    zips: &[ZipRecord],
    config: &GeoConfig,
) -> Result<Vec<HomeLocation>> {
    let mut by_user: BTreeMap<&str, Vec<GeoPing>> = BTreeMap::new();
    for p in pings {
        by_user
            .entry(p.user_id.as_str())
            .or_default()
            .push(p.clone());
    }
    by_user
        .into_iter()
        .map(|(user, ps)| resolve_home(user, &ps, zips, config))
        .collect()
}

/// Census race groups, in file column order.
pub const RACE_GROUPS: [&str; 8] = [
    "white",
    "black",
    "native",
    "asian",
    "hispanic",
    "pacific",
    "two_or_more",
    "other",
];

const RACE_SUM_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct CensusRow {
    pub zip: String,
    pub median_household_income: f64,
    pub pct_bachelor: f64,
    /// Indexed like [`RACE_GROUPS`].
    pub race_proportions: [f64; 8],
}

#[derive(Debug, Clone, PartialEq)]
pub struct CensusRecord {
    pub zip: String,
    pub fips: String,
    pub median_household_income: f64,
    pub pct_bachelor: f64,
    pub race_proportions: [f64; 8],
    pub urbanness: u8,
}

impl CensusRecord {
    pub fn white_fraction(&self) -> f64 {
        self.race_proportions[0]
    }
}

/// `1 - Σ P(r)²` over race groups.
pub fn racial_diversity_index(proportions: &[f64]) -> Result<f64> {
    if let Some(p) = proportions.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Domain(format!("race proportion {p} outside [0, 1]")));
    }
    let sum: f64 = proportions.iter().sum();
    if (sum - 1.0).abs() > RACE_SUM_TOLERANCE {
        return Err(Error::Domain(format!("race proportions sum to {sum}")));
    }
    Ok(1.0 - proportions.iter().map(|p| p * p).sum::<f64>())
}

/// `1 - white_fraction`.
pub fn simple_racial_diversity(white_fraction: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&white_fraction) {
        return Err(Error::Domain(format!(
            "white fraction {white_fraction} outside [0, 1]"
        )));
    }
    Ok(1.0 - white_fraction)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Exclusion {
    pub user_id: String,
    pub reason: String,
}

pub const REASON_NO_HOME: &str = "no-home";
pub const REASON_ZIP_NOT_IN_CENSUS: &str = "zip-not-in-census";
pub const REASON_FIPS_NOT_IN_URBANNESS: &str = "fips-not-in-urbanness";

/// Attaches census and urbanness attributes to a resolved home.
pub fn join_census(
    home: &HomeLocation,
    census: &BTreeMap<String, CensusRow>,
    urbanness: &BTreeMap<String, u8>,
) -> std::result::Result<CensusRecord, Exclusion> {
    let exclude = |reason: &str| Exclusion {
        user_id: home.user_id.clone(),
        reason: reason.to_string(),
    };
    let (Some(zip), true) = (&home.zip, home.resolved) else {
        return Err(exclude(REASON_NO_HOME));
    };
    let row = census
        .get(zip)
        .ok_or_else(|| exclude(REASON_ZIP_NOT_IN_CENSUS))?;
    let fips = home.fips.clone().unwrap_or_default();
    let urban = *urbanness
        .get(&fips)
        .ok_or_else(|| exclude(REASON_FIPS_NOT_IN_URBANNESS))?;
    Ok(CensusRecord {
        zip: zip.clone(),
        fips,
        median_household_income: row.median_household_income,
        pct_bachelor: row.pct_bachelor,
        race_proportions: row.race_proportions,
        urbanness: urban,
    })
}

fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S%.f",
    ]
    .iter()
    .find_map(|fmt| NaiveDateTime::parse_from_str(s, fmt).ok())
    .map(|t| t.and_utc())
}

/// Reads `user_id,timestamp_iso8601,utc_offset_minutes,lat,lon`.
pub fn parse_pings(path: &Path) -> Result<Vec<GeoPing>> {
    let mut reader = table::open(
        path,
        &[
            "user_id",
            "timestamp_iso8601",
            "utc_offset_minutes",
            "lat",
            "lon",
        ],
    )?;
    let mut out = Vec::new();
    for row in table::rows(path, &mut reader, 5) {
        let (line, rec) = row?;
        let timestamp = parse_timestamp(&rec[1])
            .ok_or_else(|| Error::parse(path, line, format!("invalid timestamp `{}`", &rec[1])))?;
        let offset = match rec[2].trim() {
            "" => None,
            s => Some(
                s.parse::<i32>()
                    .map_err(|_| Error::parse(path, line, format!("invalid UTC offset `{s}`")))?,
            ),
        };
        let lat = table::required_f64(path, line, &rec[3])?;
        let lon = table::required_f64(path, line, &rec[4])?;
        let ping = GeoPing::new(rec[0].trim(), timestamp, offset, lat, lon)
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
        out.push(ping);
    }
    Ok(out)
}

/// Reads `zip,centroid_lat,centroid_lon,fips`.
pub fn parse_zips(path: &Path) -> Result<Vec<ZipRecord>> {
    let mut reader = table::open(path, &["zip", "centroid_lat", "centroid_lon", "fips"])?;
    let mut out: Vec<ZipRecord> = Vec::new();
    let mut seen = BTreeSet::new();
    for row in table::rows(path, &mut reader, 4) {
        let (line, rec) = row?;
        let zip = rec[0].trim().to_string();
        if zip.len() != 5 {
            return Err(Error::parse(
                path,
                line,
                format!("ZIP `{zip}` is not 5 characters"),
            ));
        }
        if !seen.insert(zip.clone()) {
            return Err(Error::parse(path, line, format!("duplicate ZIP `{zip}`")));
        }
        let centroid_lat = table::required_f64(path, line, &rec[1])?;
        let centroid_lon = table::required_f64(path, line, &rec[2])?;
        check_coords(centroid_lat, centroid_lon)
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
        out.push(ZipRecord {
            zip,
            centroid_lat,
            centroid_lon,
            fips: rec[3].trim().to_string(),
        });
    }
    Ok(out)
}

/// Reads the census table keyed by ZIP.
pub fn parse_census(path: &Path) -> Result<BTreeMap<String, CensusRow>> {
    let header = [
        "zip",
        "median_household_income",
        "pct_bachelor",
        "p_white",
        "p_black",
        "p_native",
        "p_asian",
        "p_hispanic",
        "p_pacific",
        "p_two_or_more",
        "p_other",
    ];
    let mut reader = table::open(path, &header)?;
    let mut out = BTreeMap::new();
    for row in table::rows(path, &mut reader, header.len()) {
        let (line, rec) = row?;
        let zip = rec[0].trim().to_string();
        let mut race = [0.0; 8];
        for (k, slot) in race.iter_mut().enumerate() {
            *slot = table::required_f64(path, line, &rec[3 + k])?;
        }
        racial_diversity_index(&race).map_err(|e| Error::parse(path, line, e.to_string()))?;
        let parsed = CensusRow {
            zip: zip.clone(),
            median_household_income: table::required_f64(path, line, &rec[1])?,
            pct_bachelor: table::required_f64(path, line, &rec[2])?,
            race_proportions: race,
        };
        if out.insert(zip.clone(), parsed).is_some() {
            return Err(Error::parse(path, line, format!("duplicate ZIP `{zip}`")));
        }
    }
    Ok(out)
}

/// Reads `fips,urbanness` with urbanness on the 1..=6 scale.
pub fn parse_urbanness(path: &Path) -> Result<BTreeMap<String, u8>> {
    let mut reader = table::open(path, &["fips", "urbanness"])?;
    let mut out = BTreeMap::new();
    for row in table::rows(path, &mut reader, 2) {
        let (line, rec) = row?;
        let level: u8 = rec[1]
            .trim()
            .parse()
            .ok()
            .filter(|v| (1..=6).contains(v))
            .ok_or_else(|| Error::parse(path, line, format!("invalid urbanness `{}`", &rec[1])))?;
        if out.insert(rec[0].trim().to_string(), level).is_some() {
            return Err(Error::parse(
                path,
                line,
                format!("duplicate FIPS `{}`", &rec[0]),
            ));
        }
    }
    Ok(out)
}
