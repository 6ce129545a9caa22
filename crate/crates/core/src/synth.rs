//! Seeded synthetic corpora.
//!
//! All generators are deterministic in their seed. They back the bundled
//! command-line fixture, the browser demo and the property checks.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal, Normal};

use crate::divcore::{cosine_distance_matrix, diversity_batch};
use crate::ingest::{
    build_consumption_matrix, select_top_artists, ArtistEntry, Catalog, ConsumptionMatrix,
    FilterPolicy, Level, PlayRecord,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Symmetric Dirichlet-like draw of `n` weights summing to one.
pub fn random_simplex<R: Rng>(rng: &mut R, n: usize, concentration: f64) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("positive shape");
    let mut w: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter_mut().for_each(|x| *x /= total);
    } else {
        w = vec![1.0 / n as f64; n];
    }
    w
}

pub const COMMON_TRIO: [&str; 3] = ["black metal", "doom metal", "thrash metal"];
pub const RARE_TRIO: [&str; 3] = ["classical", "death metal", "salsa"];

/// Users over six categories where the three metal styles are listened to
/// together by about 90% of users while any two of the rare trio co-occur
/// for fewer than 5% of users.
pub fn disparity_corpus(seed: u64, users: usize) -> ConsumptionMatrix {
    let mut rng = rng(seed);
    let mut weights: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for u in 0..users {
        let mut row: BTreeMap<String, f64> = BTreeMap::new();
        if rng.random_bool(0.9) {
            for cat in COMMON_TRIO {
                row.insert(cat.to_string(), rng.random_range(0.5..1.5));
            }
        } else {
            let cat = COMMON_TRIO[rng.random_range(0..3)];
            row.insert(cat.to_string(), rng.random_range(0.5..1.5));
        }
        // one rare category for a minority, two only occasionally
        if rng.random_bool(0.3) {
            let mut rare = RARE_TRIO.to_vec();
            rare.shuffle(&mut rng);
            let take = if rng.random_bool(0.05) { 2 } else { 1 };
            for cat in &rare[..take] {
                row.insert(cat.to_string(), rng.random_range(0.5..1.5));
            }
        }
        weights.insert(format!("u{u:04}"), row);
    }
    ConsumptionMatrix::from_weights(&weights, "empty").0
}

/// Fraction of rows with positive mass in both columns.
pub fn co_consumption_rate(cm: &ConsumptionMatrix, a: usize, b: usize) -> f64 {
    let both = cm
        .rows()
        .iter()
        .filter(|r| r[a] > 0.0 && r[b] > 0.0)
        .count();
    both as f64 / cm.n_users().max(1) as f64
}

pub const GENRES: [(&str, [&str; 3]); 10] = [
    ("blues", ["chicago blues", "delta blues", "electric blues"]),
    ("classical", ["baroque", "opera", "symphony"]),
    ("country", ["alt-country", "bluegrass", "honky tonk"]),
    ("electronic", ["house", "techno", "ambient"]),
    (
        "folk",
        ["contemporary folk", "folk-rock", "traditional folk"],
    ),
    ("jazz", ["bebop", "cool jazz", "fusion"]),
    ("pop", ["dance-pop", "synth-pop", "teen pop"]),
    ("r&b", ["neo-soul", "soul", "funk"]),
    ("rap", ["gangsta rap", "alternative rap", "trap"]),
    ("rock", ["indie rock", "hard rock", "punk"]),
];

/// Genres that tend to be listened to together.
const TASTE_CLUSTERS: [&[usize]; 4] = [&[1, 5, 0], &[6, 7, 8], &[9, 4, 2], &[3, 6, 8]];

/// A catalog of artists, each with one or two genres and subgenres drawn
/// from those genres. About 3% of artists are unclassified.
pub fn synthetic_catalog<R: Rng>(rng: &mut R, artists: usize) -> Catalog {
    let mut catalog = Catalog::new();
    for a in 0..artists {
        let id = format!("a{a:04}");
        let primary = a % GENRES.len();
        let mut genres = vec![primary];
        if rng.random_bool(0.3) {
            let cluster = TASTE_CLUSTERS
                .iter()
                .find(|c| c.contains(&primary))
                .expect("every genre is clustered");
            let other = cluster[rng.random_range(0..cluster.len())];
            if other != primary {
                genres.push(other);
            }
        }
        let unclassified = rng.random_bool(0.03);
        let mut subgenres = Vec::new();
        for &g in &genres {
            let subs = GENRES[g].1;
            subgenres.push(subs[rng.random_range(0..subs.len())].to_string());
            if rng.random_bool(0.35) {
                let extra = subs[rng.random_range(0..subs.len())].to_string();
                if !subgenres.contains(&extra) {
                    subgenres.push(extra);
                }
            }
        }
        let entry = ArtistEntry {
            artist_id: id.clone(),
            name: format!("Artist {a}"),
            genres: if unclassified {
                vec![]
            } else {
                genres.iter().map(|&g| GENRES[g].0.to_string()).collect()
            },
            subgenres: if unclassified { vec![] } else { subgenres },
        };
        catalog.insert(id, entry);
    }
    catalog
}

fn genre_preferences<R: Rng>(rng: &mut R) -> Vec<f64> {
    let mut prefs = vec![0.02; GENRES.len()];
    let clusters = 1 + usize::from(rng.random_bool(0.45)) + usize::from(rng.random_bool(0.2));
    for _ in 0..clusters {
        let cluster = TASTE_CLUSTERS[rng.random_range(0..TASTE_CLUSTERS.len())];
        let w = random_simplex(rng, cluster.len(), 1.0);
        for (&g, x) in cluster.iter().zip(w) {
            prefs[g] += x;
        }
    }
    let total: f64 = prefs.iter().sum();
    prefs.iter().map(|p| p / total).collect()
}

/// Play records for `users` listeners with clustered tastes. Each listener
/// plays `artists_per_user` distinct artists with at least `min_plays`
/// plays.
pub fn synthetic_plays<R: Rng>(
    rng: &mut R,
    catalog: &Catalog,
    users: &[String],
    artists_per_user: usize,
    min_plays: u64,
) -> Vec<PlayRecord> {
    let by_genre: Vec<Vec<&String>> = (0..GENRES.len())
        .map(|g| {
            catalog
                .keys()
                .enumerate()
                .filter(|(i, _)| i % GENRES.len() == g)
                .map(|(_, k)| k)
                .collect()
        })
        .collect();
    let plays_dist = LogNormal::new(5.5, 0.7).expect("valid lognormal");
    let mut out = Vec::new();
    for user in users {
        let prefs = genre_preferences(rng);
        let mut chosen: BTreeMap<&String, u64> = BTreeMap::new();
        let mut guard = 0;
        while chosen.len() < artists_per_user && guard < artists_per_user * 50 {
            guard += 1;
            let r: f64 = rng.random();
            let mut acc = 0.0;
            let mut g = GENRES.len() - 1;
            for (i, p) in prefs.iter().enumerate() {
                acc += p;
                if r < acc {
                    g = i;
                    break;
                }
            }
            let pool = &by_genre[g];
            let artist = pool[rng.random_range(0..pool.len())];
            if chosen.contains_key(artist) {
                continue;
            }
            let plays = min_plays + plays_dist.sample(rng) as u64;
            chosen.insert(artist, plays);
        }
        for (artist, plays) in chosen {
            out.push(PlayRecord {
                user_id: user.clone(),
                artist_id: artist.clone(),
                play_count: plays,
            });
        }
    }
    out
}

/// Genre- and subgenre-level matrices over the same users from a
/// hierarchical catalog.
pub fn hierarchical_corpus(seed: u64, users: usize) -> (ConsumptionMatrix, ConsumptionMatrix) {
    let mut rng = rng(seed);
    let catalog = synthetic_catalog(&mut rng, 400);
    let ids: Vec<String> = (0..users).map(|u| format!("u{u:04}")).collect();
    let plays = synthetic_plays(&mut rng, &catalog, &ids, 60, 100);
    let policy = FilterPolicy::default();
    let selection = select_top_artists(&plays, &policy, &catalog);
    let (genre, _) = build_consumption_matrix(&selection.users, &catalog, Level::Genre);
    let (sub, _) = build_consumption_matrix(&selection.users, &catalog, Level::Subgenre);
    (genre, sub)
}

/// Text contents of every pipeline input file.
#[derive(Debug, Clone, PartialEq)]
pub struct Fixture {
    pub plays_csv: String,
    pub catalog_jsonl: String,
    pub pings_csv: String,
    pub zips_csv: String,
    pub census_csv: String,
    pub urbanness_csv: String,
    pub interests_jsonl: String,
    pub profiles_csv: String,
    pub ratings_csv: String,
}

struct Place {
    zip: &'static str,
    lat: f64,
    lon: f64,
    fips: &'static str,
    urbanness: u8,
}

const PLACES: [Place; 16] = [
    Place {
        zip: "10001",
        lat: 40.7506,
        lon: -73.9972,
        fips: "36061",
        urbanness: 1,
    },
    Place {
        zip: "11201",
        lat: 40.6940,
        lon: -73.9903,
        fips: "36047",
        urbanness: 1,
    },
    Place {
        zip: "02139",
        lat: 42.3647,
        lon: -71.1042,
        fips: "25017",
        urbanness: 2,
    },
    Place {
        zip: "19104",
        lat: 39.9597,
        lon: -75.1968,
        fips: "42101",
        urbanness: 1,
    },
    Place {
        zip: "60614",
        lat: 41.9227,
        lon: -87.6533,
        fips: "17031",
        urbanness: 1,
    },
    Place {
        zip: "48104",
        lat: 42.2711,
        lon: -83.7266,
        fips: "26161",
        urbanness: 3,
    },
    Place {
        zip: "53703",
        lat: 43.0776,
        lon: -89.3838,
        fips: "55025",
        urbanness: 3,
    },
    Place {
        zip: "30306",
        lat: 33.7866,
        lon: -84.3511,
        fips: "13121",
        urbanness: 1,
    },
    Place {
        zip: "78704",
        lat: 30.2428,
        lon: -97.7658,
        fips: "48453",
        urbanness: 2,
    },
    Place {
        zip: "80302",
        lat: 40.0176,
        lon: -105.2797,
        fips: "08013",
        urbanness: 3,
    },
    Place {
        zip: "97214",
        lat: 45.5149,
        lon: -122.6422,
        fips: "41051",
        urbanness: 2,
    },
    Place {
        zip: "94110",
        lat: 37.7487,
        lon: -122.4158,
        fips: "06075",
        urbanness: 1,
    },
    Place {
        zip: "59715",
        lat: 45.6696,
        lon: -111.0429,
        fips: "30031",
        urbanness: 5,
    },
    Place {
        zip: "82801",
        lat: 44.7920,
        lon: -106.9570,
        fips: "56033",
        urbanness: 6,
    },
    Place {
        zip: "05401",
        lat: 44.4759,
        lon: -73.2121,
        fips: "50007",
        urbanness: 4,
    },
    // in the ZIP table but absent from the census table
    Place {
        zip: "99950",
        lat: 55.3422,
        lon: -131.6461,
        fips: "02130",
        urbanness: 5,
    },
];

const TOPICS: [&str; 16] = [
    "music",
    "indie music",
    "musicians",
    "music festivals",
    "politics",
    "technology",
    "sports",
    "film",
    "books",
    "food",
    "travel",
    "science",
    "fashion",
    "gaming",
    "news",
    "photography",
];

fn ping_row(
    out: &mut String,
    user: &str,
    t: chrono::DateTime<Utc>,
    offset: Option<i32>,
    lat: f64,
    lon: f64,
) {
    let ts = t.format("%Y-%m-%dT%H:%M:%SZ");
    let off = offset.map(|o| o.to_string()).unwrap_or_default();
    writeln!(out, "{user},{ts},{off},{lat:.5},{lon:.5}").unwrap();
}

/// The bundled end-to-end fixture.
pub fn pipeline_fixture(seed: u64, users: usize) -> Fixture {
    let mut rng = rng(seed);
    let catalog = synthetic_catalog(&mut rng, 600);
    let ids: Vec<String> = (0..users).map(|u| format!("user{u:03}")).collect();

    // a handful of listeners fall short of a full top 50
    let mut plays = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        let per_user = if i % 23 == 7 { 40 } else { 56 };
        plays.extend(synthetic_plays(
            &mut rng,
            &catalog,
            std::slice::from_ref(id),
            per_user,
            100,
        ));
    }
    let mut plays_csv = String::from("user_id,artist_id,play_count\n");
    for p in &plays {
        writeln!(plays_csv, "{},{},{}", p.user_id, p.artist_id, p.play_count).unwrap();
    }

    let mut catalog_jsonl = String::new();
    for entry in catalog.values() {
        let line = serde_json::json!({
            "artist_id": entry.artist_id,
            "name": entry.name,
            "genres": entry.genres,
            "subgenres": entry.subgenres,
        });
        writeln!(catalog_jsonl, "{line}").unwrap();
    }

    let mut zips_csv = String::from("zip,centroid_lat,centroid_lon,fips\n");
    let mut urbanness_csv = String::from("fips,urbanness\n");
    let mut census_csv = String::from(
        "zip,median_household_income,pct_bachelor,p_white,p_black,p_native,p_asian,p_hispanic,p_pacific,p_two_or_more,p_other\n",
    );
    for place in &PLACES {
        writeln!(
            zips_csv,
            "{},{},{},{}",
            place.zip, place.lat, place.lon, place.fips
        )
        .unwrap();
        writeln!(urbanness_csv, "{},{}", place.fips, place.urbanness).unwrap();
        if place.zip == "99950" {
            continue;
        }
        let income = 30_000.0 + 90_000.0 * rng.random::<f64>();
        let bachelor = 10.0 + 60.0 * rng.random::<f64>();
        let white = 0.35 + 0.6 * rng.random::<f64>();
        let rest = random_simplex(&mut rng, 7, 1.0);
        let mut race = vec![white];
        race.extend(rest.iter().map(|r| r * (1.0 - white)));
        write!(census_csv, "{},{:.0},{:.1}", place.zip, income, bachelor).unwrap();
        for r in &race {
            write!(census_csv, ",{r:.4}").unwrap();
        }
        census_csv.push('\n');
    }

    let base = Utc.with_ymd_and_hms(2015, 3, 1, 0, 0, 0).unwrap();
    let mut pings_csv = String::from("user_id,timestamp_iso8601,utc_offset_minutes,lat,lon\n");
    let jitter = Normal::new(0.0, 0.01).unwrap();
    for (i, id) in ids.iter().enumerate() {
        // last place is outside the census; give it to a few users
        let home = if i % 29 == 11 {
            15
        } else {
            rng.random_range(0..15)
        };
        let away = (home + 1 + rng.random_range(0..13)) % 15;
        let offset = if i % 4 == 0 { None } else { Some(-300) };
        // local = utc + offset, so shift generated local clock back
        let shift = Duration::minutes(-i64::from(offset.unwrap_or(0)));
        let kind = i % 17;
        let mut pings: Vec<(usize, i64, u32)> = Vec::new();
        match kind {
            // traveler: days in one place, nights in another
            3 => {
                for d in 0..8 {
                    pings.push((home, d * 3, 13));
                }
                for d in 0..4 {
                    pings.push((away, d * 4, 23));
                }
            }
            // too few geocoded pings
            9 => {
                for d in 0..6 {
                    pings.push((home, d * 2, 23));
                }
            }
            _ => {
                let n = 14 + rng.random_range(0..16);
                for _ in 0..n {
                    let day = rng.random_range(0..30);
                    let hour = [22, 23, 0, 1, 5, 8, 12, 18][rng.random_range(0..8)];
                    pings.push((home, day, hour));
                }
                for _ in 0..rng.random_range(0..5) {
                    pings.push((away, rng.random_range(0..30), 12 + rng.random_range(0..6)));
                }
                // anchor the span and the night mode at home
                pings.push((home, 0, 23));
                pings.push((home, 25, 23));
            }
        }
        pings.sort_by_key(|p| (p.1, p.2));
        for (place, day, hour) in pings {
            let p = &PLACES[place];
            let t = base
                + Duration::days(day)
                + Duration::hours(hour.into())
                + Duration::minutes(rng.random_range(0..60))
                + shift;
            ping_row(
                &mut pings_csv,
                id,
                t,
                offset,
                p.lat + jitter.sample(&mut rng),
                p.lon + jitter.sample(&mut rng),
            );
        }
    }

    let mut interests_jsonl = String::new();
    for id in &ids {
        let mut labels = TOPICS.to_vec();
        labels.shuffle(&mut rng);
        let n = 4 + rng.random_range(0..8);
        let topics: Vec<_> = labels[..n]
            .iter()
            .map(|l| serde_json::json!({"label": l, "weight": 1 + rng.random_range(0..10)}))
            .collect();
        let line = serde_json::json!({"user_id": id, "topics": topics});
        writeln!(interests_jsonl, "{line}").unwrap();
    }

    let mut profiles_csv = String::from(
        "user_id,age,gender,event_attendance,loved_tracks,days_registered,lastfm_friends,twitter_friends,timezone_diversity,news_reader\n",
    );
    for (i, id) in ids.iter().enumerate() {
        let age = 18 + rng.random_range(0..35);
        let gender = rng.random_range(0..2);
        let events = (LogNormal::new(2.0, 1.0).unwrap().sample(&mut rng) as u32).to_string();
        let loved = (LogNormal::new(5.0, 1.2).unwrap().sample(&mut rng) as u32).to_string();
        let days = 100 + rng.random_range(0..4000);
        let friends = if i % 31 == 5 {
            String::new()
        } else {
            (LogNormal::new(3.0, 1.0).unwrap().sample(&mut rng) as u32).to_string()
        };
        let twitter = (LogNormal::new(5.5, 1.0).unwrap().sample(&mut rng) as u32).to_string();
        let tz = 1 + rng.random_range(0..20);
        let news = if i % 37 == 12 {
            String::new()
        } else {
            u8::from(rng.random_bool(0.15)).to_string()
        };
        writeln!(
            profiles_csv,
            "{id},{age},{gender},{events},{loved},{days},{friends},{twitter},{tz},{news}"
        )
        .unwrap();
    }

    // raters see each subject's genre-level diversity through their own noise
    let selection = select_top_artists(&plays, &FilterPolicy::default(), &catalog);
    let (cm, _) = build_consumption_matrix(&selection.users, &catalog, Level::Genre);
    let d = cosine_distance_matrix(&cm).expect("fixture has many genres");
    let reports = diversity_batch(&cm, &d).expect("shared ordering");
    let mut ratings_csv = String::from("subject_id,expert,fan,casual\n");
    let noise = Normal::new(0.0, 0.6).unwrap();
    let mut subjects: Vec<_> = reports.iter().collect();
    subjects.shuffle(&mut rng);
    subjects.truncate(25);
    subjects.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    let max_rs = reports
        .iter()
        .map(|r| r.rao_stirling)
        .fold(0.0, f64::max)
        .max(1e-9);
    for r in subjects {
        let level = 5.0 * r.rao_stirling / max_rs;
        let mut row = r.user_id.clone();
        for spread in [0.5, 1.0, 1.5] {
            let v = (level + spread * noise.sample(&mut rng))
                .round()
                .clamp(0.0, 5.0) as u8;
            write!(row, ",{v}").unwrap();
        }
        writeln!(ratings_csv, "{row}").unwrap();
    }

    Fixture {
        plays_csv,
        catalog_jsonl,
        pings_csv,
        zips_csv,
        census_csv,
        urbanness_csv,
        interests_jsonl,
        profiles_csv,
        ratings_csv,
    }
}

impl Fixture {
    /// Writes every file into `dir` under its conventional name.
    pub fn write_to(&self, dir: &std::path::Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, body) in [
            ("plays.csv", &self.plays_csv),
            ("catalog.jsonl", &self.catalog_jsonl),
            ("pings.csv", &self.pings_csv),
            ("zips.csv", &self.zips_csv),
            ("census.csv", &self.census_csv),
            ("urbanness.csv", &self.urbanness_csv),
            ("interests.jsonl", &self.interests_jsonl),
            ("profiles.csv", &self.profiles_csv),
            ("ratings.csv", &self.ratings_csv),
        ] {
            std::fs::write(dir.join(name), body)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disparity_corpus_matches_its_description() {
        let cm = disparity_corpus(11, 2000);
        let idx = |name: &str| cm.categories().iter().position(|c| c == name).unwrap();
        let common = COMMON_TRIO.map(idx);
        let rare = RARE_TRIO.map(idx);
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            assert!(co_consumption_rate(&cm, common[a], common[b]) > 0.85);
            assert!(co_consumption_rate(&cm, rare[a], rare[b]) < 0.05);
        }
    }

    #[test]
    fn fixture_is_deterministic() {
        assert_eq!(pipeline_fixture(5, 12), pipeline_fixture(5, 12));
    }

    #[test]
    fn hierarchical_corpus_shares_users() {
        let (g, s) = hierarchical_corpus(3, 50);
        assert_eq!(g.n_categories(), GENRES.len());
        assert!(s.n_categories() > g.n_categories());
        assert!(g.n_users() > 40);
    }
}
