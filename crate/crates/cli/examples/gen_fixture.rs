//! Regenerates the bundled pipeline fixture.
//!
//! cargo run -p tastediv-cli --example gen_fixture -- <dir> [seed] [users]

use std::path::PathBuf;

use tastediv_core::synth::pipeline_fixture;

const CONFIG: &str = "\
plays = \"plays.csv\"
catalog = \"catalog.jsonl\"
pings = \"pings.csv\"
zips = \"zips.csv\"
census = \"census.csv\"
urbanness = \"urbanness.csv\"
interests = \"interests.jsonl\"
profiles = \"profiles.csv\"
ratings = \"ratings.csv\"
level = \"both\"
top_k = 50
min_plays = 100
seed = 42
max_km = 30.0
min_days = 10.0
max_missing_frac = 0.10
";

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(
        args.next()
            .unwrap_or_else(|| "crates/cli/fixtures/pipeline".into()),
    );
    let seed = args
        .next()
        .map_or(42, |s| s.parse().expect("seed must be an integer"));
    let users = args
        .next()
        .map_or(100, |s| s.parse().expect("users must be an integer"));
    pipeline_fixture(seed, users).write_to(&dir)?;
    std::fs::write(dir.join("config.toml"), CONFIG)?;
    println!("wrote fixture to {}", dir.display());
    Ok(())
}
