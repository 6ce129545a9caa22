//! Browser bindings for the diversity measures.
//!
//! Every export takes and returns JSON or CSV text. The plain functions in
//! [`ops`] carry the logic so they can be tested off the browser.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use wasm_bindgen::prelude::*;

pub mod ops {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Serialize};
    use tastediv_core::divcore::{
        classical_mds, cosine_distance_matrix, rao_stirling, shannon_entropy, volume,
    };
    use tastediv_core::synth::{self, COMMON_TRIO, RARE_TRIO};
    use tastediv_core::{ConsumptionMatrix, DistanceMatrix};

    #[derive(Serialize)]
    pub struct Scores {
        pub rao_stirling: f64,
        pub entropy: f64,
        pub volume: usize,
    }

    #[derive(Serialize)]
    pub struct Layout {
        pub categories: Vec<String>,
        pub distances: Vec<Vec<f64>>,
        pub coords: Vec<[f64; 2]>,
        pub users: usize,
    }

    #[derive(Serialize)]
    struct Corpus {
        #[serde(flatten)]
        layout: Layout,
        common_trio: Vec<String>,
        rare_trio: Vec<String>,
    }

    #[derive(Deserialize)]
    struct ScoreRequest {
        weights: Vec<f64>,
        distances: Vec<Vec<f64>>,
    }

    fn layout(cm: &ConsumptionMatrix) -> Result<Layout, String> {
        let d = cosine_distance_matrix(cm).map_err(|e| e.to_string())?;
        let coords = if d.len() >= 3 {
            classical_mds(&d, 2)
                .map_err(|e| e.to_string())?
                .coords
                .iter()
                .map(|c| [c[0], c[1]])
                .collect()
        } else {
            vec![[0.0, 0.0]; d.len()]
        };
        Ok(Layout {
            categories: d.categories().to_vec(),
            distances: d.rows().to_vec(),
            coords,
            users: cm.n_users(),
        })
    }

    fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
        serde_json::to_string(v).map_err(|e| e.to_string())
    }

    /// The metal-versus-mixed corpus with its distances and map.
    pub fn disparity_corpus(seed: u64, users: usize) -> Result<String, String> {
        if users < 10 {
            return Err("need at least 10 users".into());
        }
        let cm = synth::disparity_corpus(seed, users);
        to_json(&Corpus {
            layout: layout(&cm)?,
            common_trio: COMMON_TRIO.iter().map(|s| s.to_string()).collect(),
            rare_trio: RARE_TRIO.iter().map(|s| s.to_string()).collect(),
        })
    }

    /// Scores non-negative `weights` (normalized here) against `distances`.
    pub fn score(request_json: &str) -> Result<String, String> {
        let req: ScoreRequest = serde_json::from_str(request_json).map_err(|e| e.to_string())?;
        if req.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err("weights must be finite and non-negative".into());
        }
        let total: f64 = req.weights.iter().sum();
        if total <= 0.0 {
            return Err("weights sum to zero".into());
        }
        let p: Vec<f64> = req.weights.iter().map(|w| w / total).collect();
        let labels = (0..req.distances.len()).map(|i| i.to_string()).collect();
        let d = DistanceMatrix::new(labels, req.distances).map_err(|e| e.to_string())?;
        to_json(&Scores {
            rao_stirling: rao_stirling(&p, &d).map_err(|e| e.to_string())?,
            entropy: shannon_entropy(&p),
            volume: volume(&p, 0.0),
        })
    }

    /// Distances and a 2-D map from `user_id,<category>...` weight rows.
    pub fn map_from_csv(text: &str) -> Result<String, String> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| e.to_string())?.clone();
        if header.len() < 3 {
            return Err("expected a user column and at least two category columns".into());
        }
        let mut weights: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            let mut row = BTreeMap::new();
            for (cat, cell) in header.iter().zip(rec.iter()).skip(1) {
                let w: f64 = cell
                    .parse()
                    .map_err(|_| format!("row {}: `{cell}` is not a number", i + 2))?;
                if !(w >= 0.0) {
                    return Err(format!("row {}: negative weight", i + 2));
                }
                row.insert(cat.to_string(), w);
            }
            weights.insert(rec.get(0).unwrap_or_default().to_string(), row);
        }
        let (cm, _) = ConsumptionMatrix::from_weights(&weights, "empty");
        to_json(&layout(&cm)?)
    }
}

#[wasm_bindgen]
pub fn disparity_corpus(seed: u32, users: u32) -> Result<String, JsError> {
    ops::disparity_corpus(seed.into(), users as usize).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn score(request_json: &str) -> Result<String, JsError> {
    ops::score(request_json).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn map_from_csv(text: &str) -> Result<String, JsError> {
    ops::map_from_csv(text).map_err(|e| JsError::new(&e))
}
