//! Output tables and their readers.
//!
//! Numbers are written with six decimals so that reruns are byte-identical.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use crate::divcore::{DistanceMatrix, DiversityReport, MdsEmbedding};
use crate::error::{Error, Result};
use crate::geo::HomeLocation;
use crate::ingest::DroppedUser;
use crate::stats::features::{Column, ColumnKind, FeatureTable};
use crate::table;

/// Six-decimal fixed point, without a negative zero.
pub fn fmt6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

pub fn write_diversity<W: Write>(w: W, reports: &[DiversityReport]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["user_id", "rao_stirling", "entropy", "volume"])?;
    for r in reports {
        out.write_record([
            r.user_id.clone(),
            fmt6(r.rao_stirling),
            fmt6(r.entropy),
            r.volume.to_string(),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_diversity(path: &Path) -> Result<Vec<DiversityReport>> {
    let mut reader = table::open(path, &["user_id", "rao_stirling", "entropy", "volume"])?;
    table::rows(path, &mut reader, 4)
        .map(|row| {
            let (line, rec) = row?;
            Ok(DiversityReport {
                user_id: rec[0].to_string(),
                rao_stirling: table::required_f64(path, line, &rec[1])?,
                entropy: table::required_f64(path, line, &rec[2])?,
                volume: rec[3]
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse(path, line, "invalid volume"))?,
            })
        })
        .collect()
}

pub fn write_distances<W: Write>(w: W, d: &DistanceMatrix) -> Result<()> {
    let mut out = writer(w);
    let mut header = vec!["category".to_string()];
    header.extend(d.categories().iter().cloned());
    out.write_record(&header)?;
    for (label, row) in d.categories().iter().zip(d.rows()) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(|v| fmt6(*v)));
        out.write_record(&rec)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_distances(path: &Path) -> Result<DistanceMatrix> {
    let (mut reader, header) = table::open_any(path)?;
    if header.get(0) != Some("category") {
        return Err(Error::parse(path, 1, "first column must be `category`"));
    }
    let labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut rows = Vec::new();
    for (i, row) in table::rows(path, &mut reader, header.len()).enumerate() {
        let (line, rec) = row?;
        if labels.get(i).map(String::as_str) != Some(&rec[0]) {
            return Err(Error::parse(
                path,
                line,
                "row labels must match the header order",
            ));
        }
        rows.push(
            rec.iter()
                .skip(1)
                .map(|c| table::required_f64(path, line, c))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    DistanceMatrix::new(labels, rows).map_err(|e| Error::parse(path, 0, e.to_string()))
}

pub fn write_mds<W: Write>(w: W, e: &MdsEmbedding) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["category", "x", "y"])?;
    for (label, c) in e.categories.iter().zip(&e.coords) {
        let x = c.first().copied().unwrap_or(0.0);
        let y = c.get(1).copied().unwrap_or(0.0);
        out.write_record([label.clone(), fmt6(x), fmt6(y)])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// A labelled scatter plot of the first two axes.
pub fn mds_svg(e: &MdsEmbedding) -> String {
    const SIZE: f64 = 640.0;
    const MARGIN: f64 = 80.0;
    let xs: Vec<f64> = e
        .coords
        .iter()
        .map(|c| c.first().copied().unwrap_or(0.0))
        .collect();
    let ys: Vec<f64> = e
        .coords
        .iter()
        .map(|c| c.get(1).copied().unwrap_or(0.0))
        .collect();
    let span = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, (hi - lo).max(1e-12))
    };
    let (x0, xw) = span(&xs);
    let (y0, yw) = span(&ys);
    let scale = (SIZE - 2.0 * MARGIN) / xw.max(yw);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (i, label) in e.categories.iter().enumerate() {
        let px = MARGIN + (xs[i] - x0) * scale;
        // SVG y grows downward
        let py = SIZE - MARGIN - (ys[i] - y0) * scale;
        svg.push_str(&format!(
            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"4\" fill=\"#1f77b4\"/>\n\
             <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            px + 6.0,
            py - 6.0,
            xml_escape(label)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn write_dropped<W: Write>(w: W, dropped: &[DroppedUser]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["user_id", "reason"])?;
    for d in dropped {
        out.write_record([&d.user_id, &d.reason])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

const HOMES_HEADER: [&str; 8] = [
    "user_id",
    "zip",
    "fips",
    "resolved",
    "reason",
    "plurality_set",
    "night_set",
    "ndays_set",
];

fn join_set(s: &BTreeSet<String>) -> String {
    s.iter().cloned().collect::<Vec<_>>().join(";")
}

fn split_set(s: &str) -> BTreeSet<String> {
    s.split(';')
        .filter(|z| !z.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn write_homes<W: Write>(w: W, homes: &[HomeLocation]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(HOMES_HEADER)?;
    for h in homes {
        out.write_record([
            h.user_id.clone(),
            h.zip.clone().unwrap_or_default(),
            h.fips.clone().unwrap_or_default(),
            h.resolved.to_string(),
            h.reason.clone(),
            join_set(&h.plurality),
            join_set(&h.night),
            join_set(&h.n_days),
        ])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_homes(path: &Path) -> Result<Vec<HomeLocation>> {
    let mut reader = table::open(path, &HOMES_HEADER)?;
    table::rows(path, &mut reader, HOMES_HEADER.len())
        .map(|row| {
            let (line, rec) = row?;
            let opt = |s: &str| (!s.is_empty()).then(|| s.to_string());
            Ok(HomeLocation {
                user_id: rec[0].to_string(),
                zip: opt(&rec[1]),
                fips: opt(&rec[2]),
                resolved: rec[3]
                    .parse()
                    .map_err(|_| Error::parse(path, line, "resolved must be true/false"))?,
                reason: rec[4].to_string(),
                plurality: split_set(&rec[5]),
                night: split_set(&rec[6]),
                n_days: split_set(&rec[7]),
            })
        })
        .collect()
}

/// Whether a feature column explains or is explained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Predictor,
    Response,
}

impl Role {
    fn as_str(self) -> &'static str {
        match self {
            Role::Predictor => "predictor",
            Role::Response => "response",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaEntry {
    pub column: String,
    pub kind: ColumnKind,
    pub role: Role,
}

/// Writes `features.csv` (empty cells for missing values).
pub fn write_features<W: Write>(w: W, table: &FeatureTable) -> Result<()> {
    let mut out = writer(w);
    let mut header = vec!["user_id".to_string()];
    header.extend(table.columns().iter().map(|c| c.name.clone()));
    out.write_record(&header)?;
    for (i, user) in table.users().iter().enumerate() {
        let mut rec = vec![user.clone()];
        rec.extend(
            table
                .columns()
                .iter()
                .map(|c| c.values[i].map(fmt6).unwrap_or_default()),
        );
        out.write_record(&rec)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes the sidecar schema `column,kind,role`.
pub fn write_schema<W: Write>(w: W, schema: &[SchemaEntry]) -> Result<()> {
    let mut out = writer(w);
    out.write_record(["column", "kind", "role"])?;
    for s in schema {
        out.write_record([s.column.as_str(), s.kind.as_str(), s.role.as_str()])?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_schema(path: &Path) -> Result<Vec<SchemaEntry>> {
    let mut reader = table::open(path, &["column", "kind", "role"])?;
    table::rows(path, &mut reader, 3)
        .map(|row| {
            let (line, rec) = row?;
            let kind = rec[1]
                .trim()
                .parse()
                .map_err(|e: Error| Error::parse(path, line, e.to_string()))?;
            let role = match rec[2].trim() {
                "predictor" => Role::Predictor,
                "response" => Role::Response,
                other => return Err(Error::parse(path, line, format!("unknown role `{other}`"))),
            };
            Ok(SchemaEntry {
                column: rec[0].trim().to_string(),
                kind,
                role,
            })
        })
        .collect()
}

/// Reads `features.csv` using the kinds declared in `schema`.
pub fn read_features(path: &Path, schema: &[SchemaEntry]) -> Result<FeatureTable> {
    let (mut reader, header) = table::open_any(path)?;
    if header.get(0) != Some("user_id") {
        return Err(Error::parse(path, 1, "first column must be `user_id`"));
    }
    let names: Vec<&str> = header.iter().skip(1).collect();
    let kinds = names
        .iter()
        .map(|name| {
            schema
                .iter()
                .find(|s| s.column == *name)
                .map(|s| s.kind)
                .ok_or_else(|| {
                    Error::parse(path, 1, format!("column `{name}` missing from schema"))
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut users = Vec::new();
    let mut cells: Vec<Vec<Option<f64>>> = vec![Vec::new(); names.len()];
    for row in table::rows(path, &mut reader, header.len()) {
        let (line, rec) = row?;
        users.push(rec[0].to_string());
        for (j, cell) in rec.iter().skip(1).enumerate() {
            cells[j].push(table::optional_f64(path, line, cell)?);
        }
    }
    let columns = names
        .iter()
        .zip(kinds)
        .zip(cells)
        .map(|((name, kind), values)| Column {
            name: name.to_string(),
            kind,
            values,
        })
        .collect();
    FeatureTable::new(users, columns)
}
