//! Completion-rate tables in the published layout.
//!
//! Terrains appear in the order stairs, bumpy, stepped. Within a terrain the
//! rows run over (velocity, difficulty) as 0.75/50%, 0.75/100%, 1.75/50%,
//! 1.75/100%, each with the MTAC row first and the baseline row second.

use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::eval::{EvalRecord, BASELINE_LABEL, MTAC_LABEL};
use crate::terrain::TerrainFamily;

pub const TABLE_HEADER: &str = "Policy,Terr. Type,Terr. Difficulty,Vel. (m/s),C.R.";
pub const TABLE_TERRAINS: [TerrainFamily; 3] = [TerrainFamily::Stairs, TerrainFamily::Bumpy, TerrainFamily::Stepped];
pub const TABLE_CELLS: [(f64, f64); 4] = [(0.75, 0.5), (0.75, 1.0), (1.75, 0.5), (1.75, 1.0)];
pub const TABLE_POLICIES: [&str; 2] = [MTAC_LABEL, BASELINE_LABEL];

/// Published completion rates in percent, as
/// `(terrain, difficulty, velocity, MTAC, Generalized PPO)`.
pub const REFERENCE_TABLE: [(TerrainFamily, f64, f64, u32, u32); 12] = [
    (TerrainFamily::Stairs, 0.5, 0.75, 100, 50),
    (TerrainFamily::Stairs, 1.0, 0.75, 100, 30),
    (TerrainFamily::Stairs, 0.5, 1.75, 100, 25),
    (TerrainFamily::Stairs, 1.0, 1.75, 82, 13),
    (TerrainFamily::Bumpy, 0.5, 0.75, 100, 100),
    (TerrainFamily::Bumpy, 1.0, 0.75, 92, 91),
    (TerrainFamily::Bumpy, 0.5, 1.75, 75, 79),
    (TerrainFamily::Bumpy, 1.0, 1.75, 34, 13),
    (TerrainFamily::Stepped, 0.5, 0.75, 83, 41),
    (TerrainFamily::Stepped, 1.0, 0.75, 61, 33),
    (TerrainFamily::Stepped, 0.5, 1.75, 75, 42),
    (TerrainFamily::Stepped, 1.0, 1.75, 58, 34),
];

pub fn terrain_label(family: TerrainFamily) -> &'static str {
    match family {
        TerrainFamily::Flat => "Flat",
        TerrainFamily::Bumpy => "Bumpy",
        TerrainFamily::Stairs => "Stairs",
        TerrainFamily::Stepped => "Stepped",
    }
}

pub fn difficulty_label(difficulty: f64) -> String {
    format!("{}%", (difficulty * 100.0).round() as i64)
}

pub fn percent(rate: f64) -> String {
    format!("{}%", (rate * 100.0).round() as i64)
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

/// Build the table from evaluation records. Every terrain that appears in
/// the records must have all eight cells; each cell must appear once.
pub fn compare_table(records: &[EvalRecord]) -> Result<String> {
    for r in records {
        let known_cell = TABLE_CELLS.iter().any(|&(v, d)| same(v, r.spec.velocity) && same(d, r.spec.difficulty));
        if !TABLE_TERRAINS.contains(&r.spec.terrain) || !known_cell || !TABLE_POLICIES.contains(&r.policy.as_str()) {
            return Err(Error::Config(format!(
                "record {} / {} / {} / {} is not a table cell",
                r.policy, r.spec.terrain, r.spec.difficulty, r.spec.velocity
            )));
        }
    }
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for family in TABLE_TERRAINS {
        if !records.iter().any(|r| r.spec.terrain == family) {
            continue;
        }
        for (velocity, difficulty) in TABLE_CELLS {
            for policy in TABLE_POLICIES {
                let matching: Vec<&EvalRecord> = records
                    .iter()
                    .filter(|r| {
                        r.policy == policy
                            && r.spec.terrain == family
                            && same(r.spec.velocity, velocity)
                            && same(r.spec.difficulty, difficulty)
                    })
                    .collect();
                let cell = format!("{policy} / {family} / {} / {velocity}", difficulty_label(difficulty));
                let r = match matching.as_slice() {
                    [r] => r,
                    [] => return Err(Error::Config(format!("missing record for {cell}"))),
                    _ => return Err(Error::Config(format!("duplicate records for {cell}"))),
                };
                out.push_str(&format!(
                    "{policy},{},{},{velocity},{}\n",
                    terrain_label(family),
                    difficulty_label(difficulty),
                    percent(r.completion_rate)
                ));
            }
        }
    }
    Ok(out)
}

/// Every `.csv` evaluation record in `dir`, sorted by file name.
pub fn load_records(dir: &Path) -> Result<Vec<EvalRecord>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            EvalRecord::from_csv(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        })
        .collect()
}
