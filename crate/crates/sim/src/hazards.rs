//! Hazard lists in CSV form: `id,description,severity,exposure,controllability`.

use std::io::Read;

use eesim_core::safety::HazardRecord;
use serde::Deserialize;

#[derive(Debug, Deserialize)]
struct Row {
    id: String,
    #[serde(default)]
    description: String,
    severity: String,
    exposure: String,
    controllability: String,
}

/// Reads every row, collecting all malformed ones before failing.
pub fn read_hazards<R: Read>(input: R) -> Result<Vec<HazardRecord>, Vec<String>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                errors.push(format!("line {line}: {e}"));
                continue;
            }
        };
        match (row.severity.parse(), row.exposure.parse(), row.controllability.parse()) {
            (Ok(severity), Ok(exposure), Ok(controllability)) => records.push(HazardRecord {
                id: row.id,
                description: row.description,
                severity,
                exposure,
                controllability,
            }),
            (s, e, c) => {
                let problems: Vec<String> = [s.err(), e.err(), c.err()]
                    .into_iter()
                    .flatten()
                    .map(|e| e.to_string())
                    .collect();
                errors.push(format!("line {line} ({}): {}", row.id, problems.join("; ")));
            }
        }
    }
    if errors.is_empty() {
        Ok(records)
    } else {
        Err(errors)
    }
}
