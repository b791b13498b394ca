//! Long-format arm data: one row per arm with header `study,treatment,events,n`.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::meta_core::{ArmData, Dataset, Treatment};

pub const HEADER: [&str; 4] = ["study", "treatment", "events", "n"];

pub fn ingest(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    parse_dataset(file)
}

fn parse_count(field: &str, name: &str, line: u64) -> Result<u64> {
    field.trim().parse::<u64>().map_err(|_| Error::Parse {
        line,
        message: format!("{name} must be a non-negative integer, got {field:?}"),
    })
}

pub fn parse_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut records = rdr.records();

    match records.next() {
        None => return Err(Error::data("no studies")),
        Some(header) => {
            let header = header?;
            let fields: Vec<&str> = header.iter().map(str::trim).collect();
            if fields != HEADER {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header {:?}, found {:?}", HEADER.join(","), fields.join(",")),
                });
            }
        }
    }

    let mut arms = Vec::new();
    let mut seen: HashMap<(String, Treatment), u64> = HashMap::new();
    for record in records {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if record.len() != 4 {
            return Err(Error::Parse { line, message: format!("expected 4 fields, found {}", record.len()) });
        }
        let study = record[0].to_string();
        if study.is_empty() {
            return Err(Error::Parse { line, message: "empty study id".into() });
        }
        let treatment = record[1]
            .trim()
            .parse::<u8>()
            .ok()
            .and_then(Treatment::from_code)
            .ok_or_else(|| Error::Parse { line, message: format!("treatment must be 1 or 2, got {:?}", &record[1]) })?;
        let events = parse_count(&record[2], "events", line)?;
        let size = parse_count(&record[3], "n", line)?;
        if size == 0 {
            return Err(Error::Parse { line, message: "n must be at least 1".into() });
        }
        if events > size {
            return Err(Error::Parse { line, message: format!("events ({events}) exceed n ({size})") });
        }
        if let Some(first) = seen.insert((study.clone(), treatment), line) {
            return Err(Error::Parse {
                line,
                message: format!("duplicate arm (study {study}, treatment {}); first seen on line {first}", treatment.code()),
            });
        }
        arms.push(ArmData::new(study, treatment, events, size).map_err(|e| Error::Parse { line, message: e.to_string() })?);
    }

    if arms.is_empty() {
        return Err(Error::data("no studies"));
    }
    for arm in &arms {
        let other = match arm.treatment {
            Treatment::Control => Treatment::Active,
            Treatment::Active => Treatment::Control,
        };
        if !seen.contains_key(&(arm.study_id.clone(), other)) {
            return Err(Error::Parse {
                line: seen[&(arm.study_id.clone(), arm.treatment)],
                message: format!("study {} has no arm for treatment {}", arm.study_id, other.code()),
            });
        }
    }
    Dataset::new(arms)
}

/// Writes a dataset in the format read by [`parse_dataset`].
pub fn emit_dataset(data: &Dataset) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(HEADER)?;
    for arm in data.arms() {
        wtr.write_record([
            arm.study_id.as_str(),
            &arm.treatment.code().to_string(),
            &arm.events.to_string(),
            &arm.size.to_string(),
        ])?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output of utf-8 input is utf-8"))
}
