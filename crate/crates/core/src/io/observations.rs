use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use super::InputError;
use crate::campaign::{BufferRecord, Observation};

pub const OBSERVATION_COLUMNS: [&str; 5] = ["parcel_id", "operator_id", "image_id", "replicate", "measured_area_m2"];

/// Reads the observation table. Row numbers in errors are file line numbers
/// (the header is line 1).
pub fn parse_observations_csv(path: &Path) -> Result<Vec<Observation>, InputError> {
    let file = std::fs::File::open(path).map_err(|e| InputError::io(path, e))?;
    read_observations(file, path)
}

pub fn read_observations<R: Read>(reader: R, path: &Path) -> Result<Vec<Observation>, InputError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| InputError::format(path, e))?.clone();
    let mut idx = [0usize; 5];
    for (slot, column) in idx.iter_mut().zip(OBSERVATION_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim_start_matches('\u{feff}') == column)
            .ok_or(InputError::MissingColumn { path: path.to_path_buf(), column })?;
    }

    let mut out = Vec::new();
    let mut seen: HashMap<(String, String, String, u32), u64> = HashMap::new();
    for result in rdr.records() {
        let record = result.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line());
            InputError::Row { path: path.to_path_buf(), row, message: e.to_string() }
        })?;
        let row = record.position().map_or(0, |p| p.line());
        let err = |message: String| InputError::Row { path: path.to_path_buf(), row, message };
        let field = |i: usize| record.get(idx[i]).unwrap_or("");
        for (i, column) in OBSERVATION_COLUMNS.iter().enumerate().take(3) {
            if field(i).is_empty() {
                return Err(err(format!("empty {column}")));
            }
        }
        let replicate: u32 = field(3)
            .parse()
            .map_err(|_| err(format!("replicate {:?} is not a non-negative integer", field(3))))?;
        let area: f64 = field(4)
            .parse()
            .ok()
            .filter(|a: &f64| a.is_finite())
            .ok_or_else(|| err(format!("measured_area_m2 {:?} is not a number (use '.' as decimal separator)", field(4))))?;

        let obs = Observation::with_area(field(0), field(1), field(2), replicate, area);
        let key = (obs.parcel_id.clone(), obs.operator_id.clone(), obs.image_id.clone(), replicate);
        if let Some(&first_row) = seen.get(&key) {
            return Err(InputError::DuplicateRow {
                path: path.to_path_buf(),
                first_row,
                second_row: row,
                key: format!("({}, {}, {}, {})", key.0, key.1, key.2, key.3),
            });
        }
        seen.insert(key, row);
        out.push(obs);
    }
    Ok(out)
}

/// Observation table in the input format. Areas use the shortest decimal
/// form that parses back to the same value.
pub fn write_observations(observations: &[Observation]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(OBSERVATION_COLUMNS).expect("in-memory write");
    for o in observations {
        let area = o.area().map(|a| a.to_string()).unwrap_or_default();
        w.write_record([&o.parcel_id, &o.operator_id, &o.image_id, &o.replicate.to_string(), &area])
            .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Buffer table with outlier flags and jackknife distances.
pub fn write_buffers_csv(records: &[BufferRecord], distances: &[Option<f64>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "observation",
        "parcel_id",
        "operator_id",
        "image_id",
        "replicate",
        "measured_area_m2",
        "reference_area_m2",
        "reference_perimeter_m",
        "buffer_m",
        "jackknife_distance",
        "outlier",
    ])
    .expect("in-memory write");
    for (i, r) in records.iter().enumerate() {
        let d = distances.get(i).copied().flatten().map(|d| d.to_string()).unwrap_or_default();
        w.write_record([
            r.observation.to_string(),
            r.parcel_id.clone(),
            r.operator_id.clone(),
            r.image_id.clone(),
            r.replicate.to_string(),
            r.measured_area.to_string(),
            r.a_ref.to_string(),
            r.p_ref.to_string(),
            r.buffer.to_string(),
            d,
            r.outlier.to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}
