//! Sensor dataset CSV: header `x,y,z,concentration`, one sensor per row,
//! lengths in millimetres.

use std::path::Path;

use crate::dispersion::{SensorArray, SensorLocation};
use crate::error::{Error, Result};

use super::fmt_f64;

pub const HEADER: [&str; 4] = ["x", "y", "z", "concentration"];

pub fn load_dataset(path: &Path) -> Result<SensorArray> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let header = reader.headers()?.clone();
    let names: Vec<String> = header.iter().map(str::to_ascii_lowercase).collect();
    if names.is_empty() || (names.len() == 1 && names[0].is_empty()) {
        return Err(Error::Validation(format!(
            "{}: empty dataset",
            path.display()
        )));
    }
    if names != HEADER {
        return Err(parse_err(
            1,
            format!(
                "expected header '{}', found '{}'",
                HEADER.join(","),
                names.join(",")
            ),
        ));
    }

    let mut sensors = Vec::new();
    let mut observed = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(parse_err(
                line,
                format!("expected 4 fields, found {}", record.len()),
            ));
        }
        let mut fields = [0.0; 4];
        for (slot, raw) in fields.iter_mut().zip(record.iter()) {
            *slot = raw
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("'{raw}' is not a number")))?;
        }
        let [x, y, z, c] = fields;
        if !c.is_finite() || c < 0.0 {
            return Err(Error::Validation(format!(
                "{}:{line}: concentration {c} must be finite and non-negative",
                path.display()
            )));
        }
        sensors.push(
            SensorLocation::new(x, y, z)
                .map_err(|e| Error::Validation(format!("{}:{line}: {e}", path.display())))?,
        );
        observed.push(c);
    }
    if sensors.is_empty() {
        return Err(Error::Validation(format!(
            "{}: dataset has no sensor rows",
            path.display()
        )));
    }
    SensorArray::with_observed(sensors, observed)
}

pub fn write_dataset(path: &Path, array: &SensorArray) -> Result<()> {
    let observed = array
        .observed()
        .ok_or_else(|| Error::Validation("cannot write a dataset without observations".into()))?;
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(HEADER)?;
    for (s, c) in array.sensors().iter().zip(observed) {
        writer.write_record([fmt_f64(s.x), fmt_f64(s.y), fmt_f64(s.z), fmt_f64(*c)])?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn parses_and_reports_lines() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write(
            dir.path(),
            "ok.csv",
            "x,y,z,concentration\n0,1,9.3,1e-5\n10,-1,9.3,0\n",
        );
        let a = load_dataset(&ok).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a.observed().unwrap(), &[1e-5, 0.0]);

        let bad = write(
            dir.path(),
            "bad.csv",
            "x,y,z,concentration\n0,1,9.3,1e-5\n0,oops,9.3,1\n",
        );
        match load_dataset(&bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }

        let neg = write(dir.path(), "neg.csv", "x,y,z,concentration\n0,1,9.3,-2\n");
        assert!(matches!(load_dataset(&neg), Err(Error::Validation(_))));

        let empty = write(dir.path(), "empty.csv", "");
        assert!(matches!(load_dataset(&empty), Err(Error::Validation(_))));

        let header_only = write(dir.path(), "h.csv", "x,y,z,concentration\n");
        assert!(matches!(
            load_dataset(&header_only),
            Err(Error::Validation(_))
        ));

        assert!(matches!(
            load_dataset(&dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }
}
