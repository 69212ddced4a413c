//! Reading `id,w,y` data files.

use std::collections::HashSet;
use std::path::Path;

use randtest::schemes::AssignmentPattern;
use randtest::statistics::OutcomeVector;
use serde::Deserialize;

use crate::CliError;

#[derive(Deserialize)]
struct Row {
    id: String,
    w: String,
    y: f64,
}

/// Observed assignment and responses in file order.
#[derive(Debug)]
pub struct Dataset {
    pub w: AssignmentPattern,
    pub y: OutcomeVector,
}

pub fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["id", "w", "y"] {
        return Err(CliError::Input(format!(
            "{}: header must be id,w,y",
            path.display()
        )));
    }
    let mut ids = HashSet::new();
    let mut w = Vec::new();
    let mut y = Vec::new();
    for (line, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let at = || format!("{} row {}", path.display(), line + 1);
        if !ids.insert(row.id.clone()) {
            return Err(CliError::Input(format!(
                "{}: duplicate id {:?}",
                at(),
                row.id
            )));
        }
        let bit = match row.w.as_str() {
            "0" => 0u8,
            "1" => 1,
            other => {
                return Err(CliError::Input(format!(
                    "{}: w must be 0 or 1, got {other:?}",
                    at()
                )))
            }
        };
        if !row.y.is_finite() {
            return Err(CliError::Input(format!("{}: y must be finite", at())));
        }
        w.push(bit);
        y.push(row.y);
    }
    if w.is_empty() {
        return Err(CliError::Input(format!("{}: no data rows", path.display())));
    }
    Ok(Dataset {
        w: AssignmentPattern::from_indicators(&w)?,
        y: OutcomeVector::new(y)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn reads_rows_in_order() {
        let f = write("id,w,y\na,1,2.5\nb,0,-1\nc,1,0\n");
        let d = read_dataset(f.path()).unwrap();
        assert_eq!(d.w.to_string(), "101");
        assert_eq!(d.y.values(), &[2.5, -1.0, 0.0]);
    }

    #[test]
    fn rejects_bad_files() {
        for bad in [
            "id,y,w\na,1,1\n",
            "id,w,y\na,1,1\na,0,2\n",
            "id,w,y\na,2,1\n",
            "id,w,y\na,1,NaN\n",
            "id,w,y\na,1,inf\n",
            "id,w,y\n",
            "id,w,y\na,1\n",
        ] {
            let f = write(bad);
            assert!(read_dataset(f.path()).is_err(), "{bad:?}");
        }
    }
}
