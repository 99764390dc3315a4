//! Line-delimited JSON reading and writing.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
}

/// A parsed line together with its 1-based line number and raw object, so
/// callers can inspect keys the typed record does not know about.
pub struct Line<T> {
    pub number: usize,
    pub record: T,
    pub raw: serde_json::Map<String, serde_json::Value>,
}

pub fn read<T: DeserializeOwned>(path: &Path) -> Result<Vec<Line<T>>, JsonlError> {
    let io_err = |source| JsonlError::Io { path: path.display().to_string(), source };
    let file = File::open(path).map_err(io_err)?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        let number = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| JsonlError::Parse {
            path: path.display().to_string(),
            line: number,
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let raw = match &value {
            serde_json::Value::Object(map) => map.clone(),
            _ => return Err(parse_err("expected a JSON object".into())),
        };
        let record = serde_json::from_value(value).map_err(|e| parse_err(e.to_string()))?;
        out.push(Line { number, record, raw });
    }
    Ok(out)
}

pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, JsonlError> {
    Ok(read(path)?.into_iter().map(|l| l.record).collect())
}

pub fn write<'a, T, I>(path: &Path, records: I) -> Result<(), JsonlError>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    let io_err = |source| JsonlError::Io { path: path.display().to_string(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| JsonlError::Parse {
            path: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })?;
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
