use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::types::Question;
use super::ModelError;

/// Stamped into every top-level record on write; readers ignore it, so files
/// from older minor revisions keep loading.
pub const SCHEMA_VERSION: &str = "unprm/v1";

/// Writes records as JSON Lines, one object per line, atomically: the file
/// appears complete or not at all. Each top-level object gains a `schema`
/// field.
pub fn write_jsonl<T, I>(path: &Path, records: I) -> Result<(), ModelError>
where
    T: Serialize,
    I: IntoIterator<Item = T>,
{
    let io_err = |source: std::io::Error| ModelError::Io {
        path: path.display().to_string(),
        source,
    };

    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(&parent).map_err(io_err)?;
    {
        let mut writer = BufWriter::new(tmp.as_file());
        for record in records {
            let mut value = serde_json::to_value(&record).map_err(ModelError::Serialize)?;
            if let serde_json::Value::Object(ref mut map) = value {
                map.entry("schema")
                    .or_insert_with(|| serde_json::Value::String(SCHEMA_VERSION.to_string()));
            }
            serde_json::to_writer(&mut writer, &value).map_err(ModelError::Serialize)?;
            writer.write_all(b"\n").map_err(io_err)?;
        }
        writer.flush().map_err(io_err)?;
    }
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

/// Reads a JSON Lines file. Blank lines are skipped; a malformed line fails
/// with its 1-based line number. An empty file yields an empty vector.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ModelError> {
    let file = File::open(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);

    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| ModelError::MalformedLine {
            path: path.display().to_string(),
            line: i + 1,
            source,
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Reads and validates a question file: non-empty fields, unique ids.
pub fn read_questions(path: &Path) -> Result<Vec<Question>, ModelError> {
    let questions: Vec<Question> = read_jsonl(path)?;
    let mut seen = std::collections::HashSet::new();
    for q in &questions {
        q.validate()?;
        if !seen.insert(q.id.as_str()) {
            return Err(ModelError::DuplicateQuestionId { id: q.id.clone() });
        }
    }
    Ok(questions)
}
