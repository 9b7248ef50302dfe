use std::io::{BufRead, Write};

use super::PredictionRecord;

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reads newline-delimited JSON prediction records. Blank lines are skipped;
/// line numbers in errors are 1-based.
pub fn read_prediction_log(reader: impl BufRead) -> Result<Vec<PredictionRecord>, LogError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| LogError::Parse { line: i + 1, message: e.to_string() })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_prediction_log(mut writer: impl Write, records: &[PredictionRecord]) -> Result<(), LogError> {
    for r in records {
        serde_json::to_writer(&mut writer, r).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_errors() {
        let text = concat!(
            r#"{"record_id":"1","timestamp":"2024-01-01T00:00:00Z","outcome":1,"protected":"f","stratum":"junior"}"#,
            "\n\n",
            r#"{"record_id":"2","timestamp":"2024-01-01T00:00:01Z","outcome":0,"protected":"m","label":1,"region":"north"}"#,
            "\n"
        );
        let records = read_prediction_log(text.as_bytes()).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[1].attribute("region").as_deref(), Some("north"));
        let mut buf = Vec::new();
        write_prediction_log(&mut buf, &records).unwrap();
        assert_eq!(read_prediction_log(buf.as_slice()).unwrap(), records);

        let bad = "{\"record_id\":\"1\",\"timestamp\":\"2024-01-01T00:00:00Z\",\"outcome\":3}\n";
        match read_prediction_log(bad.as_bytes()) {
            Err(LogError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }
}
