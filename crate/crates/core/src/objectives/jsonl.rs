use super::TrainingExample;
use crate::corpus::LineError;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

/// Writes one JSON object per line and returns the number written.
pub fn write_jsonl<'a, I>(examples: I, path: impl AsRef<Path>) -> std::io::Result<usize>
where
    I: IntoIterator<Item = &'a TrainingExample>,
{
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    let mut n = 0;
    for ex in examples {
        serde_json::to_writer(&mut out, ex)?;
        out.write_all(b"\n")?;
        n += 1;
    }
    out.flush()?;
    Ok(n)
}

#[derive(Clone, Debug, Default)]
pub struct JsonlRead {
    pub examples: Vec<TrainingExample>,
    pub errors: Vec<LineError>,
}

/// Reads examples, recording malformed or invalid lines instead of failing.
pub fn read_jsonl(path: impl AsRef<Path>) -> std::io::Result<JsonlRead> {
    let file = std::fs::File::open(path)?;
    let mut out = JsonlRead::default();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<TrainingExample>(&line)
            .map_err(|e| e.to_string())
            .and_then(|ex| ex.validate().map(|_| ex).map_err(|e| e.to_string()));
        match parsed {
            Ok(ex) => out.examples.push(ex),
            Err(message) => out.errors.push(LineError { line: n + 1, message }),
        }
    }
    Ok(out)
}
