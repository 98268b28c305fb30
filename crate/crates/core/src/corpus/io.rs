use super::{CorpusError, Interaction, ScoreLabel, Section};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const INTERACTION_COLUMNS: [&str; 7] =
    ["user_id", "question_id", "section", "correct", "elapsed_ms", "time_limit_ms", "timestamp"];

pub const LABEL_COLUMNS: [&str; 5] = ["user_id", "score_total", "score_lc", "score_rc", "report_time"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteractionFormat {
    Csv,
    Jsonl,
}

impl InteractionFormat {
    /// Guess from the file extension; anything other than `.jsonl` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => InteractionFormat::Jsonl,
            _ => InteractionFormat::Csv,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.display().to_string(), source }
}

pub fn parse_interactions(path: &Path, format: InteractionFormat) -> Result<Vec<Interaction>, CorpusError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_interactions(BufReader::new(file), format)
}

pub fn read_interactions<R: Read>(
    reader: R,
    format: InteractionFormat,
) -> Result<Vec<Interaction>, CorpusError> {
    match format {
        InteractionFormat::Csv => read_interactions_csv(reader),
        InteractionFormat::Jsonl => read_interactions_jsonl(reader),
    }
}

pub fn write_interactions(
    path: &Path,
    format: InteractionFormat,
    rows: &[Interaction],
) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    match format {
        InteractionFormat::Csv => write_interactions_csv(&mut out, rows),
        InteractionFormat::Jsonl => write_interactions_jsonl(&mut out, rows),
    }
    .and_then(|_| out.flush())
    .map_err(io_err(path))
}

fn write_interactions_jsonl<W: Write>(out: &mut W, rows: &[Interaction]) -> std::io::Result<()> {
    for row in rows {
        let line = serde_json::to_string(&JsonInteraction::from(row)).expect("interaction serializes");
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn write_interactions_csv<W: Write>(out: &mut W, rows: &[Interaction]) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(INTERACTION_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.user_id.as_str(),
            r.question_id.as_str(),
            r.section.as_str(),
            if r.correct { "1" } else { "0" },
            &r.elapsed_ms.to_string(),
            &r.time_limit_ms.to_string(),
            &r.timestamp.to_string(),
        ])?;
    }
    w.flush()
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<(), CorpusError> {
    for col in expected {
        if !found.iter().any(|f| f == *col) {
            return Err(CorpusError::MissingColumn(col.to_string()));
        }
    }
    if found.len() != expected.len() || found.iter().zip(expected).any(|(a, b)| a != *b) {
        return Err(CorpusError::UnexpectedHeader {
            expected: expected.join(","),
            found: found.iter().collect::<Vec<_>>().join(","),
        });
    }
    Ok(())
}

fn csv_records<R: Read>(
    reader: R,
    expected: &[&str],
) -> Result<impl Iterator<Item = Result<(u64, csv::StringRecord), CorpusError>>, CorpusError> {
    let rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut records = rdr.into_records();
    let header = match records.next() {
        None => return Err(CorpusError::MissingColumn(expected[0].to_string())),
        Some(h) => h.map_err(|e| CorpusError::MalformedRow { line: 1, reason: e.to_string() })?,
    };
    check_header(&header, expected)?;
    let n_cols = expected.len();
    Ok(records.map(move |rec| {
        let rec = rec.map_err(|e| CorpusError::MalformedRow {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != n_cols {
            return Err(CorpusError::MalformedRow {
                line,
                reason: format!("expected {n_cols} fields, found {}", rec.len()),
            });
        }
        Ok((line, rec))
    }))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, line: u64) -> Result<T, CorpusError> {
    let raw = &rec[idx];
    raw.parse::<T>().map_err(|_| CorpusError::MalformedRow {
        line,
        reason: format!("cannot parse `{raw}` as {}", INTERACTION_COLUMNS.get(idx).unwrap_or(&"field")),
    })
}

fn parse_bool(raw: &str, line: u64) -> Result<bool, CorpusError> {
    match raw {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => {
            Err(CorpusError::MalformedRow { line, reason: format!("cannot parse `{other}` as correct") })
        }
    }
}

fn non_empty(s: &str, what: &str, line: u64) -> Result<String, CorpusError> {
    if s.is_empty() {
        Err(CorpusError::MalformedRow { line, reason: format!("empty {what}") })
    } else {
        Ok(s.to_string())
    }
}

fn checked(it: Interaction, line: u64) -> Result<Interaction, CorpusError> {
    if it.time_limit_ms == 0 {
        return Err(CorpusError::MalformedRow { line, reason: "time_limit_ms must be positive".into() });
    }
    Ok(it)
}

fn read_interactions_csv<R: Read>(reader: R) -> Result<Vec<Interaction>, CorpusError> {
    let mut out = Vec::new();
    for rec in csv_records(reader, &INTERACTION_COLUMNS)? {
        let (line, rec) = rec?;
        let section: Section = rec[2].parse().map_err(|reason| CorpusError::MalformedRow { line, reason })?;
        let it = Interaction {
            user_id: non_empty(&rec[0], "user_id", line)?,
            question_id: non_empty(&rec[1], "question_id", line)?,
            section,
            correct: parse_bool(&rec[3], line)?,
            elapsed_ms: field(&rec, 4, line)?,
            time_limit_ms: field(&rec, 5, line)?,
            timestamp: field(&rec, 6, line)?,
        };
        out.push(checked(it, line)?);
    }
    Ok(out)
}

/// JSONL wire form; every field optional so that absent keys surface as
/// `MissingColumn` rather than a generic decode error.
#[derive(Serialize, Deserialize)]
struct JsonInteraction {
    user_id: Option<serde_json::Value>,
    question_id: Option<serde_json::Value>,
    section: Option<serde_json::Value>,
    correct: Option<serde_json::Value>,
    elapsed_ms: Option<serde_json::Value>,
    time_limit_ms: Option<serde_json::Value>,
    timestamp: Option<serde_json::Value>,
}

impl From<&Interaction> for JsonInteraction {
    fn from(r: &Interaction) -> Self {
        use serde_json::Value;
        JsonInteraction {
            user_id: Some(Value::from(r.user_id.clone())),
            question_id: Some(Value::from(r.question_id.clone())),
            section: Some(Value::from(r.section.as_str())),
            correct: Some(Value::from(r.correct)),
            elapsed_ms: Some(Value::from(r.elapsed_ms)),
            time_limit_ms: Some(Value::from(r.time_limit_ms)),
            timestamp: Some(Value::from(r.timestamp)),
        }
    }
}

fn read_interactions_jsonl<R: Read>(reader: R) -> Result<Vec<Interaction>, CorpusError> {
    use serde_json::Value;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = i as u64 + 1;
        let line = line.map_err(|e| CorpusError::MalformedRow { line: line_no, reason: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| CorpusError::MalformedRow { line: line_no, reason };
        let raw: JsonInteraction = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        fn need(v: Option<Value>, name: &str) -> Result<Value, CorpusError> {
            v.ok_or_else(|| CorpusError::MissingColumn(name.to_string()))
        }
        let as_str = |v: Value, name: &str| -> Result<String, CorpusError> {
            match v {
                Value::String(s) if !s.is_empty() => Ok(s),
                other => Err(malformed(format!("{name}: expected non-empty string, got {other}"))),
            }
        };
        let as_u64 = |v: Value, name: &str| -> Result<u64, CorpusError> {
            v.as_u64().ok_or_else(|| malformed(format!("{name}: expected non-negative integer, got {v}")))
        };
        let user_id = as_str(need(raw.user_id, "user_id")?, "user_id")?;
        let question_id = as_str(need(raw.question_id, "question_id")?, "question_id")?;
        let section =
            as_str(need(raw.section, "section")?, "section")?.parse::<Section>().map_err(malformed)?;
        let correct = match need(raw.correct, "correct")? {
            Value::Bool(b) => b,
            Value::Number(n) if n.as_u64() == Some(1) => true,
            Value::Number(n) if n.as_u64() == Some(0) => false,
            other => return Err(malformed(format!("correct: expected boolean, got {other}"))),
        };
        let elapsed_ms = as_u64(need(raw.elapsed_ms, "elapsed_ms")?, "elapsed_ms")?;
        let time_limit_ms = as_u64(need(raw.time_limit_ms, "time_limit_ms")?, "time_limit_ms")?;
        let ts = need(raw.timestamp, "timestamp")?;
        let timestamp =
            ts.as_i64().ok_or_else(|| malformed(format!("timestamp: expected integer, got {ts}")))?;
        out.push(checked(
            Interaction { user_id, question_id, section, correct, elapsed_ms, time_limit_ms, timestamp },
            line_no,
        )?);
    }
    Ok(out)
}

pub fn parse_labels(path: &Path) -> Result<Vec<ScoreLabel>, CorpusError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_labels(BufReader::new(file))
}

pub fn read_labels<R: Read>(reader: R) -> Result<Vec<ScoreLabel>, CorpusError> {
    let mut out = Vec::new();
    for rec in csv_records(reader, &LABEL_COLUMNS)? {
        let (line, rec) = rec?;
        let opt = |idx: usize| -> Result<Option<u32>, CorpusError> {
            if rec[idx].is_empty() {
                Ok(None)
            } else {
                rec[idx].parse().map(Some).map_err(|_| CorpusError::MalformedRow {
                    line,
                    reason: format!("cannot parse `{}` as {}", &rec[idx], LABEL_COLUMNS[idx]),
                })
            }
        };
        let total: u32 = rec[1].parse().map_err(|_| CorpusError::MalformedRow {
            line,
            reason: format!("cannot parse `{}` as score_total", &rec[1]),
        })?;
        let report_time: i64 = rec[4].parse().map_err(|_| CorpusError::MalformedRow {
            line,
            reason: format!("cannot parse `{}` as report_time", &rec[4]),
        })?;
        let label = ScoreLabel {
            user_id: non_empty(&rec[0], "user_id", line)?,
            score_total: total,
            score_lc: opt(2)?,
            score_rc: opt(3)?,
            report_time,
        };
        label.validate().map_err(|reason| CorpusError::MalformedRow { line, reason })?;
        out.push(label);
    }
    Ok(out)
}

pub fn write_labels(path: &Path, labels: &[ScoreLabel]) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w =
        csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(BufWriter::new(file));
    let opt = |v: Option<u32>| v.map(|s| s.to_string()).unwrap_or_default();
    let res: Result<(), csv::Error> = (|| {
        w.write_record(LABEL_COLUMNS)?;
        for l in labels {
            w.write_record([
                l.user_id.clone(),
                l.score_total.to_string(),
                opt(l.score_lc),
                opt(l.score_rc),
                l.report_time.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| io_err(path)(e.into()))
}
