//! Trajectory and annotation interchange formats.
//!
//! CSV columns, in this exact order: `track_id,class,t,x,y,length,width,heading`.
//! Absent optional fields are empty strings. JSONL carries one object per
//! sample with the same keys; optional keys may be omitted or `null`.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::trajectory::{RawSample, RawTrack, RoadUserClass};

pub const CSV_COLUMNS: [&str; 8] = ["track_id", "class", "t", "x", "y", "length", "width", "heading"];
pub const ANNOTATION_COLUMNS: [&str; 4] = ["pedestrian_id", "vehicle_id", "t_p", "label"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackFormat {
    Csv,
    Jsonl,
}

impl std::str::FromStr for TrackFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(TrackFormat::Csv),
            "jsonl" => Ok(TrackFormat::Jsonl),
            other => Err(format!("unknown format {other:?} (expected csv or jsonl)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("input is not valid UTF-8")]
    InvalidUtf8,
    #[error("read failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: field `{field}`: {message}")]
    Schema {
        line: u64,
        field: String,
        message: String,
    },
    #[error("line {line}: track {track_id}: timestamp {t} is not after the previous sample at {prev}")]
    NonMonotonic {
        track_id: String,
        line: u64,
        t: f64,
        prev: f64,
    },
    #[error("line {line}: track {track_id}: duplicate timestamp {t}")]
    Duplicate { track_id: String, line: u64, t: f64 },
    #[error("line {line}: track {track_id} changes class from {from} to {to}")]
    ClassChanged {
        track_id: String,
        line: u64,
        from: RoadUserClass,
        to: RoadUserClass,
    },
}

fn schema(line: u64, field: &str, message: impl Into<String>) -> ParseError {
    ParseError::Schema {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse_f64(line: u64, field: &str, text: &str) -> Result<f64, ParseError> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| schema(line, field, format!("not a number: {text:?}")))?;
    if !v.is_finite() {
        return Err(schema(line, field, "value must be finite"));
    }
    Ok(v)
}

fn parse_opt_f64(line: u64, field: &str, text: &str) -> Result<Option<f64>, ParseError> {
    if text.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(line, field, text).map(Some)
    }
}

#[derive(Default)]
struct TrackCollector {
    tracks: Vec<RawTrack>,
    lines: Vec<u64>,
    index: HashMap<String, usize>,
}

impl TrackCollector {
    fn push(&mut self, line: u64, track_id: String, class: RoadUserClass, s: RawSample) -> Result<(), ParseError> {
        for (field, v) in [("length", s.length), ("width", s.width)] {
            if let Some(v) = v {
                if v <= 0.0 {
                    return Err(schema(line, field, format!("must be positive, got {v}")));
                }
            }
        }
        match self.index.get(&track_id) {
            Some(&i) => {
                let track = &mut self.tracks[i];
                if track.class != class {
                    return Err(ParseError::ClassChanged {
                        track_id,
                        line,
                        from: track.class,
                        to: class,
                    });
                }
                let prev = track.samples[track.samples.len() - 1].t;
                if s.t == prev {
                    return Err(ParseError::Duplicate { track_id, line, t: s.t });
                }
                if s.t < prev {
                    return Err(ParseError::NonMonotonic {
                        track_id,
                        line,
                        t: s.t,
                        prev,
                    });
                }
                track.samples.push(s);
                self.lines[i] = line;
            }
            None => {
                self.index.insert(track_id.clone(), self.tracks.len());
                self.tracks.push(RawTrack {
                    track_id,
                    class,
                    samples: vec![s],
                });
                self.lines.push(line);
            }
        }
        Ok(())
    }
}

/// Parses tracks in order of first appearance. Malformed rows abort the
/// parse.
pub fn parse_trajectories<R: Read>(mut input: R, format: TrackFormat) -> Result<Vec<RawTrack>, ParseError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let text = String::from_utf8(bytes).map_err(|_| ParseError::InvalidUtf8)?;
    match format {
        TrackFormat::Csv => parse_csv(&text),
        TrackFormat::Jsonl => parse_jsonl(&text),
    }
}

fn parse_csv(text: &str) -> Result<Vec<RawTrack>, ParseError> {
    // An empty file holds no tracks; a header without rows is fine too.
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| schema(1, "header", e.to_string()))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(schema(1, "header", "missing header row"));
    }
    if headers.iter().ne(CSV_COLUMNS.iter().copied()) {
        let got: Vec<&str> = headers.iter().collect();
        return Err(schema(
            1,
            "header",
            format!("expected {} got {}", CSV_COLUMNS.join(","), got.join(",")),
        ));
    }
    let mut collector = TrackCollector::default();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            schema(line, "row", e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != CSV_COLUMNS.len() {
            return Err(schema(
                line,
                "row",
                format!("expected {} fields, got {}", CSV_COLUMNS.len(), record.len()),
            ));
        }
        let track_id = record[0].trim();
        if track_id.is_empty() {
            return Err(schema(line, "track_id", "must not be empty"));
        }
        let class: RoadUserClass = record[1].trim().parse().map_err(|e: String| schema(line, "class", e))?;
        let sample = RawSample {
            t: parse_f64(line, "t", &record[2])?,
            x: parse_f64(line, "x", &record[3])?,
            y: parse_f64(line, "y", &record[4])?,
            length: parse_opt_f64(line, "length", &record[5])?,
            width: parse_opt_f64(line, "width", &record[6])?,
            heading: parse_opt_f64(line, "heading", &record[7])?,
        };
        collector.push(line, track_id.to_string(), class, sample)?;
    }
    Ok(collector.tracks)
}

fn json_number(line: u64, obj: &Map<String, Value>, field: &str, required: bool) -> Result<Option<f64>, ParseError> {
    match obj.get(field) {
        None | Some(Value::Null) if !required => Ok(None),
        None | Some(Value::Null) => Err(schema(line, field, "missing required key")),
        Some(Value::Number(n)) => {
            let v = n.as_f64().ok_or_else(|| schema(line, field, "not representable as f64"))?;
            Ok(Some(v))
        }
        Some(other) => Err(schema(line, field, format!("expected a number, got {other}"))),
    }
}

fn parse_jsonl(text: &str) -> Result<Vec<RawTrack>, ParseError> {
    let mut collector = TrackCollector::default();
    for (i, raw_line) in text.lines().enumerate() {
        let line = i as u64 + 1;
        if raw_line.trim().is_empty() {
            continue;
        }
        let value: Value =
            serde_json::from_str(raw_line).map_err(|e| schema(line, "record", e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| schema(line, "record", "expected a JSON object"))?;
        if let Some(unknown) = obj.keys().find(|k| !CSV_COLUMNS.contains(&k.as_str())) {
            return Err(schema(line, unknown, "unknown key"));
        }
        let track_id = match obj.get("track_id") {
            Some(Value::String(s)) if !s.is_empty() => s.clone(),
            Some(_) => return Err(schema(line, "track_id", "expected a non-empty string")),
            None => return Err(schema(line, "track_id", "missing required key")),
        };
        let class: RoadUserClass = match obj.get("class") {
            Some(Value::String(s)) => s.parse().map_err(|e: String| schema(line, "class", e))?,
            Some(_) => return Err(schema(line, "class", "expected a string")),
            None => return Err(schema(line, "class", "missing required key")),
        };
        let req = |f: &str| json_number(line, obj, f, true).map(|v| v.unwrap_or_default());
        let opt = |f: &str| json_number(line, obj, f, false);
        let sample = RawSample {
            t: req("t")?,
            x: req("x")?,
            y: req("y")?,
            length: opt("length")?,
            width: opt("width")?,
            heading: opt("heading")?,
        };
        collector.push(line, track_id, class, sample)?;
    }
    Ok(collector.tracks)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes tracks in the interchange schema, one track after another.
pub fn write_trajectories<W: Write>(tracks: &[RawTrack], format: TrackFormat, out: W) -> std::io::Result<()> {
    match format {
        TrackFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(CSV_COLUMNS)?;
            for track in tracks {
                for s in &track.samples {
                    w.write_record([
                        track.track_id.clone(),
                        track.class.to_string(),
                        s.t.to_string(),
                        s.x.to_string(),
                        s.y.to_string(),
                        fmt_opt(s.length),
                        fmt_opt(s.width),
                        fmt_opt(s.heading),
                    ])?;
                }
            }
            w.flush()?;
        }
        TrackFormat::Jsonl => {
            let mut out = std::io::BufWriter::new(out);
            for track in tracks {
                for s in &track.samples {
                    let mut obj = Map::new();
                    obj.insert("track_id".into(), Value::from(track.track_id.clone()));
                    obj.insert("class".into(), Value::from(track.class.as_str()));
                    for (k, v) in [("t", Some(s.t)), ("x", Some(s.x)), ("y", Some(s.y))]
                        .into_iter()
                        .chain([("length", s.length), ("width", s.width), ("heading", s.heading)])
                    {
                        obj.insert(k.into(), v.map(Value::from).unwrap_or(Value::Null));
                    }
                    serde_json::to_writer(&mut out, &Value::Object(obj))?;
                    out.write_all(b"\n")?;
                }
            }
            out.flush()?;
        }
    }
    Ok(())
}

/// Manually supplied information about a pedestrian (optionally one pair):
/// the perception instant and a free-form label such as `BA` or `FA`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub pedestrian_id: String,
    pub vehicle_id: Option<String>,
    pub t_p: Option<f64>,
    pub label: Option<String>,
}

/// Parses `pedestrian_id,vehicle_id,t_p,label`; empty `vehicle_id` applies
/// the row to every pair of that pedestrian.
pub fn parse_annotations<R: Read>(mut input: R) -> Result<Vec<Annotation>, ParseError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let text = String::from_utf8(bytes).map_err(|_| ParseError::InvalidUtf8)?;
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| schema(1, "header", e.to_string()))?.clone();
    if headers.iter().ne(ANNOTATION_COLUMNS.iter().copied()) {
        return Err(schema(1, "header", format!("expected {}", ANNOTATION_COLUMNS.join(","))));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| schema(e.position().map(|p| p.line()).unwrap_or(0), "row", e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let non_empty = |s: &str| (!s.trim().is_empty()).then(|| s.trim().to_string());
        let pedestrian_id = non_empty(&record[0]).ok_or_else(|| schema(line, "pedestrian_id", "must not be empty"))?;
        out.push(Annotation {
            pedestrian_id,
            vehicle_id: non_empty(&record[1]),
            t_p: parse_opt_f64(line, "t_p", &record[2])?,
            label: non_empty(&record[3]),
        });
    }
    Ok(out)
}

pub fn write_annotations<W: Write>(annotations: &[Annotation], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ANNOTATION_COLUMNS)?;
    for a in annotations {
        w.write_record([
            a.pedestrian_id.clone(),
            a.vehicle_id.clone().unwrap_or_default(),
            fmt_opt(a.t_p),
            a.label.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()
}
