//! JSON-lines dataset files.
//!
//! Line 1 is a header record
//! `{"version":1,"V":..,"C_in":..,"action_names":[..],"body_of_action":[..],"body_names":[..]}`
//! (optionally with a `"comment"`); every further line is one sample
//! `{"id":..,"label":..,"frames":[[[x,y],..V],..raw_len]}`. Inputs with a
//! third confidence channel are reduced to `(x, y)` on load.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Frames, LabelTaxonomy, SkeletonSequence};
use crate::error::{MmnError, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    #[serde(rename = "V")]
    joints: usize,
    #[serde(rename = "C_in")]
    channels: usize,
    action_names: Vec<String>,
    body_of_action: Vec<usize>,
    body_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    comment: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct Record {
    id: String,
    label: usize,
    frames: Vec<Vec<Vec<f64>>>,
}

/// Fallback shape used only to recover the id of a record holding
/// NaN/Infinity tokens, which strict JSON rejects.
#[derive(Deserialize)]
struct LenientRecord {
    id: String,
}

fn non_finite_record_id(line: &str) -> Option<String> {
    let patched = line.replace("-Infinity", "null").replace("Infinity", "null").replace("NaN", "null");
    if patched == line {
        return None;
    }
    serde_json::from_str::<LenientRecord>(&patched).ok().map(|r| r.id)
}

fn parse_header(line: &str) -> Result<Header> {
    let h: Header = serde_json::from_str(line).map_err(|e| MmnError::Parse { line: 1, msg: e.to_string() })?;
    if h.version != FORMAT_VERSION {
        return Err(MmnError::Parse { line: 1, msg: format!("unsupported version {}", h.version) });
    }
    if h.channels < 2 {
        return Err(MmnError::Schema(format!("C_in must be at least 2, got {}", h.channels)));
    }
    Ok(h)
}

fn record_to_sequence(rec: Record, joints: usize, channels: usize, line: usize) -> Result<SkeletonSequence> {
    if rec.frames.is_empty() {
        return Err(MmnError::Schema(format!("line {line}: sample {} has no frames", rec.id)));
    }
    let mut data = Vec::with_capacity(rec.frames.len() * joints * 2);
    for (t, frame) in rec.frames.iter().enumerate() {
        if frame.len() != joints {
            return Err(MmnError::Schema(format!(
                "line {line}: sample {} frame {t} has {} joints, header declares {joints}",
                rec.id,
                frame.len()
            )));
        }
        for joint in frame {
            if joint.len() != channels {
                return Err(MmnError::Schema(format!(
                    "line {line}: sample {} frame {t} has {} coordinates per joint, header declares {channels}",
                    rec.id,
                    joint.len()
                )));
            }
            data.extend_from_slice(&joint[..2]);
        }
    }
    let frames = Frames::new(rec.frames.len(), joints, 2, data)?;
    SkeletonSequence::new(rec.id, rec.label, frames)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| MmnError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| MmnError::Parse { line: 1, msg: "empty file".into() })?
        .map_err(|e| MmnError::io(path, e))?;
    let header = parse_header(&header_line)?;
    let taxonomy = LabelTaxonomy::new(header.action_names, header.body_of_action, header.body_names)?;

    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|e| MmnError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                return Err(match non_finite_record_id(&line) {
                    Some(id) => MmnError::Data(format!("line {line_no}: sample {id}: non-finite coordinate")),
                    None => MmnError::Parse { line: line_no, msg: e.to_string() },
                })
            }
        };
        samples.push(record_to_sequence(rec, header.joints, header.channels, line_no)?);
    }
    let mut ds = Dataset::new(header.joints, 2, taxonomy, samples)?;
    ds.comment = header.comment;
    Ok(ds)
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    ds.validate()?;
    let file = File::create(path).map_err(|e| MmnError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = Header {
        version: FORMAT_VERSION,
        joints: ds.joints,
        channels: ds.channels,
        action_names: ds.taxonomy.action_names.clone(),
        body_of_action: ds.taxonomy.body_of_action.clone(),
        body_names: ds.taxonomy.body_names.clone(),
        comment: ds.comment.clone(),
    };
    let io = |e| MmnError::io(path, e);
    serde_json::to_writer(&mut w, &header).map_err(|e| MmnError::io(path, e.into()))?;
    w.write_all(b"\n").map_err(io)?;
    for s in &ds.samples {
        let f = &s.frames;
        let frames = (0..f.len)
            .map(|t| f.frame(t).chunks(f.channels).map(|p| p.to_vec()).collect())
            .collect();
        let rec = Record { id: s.id.clone(), label: s.label, frames };
        serde_json::to_writer(&mut w, &rec).map_err(|e| MmnError::io(path, e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const HEADER: &str =
        r#"{"version":1,"V":2,"C_in":2,"action_names":["a","b"],"body_of_action":[0,0],"body_names":["head"]}"#;

    fn write(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn loads_valid_records() {
        let f = write(&[
            HEADER,
            r#"{"id":"x1","label":0,"frames":[[[0,1],[2,3]]]}"#,
            r#"{"id":"x2","label":1,"frames":[[[0,1],[2,3]],[[4,5],[6,7]]]}"#,
        ]);
        let ds = load_dataset(f.path()).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.samples[0].id, "x1");
        assert_eq!(ds.samples[1].raw_len(), 2);
        assert_eq!(ds.samples[1].frames.data, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn nan_rejected_with_sample_id() {
        let f = write(&[HEADER, r#"{"id":"bad_one","label":0,"frames":[[[NaN,1],[2,3]]]}"#]);
        let msg = load_dataset(f.path()).unwrap_err().to_string();
        assert!(msg.contains("bad_one"), "{msg}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write(&[HEADER, r#"{"id":"a","label":0,"frames":[[[0,1],[2,3]]]}"#, "{not json"]);
        match load_dataset(f.path()).unwrap_err() {
            MmnError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn inconsistent_joint_count_is_schema_error() {
        let f = write(&[HEADER, r#"{"id":"a","label":0,"frames":[[[0,1]]]}"#]);
        assert!(matches!(load_dataset(f.path()).unwrap_err(), MmnError::Schema(_)));
    }

    #[test]
    fn confidence_channel_dropped() {
        let header = HEADER.replace(r#""C_in":2"#, r#""C_in":3"#);
        let f = write(&[&header, r#"{"id":"a","label":0,"frames":[[[0,1,0.9],[2,3,0.8]]]}"#]);
        let ds = load_dataset(f.path()).unwrap();
        assert_eq!(ds.channels, 2);
        assert_eq!(ds.samples[0].frames.data, vec![0.0, 1.0, 2.0, 3.0]);
    }
}
