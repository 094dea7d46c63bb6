//! JSON Lines clip datasets: one record per frame.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene_graph::{BevCalibration, FrameObjects, ObjectAnnotation, Vocabulary};

const FEET_PER_METER: f64 = 1.0 / 0.3048;

/// Object as it appears on disk. Exactly one coordinate pair is used:
/// feet, meters (converted), or pixels (projected with a calibration).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordObject {
    pub id: String,
    pub class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_ft: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_ft: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_px: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_px: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub clip_id: String,
    pub frame_index: u64,
    pub label: u8,
    pub objects: Vec<RecordObject>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub id: String,
    pub label: u8,
    pub frames: Vec<FrameObjects>,
}

impl Clip {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub clips: Vec<Clip>,
}

impl Dataset {
    pub fn labels(&self) -> Vec<u8> {
        self.clips.iter().map(|c| c.label).collect()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.clips.iter().filter(|c| c.label == 1).count();
        (self.clips.len() - pos, pos)
    }

    pub fn subset(&self, ids: &[String]) -> Dataset {
        let index: HashMap<&str, &Clip> = self.clips.iter().map(|c| (c.id.as_str(), c)).collect();
        Dataset {
            clips: ids.iter().filter_map(|id| index.get(id.as_str()).map(|c| (*c).clone())).collect(),
        }
    }
}

fn resolve(o: &RecordObject, calib: Option<&BevCalibration>) -> Result<(f64, f64)> {
    match (o.x_ft, o.y_ft, o.x_m, o.y_m, o.x_px, o.y_px) {
        (Some(x), Some(y), None, None, _, _) => Ok((x, y)),
        (None, None, Some(x), Some(y), _, _) => Ok((x * FEET_PER_METER, y * FEET_PER_METER)),
        (None, None, None, None, Some(u), Some(v)) => match calib {
            Some(c) => c.project(u, v),
            None => Err(Error::Schema(format!(
                "object {} has pixel coordinates but no calibration was supplied",
                o.id
            ))),
        },
        _ => Err(Error::Schema(format!(
            "object {} needs exactly one of x_ft/y_ft, x_m/y_m or x_px/y_px",
            o.id
        ))),
    }
}

/// Converts parsed records into a dataset, enforcing per-clip ordering and
/// label consistency. Objects whose pixel position projects onto the
/// horizon are dropped.
pub fn assemble(records: Vec<FrameRecord>, calib: Option<&BevCalibration>) -> Result<Dataset> {
    let mut order: Vec<String> = Vec::new();
    let mut clips: HashMap<String, Clip> = HashMap::new();
    for (line, rec) in records.into_iter().enumerate() {
        if rec.label > 1 {
            return Err(Error::Schema(format!("record {}: label must be 0 or 1", line + 1)));
        }
        let mut objects = Vec::with_capacity(rec.objects.len());
        for o in &rec.objects {
            let (x, y) = match resolve(o, calib) {
                Ok(p) => p,
                Err(Error::Projection(_)) => continue,
                Err(e) => return Err(e),
            };
            objects.push(ObjectAnnotation {
                id: o.id.clone(),
                class: o.class.clone(),
                x,
                y,
            });
        }
        let clip = clips.entry(rec.clip_id.clone()).or_insert_with(|| {
            order.push(rec.clip_id.clone());
            Clip {
                id: rec.clip_id.clone(),
                label: rec.label,
                frames: Vec::new(),
            }
        });
        if clip.label != rec.label {
            return Err(Error::Schema(format!("clip {} has mixed frame labels", rec.clip_id)));
        }
        if let Some(prev) = clip.frames.last() {
            if rec.frame_index <= prev.frame_index {
                return Err(Error::Schema(format!(
                    "clip {}: frame index {} does not follow {}",
                    rec.clip_id, rec.frame_index, prev.frame_index
                )));
            }
        }
        clip.frames.push(FrameObjects {
            clip_id: rec.clip_id,
            frame_index: rec.frame_index,
            objects,
        });
    }
    Ok(Dataset {
        clips: order.into_iter().map(|id| clips.remove(&id).expect("clip present")).collect(),
    })
}

pub fn read_records(path: &Path) -> Result<Vec<FrameRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Schema(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

pub fn load_jsonl(path: &Path, calib: Option<&BevCalibration>) -> Result<Dataset> {
    assemble(read_records(path)?, calib)
}

pub fn to_records(dataset: &Dataset) -> Vec<FrameRecord> {
    dataset
        .clips
        .iter()
        .flat_map(|clip| {
            clip.frames.iter().map(move |f| FrameRecord {
                clip_id: clip.id.clone(),
                frame_index: f.frame_index,
                label: clip.label,
                objects: f
                    .objects
                    .iter()
                    .map(|o| RecordObject {
                        id: o.id.clone(),
                        class: o.class.clone(),
                        x_ft: Some(o.x),
                        y_ft: Some(o.y),
                        ..RecordObject::default()
                    })
                    .collect(),
            })
        })
        .collect()
}

pub fn write_jsonl(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for rec in to_records(dataset) {
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Summary statistics of a dataset that passed validation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub clips: usize,
    pub frames: usize,
    pub collision_clips: usize,
    pub no_collision_clips: usize,
    /// No-collision : collision ratio (infinite when there are no collisions).
    pub class_ratio: f64,
    pub min_clip_len: usize,
    pub max_clip_len: usize,
    pub mean_clip_len: f64,
}

/// Checks schema, frame ordering, per-clip label consistency and class
/// vocabulary. Every violation is reported, not just the first.
pub fn validate_dataset(path: &Path, vocab: &Vocabulary) -> Result<ValidationReport> {
    let reader = BufReader::new(File::open(path)?);
    let mut problems = Vec::new();
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<FrameRecord>(&line) {
            Ok(r) => records.push((i + 1, r)),
            Err(e) => problems.push(format!("line {}: malformed record: {e}", i + 1)),
        }
    }

    let mut last: HashMap<&str, (u64, u8)> = HashMap::new();
    let mut mixed: Vec<&str> = Vec::new();
    for (line, r) in &records {
        if r.label > 1 {
            problems.push(format!("line {line}: label {} is not 0 or 1", r.label));
        }
        for o in &r.objects {
            if !vocab.contains(&o.class) {
                problems.push(format!("line {line}: unknown class {:?} (object {})", o.class, o.id));
            }
            if resolve(o, None).is_err() && (o.x_px.is_none() || o.y_px.is_none()) {
                problems.push(format!("line {line}: object {} lacks a coordinate pair", o.id));
            }
        }
        if let Some(&(prev, label)) = last.get(r.clip_id.as_str()) {
            if r.frame_index <= prev {
                problems.push(format!(
                    "line {line}: clip {} frame index {} does not follow {prev}",
                    r.clip_id, r.frame_index
                ));
            }
            if label != r.label && !mixed.contains(&r.clip_id.as_str()) {
                problems.push(format!("clip {} has mixed frame labels", r.clip_id));
                mixed.push(&r.clip_id);
            }
        }
        let first_label = last.get(r.clip_id.as_str()).map_or(r.label, |&(_, l)| l);
        last.insert(&r.clip_id, (r.frame_index, first_label));
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }

    let mut lengths: HashMap<&str, (usize, u8)> = HashMap::new();
    for (_, r) in &records {
        lengths.entry(&r.clip_id).or_insert((0, r.label)).0 += 1;
    }
    let collision = lengths.values().filter(|(_, l)| *l == 1).count();
    let clips = lengths.len();
    let frames = records.len();
    Ok(ValidationReport {
        clips,
        frames,
        collision_clips: collision,
        no_collision_clips: clips - collision,
        class_ratio: (clips - collision) as f64 / collision as f64,
        min_clip_len: lengths.values().map(|v| v.0).min().unwrap_or(0),
        max_clip_len: lengths.values().map(|v| v.0).max().unwrap_or(0),
        mean_clip_len: if clips == 0 { 0.0 } else { frames as f64 / clips as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(clip: &str, idx: u64, label: u8, class: &str) -> String {
        format!(
            r#"{{"clip_id":"{clip}","frame_index":{idx},"label":{label},"objects":[{{"id":"a","class":"{class}","x_ft":1.0,"y_ft":9.5}}]}}"#
        )
    }

    fn write(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn valid_file_passes_and_reports_stats() {
        let f = write(&[
            line("a", 0, 1, "car"),
            line("a", 1, 1, "car"),
            line("b", 0, 0, "truck"),
        ]);
        let report = validate_dataset(f.path(), &Vocabulary::default()).unwrap();
        assert_eq!(report.clips, 2);
        assert_eq!(report.frames, 3);
        assert_eq!(report.collision_clips, 1);
        assert_eq!(report.class_ratio, 1.0);
        let ds = load_jsonl(f.path(), None).unwrap();
        assert_eq!(ds.clips.len(), 2);
        assert_eq!(ds.clips[0].frames[1].objects[0].y, 9.5);
    }

    #[test]
    fn unknown_class_named_in_failure() {
        let f = write(&[line("a", 0, 1, "zeppelin")]);
        let err = validate_dataset(f.path(), &Vocabulary::default()).unwrap_err();
        assert!(err.to_string().contains("zeppelin"));
    }

    #[test]
    fn mixed_labels_cite_clip() {
        let f = write(&[line("clip-7", 0, 1, "car"), line("clip-7", 1, 0, "car")]);
        let err = validate_dataset(f.path(), &Vocabulary::default()).unwrap_err();
        assert!(matches!(&err, Error::Validation(v) if v.iter().any(|m| m.contains("clip-7") && m.contains("mixed"))));
        assert!(load_jsonl(f.path(), None).is_err());
    }

    #[test]
    fn non_monotone_frames_rejected() {
        let f = write(&[line("a", 3, 1, "car"), line("a", 3, 1, "car")]);
        assert!(validate_dataset(f.path(), &Vocabulary::default()).is_err());
        assert!(load_jsonl(f.path(), None).is_err());
    }

    #[test]
    fn meters_and_pixels_are_converted() {
        let rec = r#"{"clip_id":"m","frame_index":0,"label":0,"objects":[{"id":"a","class":"car","x_m":3.048,"y_m":0.0},{"id":"b","class":"car","x_px":2.0,"y_px":4.0}]}"#;
        let f = write(&[rec.to_string()]);
        assert!(load_jsonl(f.path(), None).is_err());
        let calib = BevCalibration::new([2.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let ds = load_jsonl(f.path(), Some(&calib)).unwrap();
        let objs = &ds.clips[0].frames[0].objects;
        assert!((objs[0].x - 10.0).abs() < 1e-12);
        assert_eq!((objs[1].x, objs[1].y), (4.0, 8.0));
    }

    #[test]
    fn write_then_load_preserves_dataset() {
        let f = write(&[line("a", 0, 1, "car"), line("a", 2, 1, "car"), line("b", 5, 0, "truck")]);
        let ds = load_jsonl(f.path(), None).unwrap();
        let out = tempfile::NamedTempFile::new().unwrap();
        write_jsonl(&ds, out.path()).unwrap();
        assert_eq!(load_jsonl(out.path(), None).unwrap(), ds);
    }
}
