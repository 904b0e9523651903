//! Canonical on-disk dataset format.
//!
//! A dataset directory holds:
//! - `dataset.json` — `{"num_joints", "joint_names", "edges", "classes",
//!   "max_persons"}`
//! - `samples.jsonl` — one JSON object per line: `{"id", "label", "coords"}`
//!   where `coords` is nested persons × frames × joints × [x, y, z], plus an
//!   optional `"mask"` of persons × frames 0/1 flags (default all valid).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Dataset, SkeletonSequence, SkeletonTopology};

#[derive(Debug, Serialize, Deserialize)]
struct DatasetMeta {
    num_joints: usize,
    joint_names: Vec<String>,
    edges: Vec<(usize, usize)>,
    classes: Vec<String>,
    max_persons: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRecord {
    id: String,
    label: usize,
    coords: Vec<Vec<Vec<Vec<f64>>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mask: Option<Vec<Vec<u8>>>,
}

/// Load `dataset.json` + `samples.jsonl` from a directory, validating every
/// sample against the topology.
pub fn load_canonical(dir: &Path) -> Result<Dataset> {
    let meta_path = dir.join("dataset.json");
    let meta_text = std::fs::read_to_string(&meta_path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", meta_path.display())))?;
    let meta: DatasetMeta = serde_json::from_str(&meta_text)
        .map_err(|e| Error::data(format!("{}: {e}", meta_path.display())))?;
    let topology = SkeletonTopology {
        num_joints: meta.num_joints,
        joint_names: meta.joint_names,
        edges: meta.edges,
    };
    topology.validate()?;
    if meta.max_persons == 0 {
        return Err(Error::data("dataset.json: max_persons must be >= 1"));
    }

    let samples_path = dir.join("samples.jsonl");
    let text = std::fs::read_to_string(&samples_path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", samples_path.display())))?;
    let mut samples = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(line).map_err(|e| {
            Error::data(format!("{}:{}: malformed JSON: {e}", samples_path.display(), lineno + 1))
        })?;
        samples.push(record_to_sequence(rec, &topology, meta.classes.len(), meta.max_persons)?);
    }
    Ok(Dataset { topology, classes: meta.classes, max_persons: meta.max_persons, samples })
}

fn record_to_sequence(
    rec: SampleRecord,
    topo: &SkeletonTopology,
    num_classes: usize,
    max_persons: usize,
) -> Result<SkeletonSequence> {
    if rec.label >= num_classes {
        return Err(Error::data(format!(
            "sample {:?}: label {} out of range for {} classes",
            rec.id, rec.label, num_classes
        )));
    }
    let persons = rec.coords.len();
    if persons == 0 || persons > max_persons {
        return Err(Error::data(format!(
            "sample {:?}: {} persons outside 1..={max_persons}",
            rec.id, persons
        )));
    }
    let frames = rec.coords[0].len();
    let mut flat = Vec::with_capacity(persons * frames * topo.num_joints * 3);
    for (p, person) in rec.coords.iter().enumerate() {
        if person.len() != frames {
            return Err(Error::data(format!(
                "sample {:?}: person {p} has {} frames, expected {frames}",
                rec.id,
                person.len()
            )));
        }
        for (f, frame) in person.iter().enumerate() {
            if frame.len() != topo.num_joints {
                return Err(Error::data(format!(
                    "sample {:?}: person {p} frame {f} has {} joints, topology expects {}",
                    rec.id,
                    frame.len(),
                    topo.num_joints
                )));
            }
            for joint in frame {
                if joint.len() != 3 {
                    return Err(Error::data(format!(
                        "sample {:?}: joint with {} coordinates, expected 3",
                        rec.id,
                        joint.len()
                    )));
                }
                flat.extend_from_slice(joint);
            }
        }
    }
    let mask = match rec.mask {
        Some(m) => {
            let mut flat_mask = Vec::with_capacity(persons * frames);
            if m.len() != persons {
                return Err(Error::data(format!("sample {:?}: mask person count mismatch", rec.id)));
            }
            for row in &m {
                if row.len() != frames {
                    return Err(Error::data(format!("sample {:?}: mask frame count mismatch", rec.id)));
                }
                flat_mask.extend(row.iter().map(|&v| v != 0));
            }
            Some(flat_mask)
        }
        None => None,
    };
    SkeletonSequence::new(rec.id, rec.label, persons, frames, topo.num_joints, flat, mask)
}

/// Write a dataset directory in the canonical format.
pub fn save_canonical(ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let meta = DatasetMeta {
        num_joints: ds.topology.num_joints,
        joint_names: ds.topology.joint_names.clone(),
        edges: ds.topology.edges.clone(),
        classes: ds.classes.clone(),
        max_persons: ds.max_persons,
    };
    std::fs::write(dir.join("dataset.json"), serde_json::to_string_pretty(&meta)?)?;
    let mut lines = String::new();
    for s in &ds.samples {
        let mut coords = Vec::with_capacity(s.persons());
        for p in 0..s.persons() {
            let mut frames = Vec::with_capacity(s.frames());
            for f in 0..s.frames() {
                let mut joints = Vec::with_capacity(s.num_joints());
                for j in 0..s.num_joints() {
                    joints.push(s.get(p, f, j).to_vec());
                }
                frames.push(joints);
            }
            coords.push(frames);
        }
        let all_valid = s.mask().iter().all(|&v| v);
        let mask = if all_valid {
            None
        } else {
            Some(
                (0..s.persons())
                    .map(|p| (0..s.frames()).map(|f| u8::from(s.is_valid(p, f))).collect())
                    .collect(),
            )
        };
        let rec = SampleRecord { id: s.id.clone(), label: s.label, coords, mask };
        lines.push_str(&serde_json::to_string(&rec)?);
        lines.push('\n');
    }
    std::fs::write(dir.join("samples.jsonl"), lines)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_meta() -> &'static str {
        r#"{"num_joints": 2, "joint_names": ["a", "b"], "edges": [[0, 1]], "classes": ["c0"], "max_persons": 1}"#
    }

    fn write_dataset(dir: &Path, meta: &str, samples: &str) {
        std::fs::write(dir.join("dataset.json"), meta).unwrap();
        std::fs::write(dir.join("samples.jsonl"), samples).unwrap();
    }

    #[test]
    fn minimal_fixture_round_trips() {
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(
            tmp.path(),
            minimal_meta(),
            r#"{"id": "s0", "label": 0, "coords": [[[[0,0,0],[1,0,0]]]]}"#,
        );
        let ds = load_canonical(tmp.path()).unwrap();
        assert_eq!(ds.samples.len(), 1);
        let s = &ds.samples[0];
        assert_eq!(s.frames(), 1);
        assert_eq!(s.get(0, 0, 1), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_samples_file_is_empty_dataset() {
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(tmp.path(), minimal_meta(), "");
        let ds = load_canonical(tmp.path()).unwrap();
        assert!(ds.samples.is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(
            tmp.path(),
            minimal_meta(),
            "{\"id\": \"s0\", \"label\": 0, \"coords\": [[[[0,0,0],[1,0,0]]]]}\nnot json\n",
        );
        let err = load_canonical(tmp.path()).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }

    #[test]
    fn joint_count_mismatch_names_sample() {
        let tmp = tempfile::tempdir().unwrap();
        write_dataset(
            tmp.path(),
            minimal_meta(),
            r#"{"id": "weird", "label": 0, "coords": [[[[0,0,0]]]]}"#,
        );
        let err = load_canonical(tmp.path()).unwrap_err().to_string();
        assert!(err.contains("weird"), "{err}");
    }

    #[test]
    fn three_classes_two_samples_each() {
        let tmp = tempfile::tempdir().unwrap();
        let meta = r#"{"num_joints": 1, "joint_names": ["j"], "edges": [], "classes": ["a","b","c"], "max_persons": 1}"#;
        let mut lines = String::new();
        for c in 0..3 {
            for s in 0..2 {
                lines.push_str(&format!(
                    "{{\"id\": \"c{c}s{s}\", \"label\": {c}, \"coords\": [[[[{c}.0, {s}.0, 0]]]]}}\n"
                ));
            }
        }
        write_dataset(tmp.path(), meta, &lines);
        let ds = load_canonical(tmp.path()).unwrap();
        assert_eq!(ds.samples.len(), 6);
        let mut labels: Vec<usize> = ds.samples.iter().map(|s| s.label).collect();
        labels.sort_unstable();
        assert_eq!(labels, vec![0, 0, 1, 1, 2, 2]);
    }

    #[test]
    fn save_load_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let ds = super::super::synth::generate(&super::super::synth::SynthSpec {
            classes: 2,
            samples_per_class: 3,
            noise_sigma: 0.01,
            frames: 5,
            seed: 9,
        })
        .unwrap();
        save_canonical(&ds, tmp.path()).unwrap();
        let back = load_canonical(tmp.path()).unwrap();
        assert_eq!(back.samples.len(), ds.samples.len());
        assert_eq!(back.topology, ds.topology);
        for (a, b) in ds.samples.iter().zip(&back.samples) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.label, b.label);
            for (x, y) in a.coords().iter().zip(b.coords()) {
                assert_eq!(x.to_bits(), y.to_bits(), "coords must round-trip bit-exactly");
            }
        }
    }
}
