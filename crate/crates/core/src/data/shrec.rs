//! Adapter for SHREC-style gesture files: one line per frame, 22 joints ×
//! 3 floats. Labels come from the surrounding directory layout, so callers
//! supply them.

use std::path::Path;

use crate::error::{Error, Result};

use super::SkeletonSequence;

pub const SHREC_JOINTS: usize = 22;

pub fn parse_shrec_file(path: &Path, id: &str, label: usize) -> Result<SkeletonSequence> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    parse_shrec_text(&text, id, label)
}

pub fn parse_shrec_text(text: &str, id: &str, label: usize) -> Result<SkeletonSequence> {
    let mut coords = Vec::new();
    let mut frames = 0;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|tok| tok.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::data(format!("line {}: bad float: {e}", lineno + 1)))?;
        if vals.len() != SHREC_JOINTS * 3 {
            return Err(Error::data(format!(
                "line {}: {} values, expected {}",
                lineno + 1,
                vals.len(),
                SHREC_JOINTS * 3
            )));
        }
        coords.extend(vals);
        frames += 1;
    }
    if frames == 0 {
        return Err(Error::data(format!("sample {id:?}: empty sequence")));
    }
    SkeletonSequence::new(id, label, 1, frames, SHREC_JOINTS, coords, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_frame_fixture() {
        let line: String = (0..66).map(|i| format!("{} ", i as f64 * 0.5)).collect();
        let text = format!("{line}\n{line}\n");
        let seq = parse_shrec_text(&text, "g1", 3).unwrap();
        assert_eq!(seq.frames(), 2);
        assert_eq!(seq.num_joints(), 22);
        assert_eq!(seq.get(0, 0, 1), [1.5, 2.0, 2.5]);
    }

    #[test]
    fn wrong_width_reports_line() {
        let err = parse_shrec_text("1 2 3\n", "g", 0).unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
    }
}
