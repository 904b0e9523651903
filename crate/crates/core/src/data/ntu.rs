//! Adapter for the NTU RGB+D `.skeleton` text layout.
//!
//! Layout: a frame-count line; per frame a body-count line; per body one
//! metadata line, a joint-count line (25), then 25 joint lines whose first
//! three whitespace-separated floats are x, y, z. Frames with more bodies
//! than `max_persons` keep the bodies with the highest motion energy (sum of
//! squared frame-to-frame coordinate deltas).

use std::path::Path;

use crate::error::{Error, Result};

use super::SkeletonSequence;

pub const NTU_JOINTS: usize = 25;

struct LineReader<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> LineReader<'a> {
    fn new(text: &'a str) -> Self {
        Self { text, pos: 0 }
    }

    /// Next line with the byte offset where it started.
    fn next_line(&mut self) -> Option<(usize, &'a str)> {
        if self.pos >= self.text.len() {
            return None;
        }
        let start = self.pos;
        let rest = &self.text[start..];
        let (line, advance) = match rest.find('\n') {
            Some(i) => (&rest[..i], i + 1),
            None => (rest, rest.len()),
        };
        self.pos = start + advance;
        Some((start, line.trim_end_matches('\r')))
    }

    fn expect_line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let at = self.pos;
        self.next_line()
            .ok_or_else(|| Error::data(format!("truncated file at byte offset {at}: expected {what}")))
    }
}

fn parse_count(line: &str, offset: usize, what: &str) -> Result<usize> {
    line.split_whitespace()
        .next()
        .and_then(|tok| tok.parse().ok())
        .ok_or_else(|| Error::data(format!("byte offset {offset}: cannot parse {what} from {line:?}")))
}

/// Parse one `.skeleton` file into a sequence with up to `max_persons` bodies.
/// The label is not stored in the file; callers supply it (NTU encodes it in
/// the filename).
pub fn parse_ntu_skeleton(path: &Path, label: usize, max_persons: usize) -> Result<SkeletonSequence> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_ntu_text(&text, &id, label, max_persons)
}

pub fn parse_ntu_text(
    text: &str,
    id: &str,
    label: usize,
    max_persons: usize,
) -> Result<SkeletonSequence> {
    let mut rd = LineReader::new(text);
    let (off, line) = rd.expect_line("frame count")?;
    let frames = parse_count(line, off, "frame count")?;
    if frames == 0 {
        return Err(Error::data(format!("sample {id:?}: empty sequence")));
    }

    // bodies indexed by their slot order within each frame
    let mut bodies: Vec<Vec<Option<[[f64; 3]; NTU_JOINTS]>>> = Vec::new();
    for f in 0..frames {
        let (off, line) = rd.expect_line("body count")?;
        let body_count = parse_count(line, off, "body count")?;
        for b in 0..body_count {
            rd.expect_line("body metadata")?;
            let (off, line) = rd.expect_line("joint count")?;
            let joints = parse_count(line, off, "joint count")?;
            if joints != NTU_JOINTS {
                return Err(Error::data(format!(
                    "byte offset {off}: joint count {joints}, expected {NTU_JOINTS}"
                )));
            }
            let mut body = [[0.0; 3]; NTU_JOINTS];
            for joint in body.iter_mut() {
                let (off, line) = rd.expect_line("joint coordinates")?;
                let mut it = line.split_whitespace();
                for d in joint.iter_mut() {
                    *d = it
                        .next()
                        .and_then(|tok| tok.parse().ok())
                        .ok_or_else(|| {
                            Error::data(format!("byte offset {off}: cannot parse joint floats from {line:?}"))
                        })?;
                }
            }
            if b >= bodies.len() {
                bodies.push(vec![None; frames]);
            }
            bodies[b][f] = Some(body);
        }
    }

    // motion energy per body slot: sum of squared consecutive-frame deltas
    let energy: Vec<f64> = bodies
        .iter()
        .map(|track| {
            let mut e = 0.0;
            for w in track.windows(2) {
                if let (Some(a), Some(b)) = (&w[0], &w[1]) {
                    for j in 0..NTU_JOINTS {
                        for d in 0..3 {
                            let delta = b[j][d] - a[j][d];
                            e += delta * delta;
                        }
                    }
                }
            }
            e
        })
        .collect();

    let mut order: Vec<usize> = (0..bodies.len()).collect();
    order.sort_by(|&a, &b| energy[b].partial_cmp(&energy[a]).unwrap().then(a.cmp(&b)));
    let mut keep: Vec<usize> = order.into_iter().take(max_persons).collect();
    keep.sort_unstable();

    let persons = keep.len().max(1);
    let mut coords = vec![0.0; persons * frames * NTU_JOINTS * 3];
    let mut valid = vec![false; persons * frames];
    for (slot, &b) in keep.iter().enumerate() {
        for f in 0..frames {
            if let Some(body) = &bodies[b][f] {
                valid[slot * frames + f] = true;
                for (j, joint) in body.iter().enumerate() {
                    let o = ((slot * frames + f) * NTU_JOINTS + j) * 3;
                    coords[o..o + 3].copy_from_slice(joint);
                }
            }
        }
    }
    SkeletonSequence::new(id, label, persons, frames, NTU_JOINTS, coords, Some(valid))
}
