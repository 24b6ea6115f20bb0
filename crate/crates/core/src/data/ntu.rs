//! Reader for NTU RGB+D style `.skeleton` text files.
//!
//! Layout: a frame-count line, then for each frame a body-count line followed
//! by, per body, one info line, a joint-count line and one line per joint
//! whose first three fields are `x y z`. Remaining joint fields are ignored.
//! Only the first body of each frame is kept.

use super::pose::{PoseSequence, DEFAULT_FRAME_RATE, DIMS_PER_JOINT};
use crate::error::{Error, Result};

pub const NTU_JOINTS: usize = 25;

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    /// Next non-blank line with its 1-based number.
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            self.last = i + 1;
            if !line.trim().is_empty() {
                return Ok((i + 1, line.trim()));
            }
        }
        Err(Error::parse(
            self.last + 1,
            format!("unexpected end of file, expected {what}"),
        ))
    }

    fn count(&mut self, what: &str) -> Result<(usize, usize)> {
        let (line, text) = self.next(what)?;
        let value = text
            .split_whitespace()
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .ok_or_else(|| Error::parse(line, format!("expected {what}, found {text:?}")))?;
        Ok((line, value))
    }
}

/// Parses one skeleton file; `joints` is the per-body joint count every body must declare.
pub fn parse_skeleton_file(bytes: &[u8], joints: usize) -> Result<PoseSequence> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::parse(0, format!("not UTF-8: {e}")))?;
    let mut lines = Lines::new(text);
    let (_, frame_count) = lines.count("frame count")?;
    let n = joints * DIMS_PER_JOINT;

    let mut data = Vec::with_capacity(frame_count * n);
    let mut last_valid: Option<Vec<f64>> = None;
    let mut leading_gap = 0usize;

    for _ in 0..frame_count {
        let (_, bodies) = lines.count("body count")?;
        let mut first_body: Option<Vec<f64>> = None;
        for _ in 0..bodies {
            lines.next("body info line")?;
            let (line, declared) = lines.count("joint count")?;
            if declared != joints {
                return Err(Error::parse(
                    line,
                    format!("body declares {declared} joints, expected {joints}"),
                ));
            }
            let mut pose = Vec::with_capacity(n);
            for _ in 0..declared {
                let (line, text) = lines.next("joint line")?;
                let mut fields = text.split_whitespace();
                for axis in ["x", "y", "z"] {
                    let v = fields
                        .next()
                        .and_then(|s| s.parse::<f64>().ok())
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| {
                            Error::parse(line, format!("joint line missing {axis} coordinate"))
                        })?;
                    pose.push(v);
                }
            }
            if first_body.is_none() {
                first_body = Some(pose);
            }
        }
        match (first_body, &last_valid) {
            (Some(pose), _) => {
                if last_valid.is_none() {
                    data.extend(std::iter::repeat_n(0.0, leading_gap * n));
                }
                data.extend_from_slice(&pose);
                last_valid = Some(pose);
            }
            (None, Some(prev)) => data.extend_from_slice(prev),
            (None, None) => leading_gap += 1,
        }
    }
    if last_valid.is_none() {
        data.extend(std::iter::repeat_n(0.0, leading_gap * n));
    }
    PoseSequence::new(joints, DEFAULT_FRAME_RATE, data)
}

/// Subject and zero-based action label encoded in an NTU file stem such as
/// `S001C002P003R002A013`.
pub fn ntu_file_tags(stem: &str) -> Option<(String, usize)> {
    let field = |tag: char| -> Option<usize> {
        let start = stem.find(tag)? + 1;
        let digits: String = stem[start..].chars().take_while(char::is_ascii_digit).collect();
        digits.parse().ok()
    };
    let performer = field('P')?;
    let action = field('A')?;
    Some((format!("P{performer:03}"), action.checked_sub(1)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn body(lines: &mut Vec<String>, joints: usize, coord: impl Fn(usize) -> [f64; 3]) {
        lines.push("72057594037931101 0 1 1 1 1 0 0.02 0.1 2".into());
        lines.push(joints.to_string());
        for j in 0..joints {
            let [x, y, z] = coord(j);
            lines.push(format!("{x} {y} {z} 276.3 185.4 970.1 541.2 -0.23 0.06 0.97 -0.01 2"));
        }
    }

    #[test]
    fn all_zero_single_frame() {
        let mut l = vec!["1".to_string(), "1".to_string()];
        body(&mut l, 25, |_| [0.0; 3]);
        let seq = parse_skeleton_file(l.join("\n").as_bytes(), 25).unwrap();
        assert_eq!(seq.frames(), 1);
        assert_eq!(seq.dim(), 75);
        assert!(seq.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_frame_holds_last_pose() {
        let mut l = vec!["2".to_string(), "1".to_string()];
        body(&mut l, 25, |j| [j as f64, 1.0, 2.0]);
        l.push("0".into());
        let seq = parse_skeleton_file(l.join("\n").as_bytes(), 25).unwrap();
        assert_eq!(seq.frames(), 2);
        assert_eq!(seq.frame(0), seq.frame(1));
    }

    #[test]
    fn leading_empty_frames_are_zero() {
        let mut l = vec!["3".to_string(), "0".to_string(), "1".to_string()];
        body(&mut l, 2, |_| [1.0, 2.0, 3.0]);
        l.push("0".into());
        let seq = parse_skeleton_file(l.join("\n").as_bytes(), 2).unwrap();
        assert_eq!(seq.frame(0), &[0.0; 6]);
        assert_eq!(seq.frame(1), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        assert_eq!(seq.frame(2), seq.frame(1));
    }

    #[test]
    fn second_body_is_ignored() {
        let mut l = vec!["1".to_string(), "2".to_string()];
        body(&mut l, 2, |_| [1.0, 1.0, 1.0]);
        body(&mut l, 2, |_| [9.0, 9.0, 9.0]);
        let seq = parse_skeleton_file(l.join("\n").as_bytes(), 2).unwrap();
        assert_eq!(seq.frame(0), &[1.0; 6]);
    }

    #[test]
    fn truncated_frame_reports_line() {
        let mut l = vec!["1".to_string(), "1".to_string()];
        body(&mut l, 25, |_| [0.0; 3]);
        l.truncate(l.len() - 5);
        let err = parse_skeleton_file(l.join("\n").as_bytes(), 25).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, l.len() + 1),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn joint_count_mismatch_is_error() {
        let mut l = vec!["1".to_string(), "1".to_string()];
        body(&mut l, 20, |_| [0.0; 3]);
        let err = parse_skeleton_file(l.join("\n").as_bytes(), 25).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 4, .. }), "{err}");
    }

    #[test]
    fn malformed_header() {
        let err = parse_skeleton_file(b"frames\n", 25).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn file_tags() {
        assert_eq!(
            ntu_file_tags("S001C002P003R002A013"),
            Some(("P003".to_string(), 12))
        );
        assert_eq!(ntu_file_tags("walk_01"), None);
    }
}
