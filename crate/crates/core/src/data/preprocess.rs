use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pose::{PoseSequence, DIMS_PER_JOINT};
use crate::error::{Error, Result};

/// Root joint (spine base in the NTU layout).
pub const ROOT_JOINT: usize = 0;
/// Head joint in the NTU layout.
pub const HEAD_JOINT: usize = 3;

/// Highest raw rater score; 3 and 4 collapse into one class.
pub const MAX_RATER_SCORE: u8 = 4;
pub const SEVERITY_CLASSES: usize = 4;

/// Root-centers every frame, then rescales globally so the mean root-to-head
/// distance over frames with a non-zero distance is 1.
pub fn normalize(seq: &PoseSequence) -> Result<PoseSequence> {
    normalize_with(seq, ROOT_JOINT, HEAD_JOINT)
}

pub fn normalize_with(seq: &PoseSequence, root: usize, head: usize) -> Result<PoseSequence> {
    let joints = seq.joints();
    if root >= joints || head >= joints {
        return Err(Error::invalid(format!(
            "root {root} / head {head} outside {joints} joints"
        )));
    }
    let n = seq.dim();
    let mut data = seq.data().to_vec();
    let mut total = 0.0;
    let mut counted = 0usize;
    for frame in data.chunks_mut(n) {
        let r = [frame[root * 3], frame[root * 3 + 1], frame[root * 3 + 2]];
        for joint in frame.chunks_mut(DIMS_PER_JOINT) {
            for (v, o) in joint.iter_mut().zip(r) {
                *v -= o;
            }
        }
        let h = &frame[head * 3..head * 3 + 3];
        let dist = (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt();
        if dist > 0.0 {
            total += dist;
            counted += 1;
        }
    }
    if counted == 0 {
        return Err(Error::Degenerate(
            "root and head coincide in every frame".into(),
        ));
    }
    let scale = total / counted as f64;
    for v in &mut data {
        *v /= scale;
    }
    PoseSequence::new(joints, seq.frame_rate(), data)
}

/// Maximal full windows of `window` frames starting every `stride` frames.
/// A trailing remainder shorter than `window` is dropped.
pub fn window(seq: &PoseSequence, window: usize, stride: usize) -> Result<Vec<PoseSequence>> {
    if window < 2 {
        return Err(Error::invalid(format!("window {window} must be at least 2")));
    }
    if stride == 0 {
        return Err(Error::invalid("stride must be positive"));
    }
    let frames = seq.frames();
    let mut clips = Vec::new();
    let mut start = 0;
    while start + window <= frames {
        clips.push(seq.sub_sequence(start, start + window)?);
        start += stride;
    }
    Ok(clips)
}

/// Majority vote over rater scores with seeded uniform tie-breaking; scores
/// 3 and 4 both become class 3 after the vote.
///
/// Ties are resolved on the sorted set of tied modes, so the result does not
/// depend on the order of `scores`.
pub fn majority_label(scores: &[u8], seed: u64) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::invalid("no rater scores"));
    }
    let mut counts = [0usize; MAX_RATER_SCORE as usize + 1];
    for &s in scores {
        if s > MAX_RATER_SCORE {
            return Err(Error::invalid(format!("rater score {s} outside 0..=4")));
        }
        counts[s as usize] += 1;
    }
    let best = *counts.iter().max().expect("non-empty");
    let modes: Vec<usize> = (0..counts.len()).filter(|&s| counts[s] == best).collect();
    let winner = if modes.len() == 1 {
        modes[0]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        modes[rng.random_range(0..modes.len())]
    };
    Ok(winner.min(SEVERITY_CLASSES - 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_frame_skeleton() -> PoseSequence {
        // 4 joints; root at (1,1,1), head 2 units above the root.
        let f0 = vec![1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 2.5, 1.0, 1.0, 3.0, 1.0];
        let f1 = vec![2.0, 0.0, 0.0, 2.0, 1.0, 0.0, 3.0, 1.0, 0.0, 2.0, 2.0, 0.0];
        PoseSequence::from_frames(4, &[f0, f1]).unwrap()
    }

    #[test]
    fn distance_two_halves_centered_coordinates() {
        let out = normalize(&two_frame_skeleton()).unwrap();
        let expected = [
            0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.75, 0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, 0.5, 0.0, 0.5, 0.5, 0.0, 0.0, 1.0, 0.0,
        ];
        for (a, b) in out.data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn normalize_rejects_degenerate() {
        let seq = PoseSequence::new(4, 30.0, vec![0.5; 24]).unwrap();
        assert!(matches!(normalize(&seq), Err(Error::Degenerate(_))));
    }

    #[test]
    fn window_counts() {
        let seq = PoseSequence::new(1, 30.0, (0..250 * 3).map(f64::from).collect()).unwrap();
        let clips = window(&seq, 100, 100).unwrap();
        assert_eq!(clips.len(), 2);
        assert_eq!(clips[0].frame(0), seq.frame(0));
        assert_eq!(clips[1].frame(0), seq.frame(100));
        assert_eq!(clips[1].frame(99), seq.frame(199));

        let short = seq.sub_sequence(0, 99).unwrap();
        assert!(window(&short, 100, 100).unwrap().is_empty());
        let exact = seq.sub_sequence(0, 100).unwrap();
        assert_eq!(window(&exact, 100, 100).unwrap().len(), 1);
        assert!(window(&seq, 1, 1).is_err());
    }

    #[test]
    fn overlapping_stride() {
        let seq = PoseSequence::new(1, 30.0, vec![0.0; 10 * 3]).unwrap();
        assert_eq!(window(&seq, 4, 2).unwrap().len(), 4);
    }

    #[test]
    fn strict_majority() {
        assert_eq!(majority_label(&[2, 2, 1], 0).unwrap(), 2);
    }

    #[test]
    fn severe_scores_merge() {
        assert_eq!(majority_label(&[4, 4, 4], 0).unwrap(), 3);
        assert_eq!(majority_label(&[3, 4], 11).unwrap(), 3);
    }

    #[test]
    fn empty_scores_error() {
        assert!(majority_label(&[], 0).is_err());
        assert!(majority_label(&[5], 0).is_err());
    }

    #[test]
    fn tie_break_is_fair_and_deterministic() {
        let first = majority_label(&[0, 1], 7).unwrap();
        assert_eq!(first, majority_label(&[0, 1], 7).unwrap());
        assert!(first <= 1);
        let ones = (0..10_000u64)
            .filter(|&s| majority_label(&[0, 1], s).unwrap() == 1)
            .count();
        let share = ones as f64 / 10_000.0;
        assert!((share - 0.5).abs() <= 0.02, "share {share}");
    }

    #[test]
    fn tie_break_is_order_independent() {
        for seed in 0..50 {
            assert_eq!(
                majority_label(&[2, 0, 0, 2, 1], seed).unwrap(),
                majority_label(&[0, 2, 1, 2, 0], seed).unwrap()
            );
        }
    }
}
