use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Frames per second over a timed loop.
///
/// Interval convention: `n` timestamps bound `n - 1` processed frames, so
/// `fps = (n - 1) / (last - first)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThroughputRecord {
    pub frames_processed: u64,
    pub wall_seconds: f64,
    pub fps: f64,
}

impl ThroughputRecord {
    /// From per-frame durations, as recorded in a propagation result.
    pub fn from_durations(per_frame_seconds: &[f64]) -> Result<Self> {
        let mut stamps = Vec::with_capacity(per_frame_seconds.len() + 1);
        let mut t = 0.0;
        stamps.push(t);
        for d in per_frame_seconds {
            t += d;
            stamps.push(t);
        }
        measure_throughput(&stamps)
    }
}

pub fn measure_throughput(frame_timestamps: &[f64]) -> Result<ThroughputRecord> {
    if frame_timestamps.len() < 2 {
        return Err(Error::validation(
            "too_few_timestamps",
            "throughput needs at least two timestamps",
        ));
    }
    if let Some(i) = frame_timestamps.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::validation(
            "non_monotonic_timestamps",
            format!("timestamp {} does not increase over {}", i + 1, i),
        ));
    }
    let frames_processed = frame_timestamps.len() as u64 - 1;
    let wall_seconds = frame_timestamps[frame_timestamps.len() - 1] - frame_timestamps[0];
    Ok(ThroughputRecord {
        frames_processed,
        wall_seconds,
        fps: frames_processed as f64 / wall_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eleven_stamps_a_tenth_apart() {
        let stamps: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let r = measure_throughput(&stamps).unwrap();
        assert_eq!(r.frames_processed, 10);
        assert!((r.wall_seconds - 1.0).abs() < 1e-12);
        assert!((r.fps - 10.0).abs() < 1e-9);
    }

    #[test]
    fn two_stamps_one_second() {
        assert_eq!(measure_throughput(&[3.0, 4.0]).unwrap().fps, 1.0);
    }

    #[test]
    fn non_increasing_is_rejected() {
        assert_eq!(
            measure_throughput(&[0.0, 0.0]).unwrap_err().code(),
            "non_monotonic_timestamps"
        );
        assert!(measure_throughput(&[1.0]).is_err());
        assert!(measure_throughput(&[0.0, 2.0, 1.0]).is_err());
    }

    #[test]
    fn durations_convert_to_stamps() {
        let r = ThroughputRecord::from_durations(&[0.25; 8]).unwrap();
        assert_eq!(r.frames_processed, 8);
        assert!((r.fps - 4.0).abs() < 1e-9);
    }
}
