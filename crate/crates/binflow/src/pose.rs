//! Pose tracks: timestamped position + unit-quaternion series.

use crate::{Error, Result};

/// Time series of 7-D poses for one entity (transmitter or receiver).
/// Quaternions are (w, x, y, z) and must be unit within 1e-3.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseTrack {
    times: Vec<f64>,
    positions: Vec<[f32; 3]>,
    quats: Vec<[f32; 4]>,
}

impl PoseTrack {
    pub fn new(times: Vec<f64>, positions: Vec<[f32; 3]>, quats: Vec<[f32; 4]>) -> Result<Self> {
        if times.is_empty() || times.len() != positions.len() || times.len() != quats.len() {
            return Err(Error::input(format!(
                "pose track needs equal, nonzero lengths (times {}, positions {}, quats {})",
                times.len(),
                positions.len(),
                quats.len()
            )));
        }
        for w in times.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::input(format!(
                    "pose timestamps must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        for (i, q) in quats.iter().enumerate() {
            let norm = (q.iter().map(|&v| (v as f64).powi(2)).sum::<f64>()).sqrt();
            if (norm - 1.0).abs() > 1e-3 {
                return Err(Error::input(format!(
                    "quaternion {i} has norm {norm:.6}, expected unit"
                )));
            }
        }
        Ok(PoseTrack { times, positions, quats })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn position(&self, i: usize) -> [f32; 3] {
        self.positions[i]
    }

    pub fn quat(&self, i: usize) -> [f32; 4] {
        self.quats[i]
    }

    /// Median sampling period; used for coverage slack.
    pub fn sample_period(&self) -> f64 {
        if self.times.len() < 2 {
            return 0.0;
        }
        (self.times[self.times.len() - 1] - self.times[0]) / (self.times.len() - 1) as f64
    }

    /// The track covers `[0, duration)` when its last pose plus one sampling
    /// period reaches the end of the clip.
    pub fn covers(&self, duration: f64) -> bool {
        self.times[self.times.len() - 1] + self.sample_period() + 1e-9 >= duration
    }

    /// Zero-order hold: the most recent pose at or before `t`. Before the
    /// first timestamp the first pose is held (there is no earlier data).
    pub fn sample_at(&self, t: f64) -> ([f32; 3], [f32; 4]) {
        let i = match self.times.partition_point(|&x| x <= t) {
            0 => 0,
            n => n - 1,
        };
        (self.positions[i], self.quats[i])
    }

    /// 7-D pose (position then quaternion) per spectrogram frame, using the
    /// pose at each frame's end time. Frame `i` here is absolute index
    /// `start_frame + i`; frame `a` ends at `(a + 1) * hop / sample_rate`.
    pub fn frame_features(
        &self,
        frames: usize,
        start_frame: usize,
        hop: usize,
        sample_rate: u32,
    ) -> Vec<[f32; 7]> {
        (0..frames)
            .map(|i| {
                let a = start_frame + i;
                let t_end = ((a + 1) * hop) as f64 / sample_rate as f64;
                let (p, q) = self.sample_at(t_end);
                [p[0], p[1], p[2], q[0], q[1], q[2], q[3]]
            })
            .collect()
    }
}

/// Rotate vector `v` by unit quaternion `q` = (w, x, y, z).
pub fn rotate(q: [f32; 4], v: [f32; 3]) -> [f32; 3] {
    let (w, x, y, z) = (q[0] as f64, q[1] as f64, q[2] as f64, q[3] as f64);
    let (vx, vy, vz) = (v[0] as f64, v[1] as f64, v[2] as f64);
    // t = 2 q_vec × v; v' = v + w t + q_vec × t
    let tx = 2.0 * (y * vz - z * vy);
    let ty = 2.0 * (z * vx - x * vz);
    let tz = 2.0 * (x * vy - y * vx);
    [
        (vx + w * tx + (y * tz - z * ty)) as f32,
        (vy + w * ty + (z * tx - x * tz)) as f32,
        (vz + w * tz + (x * ty - y * tx)) as f32,
    ]
}

/// Conjugate (inverse for unit quaternions).
pub fn conjugate(q: [f32; 4]) -> [f32; 4] {
    [q[0], -q[1], -q[2], -q[3]]
}

/// Quaternion for a rotation of `angle` radians about the z (up) axis.
pub fn yaw_quat(angle: f32) -> [f32; 4] {
    let h = angle * 0.5;
    [h.cos(), 0.0, 0.0, h.sin()]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track() -> PoseTrack {
        PoseTrack::new(
            vec![0.0, 0.1, 0.2],
            vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            vec![[1.0, 0.0, 0.0, 0.0]; 3],
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_quaternions_and_timestamps() {
        let err = PoseTrack::new(vec![0.0], vec![[0.0; 3]], vec![[0.9, 0.0, 0.0, 0.0]]);
        assert!(matches!(err, Err(Error::Input(_))));
        let err = PoseTrack::new(
            vec![0.0, 0.0],
            vec![[0.0; 3]; 2],
            vec![[1.0, 0.0, 0.0, 0.0]; 2],
        );
        assert!(matches!(err, Err(Error::Input(_))));
    }

    #[test]
    fn zero_order_hold_is_causal() {
        let t = track();
        assert_eq!(t.sample_at(0.05).0, [0.0; 3]);
        assert_eq!(t.sample_at(0.1).0, [1.0, 0.0, 0.0]);
        assert_eq!(t.sample_at(0.19).0, [1.0, 0.0, 0.0]);
        assert_eq!(t.sample_at(5.0).0, [2.0, 0.0, 0.0]);
        // before the first pose: hold the first
        assert_eq!(t.sample_at(-1.0).0, [0.0; 3]);
    }

    #[test]
    fn yaw_rotation_turns_forward_vector() {
        let q = yaw_quat(std::f32::consts::FRAC_PI_2);
        let v = rotate(q, [1.0, 0.0, 0.0]);
        assert!((v[0]).abs() < 1e-6 && (v[1] - 1.0).abs() < 1e-6);
        let back = rotate(conjugate(q), v);
        assert!((back[0] - 1.0).abs() < 1e-6 && back[1].abs() < 1e-6);
    }

    #[test]
    fn coverage_allows_one_sample_period() {
        let t = track();
        assert!(t.covers(0.3));
        assert!(!t.covers(0.5));
    }
}
