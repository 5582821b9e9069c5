//! Condition encoders: random Gaussian Fourier embeddings of the solver time
//! step and the transmitter/receiver pose streams.
//!
//! The Fourier matrices are sampled once at model init and frozen; the MLPs
//! that follow them live on the tape and are trained with the rest of the
//! network.

use crate::numkern::Tensor4;
use crate::pose::PoseTrack;
use crate::{Error, Result};

/// [cos(2*pi*B*v), sin(2*pi*B*v)] for a low-dimensional `v`.
/// `fourier` has shape (1, 1, m, dim(v)); the result has 2m entries
/// (all cosines first, then all sines).
pub fn rgfe_encode(v: &[f32], fourier: &Tensor4) -> Result<Vec<f32>> {
    let [_, _, m, d] = fourier.shape();
    if v.len() != d {
        return Err(Error::config(format!(
            "rgfe input dim {} != fourier matrix dim {d}",
            v.len()
        )));
    }
    let mut out = vec![0.0f32; 2 * m];
    for r in 0..m {
        let mut acc = 0.0f32;
        for (c, &x) in v.iter().enumerate() {
            acc += fourier.at(0, 0, r, c) * x;
        }
        let ph = std::f32::consts::TAU * acc;
        out[r] = ph.cos();
        out[m + r] = ph.sin();
    }
    Ok(out)
}

/// Encode one scalar time step per batch element into (b, 2m, 1, 1).
pub fn encode_time(t: &[f32], fourier: &Tensor4) -> Result<Tensor4> {
    let m = fourier.shape()[2];
    let mut out = Tensor4::zeros([t.len(), 2 * m, 1, 1]);
    for (bi, &tv) in t.iter().enumerate() {
        let e = rgfe_encode(&[tv], fourier)?;
        for (c, &v) in e.iter().enumerate() {
            *out.at_mut(bi, c, 0, 0) = v;
        }
    }
    Ok(out)
}

/// Per-frame 7-D poses for both entities, resampled with a causal
/// zero-order hold (the most recent pose at or before each frame's end).
/// Returns per batch element `frames` rows of [tx pose, rx pose].
pub fn encode_poses(
    tx: &PoseTrack,
    rx: &PoseTrack,
    frames: usize,
    start_frame: usize,
    hop: usize,
    sample_rate: u32,
) -> (Vec<[f32; 7]>, Vec<[f32; 7]>) {
    (
        tx.frame_features(frames, start_frame, hop, sample_rate),
        rx.frame_features(frames, start_frame, hop, sample_rate),
    )
}

/// Fourier features of both pose streams, concatenated along the channel
/// axis: (b, 4m, 1, frames). Transmitter features come first.
pub fn encode_pose_features(
    tx_frames: &[Vec<[f32; 7]>],
    rx_frames: &[Vec<[f32; 7]>],
    fourier_tx: &Tensor4,
    fourier_rx: &Tensor4,
) -> Result<Tensor4> {
    let b = tx_frames.len();
    if b == 0 || rx_frames.len() != b {
        return Err(Error::config("pose feature batches must match and be nonempty"));
    }
    let frames = tx_frames[0].len();
    let m = fourier_tx.shape()[2];
    let mut out = Tensor4::zeros([b, 4 * m, 1, frames]);
    for bi in 0..b {
        if tx_frames[bi].len() != frames || rx_frames[bi].len() != frames {
            return Err(Error::config("pose feature frame counts must match"));
        }
        for f in 0..frames {
            let etx = rgfe_encode(&tx_frames[bi][f], fourier_tx)?;
            let erx = rgfe_encode(&rx_frames[bi][f], fourier_rx)?;
            for (c, &v) in etx.iter().enumerate() {
                *out.at_mut(bi, c, 0, f) = v;
            }
            for (c, &v) in erx.iter().enumerate() {
                *out.at_mut(bi, 2 * m + c, 0, f) = v;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fourier(m: usize, d: usize, seed: u64) -> Tensor4 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor4::randn([1, 1, m, d], &mut rng)
    }

    #[test]
    fn zero_input_gives_ones_and_zeros() {
        let b = fourier(6, 3, 1);
        let e = rgfe_encode(&[0.0; 3], &b).unwrap();
        assert!(e[..6].iter().all(|&v| v == 1.0));
        assert!(e[6..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn embedding_norm_is_row_count() {
        let b = fourier(8, 7, 2);
        let v: Vec<f32> = (0..7).map(|i| 0.3 * i as f32 - 1.0).collect();
        let e = rgfe_encode(&v, &b).unwrap();
        let norm2: f32 = e.iter().map(|&x| x * x).sum();
        assert!((norm2 - 8.0).abs() < 1e-4, "cos^2 + sin^2 must sum to m, got {norm2}");
    }

    #[test]
    fn deterministic_for_same_input() {
        let b = fourier(5, 2, 3);
        let e1 = rgfe_encode(&[0.5, -0.25], &b).unwrap();
        let e2 = rgfe_encode(&[0.5, -0.25], &b).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn swapping_tx_and_rx_changes_features() {
        let btx = fourier(4, 7, 4);
        let brx = fourier(4, 7, 5);
        let a = vec![vec![[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]; 3]];
        let b = vec![vec![[0.0, 2.0, 0.0, 1.0, 0.0, 0.0, 0.0]; 3]];
        let fwd = encode_pose_features(&a, &b, &btx, &brx).unwrap();
        let swapped = encode_pose_features(&b, &a, &btx, &brx).unwrap();
        assert_ne!(fwd.data(), swapped.data());
    }

    #[test]
    fn constant_poses_give_identical_frames() {
        use crate::pose::PoseTrack;
        let track = PoseTrack::new(
            vec![0.0, 1.0],
            vec![[1.0, 2.0, 0.5]; 2],
            vec![[1.0, 0.0, 0.0, 0.0]; 2],
        )
        .unwrap();
        let (tx, rx) = encode_poses(&track, &track, 10, 0, 128, 48000);
        for f in 1..10 {
            assert_eq!(tx[f], tx[0]);
            assert_eq!(rx[f], rx[0]);
        }
    }

    #[test]
    fn pose_change_at_frame_k_leaves_earlier_frames_unchanged() {
        let base = PoseTrack::new(
            vec![0.0, 0.0106666],
            vec![[0.0; 3], [0.0; 3]],
            vec![[1.0, 0.0, 0.0, 0.0]; 2],
        )
        .unwrap();
        // second pose moved: frame ends at (i+1)*128/48000 s, so frames 0..3
        // end before t=0.0106666 and must be unaffected
        let moved = PoseTrack::new(
            vec![0.0, 0.0106666],
            vec![[0.0; 3], [5.0, 5.0, 5.0]],
            vec![[1.0, 0.0, 0.0, 0.0]; 2],
        )
        .unwrap();
        let a = base.frame_features(8, 0, 128, 48000);
        let b = moved.frame_features(8, 0, 128, 48000);
        for f in 0..4 {
            assert_eq!(a[f], b[f], "frame {f} changed");
        }
        assert_ne!(a[4], b[4]);
    }
}
