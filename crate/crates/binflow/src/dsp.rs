//! Offline and streaming STFT/ISTFT.
//!
//! Framing is causal: the signal is left-padded with `win_len - hop` zeros,
//! so frame `f` spans samples `[f*hop - (win_len - hop), f*hop + hop)` and
//! depends only on samples before `(f+1)*hop`. A clip of `N` samples yields
//! exactly `N / hop` frames. Analysis and synthesis both use a periodic Hann
//! window; reconstruction divides by the constant overlap-add sum of the
//! squared window, so a 512/128 configuration reconstructs exactly in steady
//! state. The streaming variants carry `win_len - hop` samples of input
//! (STFT) and one window of overlap-add state (ISTFT) and match the offline
//! transforms for every hop-aligned chunking.

use std::sync::Arc;

use rustfft::num_complex::Complex32;
use rustfft::{Fft, FftPlanner};

use crate::numkern::Tensor4;
use crate::{Error, Result};

/// Analysis configuration; `fft_len == win_len`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StftConfig {
    pub win_len: usize,
    pub hop: usize,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig { win_len: 512, hop: 128 }
    }
}

impl StftConfig {
    pub fn new(win_len: usize, hop: usize) -> Result<Self> {
        let cfg = StftConfig { win_len, hop };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.win_len == 0 {
            return Err(Error::config("win_len and hop must be positive"));
        }
        if self.hop >= self.win_len {
            return Err(Error::config(format!(
                "hop {} must be smaller than win_len {}",
                self.hop, self.win_len
            )));
        }
        if self.win_len % self.hop != 0 {
            return Err(Error::config(format!(
                "hop {} must divide win_len {} for streaming frame alignment",
                self.hop, self.win_len
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.win_len / 2 + 1
    }

    /// Input samples carried across streamed chunks; also the fixed
    /// streaming ISTFT latency.
    pub fn carry(&self) -> usize {
        self.win_len - self.hop
    }
}

/// Periodic Hann window.
fn hann(win_len: usize) -> Vec<f32> {
    (0..win_len)
        .map(|n| 0.5 - 0.5 * (std::f64::consts::TAU * n as f64 / win_len as f64).cos())
        .map(|v| v as f32)
        .collect()
}

/// Complex time-frequency tensor, (channels, bins, frames), frame-contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrogram {
    pub channels: usize,
    pub bins: usize,
    pub frames: usize,
    pub sample_rate: u32,
    data: Vec<Complex32>,
}

impl Spectrogram {
    pub fn zeros(channels: usize, bins: usize, frames: usize, sample_rate: u32) -> Self {
        Spectrogram {
            channels,
            bins,
            frames,
            sample_rate,
            data: vec![Complex32::new(0.0, 0.0); channels * bins * frames],
        }
    }

    #[inline]
    pub fn idx(&self, c: usize, b: usize, f: usize) -> usize {
        (c * self.bins + b) * self.frames + f
    }

    #[inline]
    pub fn at(&self, c: usize, b: usize, f: usize) -> Complex32 {
        self.data[self.idx(c, b, f)]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, b: usize, f: usize) -> &mut Complex32 {
        let i = self.idx(c, b, f);
        &mut self.data[i]
    }

    pub fn data(&self) -> &[Complex32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex32] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Duplicate the spectrogram's channels `n` times (channel-block order).
    pub fn repeat_channels(&self, n: usize) -> Spectrogram {
        let mut out =
            Spectrogram::zeros(self.channels * n, self.bins, self.frames, self.sample_rate);
        let len = self.bins * self.frames;
        for rep in 0..n {
            for c in 0..self.channels {
                let dst = out.idx(rep * self.channels + c, 0, 0);
                let src = self.idx(c, 0, 0);
                out.data[dst..dst + len].copy_from_slice(&self.data[src..src + len]);
            }
        }
        out
    }

    /// Frames `[start, start + len)` as a new spectrogram.
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Spectrogram> {
        if start + len > self.frames {
            return Err(Error::input(format!(
                "frame slice [{start}, {}) out of {}",
                start + len,
                self.frames
            )));
        }
        let mut out = Spectrogram::zeros(self.channels, self.bins, len, self.sample_rate);
        for c in 0..self.channels {
            for b in 0..self.bins {
                let src = self.idx(c, b, start);
                let dst = out.idx(c, b, 0);
                out.data[dst..dst + len].copy_from_slice(&self.data[src..src + len]);
            }
        }
        Ok(out)
    }
}

/// Shared FFT plans, window, and the COLA normalization constant.
pub struct StftKernel {
    pub cfg: StftConfig,
    window: Vec<f32>,
    cola: f32,
    fft: Arc<dyn Fft<f32>>,
    ifft: Arc<dyn Fft<f32>>,
}

impl StftKernel {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let window = hann(cfg.win_len);
        // steady-state sum of squared, hop-shifted windows must be constant
        let overlap = cfg.win_len / cfg.hop;
        let mut sums = vec![0.0f64; cfg.hop];
        for (n, s) in sums.iter_mut().enumerate() {
            for j in 0..overlap {
                let w = window[n + j * cfg.hop] as f64;
                *s += w * w;
            }
        }
        let cola = sums[0];
        for &s in &sums {
            if (s - cola).abs() > 1e-6 * cola {
                return Err(Error::config(format!(
                    "window/hop {}/{} violates the constant overlap-add condition",
                    cfg.win_len, cfg.hop
                )));
            }
        }
        let mut planner = FftPlanner::new();
        Ok(StftKernel {
            cfg,
            window,
            cola: cola as f32,
            fft: planner.plan_fft_forward(cfg.win_len),
            ifft: planner.plan_fft_inverse(cfg.win_len),
        })
    }

    pub fn cola(&self) -> f32 {
        self.cola
    }

    /// Analyze one frame of `win_len` samples into `bins` complex values.
    fn analyze(&self, frame: &[f32], out: &mut [Complex32]) {
        let n = self.cfg.win_len;
        let mut buf: Vec<Complex32> = frame
            .iter()
            .zip(&self.window)
            .map(|(&x, &w)| Complex32::new(x * w, 0.0))
            .collect();
        self.fft.process(&mut buf);
        out.copy_from_slice(&buf[..n / 2 + 1]);
    }

    /// Synthesize one frame: hermitian-extend, inverse FFT, window, scale.
    fn synthesize(&self, spec: &[Complex32]) -> Vec<f32> {
        let n = self.cfg.win_len;
        let mut buf = vec![Complex32::new(0.0, 0.0); n];
        buf[..n / 2 + 1].copy_from_slice(spec);
        for k in 1..n / 2 {
            buf[n - k] = spec[k].conj();
        }
        self.ifft.process(&mut buf);
        let scale = 1.0 / n as f32;
        buf.iter()
            .zip(&self.window)
            .map(|(v, &w)| v.re * scale * w)
            .collect()
    }
}

/// Offline STFT of one or more channels (all the same length, a multiple of
/// the hop). Returns `len / hop` frames.
pub fn stft(channels: &[Vec<f32>], sample_rate: u32, kernel: &StftKernel) -> Result<Spectrogram> {
    let cfg = kernel.cfg;
    if channels.is_empty() {
        return Err(Error::input("stft needs at least one channel"));
    }
    let len = channels[0].len();
    if channels.iter().any(|c| c.len() != len) {
        return Err(Error::input("stft channels must share one length"));
    }
    if len % cfg.hop != 0 {
        return Err(Error::input(format!(
            "signal length {len} is not a multiple of hop {}",
            cfg.hop
        )));
    }
    let frames = len / cfg.hop;
    let mut out = Spectrogram::zeros(channels.len(), cfg.bins(), frames, sample_rate);
    let mut padded = vec![0.0f32; cfg.carry() + len];
    let mut col = vec![Complex32::new(0.0, 0.0); cfg.bins()];
    for (c, ch) in channels.iter().enumerate() {
        padded[..cfg.carry()].fill(0.0);
        padded[cfg.carry()..].copy_from_slice(ch);
        for f in 0..frames {
            kernel.analyze(&padded[f * cfg.hop..f * cfg.hop + cfg.win_len], &mut col);
            for (b, v) in col.iter().enumerate() {
                *out.at_mut(c, b, f) = *v;
            }
        }
    }
    Ok(out)
}

/// Offline inverse STFT; output length is `frames * hop` per channel.
pub fn istft(spec: &Spectrogram, kernel: &StftKernel) -> Result<Vec<Vec<f32>>> {
    let cfg = kernel.cfg;
    if spec.bins != cfg.bins() {
        return Err(Error::input(format!(
            "spectrogram has {} bins, config expects {}",
            spec.bins,
            cfg.bins()
        )));
    }
    let out_len = spec.frames * cfg.hop;
    let mut outs = Vec::with_capacity(spec.channels);
    let mut col = vec![Complex32::new(0.0, 0.0); spec.bins];
    for c in 0..spec.channels {
        let mut acc = vec![0.0f32; cfg.carry() + out_len];
        for f in 0..spec.frames {
            for (b, cv) in col.iter_mut().enumerate() {
                *cv = spec.at(c, b, f);
            }
            let synth = kernel.synthesize(&col);
            for (i, v) in synth.iter().enumerate() {
                acc[f * cfg.hop + i] += v;
            }
        }
        let inv = 1.0 / kernel.cola();
        outs.push(acc[cfg.carry()..].iter().map(|&v| v * inv).collect());
    }
    Ok(outs)
}

/// Pack a complex spectrogram into a real tensor of shape
/// (1, 2 * channels, bins, frames): channel `2c` holds the real part of
/// spectrogram channel `c` and channel `2c + 1` its imaginary part.
pub fn pack_complex(spec: &Spectrogram) -> Tensor4 {
    let mut out = Tensor4::zeros([1, 2 * spec.channels, spec.bins, spec.frames]);
    for c in 0..spec.channels {
        for b in 0..spec.bins {
            let re = out.offset(0, 2 * c, b, 0);
            let im = out.offset(0, 2 * c + 1, b, 0);
            for f in 0..spec.frames {
                let v = spec.at(c, b, f);
                out.data_mut()[re + f] = v.re;
                out.data_mut()[im + f] = v.im;
            }
        }
    }
    out
}

/// Inverse of [`pack_complex`]; the tensor must have batch 1 and an even
/// channel count.
pub fn unpack_complex(t: &Tensor4, sample_rate: u32) -> Result<Spectrogram> {
    let [b, c, bins, frames] = t.shape();
    if b != 1 || c % 2 != 0 {
        return Err(Error::input(format!(
            "unpack_complex expects batch 1 and even channels, got {:?}",
            t.shape()
        )));
    }
    let mut out = Spectrogram::zeros(c / 2, bins, frames, sample_rate);
    for ch in 0..c / 2 {
        for bin in 0..bins {
            let re = t.row(0, 2 * ch, bin);
            let im = t.row(0, 2 * ch + 1, bin);
            for f in 0..frames {
                *out.at_mut(ch, bin, f) = Complex32::new(re[f], im[f]);
            }
        }
    }
    Ok(out)
}

/// Streaming STFT: carries the trailing `win_len - hop` input samples so
/// that concatenated streamed frames equal the offline transform exactly.
pub struct StftStream {
    kernel: Arc<StftKernel>,
    channels: usize,
    sample_rate: u32,
    carry: Vec<Vec<f32>>,
    pub frames_emitted: usize,
}

impl StftStream {
    pub fn new(kernel: Arc<StftKernel>, channels: usize, sample_rate: u32) -> Self {
        let carry = vec![vec![0.0; kernel.cfg.carry()]; channels];
        StftStream { kernel, channels, sample_rate, carry, frames_emitted: 0 }
    }

    pub fn push(&mut self, channels: &[&[f32]]) -> Result<Spectrogram> {
        let cfg = self.kernel.cfg;
        if channels.len() != self.channels {
            return Err(Error::input(format!(
                "stream expects {} channels, got {}",
                self.channels,
                channels.len()
            )));
        }
        let len = channels[0].len();
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::input("chunk channels must share one length"));
        }
        if len % cfg.hop != 0 {
            return Err(Error::input(format!(
                "chunk length {len} is not a multiple of hop {}",
                cfg.hop
            )));
        }
        let frames = len / cfg.hop;
        let mut out = Spectrogram::zeros(self.channels, cfg.bins(), frames, self.sample_rate);
        let mut col = vec![Complex32::new(0.0, 0.0); cfg.bins()];
        for (c, chunk) in channels.iter().enumerate() {
            let mut ext = Vec::with_capacity(cfg.carry() + len);
            ext.extend_from_slice(&self.carry[c]);
            ext.extend_from_slice(chunk);
            for f in 0..frames {
                self.kernel
                    .analyze(&ext[f * cfg.hop..f * cfg.hop + cfg.win_len], &mut col);
                for (b, v) in col.iter().enumerate() {
                    *out.at_mut(c, b, f) = *v;
                }
            }
            self.carry[c].copy_from_slice(&ext[ext.len() - cfg.carry()..]);
        }
        self.frames_emitted += frames;
        Ok(out)
    }
}

/// Streaming ISTFT. Emission lags the pushed frames by `win_len - hop`
/// samples: a frame's newest samples still await future overlap, so they are
/// withheld until complete. `finish` flushes the remaining tail; the
/// concatenation of all emissions equals the offline inverse transform.
pub struct IstftStream {
    kernel: Arc<StftKernel>,
    channels: usize,
    acc: Vec<Vec<f32>>,
    frames_seen: usize,
}

impl IstftStream {
    pub fn new(kernel: Arc<StftKernel>, channels: usize) -> Self {
        let acc = vec![vec![0.0; kernel.cfg.win_len]; channels];
        IstftStream { kernel, channels, acc, frames_seen: 0 }
    }

    pub fn push(&mut self, spec: &Spectrogram) -> Result<Vec<Vec<f32>>> {
        let cfg = self.kernel.cfg;
        if spec.channels != self.channels {
            return Err(Error::input(format!(
                "stream expects {} channels, got {}",
                self.channels, spec.channels
            )));
        }
        if spec.bins != cfg.bins() {
            return Err(Error::input(format!(
                "spectrogram has {} bins, config expects {}",
                spec.bins,
                cfg.bins()
            )));
        }
        let latency_frames = cfg.carry() / cfg.hop;
        let inv = 1.0 / self.kernel.cola();
        let mut outs = vec![Vec::new(); self.channels];
        let mut col = vec![Complex32::new(0.0, 0.0); spec.bins];
        for f in 0..spec.frames {
            for (c, out) in outs.iter_mut().enumerate() {
                for (b, cv) in col.iter_mut().enumerate() {
                    *cv = spec.at(c, b, f);
                }
                let synth = self.kernel.synthesize(&col);
                let acc = &mut self.acc[c];
                for (a, s) in acc.iter_mut().zip(&synth) {
                    *a += s;
                }
                // oldest hop is now complete; for the first `latency_frames`
                // frames it reconstructs the causal zero pad and is dropped
                if self.frames_seen >= latency_frames {
                    out.extend(acc[..cfg.hop].iter().map(|&v| v * inv));
                }
                acc.copy_within(cfg.hop.., 0);
                let tail = cfg.win_len - cfg.hop;
                acc[tail..].fill(0.0);
            }
            self.frames_seen += 1;
        }
        Ok(outs)
    }

    /// Emit the withheld tail (`min(frames_seen, latency) * hop` samples).
    pub fn finish(self) -> Vec<Vec<f32>> {
        let cfg = self.kernel.cfg;
        let latency_frames = cfg.carry() / cfg.hop;
        let flush = self.frames_seen.min(latency_frames) * cfg.hop;
        let inv = 1.0 / self.kernel.cola();
        self.acc
            .into_iter()
            .map(|acc| acc[..flush].iter().map(|&v| v * inv).collect())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kernel() -> Arc<StftKernel> {
        Arc::new(StftKernel::new(StftConfig::default()).unwrap())
    }

    fn rand_signal(len: usize, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn paper_shape_32768_gives_257_bins_256_frames() {
        let k = kernel();
        let spec = stft(&[vec![0.0; 32768]], 48000, &k).unwrap();
        assert_eq!(spec.bins, 257);
        assert_eq!(spec.frames, 256);
    }

    #[test]
    fn zero_input_zero_spectrogram() {
        let k = kernel();
        let spec = stft(&[vec![0.0; 1024]], 48000, &k).unwrap();
        assert!(spec.data().iter().all(|v| v.re == 0.0 && v.im == 0.0));
    }

    #[test]
    fn dc_input_matches_direct_dft_oracle() {
        // direct f64 DFT of one steady-state Hann-windowed frame of ones:
        // the Hann spectrum has lines at bins 0 and 1 (|X1| = |X0| / 2) and
        // nothing beyond bin 1.
        let n = 512usize;
        let w: Vec<f64> = (0..n)
            .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos())
            .collect();
        let mut oracle = vec![(0.0f64, 0.0f64); n / 2 + 1];
        for (k, o) in oracle.iter_mut().enumerate() {
            for (i, &wv) in w.iter().enumerate() {
                let ph = -std::f64::consts::TAU * (k * i) as f64 / n as f64;
                o.0 += wv * ph.cos();
                o.1 += wv * ph.sin();
            }
        }
        let mag0 = (oracle[0].0.powi(2) + oracle[0].1.powi(2)).sqrt();
        let mag1 = (oracle[1].0.powi(2) + oracle[1].1.powi(2)).sqrt();
        assert!((mag0 - 256.0).abs() < 1e-9);
        assert!((mag1 - 128.0).abs() < 1e-9);
        for o in &oracle[2..] {
            assert!((o.0.powi(2) + o.1.powi(2)).sqrt() < 1e-6 * mag0);
        }

        let k = kernel();
        let spec = stft(&[vec![1.0; 2048]], 48000, &k).unwrap();
        // frames >= 3 see only ones (earlier frames include the causal pad)
        for f in 3..spec.frames {
            for (b, o) in oracle.iter().enumerate() {
                let v = spec.at(0, b, f);
                assert!(
                    (v.re as f64 - o.0).abs() < 1e-3 && (v.im as f64 - o.1).abs() < 1e-3,
                    "frame {f} bin {b}: {v} vs {o:?}"
                );
            }
        }
    }

    #[test]
    fn round_trip_reconstructs_past_transient() {
        let k = kernel();
        let x = rand_signal(8192, 9);
        let spec = stft(&[x.clone()], 48000, &k).unwrap();
        let y = istft(&spec, &k).unwrap();
        assert_eq!(y[0].len(), x.len());
        let lo = k.cfg.win_len;
        let hi = x.len() - k.cfg.win_len;
        let mut err = 0.0f64;
        let mut norm = 0.0f64;
        for i in lo..hi {
            err += ((y[0][i] - x[i]) as f64).powi(2);
            norm += (x[i] as f64).powi(2);
        }
        assert!((err / norm).sqrt() < 1e-6, "rel rms {}", (err / norm).sqrt());
    }

    #[test]
    fn istft_is_linear_and_zero_preserving() {
        let k = kernel();
        let a = stft(&[rand_signal(1024, 1)], 48000, &k).unwrap();
        let b = stft(&[rand_signal(1024, 2)], 48000, &k).unwrap();
        let mut sum = a.clone();
        for (s, bv) in sum.data_mut().iter_mut().zip(b.data()) {
            *s += bv;
        }
        let ya = istft(&a, &k).unwrap();
        let yb = istft(&b, &k).unwrap();
        let ysum = istft(&sum, &k).unwrap();
        for i in 0..ysum[0].len() {
            assert!((ysum[0][i] - (ya[0][i] + yb[0][i])).abs() < 1e-6);
        }
        let zero = istft(&Spectrogram::zeros(1, 257, 8, 48000), &k).unwrap();
        assert!(zero[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn streamed_stft_equals_offline_for_any_split() {
        let k = kernel();
        let x = rand_signal(4096, 3);
        let offline = stft(&[x.clone()], 48000, &k).unwrap();
        for splits in [vec![2048, 2048], vec![128, 1920, 2048], vec![4096]] {
            let mut stream = StftStream::new(k.clone(), 1, 48000);
            let mut specs = Vec::new();
            let mut start = 0;
            for s in splits {
                specs.push(stream.push(&[&x[start..start + s]]).unwrap());
                start += s;
            }
            let mut f_global = 0;
            for spec in &specs {
                for f in 0..spec.frames {
                    for b in 0..spec.bins {
                        let o = offline.at(0, b, f_global);
                        let g = spec.at(0, b, f);
                        assert!((o - g).norm() <= 1e-7, "frame {f_global} bin {b}: {o} vs {g}");
                    }
                    f_global += 1;
                }
            }
            assert_eq!(f_global, offline.frames);
        }
    }

    #[test]
    fn first_streamed_push_of_zeros_is_zero() {
        let k = kernel();
        let mut stream = StftStream::new(k, 1, 48000);
        let spec = stream.push(&[&vec![0.0; 256][..]]).unwrap();
        assert_eq!(spec.frames, 2);
        assert!(spec.data().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn streamed_istft_matches_offline() {
        let k = kernel();
        let x = rand_signal(4096, 5);
        let spec = stft(&[x], 48000, &k).unwrap();
        let offline = istft(&spec, &k).unwrap();

        for frames_per_push in [1usize, 4, 9, 32] {
            let mut stream = IstftStream::new(k.clone(), 1);
            let mut out = Vec::new();
            let mut f = 0;
            while f < spec.frames {
                let n = frames_per_push.min(spec.frames - f);
                let part = spec.slice_frames(f, n).unwrap();
                out.extend(stream.push(&part).unwrap().remove(0));
                f += n;
            }
            out.extend(stream.finish().remove(0));
            assert_eq!(out.len(), offline[0].len());
            for (i, (a, b)) in out.iter().zip(&offline[0]).enumerate() {
                assert!((a - b).abs() <= 1e-6, "sample {i}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_frames_emit_zero_chunk() {
        let k = kernel();
        let mut stream = IstftStream::new(k, 2);
        let spec = Spectrogram::zeros(2, 257, 6, 48000);
        let out = stream.push(&spec).unwrap();
        assert!(out[0].iter().chain(&out[1]).all(|&v| v == 0.0));
        assert_eq!(out[0].len(), 3 * 128); // 6 frames minus 3 frames of latency
    }

    #[test]
    fn pack_unpack_round_trip_and_layout() {
        let mut spec = Spectrogram::zeros(2, 3, 4, 48000);
        for c in 0..2 {
            for b in 0..3 {
                for f in 0..4 {
                    *spec.at_mut(c, b, f) =
                        Complex32::new((c * 100 + b * 10 + f) as f32, -(f as f32) - 0.5);
                }
            }
        }
        let packed = pack_complex(&spec);
        assert_eq!(packed.shape(), [1, 4, 3, 4]);
        assert_eq!(packed.at(0, 0, 1, 2), spec.at(0, 1, 2).re);
        assert_eq!(packed.at(0, 1, 1, 2), spec.at(0, 1, 2).im);
        assert_eq!(packed.at(0, 2, 0, 3), spec.at(1, 0, 3).re);
        let back = unpack_complex(&packed, 48000).unwrap();
        assert_eq!(back, spec);

        let mut imag_only = Spectrogram::zeros(1, 3, 2, 48000);
        for v in imag_only.data_mut() {
            *v = Complex32::new(0.0, 1.25);
        }
        let p = pack_complex(&imag_only);
        for b in 0..3 {
            assert!(p.row(0, 0, b).iter().all(|&v| v == 0.0));
            assert!(p.row(0, 1, b).iter().all(|&v| v == 1.25));
        }
    }

    #[test]
    fn cola_constant_is_three_halves() {
        let k = kernel();
        assert!((k.cola() - 1.5).abs() < 1e-6);
    }

    #[test]
    fn non_hop_multiple_is_an_input_error() {
        let k = kernel();
        assert!(matches!(stft(&[vec![0.0; 1000]], 48000, &k), Err(Error::Input(_))));
        let mut s = StftStream::new(k, 1, 48000);
        assert!(matches!(s.push(&[&vec![0.0; 100][..]]), Err(Error::Input(_))));
    }
}
