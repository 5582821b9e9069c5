//! Causal U-Net over packed complex spectrograms.
//!
//! The network takes the flow state (2 complex channels as 4 real ones),
//! optionally the mono condition spectrogram (4 more), the solver time step,
//! and the two pose streams, and predicts a vector field of the flow state's
//! shape. Every layer is causal in time: 3x3 convolutions look back two
//! frames, 4x4 stride-2 downsampling looks back three (so an output never
//! sees the second frame of its own pair), and 4x4 transposed upsampling
//! withholds its two trailing raw columns, which overlap the next chunk.
//! Perturbing input frame `k` therefore never changes output frames `< k`,
//! at every depth of the hourglass.
//!
//! Conditioning: the time step and each 7-D pose are lifted by frozen random
//! Gaussian Fourier embeddings, passed through small MLPs, projected per
//! block, and added to the hidden features (the pose projection varies per
//! frame, the time projection is constant across frames). Skip connections
//! concatenate encoder features to decoder features at matching resolution.
//! Frequency bins are zero-padded up to a multiple of `2^num_resample` and
//! cropped back on output.

mod cond;
mod exec;

pub use cond::{encode_pose_features, encode_poses, encode_time, rgfe_encode};
pub use exec::{ConvKind, Exec, StreamExec, TapeExec, UnetStreamState};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::numkern::{ParamStore, Tape, Tensor4, ValueId};
use crate::{Error, Result};

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct NetConfig {
    pub num_blocks: usize,
    pub num_resample: usize,
    pub base_channels: usize,
    /// Per-block channel multipliers (length `num_blocks`).
    pub channel_mults: Vec<usize>,
    /// Condition embedding width after the MLPs.
    pub embed_dim: usize,
    /// Fourier rows per embedding matrix (features are twice this).
    pub rgfe_dim: usize,
    pub num_groups: usize,
    pub eps: f32,
    /// When false the mono spectrogram condition channels are dropped
    /// (the simplified flow matching ablation).
    pub condition_on_mono: bool,
}

impl NetConfig {
    /// Default-scale network: seven blocks per side, four resamplings.
    pub fn full() -> Self {
        NetConfig {
            num_blocks: 7,
            num_resample: 4,
            base_channels: 32,
            channel_mults: vec![1, 2, 2, 4, 4, 8, 8],
            embed_dim: 128,
            rgfe_dim: 32,
            num_groups: 8,
            eps: 1e-5,
            condition_on_mono: true,
        }
    }

    /// Desk-scale preset used for synthetic-data training.
    pub fn toy() -> Self {
        NetConfig {
            num_blocks: 5,
            num_resample: 3,
            base_channels: 16,
            channel_mults: vec![1, 1, 2, 2, 2],
            embed_dim: 64,
            rgfe_dim: 16,
            num_groups: 8,
            eps: 1e-5,
            condition_on_mono: true,
        }
    }

    /// Tiny configuration for fast tests.
    pub fn micro() -> Self {
        NetConfig {
            num_blocks: 2,
            num_resample: 1,
            base_channels: 8,
            channel_mults: vec![1, 1],
            embed_dim: 16,
            rgfe_dim: 8,
            num_groups: 4,
            eps: 1e-5,
            condition_on_mono: true,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "toy" => Ok(Self::toy()),
            "micro" => Ok(Self::micro()),
            other => Err(Error::config(format!(
                "unknown model preset {other:?} (expected full, toy, or micro)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_blocks == 0 || self.channel_mults.len() != self.num_blocks {
            return Err(Error::config(format!(
                "channel_mults length {} must equal num_blocks {}",
                self.channel_mults.len(),
                self.num_blocks
            )));
        }
        if self.num_resample > self.num_blocks {
            return Err(Error::config(format!(
                "num_resample {} exceeds num_blocks {}",
                self.num_resample, self.num_blocks
            )));
        }
        if self.base_channels == 0 || self.embed_dim == 0 || self.rgfe_dim == 0 {
            return Err(Error::config("channel and embedding sizes must be positive"));
        }
        Ok(())
    }

    /// Packed input channels: 4 for the flow state, plus 4 for the mono
    /// condition unless disabled.
    pub fn in_channels(&self) -> usize {
        if self.condition_on_mono {
            8
        } else {
            4
        }
    }

    pub fn out_channels(&self) -> usize {
        4
    }

    pub fn channels(&self) -> Vec<usize> {
        self.channel_mults.iter().map(|m| m * self.base_channels).collect()
    }

    pub fn time_divisor(&self) -> usize {
        1 << self.num_resample
    }

    /// Frequency bins padded up to the next multiple of `2^num_resample`.
    pub fn freq_padded(&self, bins: usize) -> usize {
        let d = self.time_divisor();
        bins.div_ceil(d) * d
    }

    /// Largest divisor of `channels` that is at most `num_groups`.
    pub fn group_count(&self, channels: usize) -> usize {
        let mut g = self.num_groups.min(channels).max(1);
        while channels % g != 0 {
            g -= 1;
        }
        g
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Resample {
    None,
    Down,
    Up,
}

#[derive(Clone, Debug)]
struct BlockSpec {
    prefix: String,
    c_in: usize,
    c_out: usize,
    resample: Resample,
    /// Downsamplings applied before this block's input (pose stream rate).
    depth_in: usize,
    /// Encoder output index concatenated before this block, if any.
    skip: Option<usize>,
}

fn build_plan(cfg: &NetConfig) -> (Vec<BlockSpec>, Vec<BlockSpec>) {
    let n = cfg.num_blocks;
    let r = cfg.num_resample;
    let ch = cfg.channels();
    let mut enc = Vec::with_capacity(n);
    for i in 0..n {
        enc.push(BlockSpec {
            prefix: format!("enc{i}"),
            c_in: if i == 0 { cfg.in_channels() } else { ch[i - 1] },
            c_out: ch[i],
            resample: if i < r { Resample::Down } else { Resample::None },
            depth_in: i.min(r),
            skip: None,
        });
    }
    let mut dec = Vec::with_capacity(n);
    let mut cur = ch[n - 1];
    for i in (0..n).rev() {
        let skip = if i == n - 1 { None } else { Some(i) };
        let c_in = cur + skip.map_or(0, |s| ch[s]);
        let c_out = if i == 0 { ch[0] } else { ch[i - 1] };
        dec.push(BlockSpec {
            prefix: format!("dec{i}"),
            c_in,
            c_out,
            resample: if i < r { Resample::Up } else { Resample::None },
            depth_in: (i + 1).min(r),
            skip,
        });
        cur = c_out;
    }
    (enc, dec)
}

/// The model: config plus every parameter (including the frozen Fourier
/// matrices) in one named store.
pub struct CausalUnet {
    pub config: NetConfig,
    pub params: ParamStore,
}

impl CausalUnet {
    /// Deterministic initialization from a seed.
    pub fn init(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let m = config.rgfe_dim;
        let e = config.embed_dim;

        store.insert("rgfe.t", Tensor4::randn([1, 1, m, 1], &mut rng), false)?;
        store.insert("rgfe.tx", Tensor4::randn([1, 1, m, 7], &mut rng), false)?;
        store.insert("rgfe.rx", Tensor4::randn([1, 1, m, 7], &mut rng), false)?;

        add_conv(&mut store, &mut rng, "temb.fc1", e, 2 * m, 1, 1)?;
        add_conv(&mut store, &mut rng, "temb.fc2", e, e, 1, 1)?;
        add_conv(&mut store, &mut rng, "pemb.fc1", e, 4 * m, 1, 1)?;
        add_conv(&mut store, &mut rng, "pemb.fc2", e, e, 1, 1)?;

        let (enc, dec) = build_plan(&config);
        for spec in enc.iter().chain(dec.iter()) {
            let p = &spec.prefix;
            add_norm(&mut store, &format!("{p}.norm1"), spec.c_in)?;
            add_conv(&mut store, &mut rng, &format!("{p}.conv1"), spec.c_out, spec.c_in, 3, 3)?;
            add_conv(&mut store, &mut rng, &format!("{p}.cond_t"), spec.c_out, e, 1, 1)?;
            add_conv(&mut store, &mut rng, &format!("{p}.cond_p"), spec.c_out, e, 1, 1)?;
            add_norm(&mut store, &format!("{p}.norm2"), spec.c_out)?;
            add_conv(&mut store, &mut rng, &format!("{p}.conv2"), spec.c_out, spec.c_out, 3, 3)?;
            match spec.resample {
                Resample::Down => {
                    add_conv(&mut store, &mut rng, &format!("{p}.down"), spec.c_out, spec.c_out, 4, 4)?;
                    add_conv_t(&mut store, &mut rng, &format!("{p}.res"), spec.c_in, spec.c_out, 4, 4, false)?;
                }
                Resample::Up => {
                    add_conv_t(&mut store, &mut rng, &format!("{p}.up"), spec.c_out, spec.c_out, 4, 4, true)?;
                    add_conv_t(&mut store, &mut rng, &format!("{p}.res"), spec.c_in, spec.c_out, 4, 4, true)?;
                }
                Resample::None => {
                    if spec.c_in != spec.c_out {
                        add_conv(&mut store, &mut rng, &format!("{p}.res"), spec.c_out, spec.c_in, 1, 1)?;
                    }
                }
            }
        }
        let c0 = config.channels()[0];
        add_norm(&mut store, "head.norm", c0)?;
        add_conv(&mut store, &mut rng, "head.conv", config.out_channels(), c0, 1, 1)?;

        Ok(CausalUnet { config, params: store })
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_values()
    }

    fn check_input(&self, shape: [usize; 4], batch: usize) -> Result<()> {
        let [b, c, _, t] = shape;
        if b != batch {
            return Err(Error::config(format!("batch {b} != condition batch {batch}")));
        }
        if c != self.config.in_channels() {
            return Err(Error::config(format!(
                "input has {c} channels, config expects {}",
                self.config.in_channels()
            )));
        }
        if t == 0 || t % self.config.time_divisor() != 0 {
            return Err(Error::input(format!(
                "frame count {t} must be a positive multiple of {}",
                self.config.time_divisor()
            )));
        }
        Ok(())
    }

    /// Training-path forward: records onto `tape` and returns the input and
    /// predicted-field nodes (the input node makes gradient-masking checks
    /// possible).
    pub fn forward_train(
        &self,
        tape: &mut Tape,
        input: &Tensor4,
        t: &[f32],
        tx_frames: &[Vec<[f32; 7]>],
        rx_frames: &[Vec<[f32; 7]>],
    ) -> Result<(ValueId, ValueId)> {
        self.check_input(input.shape(), t.len())?;
        let temb_feat = encode_time(t, self.params.value("rgfe.t")?)?;
        let pemb_feat = encode_pose_features(
            tx_frames,
            rx_frames,
            self.params.value("rgfe.tx")?,
            self.params.value("rgfe.rx")?,
        )?;
        if pemb_feat.time() != input.time() {
            return Err(Error::config(format!(
                "pose features cover {} frames, input has {}",
                pemb_feat.time(),
                input.time()
            )));
        }
        let x = tape.input(input.clone());
        let temb = tape.input(temb_feat);
        let pemb = tape.input(pemb_feat);
        let mut exec = TapeExec { tape, store: &self.params };
        let out = forward_net(&mut exec, &self.config, &x, &temb, &pemb)?;
        Ok((x, out))
    }

    /// Inference forward. `state` carries each causal layer's history across
    /// calls; a fresh state reproduces the offline (zero-padded) result, so
    /// single-pass offline inference is this function with a fresh state.
    pub fn infer(
        &self,
        input: &Tensor4,
        t: f32,
        tx_frames: &[Vec<[f32; 7]>],
        rx_frames: &[Vec<[f32; 7]>],
        state: &mut UnetStreamState,
    ) -> Result<Tensor4> {
        self.check_input(input.shape(), input.batch())?;
        let batch = input.batch();
        let temb_feat = encode_time(&vec![t; batch], self.params.value("rgfe.t")?)?;
        let pemb_feat = encode_pose_features(
            tx_frames,
            rx_frames,
            self.params.value("rgfe.tx")?,
            self.params.value("rgfe.rx")?,
        )?;
        if pemb_feat.time() != input.time() {
            return Err(Error::config(format!(
                "pose features cover {} frames, input has {}",
                pemb_feat.time(),
                input.time()
            )));
        }
        state.reset_cursor();
        let mut exec = StreamExec { store: &self.params, state };
        let out = forward_net(&mut exec, &self.config, input, &temb_feat, &pemb_feat)?;
        if !out.is_finite() {
            return Err(Error::runtime("non-finite network output"));
        }
        Ok(out)
    }

    /// Fresh zero-history stream state.
    pub fn fresh_state(&self) -> UnetStreamState {
        UnetStreamState::new()
    }

    /// Upper bound on how many past input frames an output frame depends on.
    pub fn receptive_frames(&self) -> usize {
        let (enc, dec) = build_plan(&self.config);
        let mut back = 0usize;
        for spec in enc.iter().chain(dec.iter()) {
            let scale = 1usize << spec.depth_in;
            back += 2 * scale * 2; // two 3x3 convolutions
            match spec.resample {
                Resample::Down => back += 3 * scale,
                Resample::Up => back += scale,
                Resample::None => {}
            }
        }
        back + self.config.time_divisor()
    }
}

fn add_conv(
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    c_out: usize,
    c_in: usize,
    kh: usize,
    kw: usize,
) -> Result<()> {
    let bound = (1.0 / (c_in * kh * kw) as f32).sqrt();
    let w = uniform([c_out, c_in, kh, kw], bound, rng);
    store.insert(&format!("{prefix}.weight"), w, true)?;
    store.insert(&format!("{prefix}.bias"), uniform([1, c_out, 1, 1], bound, rng), true)
}

/// Transposed-conv weight layout is (in, out, kh, kw). `transposed` selects
/// it; otherwise this is a plain conv whose name says "res".
fn add_conv_t(
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    c_in: usize,
    c_out: usize,
    kh: usize,
    kw: usize,
    transposed: bool,
) -> Result<()> {
    let bound = (1.0 / (c_in * kh * kw) as f32).sqrt();
    let w = if transposed {
        uniform([c_in, c_out, kh, kw], bound, rng)
    } else {
        uniform([c_out, c_in, kh, kw], bound, rng)
    };
    store.insert(&format!("{prefix}.weight"), w, true)?;
    store.insert(&format!("{prefix}.bias"), uniform([1, c_out, 1, 1], bound, rng), true)
}

fn add_norm(store: &mut ParamStore, prefix: &str, channels: usize) -> Result<()> {
    store.insert(&format!("{prefix}.gamma"), Tensor4::filled([1, channels, 1, 1], 1.0), true)?;
    store.insert(&format!("{prefix}.beta"), Tensor4::zeros([1, channels, 1, 1]), true)
}

fn uniform(shape: [usize; 4], bound: f32, rng: &mut ChaCha8Rng) -> Tensor4 {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| (rng.gen::<f32>() * 2.0 - 1.0) * bound).collect();
    Tensor4::new(shape, data).expect("shape/data constructed together")
}

/// The network body, shared by both executors.
fn forward_net<E: Exec>(
    exec: &mut E,
    cfg: &NetConfig,
    input: &E::V,
    temb_feat: &E::V,
    pemb_feat: &E::V,
) -> Result<E::V> {
    let t1 = exec.causal_conv(temb_feat, "temb.fc1", ConvKind::Proj1x1)?;
    let t2 = exec.silu(&t1)?;
    let temb = exec.causal_conv(&t2, "temb.fc2", ConvKind::Proj1x1)?;
    let p1 = exec.causal_conv(pemb_feat, "pemb.fc1", ConvKind::Proj1x1)?;
    let p2 = exec.silu(&p1)?;
    let pemb0 = exec.causal_conv(&p2, "pemb.fc2", ConvKind::Proj1x1)?;

    // pose embedding per depth: strided pick keeps each coarse frame's pose
    // at the first full-rate frame of its group (later picks would leak)
    let mut pembs = vec![pemb0];
    for d in 1..=cfg.num_resample {
        let prev = pembs[d - 1].clone();
        pembs.push(exec.time_stride2(&prev)?);
    }

    let bins = exec.shape(input)[2];
    let padded = cfg.freq_padded(bins);
    let mut h = exec.pad_freq(input, 0, padded - bins)?;

    let (enc, dec) = build_plan(cfg);
    let mut skips: Vec<E::V> = Vec::with_capacity(enc.len());
    for spec in &enc {
        h = run_block(exec, cfg, spec, &h, &temb, &pembs)?;
        skips.push(h.clone());
    }
    for spec in &dec {
        let x = match spec.skip {
            Some(s) => exec.concat_channels(&h, &skips[s])?,
            None => h.clone(),
        };
        h = run_block(exec, cfg, spec, &x, &temb, &pembs)?;
    }

    let c0 = cfg.channels()[0];
    let n = exec.group_norm(&h, "head.norm", cfg.group_count(c0), cfg.eps)?;
    let a = exec.silu(&n)?;
    let out = exec.causal_conv(&a, "head.conv", ConvKind::Proj1x1)?;
    exec.slice_freq(&out, 0, bins)
}

fn run_block<E: Exec>(
    exec: &mut E,
    cfg: &NetConfig,
    spec: &BlockSpec,
    x: &E::V,
    temb: &E::V,
    pembs: &[E::V],
) -> Result<E::V> {
    let p = &spec.prefix;
    let n1 = exec.group_norm(x, &format!("{p}.norm1"), cfg.group_count(spec.c_in), cfg.eps)?;
    let a1 = exec.silu(&n1)?;
    let c1 = exec.causal_conv(&a1, &format!("{p}.conv1"), ConvKind::Causal3x3)?;
    let te = exec.causal_conv(temb, &format!("{p}.cond_t"), ConvKind::Proj1x1)?;
    let pe = exec.causal_conv(&pembs[spec.depth_in], &format!("{p}.cond_p"), ConvKind::Proj1x1)?;
    let h = exec.add_broadcast(&c1, &te)?;
    let h = exec.add_broadcast(&h, &pe)?;
    let n2 = exec.group_norm(&h, &format!("{p}.norm2"), cfg.group_count(spec.c_out), cfg.eps)?;
    let a2 = exec.silu(&n2)?;
    let c2 = exec.causal_conv(&a2, &format!("{p}.conv2"), ConvKind::Causal3x3)?;
    let main = match spec.resample {
        Resample::None => c2,
        Resample::Down => exec.causal_conv(&c2, &format!("{p}.down"), ConvKind::Down4x4)?,
        Resample::Up => exec.causal_conv(&c2, &format!("{p}.up"), ConvKind::Up4x4)?,
    };
    let res = match spec.resample {
        Resample::Down => exec.causal_conv(x, &format!("{p}.res"), ConvKind::Down4x4)?,
        Resample::Up => exec.causal_conv(x, &format!("{p}.res"), ConvKind::Up4x4)?,
        Resample::None if spec.c_in != spec.c_out => {
            exec.causal_conv(x, &format!("{p}.res"), ConvKind::Proj1x1)?
        }
        Resample::None => x.clone(),
    };
    let out = exec.add(&main, &res)?;
    exec.check_finite(&out, p)?;
    Ok(out)
}

#[cfg(test)]
mod tests;
