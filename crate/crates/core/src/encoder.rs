//! Residual spectrogram encoder trained with the positive-pair contrastive loss.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augment::{augment_variant, spec_mask, AugmentConfig};
use crate::error::{Error, Result};
use crate::features::{at_rate, FeatureParams, MelExtractor};
use crate::io::{AudioClip, ClassLabel};
use crate::numerics::{
    param_seed, seeded_init, Adam, Checkpoint, Conv2dSpec, Graph, Init, ParamId, ParamStore, Tensor, Var,
};
use crate::parallel::map_ordered;
use crate::rng::{self, tag};
use crate::split::{source_id, stratified_split};

pub const CHECKPOINT_KIND: &str = "smsat-encoder";
const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;
const STEM_KERNEL: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Stage channel widths before scaling.
    pub widths: Vec<usize>,
    pub blocks: Vec<usize>,
    /// Projection dimension `d`.
    pub proj_dim: usize,
    pub n_mels: usize,
    /// Frames after center crop / pad.
    pub frames: usize,
    pub width_scale: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            widths: vec![64, 128, 256, 512],
            blocks: vec![2, 2, 2, 2],
            proj_dim: 128,
            n_mels: 64,
            frames: 256,
            width_scale: 1.0,
        }
    }
}

impl EncoderConfig {
    pub fn scaled_widths(&self) -> Vec<usize> {
        self.widths
            .iter()
            .map(|w| ((*w as f64 * self.width_scale).round() as usize).max(1))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("encoder config: {m}")));
        if self.widths.is_empty() || self.widths.len() != self.blocks.len() {
            return bad("widths and blocks must be non-empty and the same length".into());
        }
        if self.widths.iter().any(|w| *w == 0) || self.widths.windows(2).any(|p| p[1] < p[0]) {
            return bad(format!("widths {:?} must be positive and non-decreasing", self.widths));
        }
        if self.blocks.iter().any(|b| *b == 0) {
            return bad("every stage needs at least one block".into());
        }
        if self.proj_dim < 2 {
            return bad("projection dimension must be >= 2".into());
        }
        if !(self.width_scale > 0.0 && self.width_scale.is_finite()) {
            return bad("width scale must be positive".into());
        }
        if self.n_mels == 0 || self.frames == 0 {
            return bad(format!("infeasible input {}x{}", self.n_mels, self.frames));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Positive pairs per step.
    pub batch_size: usize,
    pub val_fraction: f64,
    /// Weight of the pairwise-distance spreading term; 0 disables it.
    pub uniformity_weight: f64,
    pub seed: u64,
}

impl Default for EncoderTrainConfig {
    fn default() -> Self {
        EncoderTrainConfig {
            epochs: 30,
            lr: 1e-3,
            batch_size: 8,
            val_fraction: 0.2,
            uniformity_weight: 0.0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvBn {
    conv: ParamId,
    gamma: ParamId,
    beta: ParamId,
    mean: ParamId,
    var: ParamId,
    spec: Conv2dSpec,
}

#[derive(Debug, Clone)]
struct Block {
    a: ConvBn,
    b: ConvBn,
    down: Option<ConvBn>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Pending running-statistic update produced by a training forward pass.
#[derive(Debug, Clone)]
pub struct BnUpdate {
    mean: ParamId,
    var: ParamId,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
    count: usize,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub cfg: EncoderConfig,
    pub features: FeatureParams,
    pub store: ParamStore,
    stem: ConvBn,
    blocks: Vec<Block>,
    head_w: ParamId,
    head_b: ParamId,
}

fn conv_bn(store: &mut ParamStore, name: &str, cin: usize, cout: usize, k: usize, spec: Conv2dSpec, seed: u64) -> ConvBn {
    let wname = format!("{name}.w");
    let conv = store.add(&wname, seeded_init(&[cout, cin, k, k], Init::KaimingUniform, param_seed(seed, &wname)));
    ConvBn {
        conv,
        gamma: store.add(&format!("{name}.bn.gamma"), Tensor::full(&[cout], 1.0)),
        beta: store.add(&format!("{name}.bn.beta"), Tensor::zeros(&[cout])),
        mean: store.add_buffer(&format!("{name}.bn.running_mean"), Tensor::zeros(&[cout])),
        var: store.add_buffer(&format!("{name}.bn.running_var"), Tensor::full(&[cout], 1.0)),
        spec,
    }
}

fn out_dim(h: usize, k: usize, s: Conv2dSpec) -> usize {
    (h + 2 * s.pad - k) / s.stride + 1
}

/// Build a freshly initialized encoder.
pub fn build_encoder(cfg: &EncoderConfig, features: &FeatureParams, seed: u64) -> Result<Encoder> {
    cfg.validate()?;
    if features.n_mels != cfg.n_mels {
        return Err(Error::ConfigMismatch(format!(
            "encoder expects {} mel bands, feature params give {}",
            cfg.n_mels, features.n_mels
        )));
    }
    let widths = cfg.scaled_widths();
    let mut store = ParamStore::new();
    let stem = conv_bn(&mut store, "stem", 1, widths[0], STEM_KERNEL, Conv2dSpec { stride: 2, pad: 3 }, seed);
    let mut blocks = Vec::new();
    let mut cin = widths[0];
    for (s, (&w, &n)) in widths.iter().zip(&cfg.blocks).enumerate() {
        for b in 0..n {
            let stride = if s > 0 && b == 0 { 2 } else { 1 };
            let name = format!("layer{}.{b}", s + 1);
            let a = conv_bn(&mut store, &format!("{name}.conv1"), cin, w, 3, Conv2dSpec { stride, pad: 1 }, seed);
            let bb = conv_bn(&mut store, &format!("{name}.conv2"), w, w, 3, Conv2dSpec { stride: 1, pad: 1 }, seed);
            let down = (stride != 1 || cin != w)
                .then(|| conv_bn(&mut store, &format!("{name}.downsample"), cin, w, 1, Conv2dSpec { stride, pad: 0 }, seed));
            blocks.push(Block { a, b: bb, down });
            cin = w;
        }
    }
    let bound = 1.0 / (cin as f64).sqrt();
    let head_w = store.add("head.w", seeded_init(&[cfg.proj_dim, cin], Init::Uniform(bound), param_seed(seed, "head.w")));
    let head_b = store.add("head.b", seeded_init(&[cfg.proj_dim], Init::Uniform(bound), param_seed(seed, "head.b")));
    Ok(Encoder {
        cfg: cfg.clone(),
        features: *features,
        store,
        stem,
        blocks,
        head_w,
        head_b,
    })
}

impl Encoder {
    pub fn count_parameters(&self) -> usize {
        self.store.count_trainable()
    }

    /// Multiply-accumulates of every conv and linear layer, doubled.
    pub fn count_flops(&self, input_hw: (usize, usize)) -> u64 {
        let mut macs = 0u64;
        let conv = |h: usize, w: usize, cb: &ConvBn, store: &ParamStore, macs: &mut u64| {
            let s = &store.get(cb.conv).value.shape;
            let k = s[2];
            let (ho, wo) = (out_dim(h, k, cb.spec), out_dim(w, k, cb.spec));
            *macs += (s[0] * s[1] * k * k * ho * wo) as u64;
            (ho, wo)
        };
        let (h, w) = conv(input_hw.0, input_hw.1, &self.stem, &self.store, &mut macs);
        let pool = Conv2dSpec { stride: 2, pad: 1 };
        let (mut h, mut w) = (out_dim(h, 3, pool), out_dim(w, 3, pool));
        for blk in &self.blocks {
            let (h1, w1) = conv(h, w, &blk.a, &self.store, &mut macs);
            conv(h1, w1, &blk.b, &self.store, &mut macs);
            if let Some(d) = &blk.down {
                conv(h, w, d, &self.store, &mut macs);
            }
            (h, w) = (h1, w1);
        }
        let hs = &self.store.get(self.head_w).value.shape;
        macs += (hs[0] * hs[1]) as u64;
        2 * macs
    }

    fn conv_bn(&self, g: &mut Graph, store: &ParamStore, x: Var, cb: &ConvBn, mode: Mode, ups: &mut Vec<BnUpdate>) -> Result<Var> {
        let w = g.param(store, cb.conv);
        let y = g.conv2d(x, w, cb.spec)?;
        let gamma = g.param(store, cb.gamma);
        let beta = g.param(store, cb.beta);
        match mode {
            Mode::Eval => {
                let m = &store.get(cb.mean).value.data;
                let v = &store.get(cb.var).value.data;
                Ok(g.batch_norm(y, gamma, beta, Some((m, v)), BN_EPS)?.0)
            }
            Mode::Train => {
                let (out, bm, bv) = g.batch_norm(y, gamma, beta, None, BN_EPS)?;
                let s = &g.value(y).shape;
                ups.push(BnUpdate {
                    mean: cb.mean,
                    var: cb.var,
                    batch_mean: bm,
                    batch_var: bv,
                    count: s[0] * s[2] * s[3],
                });
                Ok(out)
            }
        }
    }

    /// Forward `x[n, 1, mels, frames]` to projections `[n, d]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, mode: Mode) -> Result<(Var, Vec<BnUpdate>)> {
        let mut ups = Vec::new();
        let y = self.conv_bn(g, store, x, &self.stem, mode, &mut ups)?;
        let y = g.relu(y);
        let mut y = g.max_pool2d(y, 3, 2, 1)?;
        for blk in &self.blocks {
            let a = self.conv_bn(g, store, y, &blk.a, mode, &mut ups)?;
            let a = g.relu(a);
            let b = self.conv_bn(g, store, a, &blk.b, mode, &mut ups)?;
            let skip = match &blk.down {
                Some(d) => self.conv_bn(g, store, y, d, mode, &mut ups)?,
                None => y,
            };
            let s = g.add(b, skip)?;
            y = g.relu(s);
        }
        let z = g.global_avg_pool(y)?;
        let w = g.param(store, self.head_w);
        let b = g.param(store, self.head_b);
        let p = g.linear(z, w)?;
        Ok((g.add_bias(p, b)?, ups))
    }

    pub fn apply_bn_updates(&mut self, ups: &[BnUpdate]) {
        for u in ups {
            let unbias = if u.count > 1 { u.count as f64 / (u.count - 1) as f64 } else { 1.0 };
            let m = &mut self.store.get_mut(u.mean).value.data;
            m.iter_mut()
                .zip(&u.batch_mean)
                .for_each(|(r, b)| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b);
            let v = &mut self.store.get_mut(u.var).value.data;
            v.iter_mut()
                .zip(&u.batch_var)
                .for_each(|(r, b)| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * b * unbias);
        }
    }

    /// Log-mel grid of a clip fitted to the configured frame count, as `[mels * frames]`.
    pub fn input_grid(&self, ex: &MelExtractor, clip: &AudioClip) -> Result<Vec<f64>> {
        let clip = at_rate(clip, ex.params().rate)?;
        Ok(ex.log_mel(&clip.samples)?.fit_frames(self.cfg.frames).values)
    }

    fn batch_tensor(&self, grids: Vec<Vec<f64>>) -> Result<Tensor> {
        let n = grids.len();
        Tensor::new(&[n, 1, self.cfg.n_mels, self.cfg.frames], grids.concat())
    }

    /// Eval-mode projections of prepared grids.
    pub fn project(&self, grids: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
        let x = self.batch_tensor(grids)?;
        let mut g = Graph::new();
        let xv = g.input(x);
        let (p, _) = self.forward(&mut g, &self.store, xv, Mode::Eval)?;
        let t = g.value(p);
        Ok((0..t.rows()).map(|r| t.row(r).to_vec()).collect())
    }

    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Result<Checkpoint> {
        Ok(Checkpoint {
            kind: CHECKPOINT_KIND.into(),
            config: serde_json::json!({ "encoder": self.cfg, "features": self.features }),
            extra,
            store: self.store.clone(),
        })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        #[derive(Deserialize)]
        struct Saved {
            encoder: EncoderConfig,
            features: FeatureParams,
        }
        let saved: Saved = ck.config_as(CHECKPOINT_KIND)?;
        let mut enc = build_encoder(&saved.encoder, &saved.features, 0)?;
        enc.store.load_from(&ck.store)?;
        Ok(enc)
    }

    pub fn save(&self, path: &Path, extra: serde_json::Value) -> Result<()> {
        self.to_checkpoint(extra)?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// `(1/N) sum_i |p1_i - p2_i|^2` on graph nodes of shape `[n, d]`.
pub fn contrastive_loss_graph(g: &mut Graph, p1: Var, p2: Var) -> Result<Var> {
    let n = g.value(p1).shape[0] as f64;
    let d = g.sub(p1, p2)?;
    let sq = g.mul(d, d)?;
    let s = g.sum(sq);
    Ok(g.scale(s, 1.0 / n))
}

pub fn contrastive_loss(p1: &[Vec<f64>], p2: &[Vec<f64>]) -> Result<f64> {
    if p1.len() != p2.len() || p1.is_empty() {
        return Err(Error::LengthMismatch {
            left: p1.len(),
            right: p2.len(),
        });
    }
    let mut s = 0.0;
    for (a, b) in p1.iter().zip(p2) {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch {
                left: a.len(),
                right: b.len(),
            });
        }
        s += a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    }
    Ok(s / p1.len() as f64)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb).max(1e-12)
}

/// Mean per-dimension variance across a batch of embeddings.
pub fn embedding_variance(p: &[Vec<f64>]) -> f64 {
    let n = p.len() as f64;
    let d = p.first().map_or(0, Vec::len);
    if d == 0 {
        return 0.0;
    }
    (0..d)
        .map(|k| {
            let m = p.iter().map(|r| r[k]).sum::<f64>() / n;
            p.iter().map(|r| (r[k] - m) * (r[k] - m)).sum::<f64>() / n
        })
        .sum::<f64>()
        / d as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_cossim: f64,
    pub val_cossim: f64,
    /// Collapse monitor: mean per-dimension variance of held-out embeddings.
    pub embed_var: f64,
}

pub fn write_encoder_history(path: &Path, rows: &[EncoderEpoch]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::malformed("csv", e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::malformed("csv", e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One augmented, masked view keyed by (stream, clip, view).
fn view(enc: &Encoder, ex: &MelExtractor, clip: &AudioClip, aug: &AugmentConfig, key: [u64; 3]) -> Result<Vec<f64>> {
    let a = AugmentConfig {
        seed: rng::derive(aug.seed, &key),
        ..*aug
    };
    let v = augment_variant(clip, &a, key[2])?;
    let grid = ex.log_mel(&at_rate(&v, ex.params().rate)?.samples)?.fit_frames(enc.cfg.frames);
    let mask_seed = rng::derive(a.seed, &[tag::MASK, rng::hash_str(&clip.id)]);
    let masked = spec_mask(&grid, aug.freq_mask_max.min(grid.rows), aug.time_mask_max.min(grid.cols), mask_seed)?;
    Ok(masked.values)
}

struct PairStats {
    loss: f64,
    cossim: f64,
    var: f64,
}

fn eval_pairs(enc: &Encoder, ex: &MelExtractor, clips: &[&AudioClip], aug: &AugmentConfig, seed: u64) -> Result<PairStats> {
    let mut v1 = Vec::new();
    let mut v2 = Vec::new();
    for c in clips {
        let h = rng::hash_str(&c.id);
        v1.push(view(enc, ex, c, aug, [seed, h, 0])?);
        v2.push(view(enc, ex, c, aug, [seed, h, 1])?);
    }
    let p1 = enc.project(v1)?;
    let p2 = enc.project(v2)?;
    let cossim = p1.iter().zip(&p2).map(|(a, b)| cosine_similarity(a, b)).sum::<f64>() / p1.len() as f64;
    Ok(PairStats {
        loss: contrastive_loss(&p1, &p2)?,
        cossim,
        var: embedding_variance(&p1),
    })
}

/// Train on labelled clips; a stratified held-out split reports validation metrics.
pub fn train_encoder(
    clips: &[AudioClip],
    cfg: &EncoderConfig,
    features: &FeatureParams,
    aug: &AugmentConfig,
    tc: &EncoderTrainConfig,
) -> Result<(Encoder, Vec<EncoderEpoch>)> {
    if clips.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 clips, got {}", clips.len())));
    }
    aug.validate()?;
    let labels: Vec<ClassLabel> = clips
        .iter()
        .map(|c| c.label.ok_or_else(|| Error::InvalidArgument(format!("clip {} has no label", c.id))))
        .collect::<Result<_>>()?;
    let groups: Vec<&str> = clips.iter().map(|c| source_id(&c.id)).collect();
    let (train_idx, val_idx) = stratified_split(&labels, &groups, tc.val_fraction, tc.seed);
    let (train_idx, val_idx) = if train_idx.is_empty() { (val_idx, Vec::new()) } else { (train_idx, val_idx) };
    let ex = MelExtractor::new(*features)?;
    let mut enc = build_encoder(cfg, features, tc.seed)?;
    let mut adam = Adam::new();
    let mut history = Vec::with_capacity(tc.epochs);
    let batch = tc.batch_size.max(1);
    let val_clips: Vec<&AudioClip> = val_idx.iter().map(|&i| &clips[i]).collect();
    for epoch in 0..tc.epochs {
        let mut order = train_idx.clone();
        {
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng::stream(tc.seed, &[tag::SHUFFLE, epoch as u64]));
        }
        let (mut loss_sum, mut cos_sum, mut steps, mut pairs) = (0.0, 0.0, 0usize, 0usize);
        for chunk in order.chunks(batch) {
            let mut v1 = Vec::with_capacity(chunk.len());
            let mut v2 = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let h = rng::hash_str(&clips[i].id);
                v1.push(view(&enc, &ex, &clips[i], aug, [epoch as u64, h, 0])?);
                v2.push(view(&enc, &ex, &clips[i], aug, [epoch as u64, h, 1])?);
            }
            let mut g = Graph::new();
            let x1 = g.input(enc.batch_tensor(v1)?);
            let x2 = g.input(enc.batch_tensor(v2)?);
            let (p1, mut ups) = enc.forward(&mut g, &enc.store, x1, Mode::Train)?;
            let (p2, ups2) = enc.forward(&mut g, &enc.store, x2, Mode::Train)?;
            ups.extend(ups2);
            let mut loss = contrastive_loss_graph(&mut g, p1, p2)?;
            if tc.uniformity_weight > 0.0 && chunk.len() >= 2 {
                let u = g.neg_mean_log_pair_dist(p1, 1e-8)?;
                let u = g.scale(u, tc.uniformity_weight);
                loss = g.add(loss, u)?;
            }
            let lv = g.value(loss).item();
            if !lv.is_finite() {
                return Err(Error::NonFinite("encoder loss"));
            }
            let (t1, t2) = (g.value(p1), g.value(p2));
            for r in 0..t1.rows() {
                cos_sum += cosine_similarity(t1.row(r), t2.row(r));
            }
            pairs += t1.rows();
            g.backward(loss)?;
            enc.store.zero_grad();
            g.accumulate_param_grads(&mut enc.store);
            adam.step(&mut enc.store, tc.lr);
            enc.apply_bn_updates(&ups);
            loss_sum += lv;
            steps += 1;
        }
        let held = if val_clips.is_empty() {
            PairStats {
                loss: f64::NAN,
                cossim: f64::NAN,
                var: f64::NAN,
            }
        } else {
            eval_pairs(&enc, &ex, &val_clips, aug, u64::MAX)?
        };
        if held.var < 1e-6 {
            log::warn!("epoch {}: held-out embedding variance {:.3e}; representation may be collapsing", epoch + 1, held.var);
        }
        let row = EncoderEpoch {
            epoch: epoch + 1,
            train_loss: loss_sum / steps.max(1) as f64,
            val_loss: held.loss,
            train_cossim: cos_sum / pairs.max(1) as f64,
            val_cossim: held.cossim,
            embed_var: held.var,
        };
        log::info!(
            "encoder epoch {}: loss {:.5} val_loss {:.5} val_cos {:.4}",
            row.epoch,
            row.train_loss,
            row.val_loss,
            row.val_cossim
        );
        history.push(row);
    }
    Ok((enc, history))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub id: String,
    pub label: Option<ClassLabel>,
    pub vector: Vec<f64>,
}

/// One eval-mode embedding per clip, no augmentation.
pub fn embed_clips(enc: &Encoder, clips: &[AudioClip], jobs: usize) -> Result<Vec<Embedding>> {
    let ex = MelExtractor::new(enc.features)?;
    map_ordered(clips, jobs, |c| {
        let grid = enc.input_grid(&ex, c).map_err(|e| e.for_clip(&c.id))?;
        let v = enc.project(vec![grid])?.remove(0);
        Ok(Embedding {
            id: c.id.clone(),
            label: c.label,
            vector: v,
        })
    })
    .into_iter()
    .collect()
}

pub fn write_embeddings_csv(path: &Path, rows: &[Embedding]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::malformed("csv", e))?;
    let d = rows.first().map_or(0, |r| r.vector.len());
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..d).map(|k| format!("e{k}")));
    w.write_record(&header).map_err(|e| Error::malformed("csv", e))?;
    for r in rows {
        let mut rec = vec![r.id.clone(), r.label.map_or(String::new(), |l| l.code().to_string())];
        rec.extend(r.vector.iter().map(|v| format!("{v:e}")));
        w.write_record(&rec).map_err(|e| Error::malformed("csv", e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_embeddings_csv(path: &Path) -> Result<Vec<Embedding>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::malformed("csv", e))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::malformed("csv", e))?;
        let label = if rec[1].is_empty() { None } else { Some(rec[1].parse()?) };
        let vector = rec
            .iter()
            .skip(2)
            .map(|s| s.parse().map_err(|_| Error::malformed("embeddings", format!("bad number {s:?}"))))
            .collect::<Result<_>>()?;
        out.push(Embedding {
            id: rec[0].to_string(),
            label,
            vector,
        });
    }
    Ok(out)
}
