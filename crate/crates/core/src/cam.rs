//! BiLSTM calmness classifier over the 25-value feature vector.

use std::path::Path;
use std::time::Instant;

use rand::distributions::{Distribution, WeightedIndex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureRow, FEATURE_DIM};
use crate::io::ClassLabel;
use crate::numerics::{
    lstm_cell, param_seed, seeded_init, softmax_rows, Adam, Checkpoint, Graph, Init, LstmWeights, ParamId,
    ParamStore, Tensor, Var,
};
use crate::parallel::map_ordered;
use crate::rng::{self, tag};
use crate::split::{source_id, stratified_split};

pub const CHECKPOINT_KIND: &str = "smsat-cam";
const N_CLASSES: usize = 3;

/// How the feature vector is presented to the recurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceMode {
    /// One scalar per step, `input_dim` steps.
    Sequence,
    /// The whole vector as a single step.
    SingleStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CamConfig {
    pub input_dim: usize,
    /// Per direction.
    pub hidden: usize,
    pub fc_dim: usize,
    pub dropout: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub test_fraction: f64,
    pub mode: SequenceMode,
    pub seed: u64,
    /// Record wall time per epoch; off gives byte-identical histories.
    pub record_time: bool,
}

impl Default for CamConfig {
    fn default() -> Self {
        CamConfig {
            input_dim: FEATURE_DIM,
            hidden: 256,
            fc_dim: 128,
            dropout: 0.3,
            lr: 0.005,
            epochs: 350,
            batch_size: 512,
            test_fraction: 0.2,
            mode: SequenceMode::Sequence,
            seed: 7,
            record_time: true,
        }
    }
}

impl CamConfig {
    /// Laptop-sized preset for synthetic corpora.
    pub fn desk() -> Self {
        CamConfig {
            hidden: 32,
            fc_dim: 32,
            epochs: 50,
            batch_size: 32,
            ..CamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("cam config: {m}")));
        if self.input_dim == 0 || self.hidden == 0 || self.fc_dim == 0 || self.batch_size == 0 {
            return bad("dimensions and batch size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} not in [0, 1)", self.dropout));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad(format!("test fraction {} not in [0, 1)", self.test_fraction));
        }
        Ok(())
    }

    fn steps(&self) -> (usize, usize) {
        match self.mode {
            SequenceMode::Sequence => (self.input_dim, 1),
            SequenceMode::SingleStep => (1, self.input_dim),
        }
    }
}

/// `Weight_i = total / count_i`; every count must be positive.
pub fn class_weights(counts: &[usize]) -> Result<Vec<f64>> {
    let total: usize = counts.iter().sum();
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            if c == 0 {
                Err(Error::EmptyClass(format!("class {i} has no samples")))
            } else {
                Ok(total as f64 / c as f64)
            }
        })
        .collect()
}

/// Per-label counts and weights for the classes present in `labels`, in index order.
pub fn label_weights(labels: &[ClassLabel]) -> Result<Vec<(ClassLabel, f64)>> {
    if labels.is_empty() {
        return Err(Error::EmptyClass("no labelled samples".into()));
    }
    let present: Vec<ClassLabel> = ClassLabel::ALL.into_iter().filter(|l| labels.contains(l)).collect();
    let counts: Vec<usize> = present.iter().map(|l| labels.iter().filter(|x| *x == l).count()).collect();
    Ok(present.into_iter().zip(class_weights(&counts)?).collect())
}

/// Indices drawn with replacement, each item weighted by its class weight.
pub fn weighted_sampler(labels: &[ClassLabel], weights: &[(ClassLabel, f64)], n_draws: usize, seed: u64) -> Result<Vec<usize>> {
    if n_draws == 0 {
        return Err(Error::InvalidArgument("n_draws must be >= 1".into()));
    }
    let w: Vec<f64> = labels
        .iter()
        .map(|l| {
            weights
                .iter()
                .find(|(k, _)| k == l)
                .map(|(_, w)| *w)
                .ok_or_else(|| Error::InvalidArgument(format!("no weight for class {l}")))
        })
        .collect::<Result<_>>()?;
    let dist = WeightedIndex::new(&w).map_err(|e| Error::InvalidArgument(format!("sampler weights: {e}")))?;
    let mut r = rng::stream(seed, &[tag::SAMPLER]);
    Ok((0..n_draws).map(|_| dist.sample(&mut r)).collect())
}

#[derive(Debug, Clone, Copy)]
struct Direction {
    w_ih: ParamId,
    w_hh: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone)]
pub struct Cam {
    pub cfg: CamConfig,
    pub store: ParamStore,
    fwd: Direction,
    bwd: Direction,
    fc1_w: ParamId,
    fc1_b: ParamId,
    fc2_w: ParamId,
    fc2_b: ParamId,
    in_mean: ParamId,
    in_std: ParamId,
}

fn direction(store: &mut ParamStore, name: &str, input: usize, hidden: usize, seed: u64) -> Direction {
    let r = Init::Uniform(1.0 / (hidden as f64).sqrt());
    let mut add = |suffix: &str, shape: &[usize]| {
        let n = format!("{name}.{suffix}");
        store.add(&n, seeded_init(shape, r, param_seed(seed, &n)))
    };
    Direction {
        w_ih: add("w_ih", &[4 * hidden, input]),
        w_hh: add("w_hh", &[4 * hidden, hidden]),
        bias: add("bias", &[4 * hidden]),
    }
}

pub fn build_cam(cfg: &CamConfig, seed: u64) -> Result<Cam> {
    cfg.validate()?;
    let (_, step_in) = cfg.steps();
    let mut store = ParamStore::new();
    let fwd = direction(&mut store, "lstm.fwd", step_in, cfg.hidden, seed);
    let bwd = direction(&mut store, "lstm.bwd", step_in, cfg.hidden, seed);
    let mut linear = |name: &str, out: usize, inp: usize| {
        let r = Init::Uniform(1.0 / (inp as f64).sqrt());
        let (wn, bn) = (format!("{name}.w"), format!("{name}.b"));
        let w = store.add(&wn, seeded_init(&[out, inp], r, param_seed(seed, &wn)));
        let b = store.add(&bn, seeded_init(&[out], r, param_seed(seed, &bn)));
        (w, b)
    };
    let (fc1_w, fc1_b) = linear("fc1", cfg.fc_dim, 2 * cfg.hidden);
    let (fc2_w, fc2_b) = linear("fc2", N_CLASSES, cfg.fc_dim);
    let in_mean = store.add_buffer("input.mean", Tensor::zeros(&[cfg.input_dim]));
    let in_std = store.add_buffer("input.std", Tensor::full(&[cfg.input_dim], 1.0));
    Ok(Cam {
        cfg: cfg.clone(),
        store,
        fwd,
        bwd,
        fc1_w,
        fc1_b,
        fc2_w,
        fc2_b,
        in_mean,
        in_std,
    })
}

impl Cam {
    pub fn count_parameters(&self) -> usize {
        self.store.count_trainable()
    }

    fn weights(&self, g: &mut Graph, store: &ParamStore, d: Direction) -> LstmWeights {
        LstmWeights {
            w_ih: g.param(store, d.w_ih),
            w_hh: g.param(store, d.w_hh),
            bias: g.param(store, d.bias),
        }
    }

    /// Final hidden states of both directions, `[n, 2h]`, on already standardized input `[n, input_dim]`.
    pub fn bilstm(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let shape = g.value(x).shape.clone();
        if shape.len() != 2 || shape[1] != self.cfg.input_dim {
            return Err(Error::ShapeMismatch {
                op: "cam input",
                left: shape,
                right: vec![0, self.cfg.input_dim],
            });
        }
        let n = shape[0];
        let (steps, width) = self.cfg.steps();
        let xs: Vec<Var> = (0..steps).map(|t| g.slice_cols(x, t * width, width)).collect::<Result<_>>()?;
        let run = |g: &mut Graph, d: Direction, order: &mut dyn Iterator<Item = usize>| -> Result<Var> {
            let w = self.weights(g, store, d);
            let mut h = g.input(Tensor::zeros(&[n, self.cfg.hidden]));
            let mut c = g.input(Tensor::zeros(&[n, self.cfg.hidden]));
            for t in order {
                (h, c) = lstm_cell(g, xs[t], h, c, &w)?;
            }
            Ok(h)
        };
        let hf = run(g, self.fwd, &mut (0..steps))?;
        let hb = run(g, self.bwd, &mut (0..steps).rev())?;
        g.concat(&[hf, hb])
    }

    /// Logits `[n, 3]`; dropout draws from `rng` only when `train`.
    pub fn logits(&self, g: &mut Graph, store: &ParamStore, x: Var, train: bool, rng: &mut rng::Stream) -> Result<Var> {
        let h = self.bilstm(g, store, x)?;
        let (w1, b1) = (g.param(store, self.fc1_w), g.param(store, self.fc1_b));
        let z = g.linear(h, w1)?;
        let z = g.add_bias(z, b1)?;
        let z = g.relu(z);
        let z = g.dropout(z, self.cfg.dropout, train, rng)?;
        let (w2, b2) = (g.param(store, self.fc2_w), g.param(store, self.fc2_b));
        let z = g.linear(z, w2)?;
        g.add_bias(z, b2)
    }

    /// Stored input standardization applied to raw feature rows.
    pub fn standardize(&self, rows: &[Vec<f64>]) -> Result<Tensor> {
        let d = self.cfg.input_dim;
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::LengthMismatch { left: r.len(), right: d });
        }
        let mean = &self.store.get(self.in_mean).value.data;
        let std = &self.store.get(self.in_std).value.data;
        let data = rows
            .iter()
            .flat_map(|r| r.iter().enumerate().map(|(k, v)| (v - mean[k]) / std[k]))
            .collect();
        Tensor::new(&[rows.len(), d], data)
    }

    fn fit_standardization(&mut self, rows: &[Vec<f64>]) {
        let d = self.cfg.input_dim;
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let std: Vec<f64> = (0..d)
            .map(|k| {
                let s = (rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        self.store.get_mut(self.in_mean).value.data = mean;
        self.store.get_mut(self.in_std).value.data = std;
    }

    /// Eval-mode class probabilities for raw feature rows, in `ClassLabel::ALL` order.
    pub fn predict_proba(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let x = self.standardize(rows)?;
        let mut g = Graph::new();
        let xv = g.input(x);
        let mut unused = rng::stream(0, &[]);
        let z = self.logits(&mut g, &self.store, xv, false, &mut unused)?;
        let p = softmax_rows(&g.value(z).data, N_CLASSES);
        Ok(p.chunks(N_CLASSES).map(<[f64]>::to_vec).collect())
    }

    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<ClassLabel>> {
        Ok(self.predict_proba(rows)?.iter().map(|p| ClassLabel::ALL[argmax(p)]).collect())
    }

    /// Concatenated final hidden states for raw feature rows.
    pub fn hidden_states(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let x = self.standardize(rows)?;
        let mut g = Graph::new();
        let xv = g.input(x);
        let h = self.bilstm(&mut g, &self.store, xv)?;
        let t = g.value(h);
        Ok((0..t.rows()).map(|r| t.row(r).to_vec()).collect())
    }

    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Checkpoint {
        Checkpoint {
            kind: CHECKPOINT_KIND.into(),
            config: serde_json::to_value(&self.cfg).expect("config serializes"),
            extra,
            store: self.store.clone(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let cfg: CamConfig = ck.config_as(CHECKPOINT_KIND)?;
        let mut cam = build_cam(&cfg, 0)?;
        cam.store.load_from(&ck.store)?;
        Ok(cam)
    }

    pub fn save(&self, path: &Path, extra: serde_json::Value) -> Result<()> {
        self.to_checkpoint(extra).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CamEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub acc: f64,
    pub seconds: f64,
}

pub fn write_cam_history(path: &Path, rows: &[CamEpoch]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::malformed("csv", e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::malformed("csv", e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_cam_history(path: &Path) -> Result<Vec<CamEpoch>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::malformed("csv", e))?;
    r.deserialize().map(|row| row.map_err(|e| Error::malformed("cam history", e))).collect()
}

#[derive(Debug, Clone)]
pub struct CamRun {
    pub cam: Cam,
    pub history: Vec<CamEpoch>,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

/// Split, fit the input scaling on the train side, then train with class-balanced draws.
pub fn train_cam(rows: &[FeatureRow], cfg: &CamConfig) -> Result<CamRun> {
    cfg.validate()?;
    if cfg.input_dim != FEATURE_DIM {
        return Err(Error::ConfigMismatch(format!(
            "feature rows have {FEATURE_DIM} values, model expects {}",
            cfg.input_dim
        )));
    }
    let labels: Vec<ClassLabel> = rows.iter().map(|r| r.label).collect();
    for l in ClassLabel::ALL {
        let n = labels.iter().filter(|x| **x == l).count();
        if n == 1 {
            return Err(Error::EmptyClass(format!("class {l} has a single example; need at least 2")));
        }
    }
    let groups: Vec<&str> = rows.iter().map(|r| source_id(&r.id)).collect();
    let (train_idx, test_idx) = stratified_split(&labels, &groups, cfg.test_fraction, cfg.seed);
    for l in ClassLabel::ALL {
        if labels.contains(&l) && !train_idx.iter().any(|&i| labels[i] == l) {
            return Err(Error::EmptyClass(format!("class {l} absent from the training split")));
        }
    }
    if train_idx.is_empty() {
        return Err(Error::EmptyClass("training split is empty".into()));
    }
    let xs: Vec<Vec<f64>> = rows.iter().map(|r| r.values.to_vec()).collect();
    let train_x: Vec<Vec<f64>> = train_idx.iter().map(|&i| xs[i].clone()).collect();
    let train_y: Vec<ClassLabel> = train_idx.iter().map(|&i| labels[i]).collect();

    let mut cam = build_cam(cfg, cfg.seed)?;
    cam.fit_standardization(&train_x);
    let x_all = cam.standardize(&train_x)?;
    let weights = label_weights(&train_y)?;
    let mut adam = Adam::new();
    let mut history = Vec::with_capacity(cfg.epochs);
    let w = cfg.input_dim;
    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        let draws = weighted_sampler(&train_y, &weights, train_y.len(), rng::derive(cfg.seed, &[epoch as u64]))?;
        let mut dropout_rng = rng::stream(cfg.seed, &[tag::DROPOUT, epoch as u64]);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in draws.chunks(cfg.batch_size) {
            let data = chunk.iter().flat_map(|&i| x_all.data[i * w..(i + 1) * w].iter().copied()).collect();
            let targets: Vec<usize> = chunk.iter().map(|&i| train_y[i].index()).collect();
            let mut g = Graph::new();
            let xv = g.input(Tensor::new(&[chunk.len(), w], data)?);
            let z = cam.logits(&mut g, &cam.store, xv, true, &mut dropout_rng)?;
            let loss = g.softmax_cross_entropy(z, &targets)?;
            let lv = g.value(loss).item();
            if !lv.is_finite() {
                return Err(Error::NonFinite("cam loss"));
            }
            let zt = g.value(z);
            correct += (0..zt.rows()).filter(|&r| argmax(zt.row(r)) == targets[r]).count();
            g.backward(loss)?;
            cam.store.zero_grad();
            g.accumulate_param_grads(&mut cam.store);
            adam.step(&mut cam.store, cfg.lr);
            loss_sum += lv * chunk.len() as f64;
        }
        let n = draws.len() as f64;
        let row = CamEpoch {
            epoch: epoch + 1,
            loss: loss_sum / n,
            acc: correct as f64 / n,
            seconds: if cfg.record_time { started.elapsed().as_secs_f64() } else { 0.0 },
        };
        log::info!("cam epoch {}: loss {:.5} acc {:.4}", row.epoch, row.loss, row.acc);
        history.push(row);
    }
    Ok(CamRun {
        cam,
        history,
        train_idx,
        test_idx,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: ClassLabel,
    pub support: usize,
    /// Fraction of this class's examples predicted correctly.
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub labels: Vec<ClassLabel>,
    /// Rows are true classes, columns predictions, both in `labels` order.
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    /// Mean of per-class recalls.
    pub macro_accuracy: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn eval_report(truth: &[ClassLabel], pred: &[ClassLabel]) -> Result<EvalReport> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: truth.len(),
            right: pred.len(),
        });
    }
    let labels = ClassLabel::ALL.to_vec();
    let mut confusion = vec![vec![0usize; N_CLASSES]; N_CLASSES];
    for (t, p) in truth.iter().zip(pred) {
        confusion[t.index()][p.index()] += 1;
    }
    let per_class: Vec<ClassMetrics> = labels
        .iter()
        .map(|&l| {
            let k = l.index();
            let tp = confusion[k][k];
            let support: usize = confusion[k].iter().sum();
            let predicted: usize = confusion.iter().map(|r| r[k]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                label: l,
                support,
                accuracy: recall,
                precision,
                recall,
                f1,
            }
        })
        .collect();
    let correct: usize = (0..N_CLASSES).map(|k| confusion[k][k]).sum();
    let present: Vec<&ClassMetrics> = per_class.iter().filter(|m| m.support > 0).collect();
    let macro_accuracy = if present.is_empty() {
        0.0
    } else {
        present.iter().map(|m| m.recall).sum::<f64>() / present.len() as f64
    };
    Ok(EvalReport {
        labels,
        confusion,
        per_class,
        accuracy: ratio(correct, truth.len()),
        macro_accuracy,
    })
}

pub fn evaluate(cam: &Cam, rows: &[FeatureRow], jobs: usize) -> Result<EvalReport> {
    if cam.cfg.input_dim != FEATURE_DIM {
        return Err(Error::ConfigMismatch(format!(
            "feature rows have {FEATURE_DIM} values, model expects {}",
            cam.cfg.input_dim
        )));
    }
    const CHUNK: usize = 256;
    let chunks: Vec<&[FeatureRow]> = rows.chunks(CHUNK).collect();
    let preds = map_ordered(&chunks, jobs, |c| {
        let xs: Vec<Vec<f64>> = c.iter().map(|r| r.values.to_vec()).collect();
        cam.predict(&xs)
    });
    let mut pred = Vec::with_capacity(rows.len());
    for p in preds {
        pred.extend(p?);
    }
    let truth: Vec<ClassLabel> = rows.iter().map(|r| r.label).collect();
    eval_report(&truth, &pred)
}

pub fn write_confusion_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::malformed("csv", e))?;
    let mut header = vec!["true\\pred".to_string()];
    header.extend(report.labels.iter().map(|l| l.code().to_string()));
    w.write_record(&header).map_err(|e| Error::malformed("csv", e))?;
    for (l, row) in report.labels.iter().zip(&report.confusion) {
        let mut rec = vec![l.code().to_string()];
        rec.extend(row.iter().map(usize::to_string));
        w.write_record(&rec).map_err(|e| Error::malformed("csv", e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
