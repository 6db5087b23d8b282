//! `smsat` command-line front end.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::augment::{augment_pipeline, AugmentConfig};
use crate::cam::{evaluate, train_cam, write_cam_history, write_confusion_csv, Cam, CamConfig, EvalReport};
use crate::embedding::{class_geometry, tsne, write_tsne_csv, TsneConfig};
use crate::encoder::{
    embed_clips, read_embeddings_csv, train_encoder, write_embeddings_csv, write_encoder_history, Encoder,
    EncoderConfig, EncoderEpoch, EncoderTrainConfig,
};
use crate::error::Error;
use crate::features::{extract_features, read_features_csv, write_features_csv, FeatureParams, FeatureRow, MelExtractor};
use crate::io::{build_manifest, save_wav, synth_corpus, AudioClip, ClassDirMap, CorpusManifest, ManifestEntry, SynthConfig};
use crate::numerics::Checkpoint;
use crate::parallel::map_ordered;
use crate::plot::{line_chart, scatter_chart};
use crate::stats::{calmness_from_rows, write_calmness_csv};
use crate::validation::{validate_corpus, TheoreticalModel};

pub const OUT_ENV: &str = "SMSAT_OUT";
const DEFAULT_OUT: &str = "smsat-out";

#[derive(Debug, Parser)]
#[command(name = "smsat", version, about = "Acoustic time-series validation, features, encoder, CAM and calmness statistics")]
pub struct Cli {
    /// JSON run configuration; absent keys take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory (falls back to $SMSAT_OUT, then ./smsat-out).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Write 0 for epoch wall time so histories are byte-reproducible.
    #[arg(long, global = true)]
    pub no_timing: bool,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic three-class corpus to <out>/corpus.
    Synth {
        /// Clips per class.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        snr_db: Option<f64>,
        #[arg(long)]
        noise_sigma: Option<f64>,
    },
    /// Envelope reconstruction RMSE per clip and class.
    Validate { corpus: Option<PathBuf> },
    /// Write originals plus augmented variants to <out>/augmented.
    Augment { corpus: Option<PathBuf> },
    /// 25-value descriptor per clip to <out>/features.csv.
    Features { corpus: Option<PathBuf> },
    TrainEncoder { corpus: Option<PathBuf> },
    Embed {
        corpus: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Class geometry and t-SNE of an embeddings CSV.
    EvalEmbeddings {
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    TrainCam {
        #[arg(long)]
        features: Option<PathBuf>,
    },
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// ANOVA, Welch tests and the calmest-class vote.
    Calmness {
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// Redraw plots and summarize whatever artifacts exist in the output directory.
    Report {
        #[arg(long)]
        print_default_config: bool,
        /// With --print-default-config: the laptop-scale preset.
        #[arg(long)]
        desk: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_root: Option<PathBuf>,
    pub class_dirs: ClassDirMap,
    pub synth: SynthConfig,
    pub validation: TheoreticalModel,
    pub features: FeatureParams,
    pub augment: AugmentConfig,
    pub encoder: EncoderConfig,
    pub encoder_train: EncoderTrainConfig,
    pub cam: CamConfig,
    pub tsne: TsneConfig,
    /// Applied to every nested seed when set.
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus_root: None,
            class_dirs: ClassDirMap::default(),
            synth: SynthConfig::default(),
            validation: TheoreticalModel::default(),
            features: FeatureParams::default(),
            augment: AugmentConfig::default(),
            encoder: EncoderConfig::default(),
            encoder_train: EncoderTrainConfig::default(),
            cam: CamConfig::default(),
            tsne: TsneConfig::default(),
            seed: None,
        }
    }
}

impl RunConfig {
    /// Width-1/8 encoder and the small CAM preset.
    pub fn desk() -> Self {
        RunConfig {
            encoder: EncoderConfig {
                width_scale: 0.125,
                ..EncoderConfig::default()
            },
            cam: CamConfig::desk(),
            ..RunConfig::default()
        }
    }

    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.synth.seed = seed;
        self.augment.seed = seed;
        self.encoder_train.seed = seed;
        self.cam.seed = seed;
        self.tsne.seed = seed;
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Domain(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    jobs: usize,
    timing: bool,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Domain(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, text: &str) -> CliResult<PathBuf> {
        let p = self.path(name);
        std::fs::write(&p, text).map_err(|e| io_err(&p, e))?;
        Ok(p)
    }

    fn write_json<T: Serialize>(&self, name: &str, v: &T) -> CliResult<PathBuf> {
        let text = serde_json::to_string_pretty(v).expect("artifact serializes") + "\n";
        self.write(name, &text)
    }

    /// Record produced files in `<out>/artifacts.json`, keyed by command.
    fn record(&self, command: &str, files: &[PathBuf]) -> CliResult<()> {
        let index = self.path("artifacts.json");
        let mut all: BTreeMap<String, Vec<String>> = match std::fs::read_to_string(&index) {
            Ok(t) => serde_json::from_str(&t).unwrap_or_default(),
            Err(_) => BTreeMap::new(),
        };
        let rel = files
            .iter()
            .map(|f| f.strip_prefix(&self.out).unwrap_or(f).to_string_lossy().replace('\\', "/"))
            .collect();
        all.insert(command.to_string(), rel);
        self.write_json("artifacts.json", &all)?;
        for f in files {
            log::info!("wrote {}", f.display());
        }
        Ok(())
    }

    fn corpus_arg(&self, arg: Option<PathBuf>) -> PathBuf {
        arg.or_else(|| self.cfg.corpus_root.clone()).unwrap_or_else(|| self.path("corpus"))
    }

    fn open_corpus(&self, path: &Path) -> CliResult<CorpusManifest> {
        let m = if path.is_file() {
            CorpusManifest::load(path)?
        } else if path.join("manifest.json").is_file() {
            CorpusManifest::load(&path.join("manifest.json"))?
        } else if path.is_dir() {
            build_manifest(path, &self.cfg.class_dirs)?
        } else {
            return Err(CliError::Usage(format!(
                "corpus {} not found; pass a corpus path or set `corpus_root` in the config",
                path.display()
            )));
        };
        if m.is_empty() {
            return Err(Error::EmptyCorpus(path.to_path_buf()).into());
        }
        Ok(m)
    }

    fn load_clips(&self, m: &CorpusManifest) -> CliResult<Vec<AudioClip>> {
        Ok(map_ordered(&m.entries, self.jobs, |e| m.load_clip(e)).into_iter().collect::<Result<_, _>>()?)
    }

    fn features_arg(&self, arg: Option<PathBuf>) -> CliResult<Vec<FeatureRow>> {
        let p = arg.unwrap_or_else(|| self.path("features.csv"));
        if !p.is_file() {
            return Err(CliError::Usage(format!("features file {} not found; run `features` first", p.display())));
        }
        Ok(read_features_csv(&p)?)
    }
}

fn history_series<T>(rows: &[T], x: impl Fn(&T) -> f64, y: impl Fn(&T) -> f64) -> Vec<(f64, f64)> {
    rows.iter().map(|r| (x(r), y(r))).collect()
}

fn encoder_plots(ctx: &Ctx, h: &[EncoderEpoch]) -> CliResult<Vec<PathBuf>> {
    let ep = |r: &EncoderEpoch| r.epoch as f64;
    let loss = line_chart(
        "Encoder contrastive loss",
        "epoch",
        "loss",
        &[
            ("train".into(), history_series(h, ep, |r| r.train_loss)),
            ("validation".into(), history_series(h, ep, |r| r.val_loss)),
        ],
    );
    let cos = line_chart(
        "Positive-pair cosine similarity",
        "epoch",
        "cosine similarity",
        &[
            ("train".into(), history_series(h, ep, |r| r.train_cossim)),
            ("validation".into(), history_series(h, ep, |r| r.val_cossim)),
        ],
    );
    Ok(vec![ctx.write("encoder_loss.svg", &loss)?, ctx.write("encoder_cossim.svg", &cos)?])
}

fn cam_plots(ctx: &Ctx, h: &[crate::cam::CamEpoch]) -> CliResult<Vec<PathBuf>> {
    let ep = |r: &crate::cam::CamEpoch| r.epoch as f64;
    let one = |name: &str, title: &str, y: &dyn Fn(&crate::cam::CamEpoch) -> f64| {
        line_chart(title, "epoch", name, &[(name.to_string(), history_series(h, ep, y))])
    };
    Ok(vec![
        ctx.write("cam_loss.svg", &one("loss", "CAM training loss", &|r| r.loss))?,
        ctx.write("cam_accuracy.svg", &one("accuracy", "CAM training accuracy", &|r| r.acc))?,
        ctx.write("cam_epoch_time.svg", &one("seconds", "CAM epoch time", &|r| r.seconds))?,
    ])
}

fn tsne_plot(ctx: &Ctx, csv_path: &Path) -> CliResult<PathBuf> {
    let mut r = csv::Reader::from_path(csv_path).map_err(|e| Error::malformed(csv_path.display().to_string(), e))?;
    let mut pts = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::malformed(csv_path.display().to_string(), e))?;
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::malformed(csv_path.display().to_string(), e));
        let label = if rec[1].is_empty() { None } else { Some(rec[1].parse()?) };
        pts.push((num(&rec[2])?, num(&rec[3])?, label));
    }
    ctx.write("tsne.svg", &scatter_chart("t-SNE embedding with class centroids", &pts))
}

fn cmd_synth(ctx: &Ctx, n: Option<usize>, duration: Option<f64>, snr_db: Option<f64>, noise: Option<f64>) -> CliResult<()> {
    let mut cfg = ctx.cfg.synth.clone();
    if let Some(n) = n {
        cfg.n_per_class = n;
    }
    if let Some(d) = duration {
        cfg.duration_s = d;
    }
    if snr_db.is_some() {
        cfg.snr_db = snr_db;
    }
    if let Some(s) = noise {
        cfg.noise_sigma = s;
    }
    let dir = ctx.path("corpus");
    let m = synth_corpus(&dir, &cfg)?;
    let mut files: Vec<PathBuf> = m.entries.iter().map(|e| m.resolve(e)).collect();
    files.push(dir.join("manifest.json"));
    println!("synthesized {} clips under {}", m.len(), dir.display());
    ctx.record("synth", &files)
}

fn cmd_validate(ctx: &Ctx, corpus: Option<PathBuf>) -> CliResult<()> {
    let m = ctx.open_corpus(&ctx.corpus_arg(corpus))?;
    let rep = validate_corpus(&m, &ctx.cfg.validation, ctx.jobs)?;
    let files = vec![ctx.write("validation.json", &rep.to_json())?, ctx.write("validation.csv", &rep.to_csv())?];
    for (l, s) in &rep.per_class {
        println!("{l}: n={} mean RMSE {:.6}", s.n, s.rmse_mean);
    }
    ctx.record("validate", &files)
}

fn cmd_augment(ctx: &Ctx, corpus: Option<PathBuf>) -> CliResult<()> {
    let m = ctx.open_corpus(&ctx.corpus_arg(corpus))?;
    let dir = ctx.path("augmented");
    let aug = ctx.cfg.augment;
    let written = map_ordered(&m.entries, ctx.jobs, |e| -> crate::Result<Vec<ManifestEntry>> {
        let clip = m.load_clip(e)?;
        let mut all = vec![clip.clone()];
        all.extend(augment_pipeline(&clip, &aug).map_err(|err| err.for_clip(&clip.id))?);
        all.iter()
            .map(|c| {
                let rel = format!("{}.wav", c.id);
                save_wav(c, &dir.join(&rel))?;
                Ok(ManifestEntry {
                    path: rel,
                    label: e.label,
                    duration_s: c.duration_s(),
                    rate: c.rate,
                })
            })
            .collect()
    });
    let mut entries = Vec::new();
    for w in written {
        entries.extend(w?);
    }
    let out = CorpusManifest::new(&dir, entries);
    out.save(&dir.join("manifest.json"))?;
    let mut files: Vec<PathBuf> = out.entries.iter().map(|e| out.resolve(e)).collect();
    files.push(dir.join("manifest.json"));
    println!("{} source clips -> {} clips under {}", m.len(), out.len(), dir.display());
    ctx.record("augment", &files)
}

fn cmd_features(ctx: &Ctx, corpus: Option<PathBuf>) -> CliResult<()> {
    let path = corpus.unwrap_or_else(|| {
        let aug = ctx.path("augmented");
        if aug.join("manifest.json").is_file() {
            aug
        } else {
            ctx.corpus_arg(None)
        }
    });
    let m = ctx.open_corpus(&path)?;
    let ex = MelExtractor::new(ctx.cfg.features)?;
    let rows = map_ordered(&m.entries, ctx.jobs, |e| -> crate::Result<FeatureRow> {
        let clip = m.load_clip(e)?;
        let v = extract_features(&clip, &ex).map_err(|err| err.for_clip(&clip.id))?;
        Ok(FeatureRow {
            id: clip.id.clone(),
            label: e.label,
            values: v.0,
        })
    })
    .into_iter()
    .collect::<crate::Result<Vec<_>>>()?;
    let p = ctx.path("features.csv");
    write_features_csv(&p, &rows)?;
    println!("{} feature rows -> {}", rows.len(), p.display());
    ctx.record("features", &[p])
}

fn cmd_train_encoder(ctx: &Ctx, corpus: Option<PathBuf>) -> CliResult<()> {
    let m = ctx.open_corpus(&ctx.corpus_arg(corpus))?;
    let clips = ctx.load_clips(&m)?;
    let c = &ctx.cfg;
    let (enc, hist) = train_encoder(&clips, &c.encoder, &c.features, &c.augment, &c.encoder_train)?;
    let ck = ctx.path("encoder.ck");
    enc.save(&ck, serde_json::json!({ "parameters": enc.count_parameters() }))?;
    let h = ctx.path("encoder_history.csv");
    write_encoder_history(&h, &hist)?;
    let mut files = vec![ck, h];
    files.extend(encoder_plots(ctx, &hist)?);
    if let Some(last) = hist.last() {
        println!(
            "encoder: {} parameters, epoch {} val loss {:.5} val cosine {:.4}",
            enc.count_parameters(),
            last.epoch,
            last.val_loss,
            last.val_cossim
        );
    }
    ctx.record("train-encoder", &files)
}

fn cmd_embed(ctx: &Ctx, corpus: Option<PathBuf>, checkpoint: Option<PathBuf>) -> CliResult<()> {
    let ck = checkpoint.unwrap_or_else(|| ctx.path("encoder.ck"));
    let enc = Encoder::load(&ck)?;
    let m = ctx.open_corpus(&ctx.corpus_arg(corpus))?;
    let clips = ctx.load_clips(&m)?;
    let emb = embed_clips(&enc, &clips, ctx.jobs)?;
    let p = ctx.path("embeddings.csv");
    write_embeddings_csv(&p, &emb)?;
    println!("{} embeddings -> {}", emb.len(), p.display());
    ctx.record("embed", &[p])
}

fn cmd_eval_embeddings(ctx: &Ctx, embeddings: Option<PathBuf>) -> CliResult<()> {
    let p = embeddings.unwrap_or_else(|| ctx.path("embeddings.csv"));
    if !p.is_file() {
        return Err(CliError::Usage(format!("embeddings file {} not found; run `embed` first", p.display())));
    }
    let emb = read_embeddings_csv(&p)?;
    let geo = class_geometry(&emb)?;
    let mut files = vec![ctx.write("embedding_geometry.json", &(geo.to_json() + "\n"))?];
    let n = emb.len();
    if n >= 5 {
        let mut cfg = ctx.cfg.tsne.clone();
        let cap = (n as f64 - 1.0) / 3.0;
        if cfg.perplexity > cap {
            log::warn!("perplexity {} too large for {n} points; using {cap:.3}", cfg.perplexity);
            cfg.perplexity = cap;
        }
        let x: Vec<Vec<f64>> = emb.iter().map(|e| e.vector.clone()).collect();
        let res = tsne(&x, &cfg)?;
        let t = ctx.path("tsne.csv");
        write_tsne_csv(&t, &emb, &res.points)?;
        let kl: String = std::iter::once("iteration,kl\n".to_string())
            .chain(res.kl_history.iter().enumerate().map(|(i, v)| format!("{i},{v:e}\n")))
            .collect();
        files.push(ctx.write("tsne_kl.csv", &kl)?);
        files.push(tsne_plot(ctx, &t)?);
        files.push(t);
    } else {
        log::warn!("t-SNE skipped: {n} points, need at least 5");
    }
    for (i, a) in geo.classes.iter().enumerate() {
        for (j, b) in geo.classes.iter().enumerate().skip(i + 1) {
            println!("{a} vs {b}: centroid distance^2 {:.4}, separability {:.4}", geo.inter_sq[i][j], geo.separability[i][j]);
        }
    }
    ctx.record("eval-embeddings", &files)
}

fn cmd_train_cam(ctx: &Ctx, features: Option<PathBuf>) -> CliResult<()> {
    let rows = ctx.features_arg(features)?;
    let cfg = CamConfig {
        record_time: ctx.cfg.cam.record_time && ctx.timing,
        ..ctx.cfg.cam.clone()
    };
    let run = train_cam(&rows, &cfg)?;
    let ids = |idx: &[usize]| idx.iter().map(|&i| rows[i].id.clone()).collect::<Vec<_>>();
    let ck = ctx.path("cam.ck");
    run.cam.save(
        &ck,
        serde_json::json!({ "train_ids": ids(&run.train_idx), "test_ids": ids(&run.test_idx) }),
    )?;
    let h = ctx.path("cam_history.csv");
    write_cam_history(&h, &run.history)?;
    let mut files = vec![ck, h];
    files.extend(cam_plots(ctx, &run.history)?);
    if let Some(last) = run.history.last() {
        println!(
            "cam: {} parameters, epoch {} loss {:.5} train acc {:.4}",
            run.cam.count_parameters(),
            last.epoch,
            last.loss,
            last.acc
        );
    }
    ctx.record("train-cam", &files)
}

fn print_eval(name: &str, r: &EvalReport) {
    println!("{name}: accuracy {:.4} (macro {:.4})", r.accuracy, r.macro_accuracy);
    for m in &r.per_class {
        println!(
            "  {}: support {} precision {:.4} recall {:.4} f1 {:.4}",
            m.label, m.support, m.precision, m.recall, m.f1
        );
    }
}

fn cmd_evaluate(ctx: &Ctx, checkpoint: Option<PathBuf>, features: Option<PathBuf>) -> CliResult<()> {
    let ck_path = checkpoint.unwrap_or_else(|| ctx.path("cam.ck"));
    let ck = Checkpoint::load(&ck_path)?;
    let cam = Cam::from_checkpoint(&ck)?;
    let rows = ctx.features_arg(features)?;
    let ids = |key: &str| -> Option<Vec<String>> { serde_json::from_value(ck.extra.get(key)?.clone()).ok() };
    let mut splits: Vec<(&str, Vec<FeatureRow>)> = Vec::new();
    match (ids("train_ids"), ids("test_ids")) {
        (Some(tr), Some(te)) => {
            let pick = |set: &[String]| rows.iter().filter(|r| set.contains(&r.id)).cloned().collect::<Vec<_>>();
            splits.push(("train", pick(&tr)));
            splits.push(("test", pick(&te)));
        }
        _ => splits.push(("all", rows)),
    }
    let mut files = Vec::new();
    let mut summary = BTreeMap::new();
    for (name, part) in splits {
        if part.is_empty() {
            log::warn!("{name} split has no rows in the features file");
            continue;
        }
        let rep = evaluate(&cam, &part, ctx.jobs)?;
        print_eval(name, &rep);
        files.push(ctx.write_json(&format!("eval_{name}.json"), &rep)?);
        let c = ctx.path(&format!("confusion_{name}.csv"));
        write_confusion_csv(&c, &rep)?;
        files.push(c);
        summary.insert(name, rep.accuracy);
    }
    if summary.is_empty() {
        return Err(Error::EmptyCorpus(ck_path).into());
    }
    ctx.record("evaluate", &files)
}

fn cmd_calmness(ctx: &Ctx, features: Option<PathBuf>) -> CliResult<()> {
    let rows = ctx.features_arg(features)?;
    let rep = calmness_from_rows(&rows, ctx.jobs)?;
    let csv = ctx.path("calmness.csv");
    write_calmness_csv(&csv, &rep)?;
    let files = vec![ctx.write_json("calmness.json", &rep)?, csv];
    let tally: Vec<String> = rep.vote.tally.iter().map(|(l, c)| format!("{l}:{c}")).collect();
    println!(
        "calmest by vote: {}{} ({})",
        rep.vote.winner.label,
        if rep.vote.winner.tie { " (tie)" } else { "" },
        tally.join(" ")
    );
    ctx.record("calmness", &files)
}

fn read_json(path: &Path) -> Option<serde_json::Value> {
    serde_json::from_str(&std::fs::read_to_string(path).ok()?).ok()
}

fn cmd_report(ctx: &Ctx) -> CliResult<()> {
    let mut files = Vec::new();
    let mut summary = serde_json::Map::new();
    let enc_hist = ctx.path("encoder_history.csv");
    if enc_hist.is_file() {
        let mut r = csv::Reader::from_path(&enc_hist).map_err(|e| Error::malformed("encoder history", e))?;
        let h: Vec<EncoderEpoch> = r
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::malformed("encoder history", e))?;
        files.extend(encoder_plots(ctx, &h)?);
        if let Some(last) = h.last() {
            summary.insert("encoder_final".into(), serde_json::to_value(last).expect("json"));
        }
    }
    let cam_hist = ctx.path("cam_history.csv");
    if cam_hist.is_file() {
        let h = crate::cam::read_cam_history(&cam_hist)?;
        files.extend(cam_plots(ctx, &h)?);
        if let Some(last) = h.last() {
            summary.insert("cam_final".into(), serde_json::to_value(last).expect("json"));
        }
    }
    let t = ctx.path("tsne.csv");
    if t.is_file() {
        files.push(tsne_plot(ctx, &t)?);
    }
    if let Some(v) = read_json(&ctx.path("validation.json")) {
        summary.insert("validation_per_class".into(), v["per_class"].clone());
    }
    for split in ["train", "test", "all"] {
        if let Some(v) = read_json(&ctx.path(&format!("eval_{split}.json"))) {
            summary.insert(format!("cam_{split}_accuracy"), v["accuracy"].clone());
        }
    }
    if let Some(v) = read_json(&ctx.path("calmness.json")) {
        summary.insert("calmness_vote".into(), v["vote"].clone());
    }
    if let Some(v) = read_json(&ctx.path("embedding_geometry.json")) {
        summary.insert("embedding_separability".into(), v["separability"].clone());
    }
    files.push(ctx.write_json("report.json", &summary)?);
    println!("report: {} sections, {} files", summary.len(), files.len());
    ctx.record("report", &files)
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Command::Report {
        print_default_config: true,
        desk,
    } = cli.command
    {
        let cfg = if desk { RunConfig::desk() } else { RunConfig::default() };
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return Ok(());
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed.or(cfg.seed) {
        cfg.apply_seed(s);
    }
    let out = out_dir(cli.out);
    std::fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    let ctx = Ctx {
        cfg,
        out,
        jobs: cli.jobs.max(1),
        timing: !cli.no_timing,
    };
    match cli.command {
        Command::Synth {
            n,
            duration,
            snr_db,
            noise_sigma,
        } => cmd_synth(&ctx, n, duration, snr_db, noise_sigma),
        Command::Validate { corpus } => cmd_validate(&ctx, corpus),
        Command::Augment { corpus } => cmd_augment(&ctx, corpus),
        Command::Features { corpus } => cmd_features(&ctx, corpus),
        Command::TrainEncoder { corpus } => cmd_train_encoder(&ctx, corpus),
        Command::Embed { corpus, checkpoint } => cmd_embed(&ctx, corpus, checkpoint),
        Command::EvalEmbeddings { embeddings } => cmd_eval_embeddings(&ctx, embeddings),
        Command::TrainCam { features } => cmd_train_cam(&ctx, features),
        Command::Evaluate { checkpoint, features } => cmd_evaluate(&ctx, checkpoint, features),
        Command::Calmness { features } => cmd_calmness(&ctx, features),
        Command::Report { .. } => cmd_report(&ctx),
    }
}

/// Parse, run and map the outcome to an exit code (0 ok, 1 domain error, 2 usage error).
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_env("SMSAT_LOG").try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            e.exit_code()
        }
    }
}
