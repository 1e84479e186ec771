//! End-to-end experiment drivers. Every driver is a pure function of its
//! configuration; when `out_dir` is set, score logs, manifests, the metric
//! report and ROC plots are written there.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cad::{CadModel, FramePair};
use crate::em_filter::{FilterConfig, ScoreRecord};
use crate::error::{Error, Result};
use crate::io::{
    self, load_frame_dataset, render_roc_svg, FrameDataset, MetricReport, ReplicateRow, RocSeries,
};
use crate::metrics::{aggregate, auc, grouped_auc, LabeledScores};
use crate::mixer::{build_stream, partition, LabeledClip, MixConfig, MixedStream, SamplePool, SampleRef};

use super::config::{ExperimentConfig, Mode};
use super::mnist::{MnistAutoencoder, MnistData};
use super::scorer::Scorer;
use super::sprites::{self, BlockMatcher, Motion, SpriteClip};
use super::stream::{attach_labels, bucket_counts, evaluate, run_stream, score_all, BucketCounts, RunMetrics};

/// One plug-and-play replicate: the stream it consumed and its records.
pub struct ReplicateRun {
    pub seed: u64,
    pub stream: MixedStream,
    pub records: Vec<ScoreRecord>,
    pub metrics: RunMetrics,
}

impl ReplicateRun {
    fn row(&self) -> ReplicateRow {
        ReplicateRow {
            seed: self.seed,
            auc: self.metrics.auc,
            auc_flipped: self.metrics.auc_flipped,
            eer: self.metrics.eer,
            samples: self.metrics.samples,
            admitted: self.metrics.admitted,
            errors: self.metrics.errors,
            crossover: self.stream.crossover,
        }
    }
}

/// Builds a stream from `pool` and runs the filtered loop over it.
pub fn plug_and_play_replicate<S, F>(
    scorer: &mut S,
    pool: &SamplePool,
    mix: &MixConfig,
    filter: &FilterConfig,
    fetch: F,
) -> Result<ReplicateRun>
where
    S: Scorer,
    F: Fn(&SampleRef) -> Result<S::Sample>,
{
    let stream = build_stream(pool, mix)?;
    let mut records = run_stream(scorer, stream.samples.iter().map(&fetch), filter)?;
    attach_labels(&mut records, &stream.labels())?;
    let metrics = evaluate(&records)?;
    Ok(ReplicateRun {
        seed: mix.seed,
        stream,
        records,
        metrics,
    })
}

/// Trains once over `train`, then scores `test`.
pub fn train_then_score<S, I, J>(scorer: &mut S, train: I, test: J) -> Result<(usize, Vec<ScoreRecord>)>
where
    S: Scorer,
    I: IntoIterator<Item = Result<S::Sample>>,
    J: IntoIterator<Item = Result<S::Sample>>,
{
    let mut errors = 0;
    for sample in train {
        match scorer.train_step(&sample?) {
            Ok(_) => {}
            Err(e @ Error::Numeric(_)) => {
                log::warn!("training step skipped: {e}");
                errors += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Ok((errors, score_all(scorer, test)?))
}

fn frame_pair(clips: &[FrameClipView<'_>], s: &SampleRef) -> Result<FramePair> {
    let clip = clips
        .get(s.clip as usize)
        .ok_or_else(|| Error::Input(format!("sample refers to unknown clip {}", s.clip)))?;
    let f = s.frame as usize;
    if f == 0 || f >= clip.frames.len() {
        return Err(Error::Input(format!("clip {}: no frame pair ending at {f}", clip.id)));
    }
    FramePair::new(clip.frames[f - 1].clone(), clip.frames[f].clone())
}

struct FrameClipView<'a> {
    id: &'a str,
    frames: &'a [crate::tensor::Tensor],
}

fn views(ds: &FrameDataset) -> Vec<FrameClipView<'_>> {
    ds.clips
        .iter()
        .map(|c| FrameClipView {
            id: &c.id,
            frames: &c.frames,
        })
        .collect()
}

fn labeled_clips(ds: &FrameDataset) -> Vec<LabeledClip> {
    ds.clips
        .iter()
        .map(|c| LabeledClip {
            id: c.id.clone(),
            labels: c.labels.iter().map(|&l| Some(l)).collect(),
        })
        .collect()
}

fn model_for(cfg: &ExperimentConfig, seed: u64) -> Result<CadModel> {
    let g = cfg.data.geometry;
    let mut m = cfg.model.clone();
    m.height = g.height;
    m.width = g.width;
    m.channels = g.channels;
    m.seed = seed;
    CadModel::new(&m)
}

fn require<'a>(p: &'a Option<std::path::PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::Config(format!("data.{what} must be set")))
}

fn replicate_seed(base: u64, r: usize) -> u64 {
    base.wrapping_add(r as u64)
}

fn write_run(dir: &Path, stem: &str, records: &[ScoreRecord], manifest: Option<&[SampleRef]>) -> Result<()> {
    io::write_scores(&dir.join(format!("scores_{stem}.csv")), records)?;
    if let Some(m) = manifest {
        io::write_manifest(&dir.join(format!("manifest_{stem}.csv")), m)?;
    }
    Ok(())
}

fn finish(dir: &Path, report: &MetricReport, series: &[RocSeries]) -> Result<()> {
    report.save(&dir.join("report.toml"))?;
    render_roc_svg(series, &dir.join("roc.svg"))
}

/// Single-epoch training on normal clips, then scoring of a labeled split.
pub fn run_conventional(cfg: &ExperimentConfig) -> Result<MetricReport> {
    let train = load_frame_dataset(
        require(&cfg.data.train_root, "train_root")?,
        cfg.data.train_labels.as_deref(),
        cfg.data.geometry,
    )?;
    let test = load_frame_dataset(require(&cfg.data.root, "root")?, cfg.data.labels.as_deref(), cfg.data.geometry)?;
    for c in &train.clips {
        let n = c.labels.iter().filter(|&&l| l == 1).count();
        if n > 0 {
            log::warn!("training clip {} has {n} frames labeled anomalous", c.id);
        }
    }
    let mut model = model_for(cfg, cfg.seed)?;
    let train_views = views(&train);
    let test_views = views(&test);
    let train_refs = pairs_of(&labeled_clips(&train));
    let test_refs = pairs_of(&labeled_clips(&test));
    let (train_errors, mut records) = train_then_score(
        &mut model,
        train_refs.iter().map(|s| frame_pair(&train_views, s)),
        test_refs.iter().map(|s| frame_pair(&test_views, s)),
    )?;
    attach_labels(&mut records, &test_refs.iter().map(|s| s.label).collect::<Vec<_>>())?;
    let metrics = evaluate(&records)?;
    let mut report = MetricReport {
        name: "conventional".into(),
        auc: metrics.auc,
        eer: metrics.eer,
        samples: records.len(),
        roc: metrics.roc.clone(),
        ..Default::default()
    };
    report.extra.insert("auc_flipped".into(), metrics.auc_flipped);
    report.extra.insert("train_pairs".into(), train_refs.len() as f64);
    report.extra.insert("train_errors".into(), train_errors as f64);
    report.extra.insert("score_errors".into(), metrics.errors as f64);
    if cfg.data.per_clip_auc {
        let groups: Vec<u32> = test_refs.iter().map(|s| s.clip).collect();
        let ls = LabeledScores::new(records.iter().map(|r| r.loss).collect(), test_refs.iter().map(|s| s.label).collect())?;
        report.extra.insert("auc_per_clip".into(), grouped_auc(&ls, &groups)?);
    }
    let dir = &cfg.out_dir;
    write_run(dir, "test", &records, Some(&test_refs))?;
    model.save(&dir.join("model.cadm"))?;
    finish(dir, &report, &[RocSeries::from_curve("conventional", &metrics.roc)])?;
    Ok(report)
}

/// All consecutive-frame pairs of the clips, in clip order.
fn pairs_of(clips: &[LabeledClip]) -> Vec<SampleRef> {
    clips
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| {
            (1..c.labels.len()).map(move |f| SampleRef {
                clip: ci as u32,
                frame: f as u32,
                label: c.labels[f].unwrap_or(0),
            })
        })
        .collect()
}

fn replicate_report(name: &str, runs: &[ReplicateRun]) -> Result<MetricReport> {
    let aucs: Vec<f64> = runs.iter().map(|r| r.metrics.auc).collect();
    let agg = aggregate(&aucs)?;
    let first = &runs[0].metrics;
    let mut report = MetricReport {
        name: name.into(),
        auc: first.auc,
        eer: first.eer,
        samples: first.samples,
        aggregate: Some(agg),
        replicates: runs.iter().map(ReplicateRun::row).collect(),
        roc: first.roc.clone(),
        ..Default::default()
    };
    let flipped: Vec<f64> = runs.iter().map(|r| r.metrics.auc_flipped).collect();
    report.extra.insert("auc_flipped_mean".into(), aggregate(&flipped)?.mean);
    Ok(report)
}

fn series(runs: &[ReplicateRun]) -> Vec<RocSeries> {
    runs.iter()
        .map(|r| RocSeries::from_curve(format!("seed {}", r.seed), &r.metrics.roc))
        .collect()
}

/// Filtered single-pass training and scoring over mixed streams of a labeled
/// frame dataset, repeated over replicates.
pub fn run_plug_and_play(cfg: &ExperimentConfig) -> Result<MetricReport> {
    let ds = load_frame_dataset(require(&cfg.data.root, "root")?, cfg.data.labels.as_deref(), cfg.data.geometry)?;
    let pool = partition(&labeled_clips(&ds))?;
    let total = cfg.mix.total.unwrap_or(pool.normal_count());
    let clip_views = views(&ds);
    let runs = (0..cfg.mix.replicates)
        .into_par_iter()
        .map(|r| {
            let seed = replicate_seed(cfg.seed, r);
            let mix = MixConfig {
                s: cfg.mix.s,
                seed,
                total,
                unit: cfg.mix.unit,
            };
            let mut model = model_for(cfg, seed)?;
            plug_and_play_replicate(&mut model, &pool, &mix, &cfg.filter, |s| frame_pair(&clip_views, s))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = replicate_report("plug_and_play", &runs)?;
    let dir = &cfg.out_dir;
    for (r, run) in runs.iter().enumerate() {
        write_run(dir, &format!("r{r}"), &run.records, Some(&run.stream.samples))?;
    }
    finish(dir, &report, &series(&runs))?;
    Ok(report)
}

/// One (s, filter, replicate) cell of the MNIST experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MnistRow {
    pub s: f64,
    pub filter: bool,
    pub replicate: usize,
    pub seed: u64,
    pub auc: f64,
    pub auc_flipped: f64,
    pub eer: f64,
    pub samples: usize,
    pub anomalous: usize,
    pub admitted: usize,
    pub admitted_anomalous: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MnistBucketRow {
    pub s: f64,
    pub filter: bool,
    pub replicate: usize,
    pub counts: BucketCounts,
}

impl MnistBucketRow {
    // csv cannot serialize flattened structs
    fn flat(&self) -> (f64, bool, usize, BucketCounts) {
        (self.s, self.filter, self.replicate, self.counts)
    }
}

pub struct MnistOutcome {
    pub rows: Vec<MnistRow>,
    pub buckets: Vec<MnistBucketRow>,
    pub report: MetricReport,
}

impl MnistOutcome {
    /// Mean AUC (raw polarity) over replicates of one grid cell.
    pub fn mean_auc(&self, s: f64, filter: bool) -> Option<f64> {
        let v: Vec<f64> = self.cell(s, filter).map(|r| r.auc).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn cell(&self, s: f64, filter: bool) -> impl Iterator<Item = &MnistRow> {
        self.rows.iter().filter(move |r| r.s == s && r.filter == filter)
    }

    pub fn buckets_of(&self, s: f64, filter: bool, replicate: usize) -> Vec<BucketCounts> {
        self.buckets
            .iter()
            .filter(|b| b.s == s && b.filter == filter && b.replicate == replicate)
            .map(|b| b.counts)
            .collect()
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(io::create(path)?);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Input(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn write_buckets(path: &Path, rows: &[MnistBucketRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(io::create(path)?);
    let err = |e: csv::Error| Error::Input(e.to_string());
    w.write_record([
        "s",
        "filter",
        "replicate",
        "bucket",
        "normal_in",
        "anomalous_in",
        "admitted",
        "admitted_normal",
        "admitted_anomalous",
    ])
    .map_err(err)?;
    for r in rows {
        let (s, f, rep, c) = r.flat();
        w.write_record([
            s.to_string(),
            f.to_string(),
            rep.to_string(),
            c.bucket.to_string(),
            c.normal_in.to_string(),
            c.anomalous_in.to_string(),
            c.admitted.to_string(),
            c.admitted_normal.to_string(),
            c.admitted_anomalous.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush()?;
    Ok(())
}

/// Digit-0-versus-digit-1 streams over a grid of anomaly portions, with and
/// without the filter.
pub fn run_mnist_experiment(cfg: &ExperimentConfig) -> Result<MnistOutcome> {
    let m = &cfg.mnist;
    let data = MnistData::load(&m.dir)?;
    let as_refs = |digit: u8, clip: u32| -> Vec<SampleRef> {
        data.indices_of(digit)
            .into_iter()
            .map(|i| SampleRef {
                clip,
                frame: i as u32,
                label: clip as u8,
            })
            .collect()
    };
    let normal = as_refs(m.normal_digit, 0);
    let anomalous = as_refs(m.anomalous_digit, 1);
    if normal.is_empty() || anomalous.is_empty() {
        return Err(Error::Input("MNIST pools must both be nonempty".into()));
    }
    let names = vec![format!("digit{}", m.normal_digit), format!("digit{}", m.anomalous_digit)];
    let pool = SamplePool::from_samples(names, normal, anomalous);
    let total = m.total.unwrap_or(pool.normal_count());
    let filters: &[bool] = if m.compare_unfiltered { &[true, false] } else { &[true] };
    let jobs: Vec<(f64, bool, usize)> = m
        .s_grid
        .iter()
        .flat_map(|&s| filters.iter().flat_map(move |&f| (0..m.replicates).map(move |r| (s, f, r))))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(s, filter_on, r)| {
            let started = Instant::now();
            let seed = replicate_seed(cfg.seed, r);
            let mix = MixConfig {
                s,
                seed,
                total,
                unit: Default::default(),
            };
            let filter = FilterConfig {
                enabled: filter_on,
                ..m.filter
            };
            let mut ae = MnistAutoencoder::new(&super::mnist::AutoencoderConfig {
                seed,
                ..m.autoencoder.clone()
            })?;
            let run = plug_and_play_replicate(&mut ae, &pool, &mix, &filter, |s| Ok(data.image(s.frame as usize)))?;
            log::info!(
                "mnist s={s} filter={filter_on} seed={seed}: auc {:.4} in {:.1}s",
                run.metrics.auc,
                started.elapsed().as_secs_f64()
            );
            Ok(((s, filter_on, r), run))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut buckets = Vec::new();
    for ((s, filter, replicate), run) in &runs {
        let labels = run.stream.labels();
        rows.push(MnistRow {
            s: *s,
            filter: *filter,
            replicate: *replicate,
            seed: run.seed,
            auc: run.metrics.auc,
            auc_flipped: run.metrics.auc_flipped,
            eer: run.metrics.eer,
            samples: run.records.len(),
            anomalous: labels.iter().filter(|&&l| l == 1).count(),
            admitted: run.metrics.admitted,
            admitted_anomalous: run.records.iter().filter(|r| r.admitted && r.label == 1).count(),
        });
        for counts in bucket_counts(&run.records, m.bucket) {
            buckets.push(MnistBucketRow {
                s: *s,
                filter: *filter,
                replicate: *replicate,
                counts,
            });
        }
    }

    let mut report = MetricReport {
        name: "mnist".into(),
        samples: total,
        ..Default::default()
    };
    let mut extra = BTreeMap::new();
    for &s in &m.s_grid {
        for &f in filters {
            let cell: Vec<&MnistRow> = rows.iter().filter(|r| r.s == s && r.filter == f).collect();
            let aucs: Vec<f64> = cell.iter().map(|r| r.auc).collect();
            let flipped: Vec<f64> = cell.iter().map(|r| r.auc_flipped).collect();
            let tag = if f { "filter" } else { "nofilter" };
            extra.insert(format!("auc_{tag}_s{s}"), aggregate(&aucs)?.mean);
            extra.insert(format!("auc_flipped_{tag}_s{s}"), aggregate(&flipped)?.mean);
        }
    }
    report.extra = extra;
    if let Some(((s, f, _), first)) = runs.first() {
        report.auc = first.metrics.auc;
        report.eer = first.metrics.eer;
        report.roc = first.metrics.roc.clone();
        report.extra.insert("first_run_s".into(), *s);
        report.extra.insert("first_run_filter".into(), f64::from(u8::from(*f)));
    }
    report.replicates = runs.iter().map(|(_, r)| r.row()).collect();

    let dir = cfg.out_dir.join("mnist");
    for ((s, f, r), run) in &runs {
        let tag = if *f { "filter" } else { "nofilter" };
        write_run(&dir, &format!("s{s}_{tag}_r{r}"), &run.records, Some(&run.stream.samples))?;
    }
    write_csv(&dir.join("table.csv"), &rows)?;
    write_buckets(&dir.join("buckets.csv"), &buckets)?;
    let roc_series: Vec<RocSeries> = runs
        .iter()
        .filter(|((_, _, r), _)| *r == 0)
        .map(|((s, f, _), run)| {
            RocSeries::from_curve(format!("s={s} {}", if *f { "filter" } else { "no filter" }), &run.metrics.roc)
        })
        .collect();
    finish(&dir, &report, &roc_series)?;
    Ok(MnistOutcome { rows, buckets, report })
}

/// Results of the sprite benchmark beyond the metric report.
pub struct SpriteOutcome {
    pub report: MetricReport,
    pub auc_fast: f64,
    pub auc_sideways: f64,
    pub baseline_auc_fast: f64,
    pub baseline_auc_sideways: f64,
    /// Mean predicted horizontal backward flow over sprite pixels of normal
    /// test pairs (objects moving right give negative values).
    pub mean_flow_x: f64,
    pub test_records: Vec<ScoreRecord>,
    pub model: CadModel,
}

/// AUC of normal pairs against pairs of one anomaly kind.
fn kind_auc(scores: &[f64], kinds: &[Motion], kind: Motion) -> Result<f64> {
    let (s, l): (Vec<f64>, Vec<u8>) = scores
        .iter()
        .zip(kinds)
        .filter(|(_, k)| **k == Motion::Normal || **k == kind)
        .map(|(s, k)| (*s, u8::from(*k == kind)))
        .unzip();
    auc(&LabeledScores::new(s, l)?)
}

pub fn run_sprite_benchmark(cfg: &ExperimentConfig) -> Result<SpriteOutcome> {
    let sc = &cfg.sprites;
    sc.data.validate()?;
    let started = Instant::now();
    let train = sprites::training_clips(&sc.data);
    let test = sprites::test_clips(&sc.data);
    let train_pairs: Vec<FramePair> = train.iter().map(SpriteClip::pairs).collect::<Result<Vec<_>>>()?.concat();
    let mut test_pairs = Vec::new();
    let mut kinds = Vec::new();
    let mut masks = Vec::new();
    for c in &test {
        for (i, p) in c.pairs()?.into_iter().enumerate() {
            test_pairs.push(p);
            kinds.push(c.motion);
            masks.push(c.masks[i + 1].clone());
        }
    }
    let labels: Vec<u8> = kinds.iter().map(|k| u8::from(*k != Motion::Normal)).collect();

    // Reference detector first.
    let bm = BlockMatcher::default();
    let normal_flow = bm.fit(&train_pairs);
    let baseline: Vec<f64> = test_pairs.par_iter().map(|p| bm.score(p, normal_flow)).collect();
    let baseline_auc_fast = kind_auc(&baseline, &kinds, Motion::Fast)?;
    let baseline_auc_sideways = kind_auc(&baseline, &kinds, Motion::Sideways)?;
    log::info!(
        "sprites: baseline normal flow {normal_flow:?}, auc fast {baseline_auc_fast:.4} sideways {baseline_auc_sideways:.4} ({:.1}s)",
        started.elapsed().as_secs_f64()
    );

    let mut mcfg = sc.model.clone();
    mcfg.height = sc.data.height;
    mcfg.width = sc.data.width;
    mcfg.channels = 1;
    mcfg.seed = cfg.seed;
    let mut model = CadModel::new(&mcfg)?;
    let (train_errors, mut records) = train_then_score(
        &mut model,
        train_pairs.iter().cloned().map(Ok),
        test_pairs.iter().cloned().map(Ok),
    )?;
    attach_labels(&mut records, &labels)?;
    let metrics = evaluate(&records)?;
    let scores: Vec<f64> = records.iter().map(|r| r.loss).collect();
    let auc_fast = kind_auc(&scores, &kinds, Motion::Fast)?;
    let auc_sideways = kind_auc(&scores, &kinds, Motion::Sideways)?;
    log::info!(
        "sprites: model auc fast {auc_fast:.4} sideways {auc_sideways:.4} ({:.1}s)",
        started.elapsed().as_secs_f64()
    );

    let (mut flow_sum, mut flow_n) = (0.0, 0usize);
    for ((p, k), mask) in test_pairs.iter().zip(&kinds).zip(&masks) {
        if *k != Motion::Normal {
            continue;
        }
        let flow = model.predict_flow(p.prev())?;
        for (i, &m) in mask.iter().enumerate() {
            if m {
                flow_sum += flow.data()[i] as f64;
                flow_n += 1;
            }
        }
    }
    let mean_flow_x = if flow_n > 0 { flow_sum / flow_n as f64 } else { 0.0 };

    let mut report = MetricReport {
        name: "sprites".into(),
        auc: metrics.auc,
        eer: metrics.eer,
        samples: records.len(),
        roc: metrics.roc.clone(),
        ..Default::default()
    };
    let e = &mut report.extra;
    e.insert("auc_fast".into(), auc_fast);
    e.insert("auc_sideways".into(), auc_sideways);
    e.insert("baseline_auc_fast".into(), baseline_auc_fast);
    e.insert("baseline_auc_sideways".into(), baseline_auc_sideways);
    e.insert("baseline_normal_flow_x".into(), normal_flow.0);
    e.insert("baseline_normal_flow_y".into(), normal_flow.1);
    e.insert("mean_flow_x_moving".into(), mean_flow_x);
    e.insert("train_pairs".into(), train_pairs.len() as f64);
    e.insert("train_errors".into(), train_errors as f64);
    if model.discriminator_params().is_some() {
        let (mut real, mut fake, mut n) = (0.0, 0.0, 0.0);
        for (p, k) in test_pairs.iter().zip(&kinds) {
            if *k != Motion::Normal {
                continue;
            }
            let pass = model.pass(p)?;
            let mean = |t: &crate::tensor::Tensor| t.data().iter().map(|&v| v as f64).sum::<f64>() / t.numel() as f64;
            real += mean(&model.discriminate(p.curr())?);
            fake += mean(&model.discriminate(&pass.predicted())?);
            n += 1.0;
        }
        e.insert("mean_d_real".into(), real / n);
        e.insert("mean_d_generated".into(), fake / n);
    }

    let mut roc = vec![RocSeries::from_curve("CAD", &metrics.roc)];
    let base_ls = LabeledScores::new(baseline.clone(), labels.clone())?;
    roc.push(RocSeries::from_curve("block matching", &crate::metrics::roc_curve(&base_ls)?));

    let dir = cfg.out_dir.join("sprites");
    if sc.plug_and_play {
        let runs = sprite_plug_and_play(cfg, &train)?;
        let aucs: Vec<f64> = runs.iter().map(|r| r.metrics.auc).collect();
        report.aggregate = Some(aggregate(&aucs)?);
        report.replicates = runs.iter().map(ReplicateRun::row).collect();
        for (r, run) in runs.iter().enumerate() {
            write_run(&dir, &format!("pnp_r{r}"), &run.records, Some(&run.stream.samples))?;
        }
        roc.extend(series(&runs).into_iter().map(|mut s| {
            s.label = format!("plug-and-play {}", s.label);
            s
        }));
    }
    write_run(&dir, "test", &records, None)?;
    finish(&dir, &report, &roc)?;
    log::info!("sprites: done in {:.1}s", started.elapsed().as_secs_f64());
    Ok(SpriteOutcome {
        report,
        auc_fast,
        auc_sideways,
        baseline_auc_fast,
        baseline_auc_sideways,
        mean_flow_x,
        test_records: records,
        model,
    })
}

/// Mixed stream of normal training clips and freshly generated anomalous
/// clips, run through the filtered loop.
fn sprite_plug_and_play(cfg: &ExperimentConfig, normal: &[SpriteClip]) -> Result<Vec<ReplicateRun>> {
    let sc = &cfg.sprites;
    let anomalous: Vec<SpriteClip> = (0..sc.data.train_clips as u64)
        .map(|i| {
            let motion = if i % 2 == 0 { Motion::Fast } else { Motion::Sideways };
            sprites::generate_clip(&sc.data, 3, i, motion, sc.data.test_frames)
        })
        .collect();
    let clips: Vec<&SpriteClip> = normal.iter().chain(&anomalous).collect();
    let labeled: Vec<LabeledClip> = clips
        .iter()
        .enumerate()
        .map(|(i, c)| LabeledClip {
            id: format!("sprite{i}"),
            labels: vec![Some(c.label()); c.frames.len()],
        })
        .collect();
    let pool = partition(&labeled)?;
    let total = cfg.mix.total.unwrap_or(pool.normal_count());
    let fetch = |s: &SampleRef| {
        let c = clips[s.clip as usize];
        FramePair::new(c.frames[s.frame as usize - 1].clone(), c.frames[s.frame as usize].clone())
    };
    (0..cfg.mix.replicates)
        .into_par_iter()
        .map(|r| {
            let seed = replicate_seed(cfg.seed, r);
            let mut mcfg = sc.model.clone();
            mcfg.height = sc.data.height;
            mcfg.width = sc.data.width;
            mcfg.channels = 1;
            mcfg.seed = seed;
            let mut model = CadModel::new(&mcfg)?;
            let mix = MixConfig {
                s: cfg.mix.s,
                seed,
                total,
                unit: cfg.mix.unit,
            };
            plug_and_play_replicate(&mut model, &pool, &mix, &cfg.filter, fetch)
        })
        .collect()
}

/// Mixed streams (one per replicate) over the labeled clips of `data.root`,
/// written as manifests without running any scorer.
pub fn run_mix(cfg: &ExperimentConfig) -> Result<Vec<MixedStream>> {
    let ds = io::index_frame_dataset(require(&cfg.data.root, "root")?, cfg.data.labels.as_deref())?;
    let pool = partition(&labeled_clips(&ds))?;
    let total = cfg.mix.total.unwrap_or(pool.normal_count());
    let mut out = Vec::new();
    for r in 0..cfg.mix.replicates {
        let mix = MixConfig {
            s: cfg.mix.s,
            seed: replicate_seed(cfg.seed, r),
            total,
            unit: cfg.mix.unit,
        };
        let stream = build_stream(&pool, &mix)?;
        io::write_manifest(&cfg.out_dir.join(format!("manifest_r{r}.csv")), &stream.samples)?;
        if let Some(c) = stream.crossover {
            log::warn!("replicate {r}: a pool ran out at sample {c}; the rest is drawn from the other pool");
        }
        out.push(stream);
    }
    Ok(out)
}

/// Dispatches on `cfg.mode`.
pub fn run(cfg: &ExperimentConfig) -> Result<MetricReport> {
    match cfg.mode {
        Mode::Conventional => run_conventional(cfg),
        Mode::PlugAndPlay => run_plug_and_play(cfg),
        Mode::Mnist => Ok(run_mnist_experiment(cfg)?.report),
        Mode::Sprites => Ok(run_sprite_benchmark(cfg)?.report),
    }
}
