//! Builds evaluation streams that interleave normal and anomalous samples
//! at a requested anomaly portion `s`, drawing without replacement.
//!
//! At each step a uniform `r` is drawn; `r < s` takes an unconsumed
//! anomalous sample, otherwise an unconsumed normal one. When the chosen
//! pool is empty the mixer falls back to the other pool and remembers where
//! that first happened.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One consecutive-frame pair: `frame` is the index of the current frame
/// inside clip number `clip`; the previous frame is `frame - 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SampleRef {
    pub clip: u32,
    pub frame: u32,
    pub label: u8,
}

/// A labeled sequence as seen by the mixer. `None` marks an unlabeled frame.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledClip {
    pub id: String,
    pub labels: Vec<Option<u8>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixUnit {
    /// Interleave individual frame pairs.
    #[default]
    Pair,
    /// Interleave maximal same-label runs of pairs within a clip.
    Clip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixConfig {
    pub s: f64,
    pub seed: u64,
    pub total: usize,
    #[serde(default)]
    pub unit: MixUnit,
}

impl MixConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.s) {
            return Err(Error::Config(format!(
                "anomaly portion must lie in [0, 1], got {}",
                self.s
            )));
        }
        if self.total == 0 {
            return Err(Error::Config("stream length must be positive".into()));
        }
        Ok(())
    }
}

/// Normal and anomalous samples plus the record of what has been consumed.
#[derive(Clone, Debug)]
pub struct SamplePool {
    clip_ids: Vec<String>,
    normal: Vec<Vec<SampleRef>>,
    anomalous: Vec<Vec<SampleRef>>,
    remaining_normal: Vec<usize>,
    remaining_anomalous: Vec<usize>,
}

impl SamplePool {
    /// Pool from explicit sample lists, one unit per sample.
    pub fn from_samples(
        clip_ids: Vec<String>,
        normal: Vec<SampleRef>,
        anomalous: Vec<SampleRef>,
    ) -> Self {
        let normal: Vec<Vec<SampleRef>> = normal.into_iter().map(|s| vec![s]).collect();
        let anomalous: Vec<Vec<SampleRef>> = anomalous.into_iter().map(|s| vec![s]).collect();
        Self::from_units(clip_ids, normal, anomalous)
    }

    fn from_units(
        clip_ids: Vec<String>,
        normal: Vec<Vec<SampleRef>>,
        anomalous: Vec<Vec<SampleRef>>,
    ) -> Self {
        SamplePool {
            remaining_normal: (0..normal.len()).collect(),
            remaining_anomalous: (0..anomalous.len()).collect(),
            clip_ids,
            normal,
            anomalous,
        }
    }

    pub fn clip_ids(&self) -> &[String] {
        &self.clip_ids
    }

    pub fn normal_count(&self) -> usize {
        self.normal.iter().map(Vec::len).sum()
    }

    pub fn anomalous_count(&self) -> usize {
        self.anomalous.iter().map(Vec::len).sum()
    }

    pub fn remaining_normal(&self) -> usize {
        self.remaining_normal
            .iter()
            .map(|&u| self.normal[u].len())
            .sum()
    }

    pub fn remaining_anomalous(&self) -> usize {
        self.remaining_anomalous
            .iter()
            .map(|&u| self.anomalous[u].len())
            .sum()
    }

    fn regroup(&self, unit: MixUnit) -> SamplePool {
        match unit {
            MixUnit::Clip => self.clone(),
            MixUnit::Pair => {
                let flat = |units: &[Vec<SampleRef>]| -> Vec<Vec<SampleRef>> {
                    units.iter().flatten().map(|s| vec![*s]).collect()
                };
                Self::from_units(
                    self.clip_ids.clone(),
                    flat(&self.normal),
                    flat(&self.anomalous),
                )
            }
        }
    }
}

/// Splits clips into consecutive-frame pairs. A pair is anomalous iff its
/// current frame is; pairs never span two clips. Units are maximal runs of
/// same-label pairs, used by clip-level mixing.
pub fn partition(clips: &[LabeledClip]) -> Result<SamplePool> {
    let mut normal = Vec::new();
    let mut anomalous = Vec::new();
    for (ci, clip) in clips.iter().enumerate() {
        if let Some(pos) = clip.labels.iter().position(|l| l.is_none()) {
            return Err(Error::Input(format!(
                "clip {}: frame {} has no ground-truth label",
                clip.id, pos
            )));
        }
        let mut run: Vec<SampleRef> = Vec::new();
        for f in 1..clip.labels.len() {
            let label = clip.labels[f].unwrap_or(0);
            if label > 1 {
                return Err(Error::Input(format!(
                    "clip {}: frame {} has label {label}",
                    clip.id, f
                )));
            }
            if run.last().is_some_and(|r| r.label != label) {
                push_unit(&mut normal, &mut anomalous, std::mem::take(&mut run));
            }
            run.push(SampleRef {
                clip: ci as u32,
                frame: f as u32,
                label,
            });
        }
        push_unit(&mut normal, &mut anomalous, run);
    }
    let ids = clips.iter().map(|c| c.id.clone()).collect();
    Ok(SamplePool::from_units(ids, normal, anomalous))
}

fn push_unit(normal: &mut Vec<Vec<SampleRef>>, anomalous: &mut Vec<Vec<SampleRef>>, run: Vec<SampleRef>) {
    match run.first().map(|r| r.label) {
        Some(1) => anomalous.push(run),
        Some(_) => normal.push(run),
        None => {}
    }
}

/// A drawn sample and whether the draw had to fall back to the other pool.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Draw {
    pub sample: SampleRef,
    pub fell_back: bool,
}

/// Stateful sampler over a pool.
pub struct Mixer {
    pool: SamplePool,
    s: f64,
    rng: ChaCha8Rng,
    pending: Vec<SampleRef>,
    pending_fell_back: bool,
}

impl Mixer {
    pub fn new(pool: &SamplePool, cfg: &MixConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Mixer {
            pool: pool.regroup(cfg.unit),
            s: cfg.s,
            rng: stream_rng(cfg.seed, 0),
            pending: Vec::new(),
            pending_fell_back: false,
        })
    }

    pub fn pool(&self) -> &SamplePool {
        &self.pool
    }

    /// Next sample, or [`Error::EndOfStream`] once both pools are exhausted.
    pub fn next_sample(&mut self) -> Result<Draw> {
        if self.pending.is_empty() {
            self.refill()?;
        }
        let sample = self.pending.remove(0);
        Ok(Draw {
            sample,
            fell_back: self.pending_fell_back,
        })
    }

    fn refill(&mut self) -> Result<()> {
        let pool = &mut self.pool;
        if pool.remaining_normal.is_empty() && pool.remaining_anomalous.is_empty() {
            return Err(Error::EndOfStream);
        }
        let r: f64 = self.rng.gen();
        let want_anomalous = r < self.s;
        let (take_anomalous, fell_back) = match (
            want_anomalous,
            pool.remaining_anomalous.is_empty(),
            pool.remaining_normal.is_empty(),
        ) {
            (true, false, _) => (true, false),
            (true, true, _) => (false, true),
            (false, _, false) => (false, false),
            (false, _, true) => (true, true),
        };
        let (remaining, units) = if take_anomalous {
            (&mut pool.remaining_anomalous, &pool.anomalous)
        } else {
            (&mut pool.remaining_normal, &pool.normal)
        };
        let pick = self.rng.gen_range(0..remaining.len());
        let unit = remaining.swap_remove(pick);
        self.pending = units[unit].clone();
        self.pending_fell_back = fell_back;
        Ok(())
    }
}

/// Independent generator for replicate `stream` of a seeded experiment.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Ordered stream plus the ground truth kept aside for evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedStream {
    pub samples: Vec<SampleRef>,
    /// Index of the first sample drawn from the non-requested pool.
    pub crossover: Option<usize>,
    /// True if the pools ran out before `total` samples were emitted.
    pub truncated: bool,
}

impl MixedStream {
    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn anomalous_fraction(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().filter(|s| s.label == 1).count() as f64 / self.samples.len() as f64
    }
}

pub fn build_stream(pool: &SamplePool, cfg: &MixConfig) -> Result<MixedStream> {
    let mut mixer = Mixer::new(pool, cfg)?;
    let mut samples = Vec::with_capacity(cfg.total);
    let mut crossover = None;
    let mut truncated = false;
    while samples.len() < cfg.total {
        match mixer.next_sample() {
            Ok(draw) => {
                if draw.fell_back && crossover.is_none() {
                    crossover = Some(samples.len());
                }
                samples.push(draw.sample);
            }
            Err(Error::EndOfStream) => {
                log::warn!(
                    "sample pools exhausted after {} of {} samples",
                    samples.len(),
                    cfg.total
                );
                truncated = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(MixedStream {
        samples,
        crossover,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn clip(id: &str, labels: &[u8]) -> LabeledClip {
        LabeledClip {
            id: id.into(),
            labels: labels.iter().map(|&l| Some(l)).collect(),
        }
    }

    fn flat_pool(n_normal: usize, n_anom: usize) -> SamplePool {
        let normal = (0..n_normal)
            .map(|i| SampleRef { clip: 0, frame: i as u32, label: 0 })
            .collect();
        let anomalous = (0..n_anom)
            .map(|i| SampleRef { clip: 1, frame: i as u32, label: 1 })
            .collect();
        SamplePool::from_samples(vec!["n".into(), "a".into()], normal, anomalous)
    }

    #[test]
    fn partition_examples() {
        let p = partition(&[clip("c", &[0; 7])]).unwrap();
        assert_eq!((p.normal_count(), p.anomalous_count()), (6, 0));

        let p = partition(&[clip("a", &[0; 5]), clip("b", &[0; 9])]).unwrap();
        assert_eq!(p.normal_count(), 4 + 8);

        let p = partition(&[clip("c", &[0, 0, 1, 1, 0])]).unwrap();
        assert_eq!((p.normal_count(), p.anomalous_count()), (2, 2));
        let frames: Vec<u32> = p.anomalous.iter().flatten().map(|s| s.frame).collect();
        assert_eq!(frames, vec![2, 3]);
    }

    #[test]
    fn partition_rejects_unlabeled_frames() {
        let c = LabeledClip {
            id: "x".into(),
            labels: vec![Some(0), None, Some(0)],
        };
        assert!(matches!(partition(&[c]), Err(Error::Input(_))));
    }

    #[test]
    fn extreme_portions() {
        let pool = flat_pool(50, 50);
        let cfg = MixConfig { s: 0.0, seed: 1, total: 50, unit: MixUnit::Pair };
        let st = build_stream(&pool, &cfg).unwrap();
        assert!(st.samples.iter().all(|s| s.label == 0));
        assert_eq!(st.crossover, None);

        let cfg = MixConfig { s: 1.0, ..cfg };
        let st = build_stream(&pool, &cfg).unwrap();
        assert!(st.samples.iter().all(|s| s.label == 1));
    }

    #[test]
    fn exhaustion_falls_back_then_ends() {
        let pool = flat_pool(3, 2);
        let cfg = MixConfig { s: 0.0, seed: 9, total: 10, unit: MixUnit::Pair };
        let st = build_stream(&pool, &cfg).unwrap();
        assert_eq!(st.samples.len(), 5);
        assert_eq!(st.crossover, Some(3));
        assert!(st.truncated);
        let mut mixer = Mixer::new(&pool, &cfg).unwrap();
        for _ in 0..5 {
            mixer.next_sample().unwrap();
        }
        assert!(matches!(mixer.next_sample(), Err(Error::EndOfStream)));
    }

    #[test]
    fn anomaly_fraction_concentrates() {
        let pool = flat_pool(20_000, 20_000);
        let cfg = MixConfig { s: 0.25, seed: 2024, total: 10_000, unit: MixUnit::Pair };
        let st = build_stream(&pool, &cfg).unwrap();
        assert!((st.anomalous_fraction() - 0.25).abs() <= 0.02);
    }

    #[test]
    fn three_sigma_exceedances_match_binomial_rate() {
        // P(|X − ns| > 3σ) ≈ 0.27%: expect about one exceedance in 400
        let n = 2000usize;
        let pool = flat_pool(n, n);
        let mut outside = 0;
        for seed in 0..400u64 {
            let s = [0.1, 0.25, 0.5, 0.75][seed as usize % 4];
            let cfg = MixConfig { s, seed, total: n, unit: MixUnit::Pair };
            let st = build_stream(&pool, &cfg).unwrap();
            if (st.anomalous_fraction() - s).abs() > 3.0 * (s * (1.0 - s) / n as f64).sqrt() {
                outside += 1;
            }
        }
        assert!(outside <= 5, "{outside} of 400 streams outside 3σ");
    }

    #[test]
    fn clip_units_stay_contiguous() {
        let pool = partition(&[clip("a", &[0, 0, 0, 1, 1, 1, 0]), clip("b", &[0, 1, 1])]).unwrap();
        let cfg = MixConfig { s: 0.5, seed: 3, total: 100, unit: MixUnit::Clip };
        let st = build_stream(&pool, &cfg).unwrap();
        assert_eq!(st.samples.len(), 8);
        // the anomalous run of clip a appears as frames 3,4,5 in order
        let pos = st.samples.iter().position(|s| s.clip == 0 && s.frame == 3).unwrap();
        assert_eq!(st.samples[pos + 1], SampleRef { clip: 0, frame: 4, label: 1 });
        assert_eq!(st.samples[pos + 2], SampleRef { clip: 0, frame: 5, label: 1 });
    }

    #[test]
    fn invalid_portion_is_rejected() {
        let pool = flat_pool(2, 2);
        let cfg = MixConfig { s: 1.5, seed: 0, total: 1, unit: MixUnit::Pair };
        assert!(matches!(build_stream(&pool, &cfg), Err(Error::Config(_))));
    }

    proptest! {
        #[test]
        fn streams_are_deterministic_and_without_replacement(
            seed in any::<u64>(),
            s in 0.0f64..=1.0,
            n_normal in 0usize..200,
            n_anom in 0usize..200,
            total in 1usize..500,
        ) {
            let pool = flat_pool(n_normal, n_anom);
            let cfg = MixConfig { s, seed, total, unit: MixUnit::Pair };
            let a = build_stream(&pool, &cfg).unwrap();
            let b = build_stream(&pool, &cfg).unwrap();
            prop_assert_eq!(&a, &b);
            let unique: HashSet<_> = a.samples.iter().collect();
            prop_assert_eq!(unique.len(), a.samples.len());
            prop_assert_eq!(a.samples.len(), total.min(n_normal + n_anom));
        }

        #[test]
        fn fraction_within_three_sigma(seed in any::<u64>(), s in 0.05f64..0.95) {
            let n = 2000usize;
            let pool = flat_pool(n, n);
            let cfg = MixConfig { s, seed, total: n, unit: MixUnit::Pair };
            let st = build_stream(&pool, &cfg).unwrap();
            // 4.5σ: a fair binomial exceeds this with probability < 1e-5, so
            // a 256-case run stays reliable; the 3σ rate is checked below
            let bound = 4.5 * (s * (1.0 - s) / n as f64).sqrt();
            prop_assert!((st.anomalous_fraction() - s).abs() <= bound);
        }
    }
}
