//! The plug-and-play loop and the evaluation of its records.

use crate::em_filter::{filter_step, EmFilterState, FilterConfig, ScoreRecord};
use crate::error::{Error, Result};
use crate::metrics::{auc, eer, roc_curve, LabeledScores, Polarity, RocPoint};

use super::scorer::Scorer;

/// Runs every sample once through score → gate → (train, update).
///
/// The scorer and filter only ever see samples; ground truth is attached
/// afterwards with [`attach_labels`].
pub fn run_stream<S, I>(scorer: &mut S, samples: I, filter: &FilterConfig) -> Result<Vec<ScoreRecord>>
where
    S: Scorer,
    I: IntoIterator<Item = Result<S::Sample>>,
{
    let mut state = EmFilterState::new(filter)?;
    let mut records = Vec::new();
    for (i, sample) in samples.into_iter().enumerate() {
        let sample = sample?;
        let (record, next) = filter_step(i as u64, &sample, scorer, &state);
        records.push(record);
        state = next;
    }
    Ok(records)
}

/// Scores samples without training (conventional test phase).
pub fn score_all<S, I>(scorer: &S, samples: I) -> Result<Vec<ScoreRecord>>
where
    S: Scorer,
    I: IntoIterator<Item = Result<S::Sample>>,
{
    samples
        .into_iter()
        .enumerate()
        .map(|(i, sample)| {
            let loss = scorer.score(&sample?)?;
            Ok(ScoreRecord {
                index: i as u64,
                loss,
                mu: f64::NAN,
                tau: f64::NAN,
                admitted: false,
                label: -1,
                error: !loss.is_finite(),
            })
        })
        .collect()
}

pub fn attach_labels(records: &mut [ScoreRecord], labels: &[u8]) -> Result<()> {
    if records.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} records but {} labels",
            records.len(),
            labels.len()
        )));
    }
    for (r, &l) in records.iter_mut().zip(labels) {
        r.label = l as i8;
    }
    Ok(())
}

/// Metrics over the labeled, finite records of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub auc: f64,
    pub auc_flipped: f64,
    pub eer: f64,
    pub roc: Vec<RocPoint>,
    pub samples: usize,
    pub admitted: usize,
    pub errors: usize,
}

pub fn labeled_scores(records: &[ScoreRecord]) -> Result<LabeledScores> {
    let (scores, labels): (Vec<f64>, Vec<u8>) = records
        .iter()
        .filter(|r| r.label >= 0 && r.loss.is_finite())
        .map(|r| (r.loss, r.label as u8))
        .unzip();
    LabeledScores::new(scores, labels)
}

/// A run whose labeled records hold only one class has no ROC; its AUC and
/// EER are reported as NaN.
pub fn evaluate(records: &[ScoreRecord]) -> Result<RunMetrics> {
    let ls = labeled_scores(records)?;
    let anomalous = ls.labels().iter().filter(|&&l| l == 1).count();
    if anomalous == 0 || anomalous == ls.len() {
        log::warn!("run has a single class ({anomalous} of {} anomalous); AUC undefined", ls.len());
        return Ok(RunMetrics {
            auc: f64::NAN,
            auc_flipped: f64::NAN,
            eer: f64::NAN,
            roc: Vec::new(),
            samples: records.len(),
            admitted: records.iter().filter(|r| r.admitted).count(),
            errors: records.iter().filter(|r| r.error).count(),
        });
    }
    let flipped = ls.clone().with_polarity(Polarity::LowerIsAnomalous);
    Ok(RunMetrics {
        auc: auc(&ls)?,
        auc_flipped: auc(&flipped)?,
        eer: eer(&ls)?,
        roc: roc_curve(&ls)?,
        samples: records.len(),
        admitted: records.iter().filter(|r| r.admitted).count(),
        errors: records.iter().filter(|r| r.error).count(),
    })
}

/// Per-bucket admission counts of a labeled run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BucketCounts {
    pub bucket: usize,
    pub normal_in: usize,
    pub anomalous_in: usize,
    pub admitted: usize,
    pub admitted_normal: usize,
    pub admitted_anomalous: usize,
}

pub fn bucket_counts(records: &[ScoreRecord], size: usize) -> Vec<BucketCounts> {
    records
        .chunks(size.max(1))
        .enumerate()
        .map(|(bucket, chunk)| {
            let mut b = BucketCounts {
                bucket,
                ..Default::default()
            };
            for r in chunk {
                let anomalous = r.label == 1;
                if anomalous {
                    b.anomalous_in += 1;
                } else {
                    b.normal_in += 1;
                }
                if r.admitted {
                    b.admitted += 1;
                    if anomalous {
                        b.admitted_anomalous += 1;
                    } else {
                        b.admitted_normal += 1;
                    }
                }
            }
            b
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::scorer::Forward;

    /// Scorer whose loss is the sample value and which counts updates.
    struct Echo {
        steps: usize,
    }

    impl Scorer for Echo {
        type Sample = f64;
        type State = ();

        fn forward(&self, s: &f64) -> Result<Forward<()>> {
            Ok(Forward { loss: *s, state: () })
        }

        fn train_from(&mut self, _: Forward<()>) -> Result<()> {
            self.steps += 1;
            Ok(())
        }
    }

    #[test]
    fn spikes_are_rejected_and_never_trained() {
        let mut echo = Echo { steps: 0 };
        let cfg = FilterConfig {
            warmup: 0,
            ..FilterConfig::default()
        };
        let stream = [1.0, 1.0, 50.0, 1.0, 1.0].map(Ok);
        let mut recs = run_stream(&mut echo, stream, &cfg).unwrap();
        assert_eq!(recs.iter().map(|r| r.admitted).collect::<Vec<_>>(), [true, true, false, true, true]);
        assert_eq!(echo.steps, 4);
        attach_labels(&mut recs, &[0, 0, 1, 0, 0]).unwrap();
        let m = evaluate(&recs).unwrap();
        assert_eq!(m.auc, 1.0);
        assert_eq!(m.auc_flipped, 0.0);
        assert_eq!(m.admitted, 4);
        let b = bucket_counts(&recs, 2);
        assert_eq!(b.len(), 3);
        assert_eq!((b[1].anomalous_in, b[1].admitted_anomalous, b[1].admitted_normal), (1, 0, 1));
    }

    #[test]
    fn disabled_filter_trains_on_everything() {
        let mut echo = Echo { steps: 0 };
        let cfg = FilterConfig {
            enabled: false,
            ..FilterConfig::default()
        };
        let recs = run_stream(&mut echo, [1.0, 99.0, 1.0].map(Ok), &cfg).unwrap();
        assert!(recs.iter().all(|r| r.admitted));
        assert_eq!(echo.steps, 3);
    }

    #[test]
    fn one_train_step_per_sample_at_most() {
        let mut echo = Echo { steps: 0 };
        let losses: Vec<Result<f64>> = (0..500).map(|i| Ok(((i * 37) % 11) as f64)).collect();
        let recs = run_stream(&mut echo, losses, &FilterConfig::default()).unwrap();
        assert_eq!(recs.len(), 500);
        assert_eq!(echo.steps, recs.iter().filter(|r| r.admitted).count());
    }
}
