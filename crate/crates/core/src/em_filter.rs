//! Expectation-maximization admission filter.
//!
//! A sample may train the scorer only if its loss falls below `mu + tau`.
//! Admitted losses then move the running mean `mu` and the adaptive
//! threshold `tau` at rate `alpha`:
//!
//! ```text
//! delta = loss - mu
//! mu'   = mu + alpha * delta
//! tau'  = max(tau + alpha * (delta - tau), tau_floor)
//! ```
//!
//! Rejected samples leave both the filter and the scorer untouched.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runner::scorer::Scorer;

/// Default threshold floor for per-pixel normalized losses.
pub const DEFAULT_TAU_FLOOR: f64 = 5e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub alpha: f64,
    pub tau_floor: f64,
    /// Number of leading samples admitted unconditionally.
    pub warmup: usize,
    /// When false every sample is admitted (the "no filter" baseline).
    pub enabled: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            alpha: 0.1,
            tau_floor: DEFAULT_TAU_FLOOR,
            warmup: 100,
            enabled: true,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "filter alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.tau_floor >= 0.0 && self.tau_floor.is_finite()) {
            return Err(Error::Config(format!(
                "tau floor must be a nonnegative number, got {}",
                self.tau_floor
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmFilterState {
    pub mu: f64,
    pub tau: f64,
    pub alpha: f64,
    pub tau_floor: f64,
    pub warmup_remaining: usize,
    /// Always admit (filter disabled).
    pub bypass: bool,
    /// False until the first loss has seeded `mu`.
    primed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmissionDecision {
    pub admitted: bool,
    pub loss: f64,
    pub mu_before: f64,
    pub tau_before: f64,
    /// Admitted because of warm-up, bootstrap or bypass rather than the test.
    pub forced: bool,
    pub numeric_error: bool,
}

impl EmFilterState {
    /// Fresh filter: `mu` is seeded from the first observed loss and `tau`
    /// starts at the floor.
    pub fn new(cfg: &FilterConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(EmFilterState {
            mu: 0.0,
            tau: cfg.tau_floor,
            alpha: cfg.alpha,
            tau_floor: cfg.tau_floor,
            warmup_remaining: cfg.warmup,
            bypass: !cfg.enabled,
            primed: false,
        })
    }

    /// Filter with explicit statistics and no warm-up.
    pub fn with_stats(mu: f64, tau: f64, alpha: f64, tau_floor: f64) -> Result<Self> {
        let cfg = FilterConfig {
            alpha,
            tau_floor,
            warmup: 0,
            enabled: true,
        };
        cfg.validate()?;
        if !mu.is_finite() || !tau.is_finite() {
            return Err(Error::Config("filter statistics must be finite".into()));
        }
        Ok(EmFilterState {
            mu,
            tau: tau.max(tau_floor),
            alpha,
            tau_floor,
            warmup_remaining: 0,
            bypass: false,
            primed: true,
        })
    }

    pub fn with_warmup(mut self, warmup: usize) -> Self {
        self.warmup_remaining = warmup;
        self
    }

    pub fn is_primed(&self) -> bool {
        self.primed
    }

    /// Admission test. Does not change the state.
    pub fn admit(&self, loss: f64) -> AdmissionDecision {
        let mu_before = if self.primed { self.mu } else { loss };
        let mut d = AdmissionDecision {
            admitted: false,
            loss,
            mu_before,
            tau_before: self.tau,
            forced: false,
            numeric_error: false,
        };
        if !loss.is_finite() {
            d.numeric_error = true;
            return d;
        }
        if self.bypass || !self.primed || self.warmup_remaining > 0 {
            d.admitted = true;
            d.forced = true;
        } else {
            d.admitted = loss < self.mu + self.tau;
        }
        d
    }

    /// State after an admitted sample.
    pub fn update(&self, decision: &AdmissionDecision) -> Result<Self> {
        if !decision.admitted {
            return Err(Error::Contract(
                "filter update requested for a rejected sample".into(),
            ));
        }
        let mut next = *self;
        if !next.primed {
            next.mu = decision.loss;
            next.primed = true;
        }
        Ok(next.updated(decision.loss))
    }

    /// Applies the mean/threshold recurrence for `loss` unconditionally.
    pub fn updated(&self, loss: f64) -> Self {
        let delta = loss - self.mu;
        let mut next = *self;
        next.mu = self.mu + self.alpha * delta;
        next.tau = (self.tau + self.alpha * (delta - self.tau)).max(self.tau_floor);
        next.warmup_remaining = self.warmup_remaining.saturating_sub(1);
        next.primed = true;
        next
    }
}

/// Per-sample outcome of the streaming loop; the unit of all reporting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreRecord {
    pub index: u64,
    pub loss: f64,
    /// Filter mean before this sample.
    pub mu: f64,
    /// Filter threshold before this sample.
    pub tau: f64,
    pub admitted: bool,
    /// Ground truth (0/1), or −1 when unknown. Filled in by the evaluator.
    pub label: i8,
    pub error: bool,
}

/// One iteration of the plug-and-play loop: score, gate, and if admitted,
/// one scorer update plus one filter update.
pub fn filter_step<S: Scorer>(
    index: u64,
    sample: &S::Sample,
    scorer: &mut S,
    state: &EmFilterState,
) -> (ScoreRecord, EmFilterState) {
    let mut record = ScoreRecord {
        index,
        loss: f64::NAN,
        mu: state.mu,
        tau: state.tau,
        admitted: false,
        label: -1,
        error: false,
    };
    let pass = match scorer.forward(sample) {
        Ok(p) => p,
        Err(e) => {
            log::warn!("sample {index}: forward pass failed: {e}");
            record.error = true;
            return (record, *state);
        }
    };
    let decision = state.admit(pass.loss);
    record.loss = decision.loss;
    record.mu = decision.mu_before;
    record.tau = decision.tau_before;
    if decision.numeric_error {
        record.error = true;
        return (record, *state);
    }
    if !decision.admitted {
        return (record, *state);
    }
    if let Err(e) = scorer.train_from(pass) {
        log::warn!("sample {index}: training step failed: {e}");
        record.error = true;
        return (record, *state);
    }
    record.admitted = true;
    let next = state
        .update(&decision)
        .expect("decision was admitted");
    (record, next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::scorer::Forward;

    fn stats(mu: f64, tau: f64) -> EmFilterState {
        EmFilterState::with_stats(mu, tau, 0.1, DEFAULT_TAU_FLOOR).unwrap()
    }

    #[test]
    fn admission_is_strict() {
        let s = stats(1.0, 0.5);
        assert!(s.admit(1.2).admitted);
        assert!(!s.admit(1.5).admitted);
    }

    #[test]
    fn warmup_admits_anything() {
        let s = stats(1.0, 0.5).with_warmup(3);
        let d = s.admit(1e6);
        assert!(d.admitted && d.forced);
    }

    #[test]
    fn non_finite_loss_is_rejected_with_flag() {
        let s = stats(1.0, 0.5);
        let d = s.admit(f64::NAN);
        assert!(!d.admitted && d.numeric_error);
        assert!(s.admit(f64::INFINITY).numeric_error);
    }

    #[test]
    fn update_matches_hand_arithmetic() {
        let s = stats(1.0, 0.1);
        let d = s.admit(1.05);
        assert!(d.admitted);
        let next = s.updated(2.0);
        // delta = 1.0, mu' = 1.1, tau' = 0.1 + 0.1 * (1.0 - 0.1) = 0.19
        assert!((next.mu - 1.1).abs() < 1e-15);
        assert!((next.tau - 0.19).abs() < 1e-15);
    }

    #[test]
    fn zero_delta_decays_tau() {
        let s = stats(0.7, 0.2);
        let next = s.updated(0.7);
        assert_eq!(next.mu, 0.7);
        assert!((next.tau - 0.9 * 0.2).abs() < 1e-15);
    }

    #[test]
    fn tau_is_clamped_to_floor() {
        let s = EmFilterState::with_stats(0.3, 1e-6, 0.1, 5e-5).unwrap();
        // with_stats already lifts tau to the floor
        assert_eq!(s.tau, 5e-5);
        let mut raw = s;
        raw.tau = 1e-6;
        assert_eq!(raw.updated(0.3).tau, 5e-5);
    }

    #[test]
    fn update_of_rejected_sample_is_a_contract_error() {
        let s = stats(1.0, 0.5);
        let d = s.admit(3.0);
        assert!(matches!(s.update(&d), Err(Error::Contract(_))));
    }

    #[test]
    fn first_loss_seeds_mean() {
        let cfg = FilterConfig {
            alpha: 0.25,
            warmup: 0,
            ..FilterConfig::default()
        };
        let s = EmFilterState::new(&cfg).unwrap();
        let d = s.admit(0.8);
        assert!(d.admitted && d.forced);
        let next = s.update(&d).unwrap();
        assert_eq!(next.mu, 0.8);
        assert_eq!(next.tau, cfg.tau_floor);
        // now the real test applies
        assert!(!next.admit(0.81).admitted);
        assert!(next.admit(0.79).admitted);
    }

    #[test]
    fn invalid_alpha_is_rejected() {
        for alpha in [0.0, 1.0, -0.2, f64::NAN] {
            let cfg = FilterConfig {
                alpha,
                ..FilterConfig::default()
            };
            assert!(EmFilterState::new(&cfg).is_err());
        }
    }

    /// Scorer whose loss is a fixed table entry; counts training steps.
    struct TableScorer {
        weight: f64,
        steps: usize,
    }

    impl Scorer for TableScorer {
        type Sample = f64;
        type State = ();

        fn forward(&self, sample: &f64) -> Result<Forward<()>> {
            Ok(Forward {
                loss: *sample,
                state: (),
            })
        }

        fn train_from(&mut self, _pass: Forward<()>) -> Result<()> {
            self.weight += 1.0;
            self.steps += 1;
            Ok(())
        }
    }

    #[test]
    fn rejected_sample_changes_nothing() {
        let mut scorer = TableScorer { weight: 0.5, steps: 0 };
        let s = stats(1.0, 0.5);
        let (rec, next) = filter_step(0, &2.0, &mut scorer, &s);
        assert!(!rec.admitted);
        assert_eq!(next, s);
        assert_eq!(scorer.weight.to_bits(), 0.5f64.to_bits());
        assert_eq!(scorer.steps, 0);
    }

    #[test]
    fn admitted_sample_trains_once_and_updates() {
        let mut scorer = TableScorer { weight: 0.0, steps: 0 };
        let s = stats(1.0, 0.1);
        let (rec, next) = filter_step(4, &1.05, &mut scorer, &s);
        assert!(rec.admitted);
        assert_eq!(rec.index, 4);
        assert_eq!((rec.mu, rec.tau), (1.0, 0.1));
        assert_eq!(scorer.steps, 1);
        assert_eq!(next, s.updated(1.05));
    }
}
