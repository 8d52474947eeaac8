use log::debug;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::parzen::{SmoothedCategorical, TruncatedParzen};
use super::space::{Domain, ParamValue, Params, SearchSpace};
use crate::error::{Error, Result};
use crate::par::stream_rng;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub n_trials: usize,
    /// Fraction of completed trials labelled "good".
    pub gamma: f64,
    /// Trials drawn uniformly (and never pruned against) before TPE starts.
    pub n_startup: usize,
    /// Draws from the good density scored per suggestion.
    pub candidates: usize,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            n_trials: 60,
            gamma: 0.10,
            n_startup: 10,
            candidates: 24,
            seed: 42,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config("TPE gamma must lie in (0, 1)".into()));
        }
        if self.n_trials == 0 || self.candidates == 0 {
            return Err(Error::Config("n_trials and candidates must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Complete,
    Pruned,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub number: usize,
    pub params: Params,
    pub intermediate: Vec<f64>,
    pub final_loss: Option<f64>,
    pub status: TrialStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyState {
    pub config: StudyConfig,
    pub trials: Vec<TrialRecord>,
}

impl StudyState {
    pub fn new(config: StudyConfig) -> Self {
        StudyState { config, trials: Vec::new() }
    }

    pub fn completed(&self) -> impl Iterator<Item = &TrialRecord> {
        self.trials.iter().filter(|t| t.status == TrialStatus::Complete)
    }

    pub fn n_completed(&self) -> usize {
        self.completed().count()
    }

    pub fn best(&self) -> Option<&TrialRecord> {
        self.completed().fold(None, |best: Option<&TrialRecord>, t| match best {
            Some(b) if b.final_loss <= t.final_loss => Some(b),
            _ => Some(t),
        })
    }

    /// Completed trials split at the gamma quantile of final loss: the best
    /// `max(1, ceil(gamma n))` are good, the remainder bad.
    pub fn split_good_bad(&self) -> (Vec<&TrialRecord>, Vec<&TrialRecord>) {
        let mut done: Vec<&TrialRecord> = self.completed().collect();
        done.sort_by(|a, b| {
            a.final_loss
                .unwrap()
                .total_cmp(&b.final_loss.unwrap())
                .then(a.number.cmp(&b.number))
        });
        let n = done.len();
        let n_good = ((self.config.gamma * n as f64 - 1e-9).ceil() as usize).clamp(1, n.max(1));
        let bad = done.split_off(n_good.min(n));
        (done, bad)
    }
}

/// Proposes the next parameter assignment.
///
/// Before `n_startup` trials have completed, parameters are drawn uniformly.
/// Afterwards each dimension gets a good-set density and a bad-set density;
/// `candidates` joint draws from the good densities are scored by the summed
/// log density ratio and the best is returned.
pub fn suggest<R: Rng + ?Sized>(study: &StudyState, space: &SearchSpace, rng: &mut R) -> Result<Params> {
    space.validate()?;
    if study.n_completed() < study.config.n_startup {
        return Ok(space.sample_uniform(rng));
    }
    let (good, bad) = study.split_good_bad();

    enum Fitted<'a> {
        Num { domain: &'a Domain, good: TruncatedParzen, bad: TruncatedParzen },
        Cat { choices: &'a [String], good: SmoothedCategorical, bad: SmoothedCategorical },
    }

    let fitted: Vec<(&String, Fitted)> = space
        .iter()
        .map(|(name, domain)| {
            let f = match domain {
                Domain::Categorical { choices } => {
                    let counts = |set: &[&TrialRecord]| {
                        let mut c = vec![0usize; choices.len()];
                        for t in set {
                            if let Some(ParamValue::Cat(s)) = t.params.get(name) {
                                if let Some(i) = choices.iter().position(|x| x == s) {
                                    c[i] += 1;
                                }
                            }
                        }
                        c
                    };
                    Fitted::Cat {
                        choices,
                        good: SmoothedCategorical::fit(&counts(&good)),
                        bad: SmoothedCategorical::fit(&counts(&bad)),
                    }
                }
                _ => {
                    let (lo, hi) = domain.internal_bounds().expect("numeric");
                    let obs = |set: &[&TrialRecord]| -> Vec<f64> {
                        set.iter()
                            .filter_map(|t| t.params.get(name).and_then(|v| domain.to_internal(v)))
                            .map(|u| u.clamp(lo, hi))
                            .collect()
                    };
                    Fitted::Num {
                        domain,
                        good: TruncatedParzen::fit(&obs(&good), lo, hi),
                        bad: TruncatedParzen::fit(&obs(&bad), lo, hi),
                    }
                }
            };
            (name, f)
        })
        .collect();

    let mut best: Option<(f64, Params)> = None;
    for _ in 0..study.config.candidates {
        let mut params = Params::default();
        let mut score = 0.0;
        for (name, f) in &fitted {
            match f {
                Fitted::Num { domain, good, bad } => {
                    let u = good.sample(rng);
                    score += good.log_pdf(u) - bad.log_pdf(u);
                    params.set(name, domain.from_internal(u));
                }
                Fitted::Cat { choices, good, bad } => {
                    let i = good.sample(rng);
                    score += good.log_pmf(i) - bad.log_pmf(i);
                    params.set(name, ParamValue::Cat(choices[i].clone()));
                }
            }
        }
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, params));
        }
    }
    Ok(best.expect("at least one candidate").1)
}

/// Median rule: prune once enough trials completed and this trial's loss at
/// `epoch` is above the median of the completed trials' losses at that epoch.
pub fn should_prune(study: &StudyState, loss: f64, epoch: usize) -> bool {
    if study.n_completed() < study.config.n_startup {
        return false;
    }
    let at_epoch: Vec<f64> = study
        .completed()
        .filter_map(|t| t.intermediate.get(epoch).copied())
        .filter(|v| v.is_finite())
        .collect();
    if at_epoch.is_empty() {
        return false;
    }
    loss > stats::median(&at_epoch)
}

/// Per-trial handle handed to the objective for intermediate reports.
pub struct TrialMonitor<'a> {
    study: &'a StudyState,
    losses: Vec<f64>,
}

impl<'a> TrialMonitor<'a> {
    pub fn new(study: &'a StudyState) -> Self {
        TrialMonitor { study, losses: Vec::new() }
    }

    /// Records the loss for the next epoch; returns `true` if the trial
    /// should stop.
    pub fn report(&mut self, loss: f64) -> bool {
        let epoch = self.losses.len();
        self.losses.push(loss);
        should_prune(self.study, loss, epoch)
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }
}

/// Runs `config.n_trials` trials and returns the completed trial with the
/// smallest final loss. The objective returns `Err(Error::Pruned)` to
/// abandon a trial after a prune signal; other errors mark it failed.
pub fn optimize<F>(space: &SearchSpace, config: &StudyConfig, mut objective: F) -> Result<(Params, StudyState)>
where
    F: FnMut(&Params, &mut TrialMonitor<'_>) -> Result<f64>,
{
    config.validate()?;
    space.validate()?;
    let budget = match space.cardinality() {
        Some(1) => 1,
        _ => config.n_trials,
    };
    let mut study = StudyState::new(config.clone());
    for number in 0..budget {
        let mut rng = stream_rng(config.seed, number as u64);
        let params = suggest(&study, space, &mut rng)?;
        let (outcome, intermediate) = {
            let mut monitor = TrialMonitor::new(&study);
            let out = objective(&params, &mut monitor);
            (out, monitor.losses)
        };
        let (status, final_loss) = match outcome {
            Ok(l) if l.is_finite() => (TrialStatus::Complete, Some(l)),
            Ok(_) => (TrialStatus::Failed, None),
            Err(Error::Pruned) => (TrialStatus::Pruned, None),
            Err(e) => {
                debug!("trial {number} failed: {e}");
                (TrialStatus::Failed, None)
            }
        };
        study.trials.push(TrialRecord { number, params, intermediate, final_loss, status });
    }
    let best = study
        .best()
        .ok_or_else(|| Error::Optimization("no trial completed".into()))?
        .params
        .clone();
    Ok((best, study))
}
