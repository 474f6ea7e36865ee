//! Seeded Monte Carlo trials.
//!
//! Replicate `i` draws from its own stream `derive_stream(seed, i)`, and
//! per-replicate records are collected in index order before any reduction,
//! so results do not depend on the number of worker threads.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::{
    conditional_mle_at, sample_moments, ConditionalMleOptions, Estimator, EstimatorMoments,
    TrialOutcome,
};
use crate::numerics::{derive_stream, ReplicateRng};
use crate::sub_density::Design;

/// How replicates whose conditional-MLE search hit the bracket edge enter
/// the conditional moment summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DivergencePolicy {
    /// Clamped bracket endpoints count as estimates.
    #[default]
    Include,
    /// Divergent replicates are dropped; only the rate is reported.
    Exclude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Collect {
    pub estimators: bool,
    pub paths: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub design: Design,
    pub theta: f64,
    pub reps: u64,
    pub master_seed: u64,
    /// Worker threads; `None` uses rayon's global pool.
    pub threads: Option<usize>,
    pub collect: Collect,
    pub mle: ConditionalMleOptions,
    pub divergence: DivergencePolicy,
}

impl SimConfig {
    pub fn new(design: Design, theta: f64, reps: u64, master_seed: u64) -> Self {
        Self {
            design,
            theta,
            reps,
            master_seed,
            threads: None,
            collect: Collect::default(),
            mle: ConditionalMleOptions::default(),
            divergence: DivergencePolicy::default(),
        }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }

    pub fn with_estimators(mut self) -> Self {
        self.collect.estimators = true;
        self
    }

    pub fn with_paths(mut self) -> Self {
        self.collect.paths = true;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Domain("reps must be at least 1".into()));
        }
        if !self.theta.is_finite() {
            return Err(Error::Domain(format!("theta {} is not finite", self.theta)));
        }
        if self.threads == Some(0) {
            return Err(Error::Domain("threads must be at least 1".into()));
        }
        Ok(())
    }
}

/// Both estimates from one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorSample {
    pub stage: usize,
    pub unconditional: f64,
    pub conditional: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub theta: f64,
    pub reps: u64,
    /// Count of D = k.
    pub stop_counts: Vec<u64>,
    /// Count of rejections at stage k.
    pub reject_counts: Vec<u64>,
    /// Σ n₍ₖ₎ · count_k / reps.
    pub mean_n: f64,
    /// In replicate order, when requested.
    pub estimator_samples: Option<Vec<EstimatorSample>>,
    pub paths: Option<Vec<TrialOutcome>>,
    pub seed_echo: u64,
}

impl SimResult {
    fn frac(&self, counts: &[u64]) -> Vec<f64> {
        counts.iter().map(|&c| c as f64 / self.reps as f64).collect()
    }

    pub fn stop_probabilities(&self) -> Vec<f64> {
        self.frac(&self.stop_counts)
    }

    pub fn reject_probabilities(&self) -> Vec<f64> {
        self.frac(&self.reject_counts)
    }

    pub fn cumulative_reject(&self) -> Vec<f64> {
        self.reject_probabilities()
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect()
    }

    /// Binomial standard error √(p(1−p)/reps).
    pub fn binomial_se(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.reps as f64).sqrt()
    }
}

/// Draws one trial: X̄ₖ ~ N(θ, 1/nₖ) until the first crossing or stage K.
pub fn simulate_trial(design: &Design, theta: f64, rng: &mut ReplicateRng) -> TrialOutcome {
    let big_k = design.stages();
    let mut means = Vec::with_capacity(big_k);
    let mut sum = 0.0;
    for k in 0..big_k {
        let n = design.sizes()[k] as f64;
        let e: f64 = rng.sample(StandardNormal);
        let mean = theta + e / n.sqrt();
        means.push(mean);
        sum += n * mean;
        let z = sum / (design.cumulative_sizes()[k] as f64).sqrt();
        if k + 1 < big_k && z > design.critical_values()[k] {
            break;
        }
    }
    TrialOutcome::new(design.clone(), means).expect("simulated path satisfies the stopping rule")
}

struct Record {
    stage: usize,
    rejected: bool,
    estimates: Option<EstimatorSample>,
    path: Option<TrialOutcome>,
}

fn run_records(cfg: &SimConfig, estimators: bool) -> Result<Vec<Record>> {
    cfg.validate()?;
    let design = &cfg.design;
    let big_k = design.stages();
    let one = |i: u64| -> Record {
        let mut rng = derive_stream(cfg.master_seed, i);
        let outcome = simulate_trial(design, cfg.theta, &mut rng);
        let stage = outcome.stop_stage();
        let z = outcome.cumulative_z()[stage - 1];
        let rejected = stage < big_k || z > design.critical_values()[big_k - 1];
        let estimates = estimators.then(|| {
            let xbar = outcome.cumulative_mean();
            let c = conditional_mle_at(design, stage, xbar, &cfg.mle);
            EstimatorSample {
                stage,
                unconditional: xbar,
                conditional: c.estimate,
                diverged: c.diverged,
            }
        });
        Record {
            stage,
            rejected,
            estimates,
            path: cfg.collect.paths.then_some(outcome),
        }
    };
    let work = || (0..cfg.reps).into_par_iter().map(one).collect::<Vec<_>>();
    match cfg.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Domain(format!("cannot start {t} worker threads: {e}")))?;
            Ok(pool.install(work))
        }
        None => Ok(work()),
    }
}

fn summarize(cfg: &SimConfig, records: Vec<Record>) -> SimResult {
    let big_k = cfg.design.stages();
    let mut stop_counts = vec![0u64; big_k];
    let mut reject_counts = vec![0u64; big_k];
    let mut samples = Vec::new();
    let mut paths = Vec::new();
    for r in records {
        stop_counts[r.stage - 1] += 1;
        if r.rejected {
            reject_counts[r.stage - 1] += 1;
        }
        if let Some(s) = r.estimates {
            samples.push(s);
        }
        if let Some(p) = r.path {
            paths.push(p);
        }
    }
    let total: u64 = cfg
        .design
        .cumulative_sizes()
        .iter()
        .zip(&stop_counts)
        .map(|(n, c)| n * c)
        .sum();
    SimResult {
        theta: cfg.theta,
        reps: cfg.reps,
        stop_counts,
        reject_counts,
        mean_n: total as f64 / cfg.reps as f64,
        estimator_samples: (cfg.collect.estimators).then_some(samples),
        paths: cfg.collect.paths.then_some(paths),
        seed_echo: cfg.master_seed,
    }
}

/// Operating characteristics by simulation.
pub fn run_oc(cfg: &SimConfig) -> Result<SimResult> {
    let records = run_records(cfg, cfg.collect.estimators)?;
    Ok(summarize(cfg, records))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorStudy {
    pub sim: SimResult,
    pub unconditional: EstimatorMoments,
    pub conditional: EstimatorMoments,
}

impl EstimatorStudy {
    pub fn samples(&self) -> &[EstimatorSample] {
        self.sim.estimator_samples.as_deref().unwrap_or(&[])
    }

    /// Estimates of one kind for D = stage.
    pub fn stage_values(&self, estimator: Estimator, stage: usize) -> Vec<f64> {
        self.samples()
            .iter()
            .filter(|s| s.stage == stage)
            .map(|s| match estimator {
                Estimator::Unconditional => s.unconditional,
                Estimator::Conditional => s.conditional,
            })
            .collect()
    }
}

/// Unconditional and conditional MLEs per replicate, summarised by stopping stage.
pub fn run_estimator_study(cfg: &SimConfig) -> Result<EstimatorStudy> {
    let mut cfg = cfg.clone();
    cfg.collect.estimators = true;
    let records = run_records(&cfg, true)?;
    let sim = summarize(&cfg, records);
    let big_k = cfg.design.stages();
    let samples = sim.estimator_samples.as_deref().unwrap_or(&[]);
    let theta = cfg.theta;
    let reps = cfg.reps as f64;

    let mut unc_stages = Vec::with_capacity(big_k);
    let mut con_stages = Vec::with_capacity(big_k);
    let mut divergent = Vec::with_capacity(big_k);
    for k in 1..=big_k {
        let at: Vec<&EstimatorSample> = samples.iter().filter(|s| s.stage == k).collect();
        let p = at.len() as f64 / reps;
        let unc: Vec<f64> = at.iter().map(|s| s.unconditional).collect();
        let con: Vec<f64> = at
            .iter()
            .filter(|s| cfg.divergence == DivergencePolicy::Include || !s.diverged)
            .map(|s| s.conditional)
            .collect();
        let ndiv = at.iter().filter(|s| s.diverged).count();
        divergent.push(if at.is_empty() { 0.0 } else { ndiv as f64 / at.len() as f64 });
        unc_stages.push(sample_moments(&unc, theta, p));
        con_stages.push(sample_moments(&con, theta, p));
    }
    let all_unc: Vec<f64> = samples.iter().map(|s| s.unconditional).collect();
    let all_con: Vec<f64> = samples
        .iter()
        .filter(|s| cfg.divergence == DivergencePolicy::Include || !s.diverged)
        .map(|s| s.conditional)
        .collect();
    let unconditional = EstimatorMoments {
        estimator: Estimator::Unconditional,
        theta,
        stages: unc_stages,
        overall: sample_moments(&all_unc, theta, 1.0),
        divergent_fraction: vec![0.0; big_k],
    };
    let conditional = EstimatorMoments {
        estimator: Estimator::Conditional,
        theta,
        stages: con_stages,
        overall: sample_moments(&all_con, theta, 1.0),
        divergent_fraction: divergent,
    };
    Ok(EstimatorStudy {
        sim,
        unconditional,
        conditional,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: u64,
}

/// Equal-width bins over [lower, upper]; values outside are dropped and the
/// last bin is closed on the right.
pub fn histogram(values: &[f64], lower: f64, upper: f64, bins: usize) -> Result<Vec<HistogramBin>> {
    if bins == 0 || !(upper > lower) || !lower.is_finite() || !upper.is_finite() {
        return Err(Error::Domain(format!(
            "histogram needs bins >= 1 and a finite range, got {bins} bins on [{lower}, {upper}]"
        )));
    }
    let width = (upper - lower) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &v in values {
        if v < lower || v > upper || v.is_nan() {
            continue;
        }
        let i = (((v - lower) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            left: lower + i as f64 * width,
            right: if i + 1 == bins { upper } else { lower + (i + 1) as f64 * width },
            count,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::norm_sf;

    fn pocock() -> Design {
        Design::new(vec![100, 100], vec![2.18, 2.18]).unwrap()
    }

    #[test]
    fn forced_and_disabled_stopping() {
        let d = Design::new(vec![10, 10, 10], vec![f64::NEG_INFINITY, 1.0, 1.0]).unwrap();
        let r = run_oc(&SimConfig::new(d, 0.0, 500, 1)).unwrap();
        assert_eq!(r.stop_counts, vec![500, 0, 0]);
        let d = Design::new(vec![10, 10, 10], vec![f64::INFINITY; 3]).unwrap();
        let r = run_oc(&SimConfig::new(d, 0.5, 500, 1)).unwrap();
        assert_eq!(r.stop_counts, vec![0, 0, 500]);
        assert_eq!(r.reject_counts, vec![0, 0, 0]);
        assert_eq!(r.mean_n, 30.0);
    }

    #[test]
    fn single_replicate_is_one_hot() {
        let r = run_oc(&SimConfig::new(pocock(), 0.1, 1, 42)).unwrap();
        assert_eq!(r.stop_counts.iter().sum::<u64>(), 1);
        assert!(r.stop_counts.iter().all(|&c| c <= 1));
        assert_eq!(r.seed_echo, 42);
    }

    #[test]
    fn zero_reps_rejected() {
        assert!(run_oc(&SimConfig::new(pocock(), 0.1, 0, 42)).is_err());
    }

    #[test]
    fn pocock_first_stage_rate() {
        let r = run_oc(&SimConfig::new(pocock(), 0.0, 100_000, 7)).unwrap();
        let p = r.stop_probabilities()[0];
        assert!((p - norm_sf(2.18)).abs() < 0.0012, "{p}");
        let expected = (100.0 * r.stop_counts[0] as f64 + 200.0 * r.stop_counts[1] as f64) / 1e5;
        assert_eq!(r.mean_n, expected);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let base = SimConfig::new(pocock(), 0.218, 2_000, 99).with_estimators();
        let a = run_oc(&base.clone().with_threads(1)).unwrap();
        let b = run_oc(&base.clone().with_threads(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn paths_are_valid() {
        let cfg = SimConfig::new(Design::new(vec![30, 40, 50], vec![2.0, 2.1, 1.9]).unwrap(), 0.2, 300, 5).with_paths();
        let r = run_oc(&cfg).unwrap();
        for p in r.paths.unwrap() {
            assert!(TrialOutcome::new(p.design().clone(), p.stage_means().to_vec()).is_ok());
        }
    }

    #[test]
    fn histogram_bins() {
        let h = histogram(&[0.0, 0.5, 1.0, 2.0, -1.0], 0.0, 1.0, 2).unwrap();
        assert_eq!(h.iter().map(|b| b.count).collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(h[1].right, 1.0);
        assert!(histogram(&[], 1.0, 0.0, 3).is_err());
    }
}
