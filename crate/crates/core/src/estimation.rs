//! Estimation after a group-sequential trial stops.
//!
//! In the normal-mean model the stage-k likelihood factors as
//! `f(x | θ) ∝ exp(−n₍ₖ₎(θ − x̄₍ₖ₎)²/2)` on the stopping region, so the
//! unconditional MLE is the cumulative mean and all data enter through
//! `Z₍ₖ₎`. The conditional likelihood divides by `Pr_θ(D = k)`:
//!
//! ```text
//! ℓᶜ(θ) = −n₍ₖ₎(θ − x̄)²/2 − log Pr_θ(D = k)
//! ```
//!
//! which is concave in θ (the stopping event is an exponential-family
//! truncation), so its score has at most one root.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{
    find_root, log_norm_cdf, log_norm_sf, mills_lower, mills_upper, QuadratureGrid,
};
use crate::sub_density::{Design, Engine, Schedule, Trajectory};

/// Finite-difference step on θ for derivatives of log Pr_θ(D = k).
pub const FD_STEP: f64 = 1e-4;

/// Default conditional-MLE search half-width, in units of 1/√n₁.
pub const DEFAULT_HALF_WIDTH: f64 = 8.0;

const SCORE_TOL: f64 = 1e-10;

/// Probabilities below this make log Pr_θ(D = k) meaningless.
const UNDERFLOW: f64 = 1e-300;

// ---------------------------------------------------------------------------
// Outcomes
// ---------------------------------------------------------------------------

/// One observed or simulated trial stopped at stage D = k.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    design: Design,
    stop_stage: usize,
    stage_means: Vec<f64>,
    cumulative_z: Vec<f64>,
}

impl TrialOutcome {
    /// Checks that the path continued through every stage before the last
    /// observed one and, when that stage is not final, crossed it.
    pub fn new(design: Design, stage_means: Vec<f64>) -> Result<Self> {
        let k = stage_means.len();
        if k == 0 {
            return Err(Error::PathInconsistent {
                stage: 0,
                reason: "no stage data".into(),
            });
        }
        if k > design.stages() {
            return Err(Error::StageOutOfRange {
                stage: k,
                stages: design.stages(),
            });
        }
        if let Some(j) = stage_means.iter().position(|m| !m.is_finite()) {
            return Err(Error::Domain(format!("stage {} mean is not finite", j + 1)));
        }
        let cumulative_z = cumulative_z(&design, &stage_means);
        let c = design.critical_values();
        for j in 0..k - 1 {
            if cumulative_z[j] > c[j] {
                return Err(Error::PathInconsistent {
                    stage: j + 1,
                    reason: format!(
                        "Z = {} exceeds c = {} so the trial stops at stage {}, yet stage {} data follow",
                        cumulative_z[j],
                        c[j],
                        j + 1,
                        j + 2
                    ),
                });
            }
        }
        if k < design.stages() && cumulative_z[k - 1] <= c[k - 1] {
            return Err(Error::PathInconsistent {
                stage: k,
                reason: format!(
                    "Z = {} does not exceed c = {}, so the trial continues past stage {k}",
                    cumulative_z[k - 1],
                    c[k - 1]
                ),
            });
        }
        Ok(Self {
            design,
            stop_stage: k,
            stage_means,
            cumulative_z,
        })
    }

    pub fn design(&self) -> &Design {
        &self.design
    }

    /// D.
    pub fn stop_stage(&self) -> usize {
        self.stop_stage
    }

    pub fn stage_means(&self) -> &[f64] {
        &self.stage_means
    }

    pub fn cumulative_z(&self) -> &[f64] {
        &self.cumulative_z
    }

    /// n₍D₎.
    pub fn sample_size(&self) -> u64 {
        self.design.cumulative_sizes()[self.stop_stage - 1]
    }

    /// x̄₍D₎ = Σ n_j X̄_j / n₍D₎.
    pub fn cumulative_mean(&self) -> f64 {
        let total: f64 = self
            .design
            .sizes()
            .iter()
            .zip(&self.stage_means)
            .map(|(&n, m)| n as f64 * m)
            .sum();
        total / self.sample_size() as f64
    }
}

/// Z₍ₖ₎ = Σ_{j≤k} n_j X̄_j / √n₍ₖ₎ for each observed stage.
pub fn cumulative_z(design: &Design, stage_means: &[f64]) -> Vec<f64> {
    let mut sum = 0.0;
    design
        .sizes()
        .iter()
        .zip(design.cumulative_sizes())
        .zip(stage_means)
        .map(|((&n, &cum), m)| {
            sum += n as f64 * m;
            sum / (cum as f64).sqrt()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Log stopping probability and its θ-derivatives
// ---------------------------------------------------------------------------

/// log Pr_θ(D = k) with first and second θ-derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogStopDerivatives {
    pub value: f64,
    pub first: f64,
    pub second: f64,
}

/// Uses closed forms when the event is a stage-1 event (D = 1, or D = 2 in a
/// two-stage design); finite differences with Richardson extrapolation
/// otherwise.
pub fn log_stop_derivatives(engine: &Engine, design: &Design, theta: f64, stage: usize) -> Result<LogStopDerivatives> {
    design.check_stage(stage)?;
    let Some((design, stage)) = collapse_non_looks(design, stage)? else {
        return Ok(LogStopDerivatives {
            value: f64::NEG_INFINITY,
            first: 0.0,
            second: 0.0,
        });
    };
    if let Some(d) = closed_form_derivatives(&design, theta, stage) {
        return Ok(d);
    }
    Ok(numeric_derivatives(engine, &design.schedule(), theta, stage))
}

/// Merges interim stages with c = +∞ (never a stopping point) into the next
/// look. Returns `None` when `stage` itself is such a stage, since D = stage is
/// then impossible. Keeps sure events exact instead of differencing round-off.
fn collapse_non_looks(design: &Design, stage: usize) -> Result<Option<(Design, usize)>> {
    let big_k = design.stages();
    let c = design.critical_values();
    let is_look = |k: usize| k + 1 == big_k || c[k] != f64::INFINITY;
    if !is_look(stage - 1) {
        return Ok(None);
    }
    if (0..big_k).all(is_look) {
        return Ok(Some((design.clone(), stage)));
    }
    let (mut sizes, mut crit, mut pending, mut new_stage) = (Vec::new(), Vec::new(), 0, 0);
    for k in 0..big_k {
        pending += design.sizes()[k];
        if is_look(k) {
            sizes.push(pending);
            crit.push(c[k]);
            pending = 0;
            if k + 1 == stage {
                new_stage = sizes.len();
            }
        }
    }
    Ok(Some((Design::new(sizes, crit)?, new_stage)))
}

/// Finite-difference route regardless of whether a closed form exists.
pub fn log_stop_derivatives_numeric(
    engine: &Engine,
    design: &Design,
    theta: f64,
    stage: usize,
) -> Result<LogStopDerivatives> {
    design.check_stage(stage)?;
    Ok(numeric_derivatives(engine, &design.schedule(), theta, stage))
}

fn closed_form_derivatives(design: &Design, theta: f64, stage: usize) -> Option<LogStopDerivatives> {
    let big_k = design.stages();
    if big_k == 1 {
        return Some(LogStopDerivatives {
            value: 0.0,
            first: 0.0,
            second: 0.0,
        });
    }
    let n1 = design.sizes()[0] as f64;
    let c1 = design.critical_values()[0];
    let upper = stage == 1;
    if !upper && !(stage == 2 && big_k == 2) {
        return None;
    }
    // with an infinite boundary the event is sure or impossible for every θ
    if c1.is_infinite() {
        let sure = (c1 == f64::NEG_INFINITY) == upper;
        return Some(LogStopDerivatives {
            value: if sure { 0.0 } else { f64::NEG_INFINITY },
            first: 0.0,
            second: 0.0,
        });
    }
    let a = c1 - theta * n1.sqrt();
    Some(if upper {
        // log Φ̄(a): d/dθ = √n₁ λ(a), d²/dθ² = −n₁ λ(a)(λ(a) − a)
        let lam = mills_upper(a);
        LogStopDerivatives {
            value: log_norm_sf(a),
            first: n1.sqrt() * lam,
            second: -n1 * lam * (lam - a),
        }
    } else {
        // log Φ(a): d/dθ = −√n₁ κ(a), d²/dθ² = −n₁ κ(a)(a + κ(a))
        let kap = mills_lower(a);
        LogStopDerivatives {
            value: log_norm_cdf(a),
            first: -n1.sqrt() * kap,
            second: -n1 * kap * (a + kap),
        }
    })
}

fn numeric_derivatives(engine: &Engine, sched: &Schedule, theta: f64, stage: usize) -> LogStopDerivatives {
    // all evaluations share grids anchored at θ so the differences are smooth
    let f = |t: f64| engine.log_stop_probability_anchored(sched, t, theta, stage);
    let h = FD_STEP;
    let f0 = f(theta);
    let (fp, fm) = (f(theta + h), f(theta - h));
    let (fp2, fm2) = (f(theta + h / 2.0), f(theta - h / 2.0));
    let d1_h = (fp - fm) / (2.0 * h);
    let d1_h2 = (fp2 - fm2) / h;
    let d2_h = (fp - 2.0 * f0 + fm) / (h * h);
    let d2_h2 = (fp2 - 2.0 * f0 + fm2) / (h * h / 4.0);
    LogStopDerivatives {
        value: f0,
        first: (4.0 * d1_h2 - d1_h) / 3.0,
        second: (4.0 * d2_h2 - d2_h) / 3.0,
    }
}

/// d/dθ log Pr_θ(D = k) only; one central difference when no closed form exists.
fn log_stop_slope(engine: &Engine, design: &Design, sched: &Schedule, theta: f64, stage: usize) -> f64 {
    if let Some(d) = closed_form_derivatives(design, theta, stage) {
        return d.first;
    }
    let f = |t: f64| engine.log_stop_probability_anchored(sched, t, theta, stage);
    (f(theta + FD_STEP) - f(theta - FD_STEP)) / (2.0 * FD_STEP)
}

fn log_stop_value(engine: &Engine, design: &Design, sched: &Schedule, theta: f64, stage: usize) -> f64 {
    if let Some(d) = closed_form_derivatives(design, theta, stage) {
        return d.value;
    }
    engine.log_stop_probability_anchored(sched, theta, theta, stage)
}

// ---------------------------------------------------------------------------
// Maximum likelihood
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MleKind {
    Unconditional,
    Conditional,
    FixedEquivalent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MleResult {
    pub estimate: f64,
    pub kind: MleKind,
    /// Conditional only: no interior maximum inside the search bracket.
    pub diverged: bool,
    pub search_bracket: [f64; 2],
}

/// Cumulative mean; equals the fixed-sample MLE.
pub fn mle_unconditional(outcome: &TrialOutcome) -> MleResult {
    let x = outcome.cumulative_mean();
    MleResult {
        estimate: x,
        kind: MleKind::Unconditional,
        diverged: false,
        search_bracket: [x, x],
    }
}

/// Fixed-sample MLE; identical to [`mle_unconditional`] in this model.
pub fn mle_fixed(outcome: &TrialOutcome) -> MleResult {
    MleResult {
        kind: MleKind::FixedEquivalent,
        ..mle_unconditional(outcome)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalMleOptions {
    /// Search half-width around the cumulative mean, in units of 1/√n₁.
    pub half_width: f64,
    pub engine: Engine,
}

impl Default for ConditionalMleOptions {
    fn default() -> Self {
        Self {
            half_width: DEFAULT_HALF_WIDTH,
            engine: Engine::default(),
        }
    }
}

pub fn mle_conditional(outcome: &TrialOutcome) -> MleResult {
    mle_conditional_with(outcome, &ConditionalMleOptions::default())
}

pub fn mle_conditional_with(outcome: &TrialOutcome, opts: &ConditionalMleOptions) -> MleResult {
    conditional_mle_at(
        outcome.design(),
        outcome.stop_stage(),
        outcome.cumulative_mean(),
        opts,
    )
}

/// Conditional MLE for D = stage from the cumulative mean alone.
pub(crate) fn conditional_mle_at(design: &Design, stage: usize, xbar: f64, opts: &ConditionalMleOptions) -> MleResult {
    let engine = &opts.engine;
    let sched = design.schedule();
    let n = design.cumulative_sizes()[stage - 1] as f64;
    let half = opts.half_width / (design.sizes()[0] as f64).sqrt();
    let (lo, hi) = (xbar - half, xbar + half);
    let score = |t: f64| n * (xbar - t) - log_stop_slope(engine, design, &sched, t, stage);
    let loglik = |t: f64| -0.5 * n * (t - xbar).powi(2) - log_stop_value(engine, design, &sched, t, stage);

    let (s_lo, s_hi) = (score(lo), score(hi));
    let (estimate, diverged) = if s_lo >= 0.0 && s_hi <= 0.0 {
        match find_root(score, lo, hi, SCORE_TOL) {
            Ok(t) => (t, false),
            Err(_) => (endpoint(lo, hi, &loglik), true),
        }
    } else {
        (endpoint(lo, hi, &loglik), true)
    };
    MleResult {
        estimate,
        kind: MleKind::Conditional,
        diverged,
        search_bracket: [lo, hi],
    }
}

fn endpoint(lo: f64, hi: f64, loglik: &impl Fn(f64) -> f64) -> f64 {
    let (a, b) = (loglik(lo), loglik(hi));
    // a NaN/−∞ end loses to a finite one
    if b.is_nan() || a >= b {
        lo
    } else {
        hi
    }
}

/// ℓᶜ(θ) for an outcome, up to a θ-free constant.
pub fn conditional_log_likelihood(engine: &Engine, outcome: &TrialOutcome, theta: f64) -> f64 {
    let design = outcome.design();
    let n = outcome.sample_size() as f64;
    let xbar = outcome.cumulative_mean();
    -0.5 * n * (theta - xbar).powi(2)
        - log_stop_value(engine, design, &design.schedule(), theta, outcome.stop_stage())
}

// ---------------------------------------------------------------------------
// Information
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObservedInfo {
    pub theta: f64,
    /// −∂² log f^sub; n₍ₖ₎ here.
    pub observed: f64,
    /// Observed information of the conditional likelihood.
    pub conditional: f64,
    /// Fixed-sample observed information; n₍ₖ₎.
    pub fixed: f64,
}

pub fn observed_info(outcome: &TrialOutcome, theta: f64) -> Result<ObservedInfo> {
    observed_info_with(&Engine::default(), outcome, theta)
}

pub fn observed_info_with(engine: &Engine, outcome: &TrialOutcome, theta: f64) -> Result<ObservedInfo> {
    let k = outcome.stop_stage();
    let d = log_stop_derivatives(engine, outcome.design(), theta, k)?;
    if !(d.value >= UNDERFLOW.ln()) {
        return Err(Error::Underflow {
            stage: k,
            probability: d.value.exp(),
            theta,
        });
    }
    let n = outcome.sample_size() as f64;
    Ok(ObservedInfo {
        theta,
        observed: n,
        conditional: n + d.second,
        fixed: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageInfo {
    pub stage: usize,
    pub stop_probability: f64,
    /// I₍ₖ₎.
    pub stopped: f64,
    /// Iᶜ₍ₖ₎; equals I₍ₖ₎ for a stage that cannot be the stopping stage.
    pub conditional: f64,
    /// I^fix₍ₖ₎ = n₍ₖ₎.
    pub fixed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfoReport {
    pub theta: f64,
    pub stages: Vec<StageInfo>,
    /// I = Σ Pr(D=k) I₍ₖ₎.
    pub overall: f64,
    /// Iᶜ = Σ Pr(D=k) Iᶜ₍ₖ₎.
    pub overall_conditional: f64,
    /// I^fix = Σ Pr(D=k) n₍ₖ₎.
    pub overall_fixed: f64,
    /// E_D[−∂² log Pr_θ(D)].
    pub info_loss: f64,
    /// E_D[(∂ log Pr_θ(D))²]; equal to `info_loss` as the Fisher information of D.
    pub info_loss_score: f64,
    /// I₍ₖ₎ / I₍K₎.
    pub fractions: Vec<f64>,
    /// Iᶜ₍ₖ₎ / Iᶜ₍K₎.
    pub conditional_fractions: Vec<f64>,
    /// n₍ₖ₎ / n₍K₎.
    pub fixed_fractions: Vec<f64>,
}

pub fn expected_info(design: &Design, theta: f64) -> Result<InfoReport> {
    expected_info_with(&Engine::default(), design, theta)
}

pub fn expected_info_with(engine: &Engine, design: &Design, theta: f64) -> Result<InfoReport> {
    let probs = engine.stopping_probabilities(design, theta);
    let mut stages = Vec::with_capacity(design.stages());
    let (mut overall, mut overall_c, mut loss, mut loss_score) = (0.0, 0.0, 0.0, 0.0);
    for (k, (&n, &p)) in design.cumulative_sizes().iter().zip(&probs.stop).enumerate() {
        let n = n as f64;
        let reachable = p > UNDERFLOW;
        let d = if reachable {
            log_stop_derivatives(engine, design, theta, k + 1)?
        } else {
            LogStopDerivatives {
                value: f64::NEG_INFINITY,
                first: 0.0,
                second: 0.0,
            }
        };
        let conditional = n + d.second;
        if reachable {
            overall += p * n;
            overall_c += p * conditional;
            loss -= p * d.second;
            loss_score += p * d.first * d.first;
        }
        stages.push(StageInfo {
            stage: k + 1,
            stop_probability: p,
            stopped: n,
            conditional,
            fixed: n,
        });
    }
    let last = *stages.last().expect("design has at least one stage");
    let fraction = |f: fn(&StageInfo) -> f64| stages.iter().map(|s| f(s) / f(&last)).collect::<Vec<_>>();
    Ok(InfoReport {
        theta,
        fractions: fraction(|s| s.stopped),
        conditional_fractions: fraction(|s| s.conditional),
        fixed_fractions: fraction(|s| s.fixed),
        stages,
        overall,
        overall_conditional: overall_c,
        overall_fixed: overall,
        info_loss: loss,
        info_loss_score: loss_score,
    })
}

/// Fisher information about θ carried by the stopping stage D.
pub fn stopping_rule_information(design: &Design, theta: f64) -> Result<f64> {
    Ok(expected_info(design, theta)?.info_loss)
}

// ---------------------------------------------------------------------------
// Estimator moments
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Unconditional,
    Conditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentMethod {
    Quadrature,
    MonteCarlo { reps: u64, seed: u64 },
}

/// Monte Carlo standard errors of a [`Moments`] row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentErrors {
    pub bias: f64,
    pub sd: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    /// Pr(D = k), or 1 for the marginal row.
    pub probability: f64,
    /// Replicates contributing (Monte Carlo only).
    pub count: Option<u64>,
    pub bias: f64,
    pub sd: f64,
    pub mse: f64,
    pub se: Option<MomentErrors>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorMoments {
    pub estimator: Estimator,
    pub theta: f64,
    /// Moments given D = k.
    pub stages: Vec<Moments>,
    pub overall: Moments,
    /// Fraction of conditional-MLE searches without an interior maximum, per stage.
    pub divergent_fraction: Vec<f64>,
}

pub fn estimator_moments(
    design: &Design,
    theta: f64,
    estimator: Estimator,
    method: MomentMethod,
) -> Result<EstimatorMoments> {
    match method {
        MomentMethod::Quadrature => {
            quadrature_moments(design, theta, estimator, &ConditionalMleOptions::default())
        }
        MomentMethod::MonteCarlo { reps, seed } => {
            let cfg = crate::simulation::SimConfig::new(design.clone(), theta, reps, seed);
            let study = crate::simulation::run_estimator_study(&cfg)?;
            Ok(match estimator {
                Estimator::Unconditional => study.unconditional,
                Estimator::Conditional => study.conditional,
            })
        }
    }
}

/// Integrates the estimator against the density of Z₍ₖ₎ on {D = k}.
///
/// The unconditional estimator is handled for any K; the conditional one
/// needs the closed-form stopping probabilities and so K ≤ 2.
pub fn quadrature_moments(
    design: &Design,
    theta: f64,
    estimator: Estimator,
    opts: &ConditionalMleOptions,
) -> Result<EstimatorMoments> {
    let big_k = design.stages();
    if estimator == Estimator::Conditional && big_k > 2 {
        return Err(Error::Unsupported(format!(
            "quadrature moments of the conditional MLE need K <= 2, got K = {big_k}; use Monte Carlo"
        )));
    }
    let engine = &opts.engine;
    let traj = engine.trajectory(design, theta);
    let tail = engine.quadrature.tail_sd;
    let mut stages = Vec::with_capacity(big_k);
    let mut divergent_fraction = Vec::with_capacity(big_k);
    let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for k in 0..big_k {
        let n = design.cumulative_sizes()[k] as f64;
        let mean = theta * n.sqrt();
        let mut lower = mean - tail;
        let upper = mean + tail;
        if k + 1 < big_k {
            lower = lower.max(design.critical_values()[k]);
        }
        let grid = if upper > lower {
            engine.quadrature.grid(lower, upper)
        } else {
            QuadratureGrid::empty(lower, lower)
        };
        let (p, s1, s2, div) = stage_integrals(&traj, design, k, &grid, estimator, opts);
        m0 += p;
        m1 += s1;
        m2 += s2;
        divergent_fraction.push(if p > 0.0 { div / p } else { 0.0 });
        stages.push(moments_from_sums(p, s1, s2, theta, p));
    }
    let overall = moments_from_sums(m0, m1, m2, theta, 1.0);
    Ok(EstimatorMoments {
        estimator,
        theta,
        stages,
        overall,
        divergent_fraction,
    })
}

fn stage_integrals(
    traj: &Trajectory,
    design: &Design,
    k: usize,
    grid: &QuadratureGrid,
    estimator: Estimator,
    opts: &ConditionalMleOptions,
) -> (f64, f64, f64, f64) {
    let n = design.cumulative_sizes()[k] as f64;
    let (mut p, mut s1, mut s2, mut div) = (0.0, 0.0, 0.0, 0.0);
    for (&z, &w) in grid.nodes().iter().zip(grid.weights()) {
        let f = traj.reach_density(k + 1, z) * w;
        if f == 0.0 {
            continue;
        }
        let xbar = z / n.sqrt();
        let est = match estimator {
            Estimator::Unconditional => xbar,
            Estimator::Conditional => {
                let r = conditional_mle_at(design, k + 1, xbar, opts);
                if r.diverged {
                    div += f;
                }
                r.estimate
            }
        };
        p += f;
        s1 += f * est;
        s2 += f * est * est;
    }
    (p, s1, s2, div)
}

fn moments_from_sums(mass: f64, s1: f64, s2: f64, theta: f64, probability: f64) -> Moments {
    if mass <= 0.0 {
        return Moments {
            probability,
            count: None,
            bias: f64::NAN,
            sd: f64::NAN,
            mse: f64::NAN,
            se: None,
        };
    }
    let mean = s1 / mass;
    let var = (s2 / mass - mean * mean).max(0.0);
    let bias = mean - theta;
    Moments {
        probability,
        count: None,
        bias,
        sd: var.sqrt(),
        mse: var + bias * bias,
        se: None,
    }
}

/// Sample moments of estimates around θ with Monte Carlo standard errors:
/// bias SE s/√m, SD SE by the delta method on the sample variance, MSE SE
/// from the spread of squared errors.
pub fn sample_moments(values: &[f64], theta: f64, probability: f64) -> Moments {
    let m = values.len();
    if m == 0 {
        return Moments {
            probability,
            count: Some(0),
            bias: f64::NAN,
            sd: f64::NAN,
            mse: f64::NAN,
            se: None,
        };
    }
    let mf = m as f64;
    let mean = values.iter().sum::<f64>() / mf;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / mf;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / mf;
    let sq: Vec<f64> = values.iter().map(|v| (v - theta).powi(2)).collect();
    let mse = sq.iter().sum::<f64>() / mf;
    let mse_var = sq.iter().map(|s| (s - mse).powi(2)).sum::<f64>() / mf;
    let sd = var.sqrt();
    let se = (m > 1).then(|| MomentErrors {
        bias: sd / mf.sqrt(),
        sd: if sd > 0.0 {
            ((m4 - var * var).max(0.0) / (4.0 * var * mf)).sqrt()
        } else {
            0.0
        },
        mse: (mse_var / mf).sqrt(),
    });
    Moments {
        probability,
        count: Some(m as u64),
        bias: mean - theta,
        sd,
        mse,
        se,
    }
}

// ---------------------------------------------------------------------------
// Monotone likelihood ratio
// ---------------------------------------------------------------------------

/// log f_a(z) − log f_b(z) for the stage-k density of Z₍ₖ₎ on the reach event.
pub fn log_likelihood_ratio(
    engine: &Engine,
    design: &Design,
    theta_a: f64,
    theta_b: f64,
    stage: usize,
    grid: &[f64],
) -> Result<Vec<f64>> {
    design.check_stage(stage)?;
    let ta = engine.trajectory(design, theta_a);
    let tb = engine.trajectory(design, theta_b);
    grid.iter()
        .map(|&z| {
            let (fa, fb) = (ta.reach_density(stage, z), tb.reach_density(stage, z));
            if fa > 0.0 && fb > 0.0 {
                Ok(fa.ln() - fb.ln())
            } else {
                Err(Error::Domain(format!(
                    "z = {z} lies outside the numerical support of stage {stage}"
                )))
            }
        })
        .collect()
}

/// True iff the stage-k likelihood ratio f_a/f_b is nondecreasing on `grid`
/// (sorted ascending), allowing 1e−9 slack per step.
pub fn mlr_check(design: &Design, theta_a: f64, theta_b: f64, stage: usize, grid: &[f64]) -> Result<bool> {
    if theta_a < theta_b {
        return Err(Error::Domain(format!(
            "mlr_check needs theta_a >= theta_b, got {theta_a} < {theta_b}"
        )));
    }
    let lr = log_likelihood_ratio(&Engine::default(), design, theta_a, theta_b, stage, grid)?;
    Ok(lr.windows(2).all(|w| w[1] >= w[0] - 1e-9))
}
