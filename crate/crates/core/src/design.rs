//! Stage-wise design search under ordered alternatives θ₁ > … > θ_K.
//!
//! Stage k is fixed by two conditions: the conditional null crossing
//! probability `Pr₀(Z₍ₖ₎ > c_k | reached k)` equals α_k, and the cumulative
//! power at θ_k, `Σ_{j≤k} Pr_{θ_k}(R_j)`, reaches the target. For a candidate
//! `n_k` the first condition pins `c_k` by root finding; `n_k` is the smallest
//! integer whose induced power meets the target.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{find_root, norm_quantile};
use crate::sub_density::{Design, Engine, Incoming, Kernel, StageDensity, StoppingProbabilities};

/// Default ceiling on any single stage size.
pub const DEFAULT_STAGE_CAP: u64 = 1_000_000;

const CRITICAL_TOL: f64 = 1e-13;

/// Per-stage conditional type-1 error rule.
#[derive(Debug, Clone, PartialEq)]
pub enum AlphaPolicy {
    /// Common α₀ with 1 − (1 − α₀)^K = α.
    EqualConditional,
    /// User-supplied α_k, one per stage.
    ExplicitConditional(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    alpha: f64,
    power: f64,
    alternatives: Vec<f64>,
    alpha_policy: AlphaPolicy,
}

impl DesignSpec {
    pub fn new(alpha: f64, power: f64, alternatives: Vec<f64>, alpha_policy: AlphaPolicy) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidSpec(format!("alpha {alpha} outside (0, 1)")));
        }
        if !(power > 0.0 && power < 1.0) {
            return Err(Error::InvalidSpec(format!("power {power} outside (0, 1)")));
        }
        if alpha + (1.0 - power) >= 1.0 {
            return Err(Error::InvalidSpec(format!(
                "alpha + beta = {} must be below 1",
                alpha + 1.0 - power
            )));
        }
        if alternatives.is_empty() {
            return Err(Error::InvalidSpec("at least one alternative is required".into()));
        }
        if let Some(t) = alternatives.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::InvalidSpec(format!("alternative {t} is not a positive number")));
        }
        if let Some(i) = alternatives.windows(2).position(|w| w[1] >= w[0]) {
            return Err(Error::InvalidSpec(format!(
                "alternatives must be strictly decreasing: theta_{} = {} <= theta_{} = {}",
                i + 1,
                alternatives[i],
                i + 2,
                alternatives[i + 1]
            )));
        }
        if let AlphaPolicy::ExplicitConditional(a) = &alpha_policy {
            if a.len() != alternatives.len() {
                return Err(Error::InvalidSpec(format!(
                    "{} conditional alphas for {} stages",
                    a.len(),
                    alternatives.len()
                )));
            }
            if let Some(x) = a.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
                return Err(Error::InvalidSpec(format!("conditional alpha {x} outside (0, 1)")));
            }
        }
        Ok(Self {
            alpha,
            power,
            alternatives,
            alpha_policy,
        })
    }

    /// Same α₀ at every stage.
    pub fn with_common_alpha(alpha: f64, power: f64, alternatives: Vec<f64>, alpha0: f64) -> Result<Self> {
        let k = alternatives.len();
        Self::new(alpha, power, alternatives, AlphaPolicy::ExplicitConditional(vec![alpha0; k]))
    }

    pub fn stages(&self) -> usize {
        self.alternatives.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn alternatives(&self) -> &[f64] {
        &self.alternatives
    }

    pub fn alpha_policy(&self) -> &AlphaPolicy {
        &self.alpha_policy
    }

    /// α_k for every stage.
    pub fn conditional_alphas(&self) -> Vec<f64> {
        match &self.alpha_policy {
            AlphaPolicy::EqualConditional => vec![solve_alpha0(self.alpha, self.stages()); self.stages()],
            AlphaPolicy::ExplicitConditional(a) => a.clone(),
        }
    }
}

/// α₀ with 1 − (1 − α₀)^K = α.
pub fn solve_alpha0(alpha: f64, stages: usize) -> f64 {
    // -expm1(ln1p(-α)/K) avoids cancellation for small α
    -((-alpha).ln_1p() / stages as f64).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub stage_cap: u64,
    pub engine: Engine,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            stage_cap: DEFAULT_STAGE_CAP,
            engine: Engine::default(),
        }
    }
}

/// One solved stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageSolution {
    pub n: u64,
    pub c: f64,
    /// Achieved Pr₀(Z₍ₖ₎ > c_k | reached k).
    pub conditional_alpha: f64,
    /// Achieved cumulative power at θ_k through stage k.
    pub cumulative_power: f64,
}

/// Operating characteristics at one θ.
#[derive(Debug, Clone, PartialEq)]
pub struct OcRow {
    pub theta: f64,
    pub probabilities: StoppingProbabilities,
    pub expected_sample_size: f64,
}

pub fn oc_row(engine: &Engine, design: &Design, theta: f64) -> OcRow {
    let probabilities = engine.stopping_probabilities(design, theta);
    let expected_sample_size = design
        .cumulative_sizes()
        .iter()
        .zip(&probabilities.stop)
        .map(|(&n, p)| n as f64 * p)
        .sum();
    OcRow {
        theta,
        probabilities,
        expected_sample_size,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolvedDesign {
    pub design: Design,
    pub stages: Vec<StageSolution>,
    /// Rows at θ = 0 and at each alternative.
    pub oc: Vec<OcRow>,
}

/// Incremental solver; keeps the null continuation densities of solved stages.
struct StageSearch<'a> {
    spec: &'a DesignSpec,
    opts: SolverOptions,
    sizes: Vec<u64>,
    critical: Vec<f64>,
    null_densities: Vec<StageDensity>,
}

impl<'a> StageSearch<'a> {
    fn new(spec: &'a DesignSpec, opts: SolverOptions) -> Self {
        Self {
            spec,
            opts,
            sizes: Vec::new(),
            critical: Vec::new(),
            null_densities: Vec::new(),
        }
    }

    fn start(spec: &'a DesignSpec, opts: SolverOptions, sizes: &[u64], critical: &[f64]) -> Result<Self> {
        let mut s = Self::new(spec, opts);
        for (&n, &c) in sizes.iter().zip(critical) {
            s.push(n, c)?;
        }
        Ok(s)
    }

    fn cumulative(&self) -> f64 {
        self.sizes.iter().sum::<u64>() as f64
    }

    fn push(&mut self, n: u64, c: f64) -> Result<()> {
        self.sizes.push(n);
        self.critical.push(c);
        let design = Design::new(self.sizes.clone(), self.critical.clone())?;
        let engine = &self.opts.engine;
        let next = match self.null_densities.last() {
            None => engine.initial_density(&design, 0.0),
            Some(prev) => engine.propagate(prev, &design, 0.0)?,
        };
        self.null_densities.push(next);
        Ok(())
    }

    /// Continuation densities of the solved stages at θ.
    fn densities_at(&self, theta: f64) -> Result<Vec<StageDensity>> {
        if self.sizes.is_empty() {
            return Ok(Vec::new());
        }
        let design = Design::new(self.sizes.clone(), self.critical.clone())?;
        let engine = &self.opts.engine;
        let mut out: Vec<StageDensity> = vec![engine.initial_density(&design, theta)];
        for _ in 1..self.sizes.len() {
            let next = engine.propagate(out.last().unwrap(), &design, theta)?;
            out.push(next);
        }
        Ok(out)
    }

    fn incoming<'d>(&self, densities: &'d [StageDensity], n: u64, theta: f64) -> Incoming<'d> {
        let prev = self.cumulative();
        let cur = prev + n as f64;
        match densities.last() {
            None => Incoming::Start {
                mean: theta * cur.sqrt(),
            },
            Some(density) => Incoming::From {
                density,
                kernel: Kernel::between(prev, cur, theta),
            },
        }
    }

    /// c_k meeting the conditional null crossing probability for stage size n.
    fn critical_for(&self, n: u64, alpha_k: f64) -> Result<f64> {
        let inc = self.incoming(&self.null_densities, n, 0.0);
        let reach = self.null_densities.last().map_or(1.0, |d| d.total_mass());
        if reach <= 0.0 {
            return Err(Error::Underflow {
                stage: self.sizes.len() + 1,
                probability: reach,
                theta: 0.0,
            });
        }
        if self.null_densities.is_empty() {
            return norm_quantile(1.0 - alpha_k);
        }
        find_root(|c| inc.above(c) / reach - alpha_k, -40.0, 40.0, CRITICAL_TOL)
    }

    /// Finds (n_k, c_k) for the next stage.
    fn solve_next(&self) -> Result<StageSolution> {
        let k = self.sizes.len();
        let theta = self.spec.alternatives[k];
        let alpha_k = self.spec.conditional_alphas()[k];
        let target = self.spec.power;
        let alt = self.densities_at(theta)?;

        // rejection already accumulated at θ_k by the solved stages
        let mut prior = 0.0;
        for (j, &c) in self.critical.iter().enumerate() {
            let inc = if j == 0 {
                Incoming::Start {
                    mean: theta * (self.sizes[0] as f64).sqrt(),
                }
            } else {
                let prev: u64 = self.sizes[..j].iter().sum();
                Incoming::From {
                    density: &alt[j - 1],
                    kernel: Kernel::between(prev as f64, (prev + self.sizes[j]) as f64, theta),
                }
            };
            prior += inc.above(c);
        }

        let evaluate = |n: u64| -> Result<StageSolution> {
            let c = self.critical_for(n, alpha_k)?;
            let cumulative_power = prior + self.incoming(&alt, n, theta).above(c);
            Ok(StageSolution {
                n,
                c,
                conditional_alpha: alpha_k,
                cumulative_power,
            })
        };

        let cap = self.opts.stage_cap.max(1);
        let mut lo = 0u64; // largest n known to fall short (0: none tried)
        let mut hi = 1u64;
        let mut best = evaluate(hi)?;
        while best.cumulative_power < target {
            if hi >= cap {
                return Err(Error::Infeasible {
                    stage: k + 1,
                    achieved_power: best.cumulative_power,
                    target,
                    cap,
                });
            }
            lo = hi;
            hi = (hi * 2).min(cap);
            best = evaluate(hi)?;
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            let s = evaluate(mid)?;
            if s.cumulative_power >= target {
                hi = mid;
                best = s;
            } else {
                lo = mid;
            }
        }
        Ok(best)
    }
}

/// Solves stage `k` (1-based) given solved stages 1..k−1.
pub fn solve_stage_k(
    sizes: &[u64],
    critical: &[f64],
    spec: &DesignSpec,
    k: usize,
    opts: SolverOptions,
) -> Result<StageSolution> {
    if k == 0 || k > spec.stages() {
        return Err(Error::StageOutOfRange {
            stage: k,
            stages: spec.stages(),
        });
    }
    if sizes.len() != k - 1 || critical.len() != k - 1 {
        return Err(Error::InvalidDesign(format!(
            "stage {k} needs exactly {} solved stages, got {} sizes and {} critical values",
            k - 1,
            sizes.len(),
            critical.len()
        )));
    }
    StageSearch::start(spec, opts, sizes, critical)?.solve_next()
}

pub fn solve_design(spec: &DesignSpec) -> Result<SolvedDesign> {
    solve_design_with(spec, SolverOptions::default())
}

pub fn solve_design_with(spec: &DesignSpec, opts: SolverOptions) -> Result<SolvedDesign> {
    let mut search = StageSearch::new(spec, opts);
    let mut stages = Vec::with_capacity(spec.stages());
    for k in 0..spec.stages() {
        let sol = search.solve_next()?;
        stages.push(sol);
        if k + 1 < spec.stages() {
            search.push(sol.n, sol.c)?;
        } else {
            search.sizes.push(sol.n);
            search.critical.push(sol.c);
        }
    }
    let design = Design::new(search.sizes, search.critical)?;
    let oc = std::iter::once(0.0)
        .chain(spec.alternatives.iter().copied())
        .map(|theta| oc_row(&opts.engine, &design, theta))
        .collect();
    Ok(SolvedDesign { design, stages, oc })
}

/// Tolerance on the overall type-1 error in [`validate_design`].
pub const ALPHA_TOLERANCE: f64 = 0.002;
/// Allowed shortfall of the overall power in [`validate_design`].
pub const POWER_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerCheck {
    pub theta: f64,
    /// Cumulative power through the stage this alternative drives.
    pub stage_power: f64,
    pub overall_power: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub overall_alpha: f64,
    pub alpha_target: f64,
    pub alpha_ok: bool,
    /// Achieved Pr₀(Z₍ₖ₎ > c_k | reached k).
    pub conditional_alphas: Vec<f64>,
    pub power_target: f64,
    pub powers: Vec<PowerCheck>,
    pub messages: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.alpha_ok && self.powers.iter().all(|p| p.ok) && self.messages.is_empty()
    }
}

pub fn validate_design(design: &Design, spec: &DesignSpec) -> ValidationReport {
    validate_design_with(&Engine::default(), design, spec)
}

pub fn validate_design_with(engine: &Engine, design: &Design, spec: &DesignSpec) -> ValidationReport {
    let mut messages = Vec::new();
    let null = engine.stopping_probabilities(design, 0.0);
    let overall_alpha = null.overall_reject();
    let alpha_ok = (overall_alpha - spec.alpha).abs() <= ALPHA_TOLERANCE;
    if !alpha_ok {
        messages.push(format!(
            "overall alpha {overall_alpha:.6} deviates from {} by more than {ALPHA_TOLERANCE}",
            spec.alpha
        ));
    }
    if design.stages() != spec.stages() {
        messages.push(format!(
            "design has {} stages, spec has {}",
            design.stages(),
            spec.stages()
        ));
    }
    let powers = spec
        .alternatives
        .iter()
        .enumerate()
        .map(|(k, &theta)| {
            let p = engine.stopping_probabilities(design, theta);
            let stage_power = p.cumulative_reject[k.min(design.stages() - 1)];
            let overall_power = p.overall_reject();
            let ok = overall_power >= spec.power - POWER_TOLERANCE && overall_power <= 1.0 + 1e-12;
            if !ok {
                messages.push(format!(
                    "overall power {overall_power:.6} at theta {theta} below {} - {POWER_TOLERANCE}",
                    spec.power
                ));
            }
            PowerCheck {
                theta,
                stage_power,
                overall_power,
                ok,
            }
        })
        .collect();
    ValidationReport {
        overall_alpha,
        alpha_target: spec.alpha,
        alpha_ok,
        conditional_alphas: null.conditional_reject(),
        power_target: spec.power,
        powers,
        messages,
    }
}
