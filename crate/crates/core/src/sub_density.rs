//! Recursive sub-densities of the cumulative statistic Z₍ₖ₎.
//!
//! Observations are `X ~ N(θ, 1)`. With cumulative information `tₖ` (the
//! cumulative sample size `n₍ₖ₎` for a finite design) the statistic
//! `Z₍ₖ₎ = Σ X / √tₖ` has, given `Z₍ₖ₋₁₎ = s`, the normal transition law
//!
//! ```text
//! Z₍ₖ₎ | s  ~  N( s·√(tₖ₋₁/tₖ) + θ·(tₖ − tₖ₋₁)/√tₖ ,  (tₖ − tₖ₋₁)/tₖ )
//! ```
//!
//! The sub-density of stage k is the density of Z₍ₖ₎ restricted to paths that
//! continued through stages 1..k−1. It is tabulated on a Gauss–Legendre grid
//! over the continuation region `(−∞, cₖ]` (tail-truncated) and pushed forward
//! one stage at a time. Every probability the rest of the crate needs
//! (stopping, rejection, mixture CDFs) is an integral of a tabulated stage
//! density against a closed-form normal tail, so stage k quantities cost
//! O(N) once stage k−1 is tabulated, and a propagation costs O(N²).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{norm_cdf, norm_pdf, norm_sf, QuadratureConfig, QuadratureGrid};

/// Beyond this many kernel standard deviations a transition contributes
/// less than 1e-32 relative and is skipped.
const KERNEL_REACH_SD: f64 = 12.0;

// ---------------------------------------------------------------------------
// Design and drift
// ---------------------------------------------------------------------------

/// Stage sizes `n_k` and critical values `c_k` on the cumulative-Z scale.
///
/// A trial stops at the first `k < K` with `Z₍ₖ₎ > c_k`; `c_K` is the final
/// rejection threshold. `+∞` disables stopping at a stage and `−∞` forces it.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    sizes: Vec<u64>,
    critical: Vec<f64>,
    cumulative: Vec<u64>,
}

impl Design {
    pub fn new(sizes: Vec<u64>, critical: Vec<f64>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidDesign("a design needs at least one stage".into()));
        }
        if sizes.len() != critical.len() {
            return Err(Error::InvalidDesign(format!(
                "{} stage sizes but {} critical values",
                sizes.len(),
                critical.len()
            )));
        }
        if let Some(k) = sizes.iter().position(|&n| n == 0) {
            return Err(Error::InvalidDesign(format!("stage {} has size 0", k + 1)));
        }
        if let Some(k) = critical.iter().position(|c| c.is_nan()) {
            return Err(Error::InvalidDesign(format!("critical value {} is NaN", k + 1)));
        }
        let cumulative = sizes
            .iter()
            .scan(0u64, |acc, &n| {
                *acc += n;
                Some(*acc)
            })
            .collect();
        Ok(Self {
            sizes,
            critical,
            cumulative,
        })
    }

    /// Number of stages K.
    pub fn stages(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }

    pub fn critical_values(&self) -> &[f64] {
        &self.critical
    }

    /// Cumulative sizes n₍ₖ₎.
    pub fn cumulative_sizes(&self) -> &[u64] {
        &self.cumulative
    }

    /// Same stage sizes with a different critical value at `stage` (1-based).
    pub fn with_critical_value(&self, stage: usize, c: f64) -> Result<Self> {
        self.check_stage(stage)?;
        let mut critical = self.critical.clone();
        critical[stage - 1] = c;
        Self::new(self.sizes.clone(), critical)
    }

    /// Every stage size multiplied by `factor`.
    pub fn scaled(&self, factor: u64) -> Result<Self> {
        Self::new(
            self.sizes.iter().map(|n| n * factor).collect(),
            self.critical.clone(),
        )
    }

    pub(crate) fn check_stage(&self, stage: usize) -> Result<()> {
        if stage == 0 || stage > self.stages() {
            return Err(Error::StageOutOfRange {
                stage,
                stages: self.stages(),
            });
        }
        Ok(())
    }

    pub(crate) fn schedule(&self) -> Schedule {
        Schedule {
            cumulative: self.cumulative.iter().map(|&n| n as f64).collect(),
            critical: self.critical.clone(),
        }
    }
}

/// Per-observation mean θ of `X ~ N(θ, 1)`. The drift of Z₍ₖ₎ is `θ·√n₍ₖ₎`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Drift(pub f64);

impl From<f64> for Drift {
    fn from(theta: f64) -> Self {
        Drift(theta)
    }
}

impl Drift {
    pub fn theta(self) -> f64 {
        self.0
    }
}

/// Cumulative information levels and boundaries; shared by finite designs
/// and the local-alternative limit (where information is measured in units
/// of the first stage).
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Schedule {
    pub cumulative: Vec<f64>,
    pub critical: Vec<f64>,
}

impl Schedule {
    pub fn stages(&self) -> usize {
        self.cumulative.len()
    }

    /// Unconditional mean of Z₍ₖ₎ (k 0-based).
    pub fn mean(&self, k: usize, theta: f64) -> f64 {
        theta * self.cumulative[k].sqrt()
    }

    /// Transition law from stage k−1 to stage k (k 0-based, k ≥ 1).
    pub fn kernel(&self, k: usize, theta: f64) -> Kernel {
        Kernel::between(self.cumulative[k - 1], self.cumulative[k], theta)
    }
}

/// Normal transition `Z₍ₖ₎ | s ~ N(ratio·s + shift, sd²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Kernel {
    pub ratio: f64,
    pub shift: f64,
    pub sd: f64,
}

impl Kernel {
    /// Transition from cumulative information `prev` to `cur`.
    pub fn between(prev: f64, cur: f64, theta: f64) -> Self {
        let inc = cur - prev;
        Kernel {
            ratio: (prev / cur).sqrt(),
            shift: theta * inc / cur.sqrt(),
            sd: (inc / cur).sqrt(),
        }
    }

    #[inline]
    fn mean(&self, s: f64) -> f64 {
        self.ratio * s + self.shift
    }

    #[inline]
    fn density(&self, t: f64, s: f64) -> f64 {
        norm_pdf((t - self.mean(s)) / self.sd) / self.sd
    }
}

// ---------------------------------------------------------------------------
// Stage densities
// ---------------------------------------------------------------------------

/// Sub-density of Z₍ₖ₎ on the continuation region of stage k.
#[derive(Debug, Clone, PartialEq)]
pub struct StageDensity {
    stage: usize,
    grid: QuadratureGrid,
    values: Vec<f64>,
    total_mass: f64,
}

impl StageDensity {
    fn new(stage: usize, grid: QuadratureGrid, values: Vec<f64>) -> Self {
        let total_mass = grid.sum(&values);
        Self {
            stage,
            grid,
            values,
            total_mass,
        }
    }

    /// Stage index k (1-based).
    pub fn stage(&self) -> usize {
        self.stage
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Pr(reach stage k and Z₍ₖ₎ ≤ c_k), by quadrature of the values.
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Σ wᵢ f(sᵢ) g(sᵢ): the integral of `g` against the sub-density.
    fn integrate<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        self.grid
            .nodes()
            .iter()
            .zip(self.grid.weights())
            .zip(&self.values)
            .map(|((&s, &w), &f)| if f == 0.0 { 0.0 } else { w * f * g(s) })
            .sum()
    }
}

/// Law of Z₍ₖ₎ on the event of reaching stage k.
#[derive(Clone, Copy)]
pub(crate) enum Incoming<'a> {
    /// Stage 1: unconditional N(mean, 1).
    Start { mean: f64 },
    /// Later stages: previous continuation sub-density pushed through a kernel.
    From {
        density: &'a StageDensity,
        kernel: Kernel,
    },
}

impl Incoming<'_> {
    /// Pr(reach, Z > a).
    pub fn above(&self, a: f64) -> f64 {
        match *self {
            Incoming::Start { mean } => norm_sf(a - mean),
            Incoming::From { density, kernel } => {
                density.integrate(|s| norm_sf((a - kernel.mean(s)) / kernel.sd))
            }
        }
    }

    /// Pr(reach, Z ≤ a).
    pub fn below(&self, a: f64) -> f64 {
        match *self {
            Incoming::Start { mean } => norm_cdf(a - mean),
            Incoming::From { density, kernel } => {
                density.integrate(|s| norm_cdf((a - kernel.mean(s)) / kernel.sd))
            }
        }
    }

    /// Pr(reach, a < Z ≤ b); zero when b ≤ a.
    pub fn between(&self, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let interval = |m: f64, sd: f64| {
            let (za, zb) = ((a - m) / sd, (b - m) / sd);
            // difference of upper tails keeps precision above the mean
            if za > 0.0 {
                norm_sf(za) - norm_sf(zb)
            } else {
                norm_cdf(zb) - norm_cdf(za)
            }
        };
        match *self {
            Incoming::Start { mean } => interval(mean, 1.0),
            Incoming::From { density, kernel } => {
                density.integrate(|s| interval(kernel.mean(s), kernel.sd))
            }
        }
    }

    /// Density of Z at `t` on the reach event.
    pub fn density_at(&self, t: f64) -> f64 {
        match *self {
            Incoming::Start { mean } => norm_pdf(t - mean),
            Incoming::From { density, kernel } => density.integrate(|s| kernel.density(t, s)),
        }
    }
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

/// Quadrature-based evaluator of every design-level probability.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Engine {
    pub quadrature: QuadratureConfig,
}

impl Engine {
    pub fn new(quadrature: QuadratureConfig) -> Self {
        Self { quadrature }
    }

    pub fn with_panels(panels: usize) -> Self {
        Self::new(QuadratureConfig::with_panels(panels))
    }

    /// Continuation grid of stage k (0-based) centred by the drift `anchor`.
    pub(crate) fn continuation_grid(&self, sched: &Schedule, k: usize, anchor: f64) -> QuadratureGrid {
        let c = sched.critical[k];
        let mean = sched.mean(k, anchor);
        let tail = self.quadrature.tail_sd;
        if c == f64::NEG_INFINITY {
            return QuadratureGrid::empty(mean, mean);
        }
        let lower = c.min(mean) - tail;
        let upper = c.min(mean + tail);
        self.quadrature.grid(lower, upper)
    }

    pub(crate) fn first_density(&self, sched: &Schedule, theta: f64, anchor: f64) -> StageDensity {
        let grid = self.continuation_grid(sched, 0, anchor);
        let mean = sched.mean(0, theta);
        let values = grid.nodes().iter().map(|&t| norm_pdf(t - mean)).collect();
        StageDensity::new(1, grid, values)
    }

    pub(crate) fn next_density(
        &self,
        sched: &Schedule,
        prev: &StageDensity,
        theta: f64,
        anchor: f64,
    ) -> StageDensity {
        let k = prev.stage; // 0-based index of the new stage
        let kernel = sched.kernel(k, theta);
        let grid = self.continuation_grid(sched, k, anchor);
        let values = if prev.values.iter().all(|&v| v == 0.0) || grid.is_empty() {
            vec![0.0; grid.len()]
        } else {
            push_forward(prev, kernel, grid.nodes())
        };
        StageDensity::new(k + 1, grid, values)
    }

    /// Stage-1 sub-density: N(θ√n₁, 1) on the continuation grid (−∞, c₁].
    pub fn initial_density(&self, design: &Design, theta: impl Into<Drift>) -> StageDensity {
        let theta = theta.into().0;
        self.first_density(&design.schedule(), theta, theta)
    }

    /// Pushes the stage k−1 sub-density forward to stage k.
    pub fn propagate(
        &self,
        prev: &StageDensity,
        design: &Design,
        theta: impl Into<Drift>,
    ) -> Result<StageDensity> {
        if prev.stage >= design.stages() {
            return Err(Error::StageOutOfRange {
                stage: prev.stage + 1,
                stages: design.stages(),
            });
        }
        let theta = theta.into().0;
        Ok(self.next_density(&design.schedule(), prev, theta, theta))
    }

    /// Tabulates every continuation density a full evaluation needs.
    pub fn trajectory(&self, design: &Design, theta: impl Into<Drift>) -> Trajectory {
        let theta = theta.into().0;
        Trajectory::build(self, design.schedule(), theta, theta, design.stages())
    }

    pub fn stopping_probabilities(
        &self,
        design: &Design,
        theta: impl Into<Drift>,
    ) -> StoppingProbabilities {
        self.trajectory(design, theta).stopping_probabilities()
    }

    /// Pr_θ(Z₍D₎ ≤ v).
    pub fn mixture_cdf(&self, design: &Design, theta: impl Into<Drift>, v: f64) -> f64 {
        self.trajectory(design, theta).mixture_cdf(v)
    }

    /// E_θ[N] = Σ n₍ₖ₎ Pr_θ(D = k).
    pub fn expected_sample_size(&self, design: &Design, theta: impl Into<Drift>) -> f64 {
        let probs = self.stopping_probabilities(design, theta);
        design
            .cumulative_sizes()
            .iter()
            .zip(&probs.stop)
            .map(|(&n, p)| n as f64 * p)
            .sum()
    }

    /// Pr_θ(D = stage) computing only the stages it depends on.
    pub fn stop_probability(&self, design: &Design, theta: f64, stage: usize) -> Result<f64> {
        design.check_stage(stage)?;
        Ok(self.stop_probability_anchored(&design.schedule(), theta, theta, stage))
    }

    /// log Pr_θ(D = stage); closed form where stage-1 quantities suffice.
    pub fn log_stop_probability(&self, design: &Design, theta: f64, stage: usize) -> Result<f64> {
        design.check_stage(stage)?;
        Ok(self.log_stop_probability_anchored(&design.schedule(), theta, theta, stage))
    }

    pub(crate) fn stop_probability_anchored(
        &self,
        sched: &Schedule,
        theta: f64,
        anchor: f64,
        stage: usize,
    ) -> f64 {
        let big_k = sched.stages();
        // Pr(D=k) for k<K is the crossing mass at k; Pr(D=K) the continuation mass at K−1.
        let (k, crossing) = if stage < big_k {
            (stage - 1, true)
        } else if big_k == 1 {
            return 1.0;
        } else {
            (big_k - 2, false)
        };
        let traj = Trajectory::build(self, sched.clone(), theta, anchor, k + 1);
        let inc = traj.incoming(k);
        let c = sched.critical[k];
        if crossing {
            inc.above(c)
        } else {
            inc.below(c)
        }
    }

    pub(crate) fn log_stop_probability_anchored(
        &self,
        sched: &Schedule,
        theta: f64,
        anchor: f64,
        stage: usize,
    ) -> f64 {
        let big_k = sched.stages();
        if big_k == 1 {
            return 0.0;
        }
        let mu1 = sched.mean(0, theta);
        let c1 = sched.critical[0];
        if stage == 1 {
            return crate::numerics::log_norm_sf(c1 - mu1);
        }
        if stage == 2 && big_k == 2 {
            return crate::numerics::log_norm_cdf(c1 - mu1);
        }
        self.stop_probability_anchored(sched, theta, anchor, stage).ln()
    }
}

/// f_k(t) = Σ_s w_s f_{k−1}(s) φ((t − m(s))/σ)/σ for each output node t.
fn push_forward(prev: &StageDensity, kernel: Kernel, targets: &[f64]) -> Vec<f64> {
    let nodes = prev.grid.nodes();
    let mass: Vec<f64> = prev
        .grid
        .weights()
        .iter()
        .zip(&prev.values)
        .map(|(w, f)| w * f)
        .collect();
    let reach = KERNEL_REACH_SD * kernel.sd;
    targets
        .par_iter()
        .map(|&t| {
            // m(s) within t ± reach  <=>  s within [(t − shift − reach)/ratio, (t − shift + reach)/ratio]
            let lo = (t - kernel.shift - reach) / kernel.ratio;
            let hi = (t - kernel.shift + reach) / kernel.ratio;
            let start = nodes.partition_point(|&s| s < lo);
            let end = nodes.partition_point(|&s| s <= hi);
            (start..end)
                .map(|i| mass[i] * kernel.density(t, nodes[i]))
                .sum::<f64>()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Trajectory: all continuation densities at one drift
// ---------------------------------------------------------------------------

/// Continuation sub-densities of stages 1..K−1 at a fixed drift.
#[derive(Debug, Clone)]
pub struct Trajectory {
    sched: Schedule,
    theta: f64,
    densities: Vec<StageDensity>,
}

impl Trajectory {
    /// Tabulates densities needed to evaluate stages `0..depth` (0-based),
    /// i.e. continuation densities of stages 1..depth−1.
    pub(crate) fn build(engine: &Engine, sched: Schedule, theta: f64, anchor: f64, depth: usize) -> Self {
        let needed = depth.saturating_sub(1).min(sched.stages().saturating_sub(1));
        let mut densities: Vec<StageDensity> = Vec::with_capacity(needed);
        for k in 0..needed {
            let d = if k == 0 {
                engine.first_density(&sched, theta, anchor)
            } else {
                engine.next_density(&sched, &densities[k - 1], theta, anchor)
            };
            densities.push(d);
        }
        Self {
            sched,
            theta,
            densities,
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn stages(&self) -> usize {
        self.sched.stages()
    }

    /// Tabulated continuation densities (stages 1..K−1).
    pub fn densities(&self) -> &[StageDensity] {
        &self.densities
    }

    /// Law of Z₍ₖ₎ on the reach event, k 0-based.
    pub(crate) fn incoming(&self, k: usize) -> Incoming<'_> {
        if k == 0 {
            Incoming::Start {
                mean: self.sched.mean(0, self.theta),
            }
        } else {
            Incoming::From {
                density: &self.densities[k - 1],
                kernel: self.sched.kernel(k, self.theta),
            }
        }
    }

    /// Density of Z₍ₖ₎ (stage 1-based) at `t` on the event of reaching stage k.
    pub fn reach_density(&self, stage: usize, t: f64) -> f64 {
        self.incoming(stage - 1).density_at(t)
    }

    pub fn stopping_probabilities(&self) -> StoppingProbabilities {
        let big_k = self.stages();
        let mut reach = Vec::with_capacity(big_k);
        let mut stop = Vec::with_capacity(big_k);
        let mut reject = Vec::with_capacity(big_k);
        let mut reach_next = 1.0;
        for k in 0..big_k {
            let inc = self.incoming(k);
            let c = self.sched.critical[k];
            reach.push(reach_next);
            let cross = inc.above(c);
            reject.push(cross);
            if k + 1 < big_k {
                stop.push(cross);
                reach_next = inc.below(c);
            } else {
                stop.push(reach_next);
            }
        }
        let cumulative_reject = reject
            .iter()
            .scan(0.0, |acc, r| {
                *acc += r;
                Some(*acc)
            })
            .collect();
        StoppingProbabilities {
            reach,
            stop,
            reject,
            cumulative_reject,
        }
    }

    /// Pr(D = k, Z₍ₖ₎ ≤ vₖ) for each k; `thresholds` has one entry per stage.
    pub fn stopped_cdf_components(&self, thresholds: &[f64]) -> Vec<f64> {
        let big_k = self.stages();
        assert_eq!(thresholds.len(), big_k);
        (0..big_k)
            .map(|k| {
                let inc = self.incoming(k);
                if k + 1 < big_k {
                    inc.between(self.sched.critical[k], thresholds[k])
                } else {
                    inc.below(thresholds[k])
                }
            })
            .collect()
    }

    /// Per-stage pieces of Pr(Z₍D₎ ≤ v).
    pub fn mixture_cdf_components(&self, v: f64) -> Vec<f64> {
        self.stopped_cdf_components(&vec![v; self.stages()])
    }

    pub fn mixture_cdf(&self, v: f64) -> f64 {
        if v == f64::NEG_INFINITY {
            return 0.0;
        }
        self.mixture_cdf_components(v).iter().sum()
    }

    /// Pr(V₍D₎ ≤ v) for the standardized estimate V₍ₖ₎ = Z₍ₖ₎ − θ√tₖ.
    pub fn standardized_cdf_components(&self, v: f64) -> Vec<f64> {
        let thresholds: Vec<f64> = (0..self.stages())
            .map(|k| v + self.sched.mean(k, self.theta))
            .collect();
        self.stopped_cdf_components(&thresholds)
    }
}

/// Stage-wise operating characteristics at one drift.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingProbabilities {
    /// Pr(reach stage k).
    pub reach: Vec<f64>,
    /// Pr(D = k).
    pub stop: Vec<f64>,
    /// Pr(R_k): rejection at stage k (for k = K, Pr(reach K, Z₍K₎ > c_K)).
    pub reject: Vec<f64>,
    /// Σ_{j≤k} Pr(R_j).
    pub cumulative_reject: Vec<f64>,
}

impl StoppingProbabilities {
    /// Overall rejection probability (type-1 error at θ = 0, power otherwise).
    pub fn overall_reject(&self) -> f64 {
        *self.cumulative_reject.last().unwrap_or(&0.0)
    }

    /// Pr(Z₍ₖ₎ > c_k | reached k).
    pub fn conditional_reject(&self) -> Vec<f64> {
        self.reject
            .iter()
            .zip(&self.reach)
            .map(|(r, p)| if *p > 0.0 { r / p } else { 0.0 })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Free-function front end with default quadrature
// ---------------------------------------------------------------------------

pub fn initial_density(design: &Design, theta: impl Into<Drift>) -> StageDensity {
    Engine::default().initial_density(design, theta)
}

pub fn propagate(prev: &StageDensity, design: &Design, theta: impl Into<Drift>) -> Result<StageDensity> {
    Engine::default().propagate(prev, design, theta)
}

pub fn stopping_probabilities(design: &Design, theta: impl Into<Drift>) -> StoppingProbabilities {
    Engine::default().stopping_probabilities(design, theta)
}

pub fn mixture_cdf(design: &Design, theta: impl Into<Drift>, v: f64) -> f64 {
    Engine::default().mixture_cdf(design, theta, v)
}

pub fn expected_sample_size(design: &Design, theta: impl Into<Drift>) -> f64 {
    Engine::default().expected_sample_size(design, theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{norm_cdf, norm_sf};

    fn pocock() -> Design {
        Design::new(vec![100, 100], vec![2.18, 2.18]).unwrap()
    }

    fn table3() -> Design {
        Design::new(vec![98, 98, 576], vec![2.12, 2.01, 2.02]).unwrap()
    }

    #[test]
    fn design_validation() {
        assert!(Design::new(vec![], vec![]).is_err());
        assert!(Design::new(vec![10], vec![1.0, 2.0]).is_err());
        assert!(Design::new(vec![10, 0], vec![1.0, 2.0]).is_err());
        assert!(Design::new(vec![10], vec![f64::NAN]).is_err());
        let d = table3();
        assert_eq!(d.cumulative_sizes(), &[98, 196, 772]);
        assert!(d.cumulative_sizes().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn initial_density_masses() {
        let d = initial_density(&pocock(), 0.0);
        assert!((d.total_mass() - norm_cdf(2.18)).abs() < 1e-10);
        assert!((d.total_mass() - 0.98537).abs() < 5e-6);
        assert!(d.values().iter().all(|&v| v >= 0.0));

        let open = Design::new(vec![100, 100], vec![f64::INFINITY, 2.18]).unwrap();
        let d = initial_density(&open, 0.0);
        assert!((d.total_mass() - 1.0).abs() < 1e-10);
        for (&t, &v) in d.grid().nodes().iter().zip(d.values()) {
            assert_eq!(v, norm_pdf(t));
        }

        let d = initial_density(&pocock(), 0.218);
        assert!((d.total_mass() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn pocock_overall_type_one_error() {
        let p = stopping_probabilities(&pocock(), 0.0);
        assert!((p.overall_reject() - 0.025).abs() < 1e-3, "{}", p.overall_reject());
        let stage2 = propagate(&initial_density(&pocock(), 0.0), &pocock(), 0.0).unwrap();
        assert!((stage2.total_mass() - 0.975).abs() < 5e-4);
        assert!((stage2.total_mass() - (1.0 - p.overall_reject())).abs() < 1e-9);
    }

    #[test]
    fn propagate_rejects_stage_overflow() {
        let d = pocock();
        let s1 = initial_density(&d, 0.0);
        let s2 = propagate(&s1, &d, 0.0).unwrap();
        assert_eq!(s2.stage(), 2);
        assert!(matches!(
            propagate(&s2, &d, 0.0),
            Err(Error::StageOutOfRange { stage: 3, stages: 2 })
        ));
    }

    #[test]
    fn zero_mass_is_absorbing() {
        let d = Design::new(vec![50, 50, 50], vec![f64::NEG_INFINITY, 2.0, 2.0]).unwrap();
        let s1 = initial_density(&d, 0.1);
        assert_eq!(s1.total_mass(), 0.0);
        let s2 = propagate(&s1, &d, 0.1).unwrap();
        assert!(s2.values().iter().all(|&v| v == 0.0));
        assert_eq!(s2.total_mass(), 0.0);
    }

    #[test]
    fn untruncated_stage_two_is_normal() {
        let theta = 0.07;
        let d = Design::new(vec![100, 100], vec![f64::INFINITY, f64::INFINITY]).unwrap();
        let traj = Engine::default().trajectory(&d, theta);
        for &z in &[-1.0, 0.0, 0.5, 1.5, 2.18, 3.0] {
            let below = traj.incoming(1).below(z);
            let exact = norm_cdf(z - theta * 200f64.sqrt());
            assert!((below - exact).abs() < 1e-8, "z={z}");
        }
    }

    #[test]
    fn k_equals_one() {
        let d = Design::new(vec![40], vec![1.96]).unwrap();
        let p = stopping_probabilities(&d, 0.2);
        assert_eq!(p.stop, vec![1.0]);
        assert!((p.reject[0] - norm_sf(1.96 - 0.2 * 40f64.sqrt())).abs() < 1e-15);
        assert_eq!(expected_sample_size(&d, 0.2), 40.0);
    }

    #[test]
    fn table3_quadrature_cells() {
        let d = table3();
        let rows = [
            (0.0, [0.0170, 0.0336, 0.0509], 751.0),
            (0.1, [0.1287, 0.3044, 0.7983], 584.0),
            (0.2, [0.4424, 0.8016, 0.9998], 267.0),
            (0.3, [0.8018, 0.9877, 1.0000], 125.0),
        ];
        for (theta, cum, en) in rows {
            let p = stopping_probabilities(&d, theta);
            for k in 0..3 {
                // quadrature against the printed Monte-Carlo values (SE <= 0.0016)
                assert!((p.cumulative_reject[k] - cum[k]).abs() < 0.005, "theta {theta} stage {k}");
            }
            let sum: f64 = p.stop.iter().sum();
            assert!((sum - 1.0).abs() < 1e-8);
            assert!((expected_sample_size(&d, theta) - en).abs() < 3.0, "theta {theta}");
        }
        let p = stopping_probabilities(&d, 0.3);
        assert!((p.reject[0] - 0.8018).abs() < 0.005);
    }

    #[test]
    fn mixture_cdf_limits_and_pocock_value() {
        let d = pocock();
        assert_eq!(mixture_cdf(&d, 0.0, f64::NEG_INFINITY), 0.0);
        assert!((mixture_cdf(&d, 0.0, f64::INFINITY) - 1.0).abs() < 1e-10);
        assert!((mixture_cdf(&d, 0.0, 2.18) - 0.975).abs() < 5e-4);
        let traj = Engine::default().trajectory(&d, 0.1);
        let mut last = 0.0;
        for i in 0..=120 {
            let v = -4.0 + i as f64 * 0.08;
            let f = traj.mixture_cdf(v);
            assert!(f >= last - 1e-14);
            last = f;
        }
    }

    #[test]
    fn mass_conservation_and_monotone_rejection() {
        let d = table3();
        let mut last = 0.0;
        for i in 0..=10 {
            let theta = -0.1 + 0.05 * i as f64;
            let p = stopping_probabilities(&d, theta);
            assert!((p.stop.iter().sum::<f64>() - 1.0).abs() < 1e-8);
            assert!(p.overall_reject() >= last);
            last = p.overall_reject();
        }
    }

    #[test]
    fn lazy_stop_probability_matches_full() {
        let d = table3();
        let full = stopping_probabilities(&d, 0.15);
        let e = Engine::default();
        for k in 1..=3 {
            let p = e.stop_probability(&d, 0.15, k).unwrap();
            assert!((p - full.stop[k - 1]).abs() < 1e-14);
            let lp = e.log_stop_probability(&d, 0.15, k).unwrap();
            assert!((lp - p.ln()).abs() < 1e-12);
        }
        assert!(e.stop_probability(&d, 0.15, 4).is_err());
    }

    #[test]
    fn grid_refinement_is_stable() {
        let d = table3();
        for &theta in &[0.0, 0.1, 0.25] {
            let a = Engine::with_panels(256).stopping_probabilities(&d, theta);
            let b = Engine::with_panels(512).stopping_probabilities(&d, theta);
            for k in 0..3 {
                assert!((a.stop[k] - b.stop[k]).abs() < 1e-6);
                assert!((a.cumulative_reject[k] - b.cumulative_reject[k]).abs() < 1e-6);
            }
        }
    }
}
