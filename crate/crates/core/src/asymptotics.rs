//! Limiting law of the standardized estimate V₍D₎ under local alternatives.
//!
//! With θ = h/√n₁ and n₍ₖ₎/n_j → r₍ₖ₎ⱼ, the standardized estimate on D = k
//! converges to `Σ_{j≤k} ξ_j / √r₍ₖ₎ⱼ` with independent standard normal ξ_j,
//! and the stopping events become half-lines for the partial sums. The
//! K-stage law is evaluated by the same recursion as finite designs with
//! cumulative information t_k = r₍ₖ₎₁ (units of n₁) and drift h. The
//! two-stage law also has a direct one-dimensional integral form.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{derive_stream, norm_cdf, norm_pdf, QuadratureGrid};
use crate::sub_density::{Design, Engine, Schedule, Trajectory};

const RATIO_TOL: f64 = 1e-9;

/// Local-alternative description of a K-stage design.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalAltSpec {
    h: f64,
    /// ratios[k][j] = r₍ₖ₊₁₎₍ⱼ₊₁₎ for j ≤ k.
    ratios: Vec<Vec<f64>>,
    /// c₁..c_{K−1}.
    boundary: Vec<f64>,
}

impl LocalAltSpec {
    /// `ratios` is lower-triangular: row k holds r₍ₖ₎₁..r₍ₖ₎ₖ.
    pub fn new(h: f64, ratios: Vec<Vec<f64>>, boundary: Vec<f64>) -> Result<Self> {
        if !h.is_finite() {
            return Err(Error::InvalidRatios(format!("h = {h} is not finite")));
        }
        let big_k = ratios.len();
        if big_k == 0 {
            return Err(Error::InvalidRatios("at least one stage is required".into()));
        }
        if boundary.len() + 1 != big_k {
            return Err(Error::InvalidRatios(format!(
                "{big_k} stages need {} boundary values, got {}",
                big_k - 1,
                boundary.len()
            )));
        }
        if boundary.iter().any(|c| c.is_nan()) {
            return Err(Error::InvalidRatios("boundary value is NaN".into()));
        }
        for (k, row) in ratios.iter().enumerate() {
            if row.len() != k + 1 {
                return Err(Error::InvalidRatios(format!(
                    "row {} of the ratio table has {} entries, expected {}",
                    k + 1,
                    row.len(),
                    k + 1
                )));
            }
            if let Some(j) = row.iter().position(|r| !(r.is_finite() && *r >= 1.0)) {
                return Err(Error::InvalidRatios(format!(
                    "r_({}){} = {} must be finite and >= 1",
                    k + 1,
                    j + 1,
                    row[j]
                )));
            }
        }
        if (ratios[0][0] - 1.0).abs() > RATIO_TOL {
            return Err(Error::InvalidRatios(format!("r_(1)1 = {} must be 1", ratios[0][0])));
        }
        // n_j/n₁ = r₍ⱼ₎₁ / r₍ⱼ₎ⱼ; cumulative information must add up and
        // every r₍ₖ₎ⱼ must equal r₍ₖ₎₁ · n₁/n_j.
        let stage_share: Vec<f64> = ratios.iter().enumerate().map(|(j, row)| row[0] / row[j]).collect();
        let mut cum = 0.0;
        for (k, row) in ratios.iter().enumerate() {
            cum += stage_share[k];
            if (row[0] - cum).abs() > RATIO_TOL * cum {
                return Err(Error::InvalidRatios(format!(
                    "r_({k1})1 = {} but the stage shares r_(i)1/r_(i)i sum to {cum}",
                    row[0],
                    k1 = k + 1
                )));
            }
            for (j, &r) in row.iter().enumerate() {
                let want = row[0] / stage_share[j];
                if (r - want).abs() > RATIO_TOL * want {
                    return Err(Error::InvalidRatios(format!(
                        "r_({}){} = {r} violates r_(k)j = r_(k)1 r_(j)j / r_(j)1 = {want}",
                        k + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(Self { h, ratios, boundary })
    }

    /// Ratios and boundary taken from a finite design.
    pub fn from_design(design: &Design, h: f64) -> Result<Self> {
        let cum = design.cumulative_sizes();
        let sizes = design.sizes();
        let ratios = (0..design.stages())
            .map(|k| (0..=k).map(|j| cum[k] as f64 / sizes[j] as f64).collect())
            .collect();
        let boundary = design.critical_values()[..design.stages() - 1].to_vec();
        Self::new(h, ratios, boundary)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn with_h(&self, h: f64) -> Self {
        Self { h, ..self.clone() }
    }

    pub fn stages(&self) -> usize {
        self.ratios.len()
    }

    pub fn ratios(&self) -> &[Vec<f64>] {
        &self.ratios
    }

    pub fn boundary(&self) -> &[f64] {
        &self.boundary
    }

    /// r₍ₖ₎ = r₍ₖ₎ₖ.
    pub fn r(&self, stage: usize) -> f64 {
        self.ratios[stage - 1][stage - 1]
    }

    fn schedule(&self) -> Schedule {
        let mut critical = self.boundary.clone();
        critical.push(f64::INFINITY);
        Schedule {
            cumulative: self.ratios.iter().map(|row| row[0]).collect(),
            critical,
        }
    }

    fn trajectory(&self, engine: &Engine) -> Trajectory {
        Trajectory::build(engine, self.schedule(), self.h, self.h, self.stages())
    }

    /// p_k = lim Pr(D = k).
    pub fn limit_probs(&self) -> Vec<f64> {
        self.trajectory(&Engine::default()).stopping_probabilities().stop
    }
}

/// Two-stage limit by direct integration over the stage-1 statistic.
///
/// Component 1 is Pr(c₁ − h < V₁ ≤ v); component 2 is
/// ∫_{−∞}^{c₁−h} Φ(√r v − √(r−1) y) φ(y) dy with r = r₍₂₎.
pub fn mixture_cdf_two_stage(spec: &LocalAltSpec, v: f64) -> Result<f64> {
    Ok(two_stage_components(spec, v, &Engine::default())?.iter().sum())
}

pub fn two_stage_components(spec: &LocalAltSpec, v: f64, engine: &Engine) -> Result<[f64; 2]> {
    if spec.stages() != 2 {
        return Err(Error::InvalidSpec(format!(
            "two-stage form needs K = 2, got K = {}",
            spec.stages()
        )));
    }
    if v == f64::INFINITY {
        return Ok([1.0 - norm_cdf(spec.boundary[0] - spec.h), norm_cdf(spec.boundary[0] - spec.h)]);
    }
    if v == f64::NEG_INFINITY {
        return Ok([0.0, 0.0]);
    }
    let cut = spec.boundary[0] - spec.h;
    let first = if v > cut {
        if cut > 0.0 {
            crate::numerics::norm_sf(cut) - crate::numerics::norm_sf(v)
        } else {
            norm_cdf(v) - norm_cdf(cut)
        }
    } else {
        0.0
    };
    let r = spec.r(2);
    let (a, b) = (r.sqrt(), (r - 1.0).sqrt());
    let tail = engine.quadrature.tail_sd;
    let upper = cut.min(tail);
    let grid = if upper > -tail {
        engine.quadrature.grid(-tail, upper)
    } else {
        QuadratureGrid::empty(-tail, -tail)
    };
    let second = grid
        .nodes()
        .iter()
        .zip(grid.weights())
        .map(|(&y, &w)| w * norm_cdf(a * v - b * y) * norm_pdf(y))
        .sum();
    Ok([first, second])
}

/// Per-stage pieces Pr(D = k, V₍ₖ₎ ≤ v) of the K-stage limit.
pub fn k_stage_components(spec: &LocalAltSpec, v: f64, engine: &Engine) -> Vec<f64> {
    spec.trajectory(engine).standardized_cdf_components(v)
}

pub fn mixture_cdf_k_stage(spec: &LocalAltSpec, v: f64) -> f64 {
    k_stage_components(spec, v, &Engine::default()).iter().sum()
}

/// Limit CDF on a grid, computing the recursion once.
pub fn mixture_cdf_k_stage_grid(spec: &LocalAltSpec, v_grid: &[f64], engine: &Engine) -> Vec<Vec<f64>> {
    let traj = spec.trajectory(engine);
    v_grid.iter().map(|&v| traj.standardized_cdf_components(v)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub scale: u64,
    pub sup_diff: f64,
}

/// sup_v |Pr(V₍D₎ ≤ v) at sizes m·n_k and θ = h/√(m n₁) − limit| per scale m.
pub fn convergence_check(design: &Design, h: f64, scale_factors: &[u64], v_grid: &[f64]) -> Result<Vec<ConvergenceRow>> {
    let engine = Engine::default();
    let spec = LocalAltSpec::from_design(design, h)?;
    let limit: Vec<f64> = mixture_cdf_k_stage_grid(&spec, v_grid, &engine)
        .iter()
        .map(|c| c.iter().sum())
        .collect();
    scale_factors
        .par_iter()
        .map(|&m| {
            if m == 0 {
                return Err(Error::Domain("scale factors must be positive".into()));
            }
            let scaled = design.scaled(m)?;
            let theta = h / ((m * design.sizes()[0]) as f64).sqrt();
            let traj = engine.trajectory(&scaled, theta);
            let sup_diff = v_grid
                .iter()
                .zip(&limit)
                .map(|(&v, l)| (traj.standardized_cdf_components(v).iter().sum::<f64>() - l).abs())
                .fold(0.0, f64::max);
            Ok(ConvergenceRow { scale: m, sup_diff })
        })
        .collect()
}

/// Monte Carlo version with centered exponential observations
/// (X = E − 1 + θ, E ~ Exp(1)), for which the finite-sample law is not normal.
pub fn convergence_check_exponential(
    design: &Design,
    h: f64,
    scale_factors: &[u64],
    v_grid: &[f64],
    reps: u64,
    seed: u64,
) -> Result<Vec<ConvergenceRow>> {
    if reps == 0 {
        return Err(Error::Domain("reps must be at least 1".into()));
    }
    let spec = LocalAltSpec::from_design(design, h)?;
    let limit: Vec<f64> = mixture_cdf_k_stage_grid(&spec, v_grid, &Engine::default())
        .iter()
        .map(|c| c.iter().sum())
        .collect();
    scale_factors
        .iter()
        .enumerate()
        .map(|(si, &m)| {
            if m == 0 {
                return Err(Error::Domain("scale factors must be positive".into()));
            }
            let scaled = design.scaled(m)?;
            let theta = h / ((m * design.sizes()[0]) as f64).sqrt();
            let mut v: Vec<f64> = (0..reps)
                .into_par_iter()
                .map(|i| {
                    let mut rng = derive_stream(seed ^ ((si as u64 + 1) << 40), i);
                    standardized_exponential_trial(&scaled, theta, &mut rng)
                })
                .collect();
            v.sort_by(f64::total_cmp);
            let sup_diff = v_grid
                .iter()
                .zip(&limit)
                .map(|(&x, l)| {
                    let below = v.partition_point(|&s| s <= x) as f64 / reps as f64;
                    (below - l).abs()
                })
                .fold(0.0, f64::max);
            Ok(ConvergenceRow { scale: m, sup_diff })
        })
        .collect()
}

fn standardized_exponential_trial(design: &Design, theta: f64, rng: &mut impl Rng) -> f64 {
    let big_k = design.stages();
    let mut sum = 0.0;
    for k in 0..big_k {
        let n = design.sizes()[k] as f64;
        // a sum of n unit exponentials is Gamma(n, 1)
        let g = Gamma::new(n, 1.0).expect("stage size is positive").sample(rng);
        sum += g - n + theta * n;
        let cum = design.cumulative_sizes()[k] as f64;
        let z = sum / cum.sqrt();
        if k + 1 == big_k || z > design.critical_values()[k] {
            return z - theta * cum.sqrt();
        }
    }
    unreachable!("loop returns at the last stage")
}
