//! Composite Gauss–Legendre quadrature on finite intervals.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Nodes per panel used by [`QuadratureGrid::composite`].
pub const GL_ORDER: usize = 16;

/// Default panel count for continuation-region grids.
pub const DEFAULT_PANELS: usize = 256;

/// Tails of every improper integral are cut this many standard deviations
/// from the relevant centre; Φ(-8.5) is below 1e-16.
pub const TAIL_SD: f64 = 8.5;

/// Abscissae and weights of a quadrature rule on `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    lower: f64,
    upper: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Quadrature settings shared by the recursion engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub panels: usize,
    pub tail_sd: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            panels: DEFAULT_PANELS,
            tail_sd: TAIL_SD,
        }
    }
}

impl QuadratureConfig {
    pub fn with_panels(panels: usize) -> Self {
        Self {
            panels,
            ..Self::default()
        }
    }

    pub fn grid(&self, lower: f64, upper: f64) -> QuadratureGrid {
        QuadratureGrid::composite(lower, upper, self.panels)
    }
}

struct GaussLegendre {
    nodes: [f64; GL_ORDER],
    weights: [f64; GL_ORDER],
}

fn gauss_legendre() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(legendre_rule)
}

/// Roots of P_n by Newton iteration from the Chebyshev-like initial guesses;
/// weights from the derivative at the root.
fn legendre_rule() -> GaussLegendre {
    const N: usize = GL_ORDER;
    let mut nodes = [0.0; GL_ORDER];
    let mut weights = [0.0; GL_ORDER];
    let n = N as f64;
    for i in 0..N.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=N {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[N - 1 - i] = x;
        weights[i] = w;
        weights[N - 1 - i] = w;
    }
    GaussLegendre { nodes, weights }
}

impl QuadratureGrid {
    /// Composite rule with `panels` equal panels of [`GL_ORDER`] nodes each.
    /// An interval with `upper <= lower` yields an empty grid.
    pub fn composite(lower: f64, upper: f64, panels: usize) -> Self {
        assert!(lower.is_finite() && upper.is_finite(), "grid bounds must be finite");
        if upper <= lower || panels == 0 {
            return Self::empty(lower, upper.max(lower));
        }
        let rule = gauss_legendre();
        let width = (upper - lower) / panels as f64;
        let half = 0.5 * width;
        let mut nodes = Vec::with_capacity(panels * GL_ORDER);
        let mut weights = Vec::with_capacity(panels * GL_ORDER);
        for p in 0..panels {
            let a = lower + p as f64 * width;
            let mid = a + half;
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                nodes.push(mid + half * x);
                weights.push(half * w);
            }
        }
        Self {
            lower,
            upper,
            nodes,
            weights,
        }
    }

    pub fn empty(lower: f64, upper: f64) -> Self {
        Self {
            lower,
            upper,
            nodes: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Σ wᵢ vᵢ for values already tabulated at the nodes.
    pub fn sum(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.weights.len());
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Σ weights·f(nodes). Fails on the first non-finite integrand value.
pub fn integrate<F>(f: F, grid: &QuadratureGrid) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let mut acc = 0.0;
    for (&x, &w) in grid.nodes.iter().zip(&grid.weights) {
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::NonFinite { node: x, value: v });
        }
        acc += w * v;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::normal::{norm_cdf, norm_pdf};

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let rule = gauss_legendre();
        let total: f64 = rule.weights.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
        // degree 2N-1 = 31 is exact; check x^30 on [-1, 1]
        let m: f64 = rule
            .nodes
            .iter()
            .zip(&rule.weights)
            .map(|(x, w)| w * x.powi(30))
            .sum();
        assert!((m - 2.0 / 31.0).abs() < 1e-14);
    }

    #[test]
    fn grid_invariants() {
        let g = QuadratureGrid::composite(-8.0, 2.18, 256);
        assert_eq!(g.len(), 256 * GL_ORDER);
        assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
        assert!(g.nodes().iter().all(|&x| (-8.0..=2.18).contains(&x)));
        assert!(g.weights().iter().all(|&w| w > 0.0));
        let total: f64 = g.weights().iter().sum();
        assert!((total / 10.18 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normal_density_examples() {
        let g = QuadratureGrid::composite(-8.0, 8.0, 256);
        assert!((integrate(norm_pdf, &g).unwrap() - 1.0).abs() < 1e-10);
        let g = QuadratureGrid::composite(-8.0, 2.18, 256);
        assert!((integrate(norm_pdf, &g).unwrap() - norm_cdf(2.18)).abs() < 1e-10);
        let g = QuadratureGrid::composite(-8.0, 8.0, 256);
        assert!(integrate(|x| x * norm_pdf(x), &g).unwrap().abs() < 1e-10);
    }

    #[test]
    fn mass_grows_with_half_width() {
        let mut last = 0.0;
        for l in 1..=9 {
            let g = QuadratureGrid::composite(-(l as f64), l as f64, 64);
            let m = integrate(norm_pdf, &g).unwrap();
            assert!(m > last - 1e-15);
            last = m;
        }
        assert!((last - 1.0).abs() < 1e-14);
    }

    #[test]
    fn non_finite_value_names_node() {
        let g = QuadratureGrid::composite(0.0, 1.0, 1);
        let first = g.nodes()[0];
        let err = integrate(|x| if x == first { f64::NAN } else { 1.0 }, &g).unwrap_err();
        match err {
            Error::NonFinite { node, .. } => assert_eq!(node, first),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_interval_gives_empty_grid() {
        let g = QuadratureGrid::composite(1.0, 1.0, 16);
        assert!(g.is_empty());
        assert_eq!(integrate(|_| 1.0, &g).unwrap(), 0.0);
    }
}
