//! Belief families used by the controllers and their prior integrals.
//!
//! Both families put a uniform distribution on the phase over `[-π, π)`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{empirical_moments, ParticleSet};
use crate::optim::Bounds;

const TWO_PI: f64 = 2.0 * PI;

/// Test points of a Gaussian prior are truncated to this many standard deviations.
pub const GAUSSIAN_TRUNCATION: f64 = 6.0;

/// Smallest width or standard deviation produced from a particle cloud.
pub const MIN_SPREAD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Uniform,
    Gaussian,
}

impl std::str::FromStr for PriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(Error::invalid(format!("unknown prior kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for PriorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Gaussian => "gaussian",
        })
    }
}

/// Prior over `(u, φ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PriorBelief {
    /// Uniform on the box `center ± widths/2`.
    Uniform { center: Vec<f64>, widths: Vec<f64> },
    /// Independent Gaussians on each frequency coordinate.
    Gaussian { mean: Vec<f64>, variances: Vec<f64> },
}

impl PriorBelief {
    pub fn uniform(center: Vec<f64>, widths: Vec<f64>) -> Result<Self> {
        let p = Self::Uniform { center, widths };
        p.validate()?;
        Ok(p)
    }

    pub fn gaussian(mean: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let p = Self::Gaussian { mean, variances };
        p.validate()?;
        Ok(p)
    }

    /// Zero-mean prior of the given kind with variance `var` on every frequency coordinate.
    pub fn centered(kind: PriorKind, freq_dim: usize, var: f64) -> Result<Self> {
        let mean = vec![0.0; freq_dim];
        match kind {
            PriorKind::Uniform => Self::uniform(mean, vec![(12.0 * var).sqrt(); freq_dim]),
            PriorKind::Gaussian => Self::gaussian(mean, vec![var; freq_dim]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (loc, spread, what) = match self {
            Self::Uniform { center, widths } => (center, widths, "width"),
            Self::Gaussian { mean, variances } => (mean, variances, "variance"),
        };
        if loc.is_empty() {
            return Err(Error::invalid("prior needs at least one frequency coordinate"));
        }
        if loc.len() != spread.len() {
            return Err(Error::Dimension {
                expected: loc.len(),
                actual: spread.len(),
                context: "prior location vs spread",
            });
        }
        if let Some(s) = spread.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::invalid(format!("prior {what} must be positive and finite, got {s}")));
        }
        if loc.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("prior location must be finite"));
        }
        Ok(())
    }

    pub fn kind(&self) -> PriorKind {
        match self {
            Self::Uniform { .. } => PriorKind::Uniform,
            Self::Gaussian { .. } => PriorKind::Gaussian,
        }
    }

    /// Number of frequency coordinates `q − 1`.
    pub fn freq_dim(&self) -> usize {
        self.mean().len()
    }

    /// Full parameter dimension `q`.
    pub fn dim(&self) -> usize {
        self.freq_dim() + 1
    }

    pub fn mean(&self) -> &[f64] {
        match self {
            Self::Uniform { center, .. } => center,
            Self::Gaussian { mean, .. } => mean,
        }
    }

    /// Per-coordinate frequency variance (`Δu²/12` for the uniform box).
    pub fn variances(&self) -> Vec<f64> {
        match self {
            Self::Uniform { widths, .. } => widths.iter().map(|w| w * w / 12.0).collect(),
            Self::Gaussian { variances, .. } => variances.clone(),
        }
    }

    /// Frequency support volume times the phase range, uniform box only.
    pub fn volume(&self) -> Option<f64> {
        match self {
            Self::Uniform { widths, .. } => Some(TWO_PI * widths.iter().product::<f64>()),
            Self::Gaussian { .. } => None,
        }
    }

    /// Draws `(u, φ)` with the phase last.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut out: Vec<f64> = match self {
            Self::Uniform { center, widths } => center
                .iter()
                .zip(widths)
                .map(|(c, w)| c + w * (rng.gen::<f64>() - 0.5))
                .collect(),
            Self::Gaussian { mean, variances } => mean
                .iter()
                .zip(variances)
                .map(|(m, v)| m + v.sqrt() * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        };
        out.push(rng.gen_range(-PI..PI));
        out
    }

    /// Prior integral `ξ(v, ṽ)`.
    pub fn xi(&self, v: &[f64], vt: &[f64]) -> f64 {
        match self {
            Self::Uniform { widths, .. } => xi_uniform(widths, v, vt),
            Self::Gaussian { variances, .. } => xi_gaussian(variances, v, vt),
        }
    }
}

#[inline]
fn overlap(len: f64, a: f64, b: f64) -> f64 {
    (len - 0.5 * ((a - b).abs() + a.abs() + b.abs())).max(0.0)
}

/// `ξ` for a uniform box of the given widths crossed with uniform phase.
///
/// `v` and `ṽ` have the phase last.
pub fn xi_uniform(widths: &[f64], v: &[f64], vt: &[f64]) -> f64 {
    let q1 = widths.len();
    debug_assert!(v.len() == q1 + 1 && vt.len() == q1 + 1);
    let mut acc = overlap(TWO_PI, v[q1], vt[q1]) / TWO_PI;
    for j in 0..q1 {
        acc *= overlap(widths[j], v[j], vt[j]) / widths[j];
    }
    acc
}

/// `ξ` for independent Gaussian frequencies crossed with uniform phase.
pub fn xi_gaussian(variances: &[f64], v: &[f64], vt: &[f64]) -> f64 {
    let q1 = variances.len();
    debug_assert!(v.len() == q1 + 1 && vt.len() == q1 + 1);
    let m: f64 = (0..q1).map(|j| (v[j] - vt[j]).powi(2) / variances[j]).sum();
    (-m / 8.0).exp() * overlap(TWO_PI, v[q1], vt[q1]) / TWO_PI
}

/// Single-column test point; last coordinate is the phase offset in `[0, 2π]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPoint(Vec<f64>);

impl TestPoint {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        let phase = *h.last().ok_or_else(|| Error::invalid("empty test point"))?;
        if !(0.0..=TWO_PI).contains(&phase) {
            return Err(Error::invalid(format!("test point phase {phase} outside [0, 2π]")));
        }
        Ok(Self(h))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn phase(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Axis-aligned search box for test points.
#[derive(Debug, Clone, PartialEq)]
pub struct TestPointDomain {
    bounds: Bounds,
}

impl TestPointDomain {
    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn lower(&self) -> &[f64] {
        self.bounds.lower()
    }

    pub fn upper(&self) -> &[f64] {
        self.bounds.upper()
    }

    pub fn contains(&self, h: &[f64]) -> bool {
        self.bounds.contains(h)
    }
}

/// `×_j [−Δu_j, Δu_j] × [0, 2π]`, or `±6σ_j` for a Gaussian prior.
pub fn test_point_domain(prior: &PriorBelief) -> TestPointDomain {
    let half: Vec<f64> = match prior {
        PriorBelief::Uniform { widths, .. } => widths.clone(),
        PriorBelief::Gaussian { variances, .. } => {
            variances.iter().map(|v| GAUSSIAN_TRUNCATION * v.sqrt()).collect()
        }
    };
    let mut lower: Vec<f64> = half.iter().map(|h| -h).collect();
    let mut upper = half;
    lower.push(0.0);
    upper.push(TWO_PI);
    TestPointDomain {
        bounds: Bounds::new(lower, upper).expect("prior spreads are positive"),
    }
}

/// Moment-matched prior from a particle cloud with the variance inflated by `delta`.
pub fn approximate_from_particles(
    particles: &ParticleSet,
    kind: PriorKind,
    delta: f64,
) -> Result<PriorBelief> {
    if !(delta >= 1.0 && delta.is_finite()) {
        return Err(Error::invalid(format!("variance inflation must be >= 1, got {delta}")));
    }
    let m = empirical_moments(particles);
    let q1 = particles.dim() - 1;
    let mean = m.mean[..q1].to_vec();
    match kind {
        PriorKind::Uniform => {
            let widths = m
                .variance
                .iter()
                .map(|v| (12.0 * delta * v).sqrt().max(MIN_SPREAD))
                .collect();
            PriorBelief::uniform(mean, widths)
        }
        PriorKind::Gaussian => {
            let variances = m
                .variance
                .iter()
                .map(|v| (delta * v).max(MIN_SPREAD * MIN_SPREAD))
                .collect();
            PriorBelief::gaussian(mean, variances)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn xi_uniform_examples() {
        let w = [1.0];
        assert_eq!(xi_uniform(&w, &[0.0, 0.0], &[0.0, 0.0]), 1.0);
        assert_eq!(xi_uniform(&w, &[1.0, 0.0], &[1.0, 0.0]), 0.0);
        assert_eq!(xi_uniform(&w, &[0.0, TWO_PI], &[0.0, TWO_PI]), 0.0);
        let v = [0.25, PI / 2.0];
        let vt = [-0.25, -PI / 2.0];
        assert!((xi_uniform(&w, &v, &vt) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn xi_gaussian_examples() {
        let var = [0.25];
        assert_eq!(xi_gaussian(&var, &[0.0, 0.0], &[0.0, 0.0]), 1.0);
        let x = xi_gaussian(&var, &[0.5, 0.0], &[-0.5, 0.0]);
        assert!((x - (-0.5f64).exp()).abs() < 1e-15);
        assert!((xi_gaussian(&var, &[0.0, PI], &[0.0, PI]) - 0.5).abs() < 1e-15);
    }

    /// Monte Carlo estimate of the defining integral of `ξ`.
    fn xi_mc(prior: &PriorBelief, v: &[f64], vt: &[f64], n: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match prior {
            PriorBelief::Uniform { widths, .. } => {
                // E_p[√(p(θ+v) p(θ+ṽ)) / p(θ)] is the fraction of θ with both shifts inside the support
                let inside = |c: usize, x: f64| {
                    let half = if c < widths.len() { widths[c] / 2.0 } else { PI };
                    (-half..half).contains(&x)
                };
                let mut hit = 0usize;
                for _ in 0..n {
                    let t = prior.sample(&mut rng);
                    let ok = (0..t.len()).all(|c| inside(c, t[c] + v[c]) && inside(c, t[c] + vt[c]));
                    hit += ok as usize;
                }
                hit as f64 / n as f64
            }
            PriorBelief::Gaussian { variances, .. } => {
                // Importance sampling from the prior itself: E_p[√(p(θ+v)p(θ+ṽ))/p(θ)]
                let q1 = variances.len();
                let mut acc = 0.0;
                for _ in 0..n {
                    let t = prior.sample(&mut rng);
                    let mut lr = 0.0;
                    for j in 0..q1 {
                        let s2 = variances[j];
                        let a = (t[j] + v[j]).powi(2);
                        let b = (t[j] + vt[j]).powi(2);
                        lr += -(a + b) / (4.0 * s2) + t[j] * t[j] / (2.0 * s2);
                    }
                    let inside = |x: f64| (-PI..PI).contains(&x);
                    if inside(t[q1] + v[q1]) && inside(t[q1] + vt[q1]) {
                        acc += lr.exp();
                    }
                }
                acc / n as f64
            }
        }
    }

    #[test]
    fn xi_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in 0..40 {
            let w = rng.gen_range(0.2..2.0);
            let uni = PriorBelief::uniform(vec![0.0], vec![w]).unwrap();
            let gau = PriorBelief::gaussian(vec![0.0], vec![w * w / 12.0]).unwrap();
            let v = [rng.gen_range(-w..w) * 0.6, rng.gen_range(-PI..PI)];
            let vt = [rng.gen_range(-w..w) * 0.6, rng.gen_range(-PI..PI)];
            for p in [&uni, &gau] {
                let mc = xi_mc(p, &v, &vt, 200_000, k);
                let cf = p.xi(&v, &vt);
                assert!((mc - cf).abs() < 1e-2, "{p:?} {v:?} {vt:?}: mc {mc} closed {cf}");
            }
        }
    }

    #[test]
    fn domain_examples() {
        let d = test_point_domain(&PriorBelief::uniform(vec![0.3], vec![1.0]).unwrap());
        assert_eq!(d.lower(), &[-1.0, 0.0]);
        assert_eq!(d.upper(), &[1.0, TWO_PI]);
        let d = test_point_domain(&PriorBelief::gaussian(vec![0.0], vec![0.25]).unwrap());
        assert_eq!(d.lower(), &[-3.0, 0.0]);
        assert_eq!(d.upper(), &[3.0, TWO_PI]);
    }

    #[test]
    fn test_point_phase_range() {
        assert!(TestPoint::new(vec![0.1, 0.0]).is_ok());
        assert!(TestPoint::new(vec![0.1, TWO_PI]).is_ok());
        assert!(TestPoint::new(vec![0.1, -0.1]).is_err());
        assert!(TestPoint::new(vec![]).is_err());
    }

    #[test]
    fn rejects_bad_priors() {
        assert!(PriorBelief::uniform(vec![0.0], vec![0.0]).is_err());
        assert!(PriorBelief::uniform(vec![0.0], vec![1.0, 1.0]).is_err());
        assert!(PriorBelief::gaussian(vec![], vec![]).is_err());
        assert!(PriorBelief::gaussian(vec![0.0], vec![f64::NAN]).is_err());
    }

    #[test]
    fn prior_json_roundtrip() {
        let p = PriorBelief::uniform(vec![0.0], vec![1.0]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"kind":"uniform","center":[0.0],"widths":[1.0]}"#);
        assert_eq!(serde_json::from_str::<PriorBelief>(&s).unwrap(), p);
    }

    fn two_particles() -> ParticleSet {
        ParticleSet::new(2, vec![0.0, 0.1, 2.0, -0.3], vec![0.5, 0.5]).unwrap()
    }

    #[test]
    fn particle_approximation_examples() {
        let p = two_particles();
        let g = approximate_from_particles(&p, PriorKind::Gaussian, 1.0).unwrap();
        assert_eq!(g.mean(), &[1.0]);
        assert!((g.variances()[0] - 1.0).abs() < 1e-15);
        let u = approximate_from_particles(&p, PriorKind::Uniform, 1.0).unwrap();
        match &u {
            PriorBelief::Uniform { widths, .. } => assert!((widths[0] - 12f64.sqrt()).abs() < 1e-14),
            _ => unreachable!(),
        }
        let g2 = approximate_from_particles(&p, PriorKind::Gaussian, 2.0).unwrap();
        assert_eq!(g2.variances()[0], 2.0 * g.variances()[0]);
        assert!(approximate_from_particles(&p, PriorKind::Gaussian, 0.5).is_err());
    }

    #[test]
    fn collapsed_cloud_falls_back_to_min_width() {
        let p = ParticleSet::new(2, vec![0.4, 0.0, 0.4, 1.0], vec![0.5, 0.5]).unwrap();
        match approximate_from_particles(&p, PriorKind::Uniform, 1.0).unwrap() {
            PriorBelief::Uniform { widths, .. } => assert_eq!(widths[0], MIN_SPREAD),
            _ => unreachable!(),
        }
    }

    proptest! {
        #[test]
        fn xi_symmetric_bounded_and_mean_free(
            w in 0.05f64..3.0,
            a in -3.0f64..3.0, b in -7.0f64..7.0,
            c in -3.0f64..3.0, d in -7.0f64..7.0,
            mu in -5.0f64..5.0,
        ) {
            let v = [a, b];
            let vt = [c, d];
            let nv = [-a, -b];
            let nvt = [-c, -d];
            for p in [
                PriorBelief::uniform(vec![0.0], vec![w]).unwrap(),
                PriorBelief::gaussian(vec![0.0], vec![w * w]).unwrap(),
            ] {
                let x = p.xi(&v, &vt);
                prop_assert!((0.0..=1.0).contains(&x));
                prop_assert_eq!(x, p.xi(&nv, &nvt));
                let shifted = match &p {
                    PriorBelief::Uniform { widths, .. } => PriorBelief::uniform(vec![mu], widths.clone()).unwrap(),
                    PriorBelief::Gaussian { variances, .. } => PriorBelief::gaussian(vec![mu], variances.clone()).unwrap(),
                };
                prop_assert!((shifted.xi(&v, &vt) - x).abs() <= 1e-14);
            }
        }
    }
}
