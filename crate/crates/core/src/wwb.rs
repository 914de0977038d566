//! Weiss–Weinstein bounds for the single-source model with single-column test points.
//!
//! Three observation models are covered: random phase (RP), known phase (KP) and
//! the unconditional model with a complex Gaussian amplitude (UC). All SNRs are linear.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, TestPointError};
use crate::optim::{maximize, AnnealConfig, Bounds};
use crate::priors::{test_point_domain, PriorBelief, GAUSSIAN_TRUNCATION};
use crate::signal::SamplingMatrix;

const TWO_PI: f64 = 2.0 * PI;

/// Relative size below which a closed-form denominator counts as degenerate.
pub const DEGENERATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundModel {
    Rp,
    Kp,
    Uc,
}

impl BoundModel {
    pub const ALL: [BoundModel; 3] = [BoundModel::Rp, BoundModel::Kp, BoundModel::Uc];
}

impl std::str::FromStr for BoundModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rp" => Ok(Self::Rp),
            "kp" => Ok(Self::Kp),
            "uc" => Ok(Self::Uc),
            other => Err(Error::invalid(format!("unknown bound model '{other}'"))),
        }
    }
}

impl std::fmt::Display for BoundModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Rp => "rp",
            Self::Kp => "kp",
            Self::Uc => "uc",
        })
    }
}

/// `ή(v, ṽ) = exp(−γ/2 · (N − Re 1ᵀ exp(i D (ṽ − v))))`.
pub fn eta_acute(d: &SamplingMatrix, snr: f64, v: &[f64], vt: &[f64]) -> f64 {
    let diff: Vec<f64> = vt.iter().zip(v).map(|(a, b)| a - b).collect();
    eta_shift(d, snr, &diff, 1.0)
}

/// `ή(0, s·h)`; `ή(h, 0)` is `s = 1` and `ή(h, −h)` is `s = 2` by evenness of the cosine.
#[inline]
fn eta_shift(d: &SamplingMatrix, snr: f64, h: &[f64], s: f64) -> f64 {
    (-0.5 * snr * (d.samples() as f64 - d.real_sum(h, s))).exp()
}

/// Known-phase `(ή(h, 0), ή(h, −h))` for a plain sampling vector scaled by `g`.
#[inline]
fn eta_line(d: &[f64], g: f64, snr: f64, h: f64) -> (f64, f64) {
    let (mut s1, mut s2) = (0.0, 0.0);
    for &x in d {
        let c = (g * x * h).cos();
        s1 += c;
        s2 += 2.0 * c * c - 1.0;
    }
    let n = d.len() as f64;
    ((-0.5 * snr * (n - s1)).exp(), (-0.5 * snr * (n - s2)).exp())
}

/// `|1ᵀ exp(i g d h)|²`.
#[inline]
fn beam_power(d: &[f64], g: f64, h: f64) -> f64 {
    let (mut c, mut s) = (0.0, 0.0);
    for &x in d {
        let (si, co) = (g * x * h).sin_cos();
        c += co;
        s += si;
    }
    c * c + s * s
}

/// Rank-one bound `hhᵀ/Q` at a single test point.
#[derive(Debug, Clone, PartialEq)]
pub struct WwbEvaluation {
    pub h: Vec<f64>,
    pub q: f64,
    pub weighted_trace: f64,
}

impl WwbEvaluation {
    pub fn bound_matrix(&self) -> Vec<Vec<f64>> {
        self.h
            .iter()
            .map(|a| self.h.iter().map(|b| a * b / self.q).collect())
            .collect()
    }
}

/// Everything the cost function depends on besides the test point.
#[derive(Debug, Clone, PartialEq)]
pub struct CostQuery {
    pub prior: PriorBelief,
    pub d: SamplingMatrix,
    /// Linear SNR.
    pub snr: f64,
    pub weights: Vec<f64>,
}

impl CostQuery {
    pub fn new(prior: PriorBelief, d: SamplingMatrix, snr: f64, weights: Vec<f64>) -> Result<Self> {
        prior.validate()?;
        if prior.dim() != d.dim() {
            return Err(Error::Dimension {
                expected: d.dim(),
                actual: prior.dim(),
                context: "prior dimension vs sampling matrix",
            });
        }
        if weights.len() != d.dim() {
            return Err(Error::Dimension {
                expected: d.dim(),
                actual: weights.len(),
                context: "weighting vector",
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || weights.iter().all(|w| *w == 0.0) {
            return Err(Error::invalid("weights must be non-negative, finite and not all zero"));
        }
        if !(snr >= 0.0) || !snr.is_finite() {
            return Err(Error::invalid(format!("snr must be finite and >= 0, got {snr}")));
        }
        Ok(Self { prior, d, snr, weights })
    }

    /// Query with the frequency-only weighting `(1, …, 1, 0)`.
    pub fn frequency_weighted(prior: PriorBelief, d: SamplingMatrix, snr: f64) -> Result<Self> {
        let q = d.dim();
        Self::new(prior, d, snr, default_weights(q))
    }
}

/// Weight 1 on every frequency coordinate and 0 on the phase.
pub fn default_weights(q: usize) -> Vec<f64> {
    let mut w = vec![1.0; q];
    w[q - 1] = 0.0;
    w
}

fn guard(denom: f64, lead: f64) -> Result<(), TestPointError> {
    if !(denom > DEGENERATE_TOL * lead) {
        Err(TestPointError::DegenerateDenominator)
    } else {
        Ok(())
    }
}

/// `1/Q` of the random-phase bound at `h`.
fn rp_inv_q(prior: &PriorBelief, d: &SamplingMatrix, snr: f64, h: &[f64]) -> Result<f64, TestPointError> {
    let q = prior.dim();
    if h.len() != q || d.dim() != q {
        return Err(TestPointError::Dimension);
    }
    if h.iter().all(|x| *x == 0.0) {
        return Err(TestPointError::Zero);
    }
    let hp = h[q - 1].abs();
    if !(hp < TWO_PI) {
        return Err(TestPointError::OutsideDomain);
    }
    let (s1, s2) = d.real_sums_1_2(h);
    let n = d.samples() as f64;
    let e0 = (-0.5 * snr * (n - s1)).exp();
    let e2 = (-0.5 * snr * (n - s2)).exp();
    match prior {
        PriorBelief::Uniform { widths, .. } => {
            let mut t1 = TWO_PI - hp;
            let mut t2 = (TWO_PI - 2.0 * hp).max(0.0);
            let mut vol = TWO_PI;
            for (w, x) in widths.iter().zip(h) {
                let a = x.abs();
                if !(a < *w) {
                    return Err(TestPointError::OutsideDomain);
                }
                t1 *= w - a;
                t2 *= (w - 2.0 * a).max(0.0);
                vol *= w;
            }
            let denom = t1 - e2 * t2;
            guard(denom, t1)?;
            Ok(e0 * e0 * t1 * t1 / (2.0 * vol * denom))
        }
        PriorBelief::Gaussian { variances, .. } => {
            let mut m = 0.0;
            for (v, x) in variances.iter().zip(h) {
                if x.abs() > GAUSSIAN_TRUNCATION * v.sqrt() {
                    return Err(TestPointError::OutsideDomain);
                }
                m += x * x / v;
            }
            let p1 = TWO_PI - hp;
            let p2 = (TWO_PI - 2.0 * hp).max(0.0);
            let bc0 = (-m / 8.0).exp();
            let bc2 = (-m / 2.0).exp();
            let denom = p1 - e2 * bc2 * p2;
            guard(denom, p1)?;
            let num = bc0 * p1;
            Ok(e0 * e0 * num * num / (2.0 * TWO_PI * denom))
        }
    }
}

/// Random-phase bound at a single test point.
pub fn rp_wwb(query: &CostQuery, h: &[f64]) -> Result<WwbEvaluation, TestPointError> {
    let inv_q = rp_inv_q(&query.prior, &query.d, query.snr, h)?;
    let wh2: f64 = query.weights.iter().zip(h).map(|(w, x)| w * x * x).sum();
    Ok(WwbEvaluation {
        h: h.to_vec(),
        q: 1.0 / inv_q,
        weighted_trace: wh2 * inv_q,
    })
}

/// [`rp_wwb`] over many test points.
pub fn rp_wwb_batch(query: &CostQuery, hs: &[Vec<f64>]) -> Vec<Result<WwbEvaluation, TestPointError>> {
    hs.par_iter().map(|h| rp_wwb(query, h)).collect()
}

/// Known-phase bound for a uniform prior of width `du` on a single frequency.
///
/// The value depends on the coordinate origin of `d`.
pub fn kp_wwb(du: f64, d: &[f64], g: f64, snr: f64, h: f64) -> Result<f64, TestPointError> {
    let a = h.abs();
    if a == 0.0 {
        return Err(TestPointError::Zero);
    }
    if !(a < du) {
        return Err(TestPointError::OutsideDomain);
    }
    let (e0, e2) = eta_line(d, g, snr, h);
    let t1 = du - a;
    let t2 = (du - 2.0 * a).max(0.0);
    let denom = t1 - e2 * t2;
    guard(denom, t1)?;
    Ok(0.5 * h * h * e0 * e0 * t1 * t1 / du / denom)
}

/// Known-phase bound for a Gaussian prior of variance `var` on a single frequency.
pub fn kp_wwb_gaussian(var: f64, d: &[f64], g: f64, snr: f64, h: f64) -> Result<f64, TestPointError> {
    let a = h.abs();
    if a == 0.0 {
        return Err(TestPointError::Zero);
    }
    if a > GAUSSIAN_TRUNCATION * var.sqrt() {
        return Err(TestPointError::OutsideDomain);
    }
    let m = h * h / var;
    let (e0, e2) = eta_line(d, g, snr, h);
    let bc0 = (-m / 8.0).exp();
    let denom = 1.0 - e2 * (-m / 2.0).exp();
    guard(denom, 1.0)?;
    Ok(0.5 * h * h * e0 * e0 * bc0 * bc0 / denom)
}

/// Unconditional bound for a uniform prior of width `du`; `snr` is the mean SNR `γ′`.
pub fn uc_wwb(du: f64, d: &[f64], g: f64, snr: f64, h: f64) -> Result<f64, TestPointError> {
    let a = h.abs();
    if a == 0.0 {
        return Err(TestPointError::Zero);
    }
    if !(a < du) {
        return Err(TestPointError::OutsideDomain);
    }
    let n = d.len() as f64;
    let kappa = uc_kappa(snr, d.len());
    let f1 = 1.0 + kappa / 4.0 * (n * n - beam_power(d, g, h));
    let f2 = 1.0 + kappa / 4.0 * (n * n - beam_power(d, g, 2.0 * h));
    let t1 = du - a;
    let t2 = (du - 2.0 * a).max(0.0);
    let denom = t1 - t2 / f2;
    guard(denom, t1)?;
    Ok(h * h / (2.0 * du) * t1 * t1 / (f1 * f1) / denom)
}

/// `κ = γ′² / (Nγ′ + 1)`.
pub fn uc_kappa(snr: f64, n: usize) -> f64 {
    snr * snr / (n as f64 * snr + 1.0)
}

/// Grid and annealing settings for the sup over test points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WwbOptConfig {
    /// Grid points per frequency coordinate.
    pub freq_points: usize,
    pub phase_points: usize,
    /// Grid points on the half-line used by the single-coordinate bounds.
    pub line_points: usize,
    pub anneal: AnnealConfig,
}

impl Default for WwbOptConfig {
    fn default() -> Self {
        Self {
            freq_points: 32,
            phase_points: 16,
            line_points: 64,
            anneal: AnnealConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostResult {
    pub cost: f64,
    /// Maximizing test point; a single coordinate for KP and UC.
    pub h: Vec<f64>,
}

fn single_column(query: &CostQuery) -> Result<&[f64]> {
    if query.d.dim() != 2 {
        return Err(Error::invalid(
            "known-phase and unconditional bounds need exactly one sampling column",
        ));
    }
    Ok(query.d.column(0))
}

/// The value that is maximized over test points, `−∞` where `h` is invalid.
pub fn cost_objective(query: &CostQuery, model: BoundModel) -> Result<Box<dyn Fn(&[f64]) -> f64 + Sync + '_>> {
    let neg = f64::NEG_INFINITY;
    Ok(match model {
        BoundModel::Rp => Box::new(move |h: &[f64]| rp_wwb(query, h).map_or(neg, |e| e.weighted_trace)),
        BoundModel::Kp => {
            let d = single_column(query)?;
            let w = query.weights[0];
            let snr = query.snr;
            match &query.prior {
                PriorBelief::Uniform { widths, .. } => {
                    let du = widths[0];
                    Box::new(move |h: &[f64]| kp_wwb(du, d, 1.0, snr, h[0]).map_or(neg, |v| w * v))
                }
                PriorBelief::Gaussian { variances, .. } => {
                    let var = variances[0];
                    Box::new(move |h: &[f64]| kp_wwb_gaussian(var, d, 1.0, snr, h[0]).map_or(neg, |v| w * v))
                }
            }
        }
        BoundModel::Uc => {
            let d = single_column(query)?;
            let w = query.weights[0];
            let snr = query.snr;
            match &query.prior {
                PriorBelief::Uniform { widths, .. } => {
                    let du = widths[0];
                    Box::new(move |h: &[f64]| uc_wwb(du, d, 1.0, snr, h[0]).map_or(neg, |v| w * v))
                }
                PriorBelief::Gaussian { .. } => {
                    return Err(Error::invalid("the unconditional bound needs a uniform prior"))
                }
            }
        }
    })
}

/// Search box and grid shape of the sup for a query.
pub fn cost_domain(query: &CostQuery, model: BoundModel, cfg: &WwbOptConfig) -> Result<(Bounds, Vec<usize>)> {
    match model {
        BoundModel::Rp => {
            let dom = test_point_domain(&query.prior);
            let mut pts = vec![cfg.freq_points; query.prior.freq_dim()];
            pts.push(cfg.phase_points);
            Ok((dom.bounds().clone(), pts))
        }
        BoundModel::Kp | BoundModel::Uc => {
            let hi = match &query.prior {
                PriorBelief::Uniform { widths, .. } => widths[0],
                PriorBelief::Gaussian { variances, .. } => GAUSSIAN_TRUNCATION * variances[0].sqrt(),
            };
            Ok((Bounds::new(vec![0.0], vec![hi])?, vec![cfg.line_points]))
        }
    }
}

/// `C = sup_h trace_w WWB(h)` and the maximizing test point.
pub fn wwb_cost(query: &CostQuery, model: BoundModel, cfg: &WwbOptConfig) -> Result<CostResult> {
    let f = cost_objective(query, model)?;
    let (bounds, pts) = cost_domain(query, model, cfg)?;
    let m = maximize(&f, &bounds, &pts, &cfg.anneal).map_err(|e| match e {
        Error::NoValidTestPoint(_) => Error::NoValidTestPoint(format!("{model} bound, prior {:?}", query.prior)),
        other => other,
    })?;
    Ok(CostResult { cost: m.f, h: m.x })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostCurve {
    pub g: Vec<f64>,
    pub cost: Vec<f64>,
    pub h: Vec<Vec<f64>>,
    /// Index of the minimizing scaling, smallest `g` on ties.
    pub argmin: usize,
}

impl CostCurve {
    pub fn g_opt(&self) -> f64 {
        self.g[self.argmin]
    }
}

/// Index of the smallest cost, preferring the smallest `g` among exact ties.
pub fn argmin_lowest_g(g: &[f64], cost: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..g.len() {
        if cost[i] < cost[best] || (cost[i] == cost[best] && g[i] < g[best]) {
            best = i;
        }
    }
    best
}

/// Optimized cost for every scaling `D(g) = (g·d_1, …, g·d_{q−1}, 1)`.
pub fn scaling_cost_curve(
    prior: &PriorBelief,
    d: &SamplingMatrix,
    snr: f64,
    weights: &[f64],
    g_grid: &[f64],
    model: BoundModel,
    cfg: &WwbOptConfig,
) -> Result<CostCurve> {
    if g_grid.is_empty() {
        return Err(Error::invalid("empty scaling grid"));
    }
    if let Some(g) = g_grid.iter().find(|g| !(**g > 0.0) || !g.is_finite()) {
        return Err(Error::invalid(format!("scalings must be positive, got {g}")));
    }
    let results: Vec<CostResult> = g_grid
        .par_iter()
        .map(|&g| {
            let q = CostQuery::new(prior.clone(), d.scaled(g), snr, weights.to_vec())?;
            wwb_cost(&q, model, cfg)
        })
        .collect::<Result<_>>()?;
    let cost: Vec<f64> = results.iter().map(|r| r.cost).collect();
    let argmin = argmin_lowest_g(g_grid, &cost);
    Ok(CostCurve {
        g: g_grid.to_vec(),
        cost,
        h: results.into_iter().map(|r| r.h).collect(),
        argmin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{db_to_linear, steering_vector, uniform_linear_array, SourceParams};
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn ula(n: usize) -> SamplingMatrix {
        SamplingMatrix::from_column(uniform_linear_array(n, PI).unwrap()).unwrap()
    }

    fn uniform_query(du: f64, n: usize, snr: f64) -> CostQuery {
        CostQuery::frequency_weighted(PriorBelief::uniform(vec![0.0], vec![du]).unwrap(), ula(n), snr).unwrap()
    }

    #[test]
    fn eta_examples() {
        let d = ula(2);
        assert_eq!(eta_acute(&d, 3.0, &[0.3, 1.0], &[0.3, 1.0]), 1.0);
        assert_eq!(eta_acute(&d, 0.0, &[0.0, 0.0], &[0.7, 1.0]), 1.0);
        let g = 2.0;
        let direct = (-g / 2.0 * (2.0 - 2.0 * (PI / 2.0).cos())).exp();
        assert!((eta_acute(&d, g, &[0.0, 0.0], &[1.0, 0.0]) - direct).abs() < 1e-15);
    }

    /// Bhattacharyya coefficient of two observation densities by Monte Carlo.
    #[test]
    fn eta_matches_monte_carlo() {
        let d = ula(2);
        let snr = 0.7;
        let v = SourceParams::new(vec![0.0], 0.0, snr).unwrap();
        let vt = SourceParams::new(vec![1.0], 0.0, snr).unwrap();
        let m1: Vec<Complex64> = steering_vector(&d, &v).unwrap().iter().map(|z| z * snr.sqrt()).collect();
        let m2: Vec<Complex64> = steering_vector(&d, &vt).unwrap().iter().map(|z| z * snr.sqrt()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let draws = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let mut l = 0.0;
            for (a, b) in m1.iter().zip(&m2) {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                let x = a + Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
                l += (x - a).norm_sqr() - (x - b).norm_sqr();
            }
            acc += (0.5 * l).exp();
        }
        let mc = acc / draws as f64;
        let exact = eta_acute(&d, snr, &[0.0, 0.0], &[1.0, 0.0]);
        assert!((mc - exact).abs() / exact < 0.01, "mc {mc} exact {exact}");
    }

    /// Densities on a grid: the defining integral of `ξ` by midpoint quadrature per coordinate.
    fn xi_quadrature(prior: &PriorBelief, v: &[f64], vt: &[f64]) -> f64 {
        let n = 200_000;
        let line = |lo: f64, hi: f64, f: &dyn Fn(f64) -> f64| {
            let step = (hi - lo) / n as f64;
            (0..n).map(|k| f(lo + (k as f64 + 0.5) * step)).sum::<f64>() * step
        };
        let box1 = |x: f64, half: f64| if x.abs() <= half { 1.0 / (2.0 * half) } else { 0.0 };
        let q1 = prior.freq_dim();
        let mut acc = line(-PI, PI, &|t| (box1(t + v[q1], PI) * box1(t + vt[q1], PI)).sqrt());
        for j in 0..q1 {
            acc *= match prior {
                PriorBelief::Uniform { widths, .. } => {
                    let h = widths[j] / 2.0;
                    line(-h, h, &|t| (box1(t + v[j], h) * box1(t + vt[j], h)).sqrt())
                }
                PriorBelief::Gaussian { variances, .. } => {
                    let s2 = variances[j];
                    let pdf = |x: f64| (-x * x / (2.0 * s2)).exp() / (2.0 * PI * s2).sqrt();
                    let r = 14.0 * s2.sqrt();
                    line(-r, r, &|t| (pdf(t + v[j]) * pdf(t + vt[j])).sqrt())
                }
            };
        }
        acc
    }

    fn rp_from_definition(prior: &PriorBelief, d: &SamplingMatrix, snr: f64, h: &[f64]) -> f64 {
        let z = vec![0.0; h.len()];
        let nh: Vec<f64> = h.iter().map(|x| -x).collect();
        let eta = |v: &[f64], vt: &[f64]| eta_acute(d, snr, v, vt) * xi_quadrature(prior, v, vt);
        let q = 2.0 * (eta(h, h) - eta(h, &nh)) / eta(h, &z).powi(2);
        1.0 / q
    }

    #[test]
    fn rp_matches_definition_example() {
        let q = uniform_query(1.0, 12, 1.0);
        let h = [0.5, PI];
        let e = rp_wwb(&q, &h).unwrap();
        let oracle = rp_from_definition(&q.prior, &q.d, 1.0, &h);
        assert!((1.0 / e.q - oracle).abs() / oracle < 1e-2, "{} vs {oracle}", 1.0 / e.q);
    }

    #[test]
    fn rp_matches_definition_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..12 {
            let n = rng.gen_range(2..=12);
            let du: f64 = rng.gen_range(0.2..2.0);
            let snr = db_to_linear(rng.gen_range(-10.0..5.0));
            let d = ula(n);
            let h = [rng.gen_range(-0.95..0.95) * du, rng.gen_range(0.05..6.0)];
            for prior in [
                PriorBelief::uniform(vec![0.0], vec![du]).unwrap(),
                PriorBelief::gaussian(vec![0.0], vec![du * du / 12.0]).unwrap(),
            ] {
                let q = CostQuery::frequency_weighted(prior.clone(), d.clone(), snr).unwrap();
                let Ok(e) = rp_wwb(&q, &h) else { continue };
                let oracle = rp_from_definition(&prior, &d, snr, &h);
                assert!((1.0 / e.q - oracle).abs() / oracle < 1e-2, "{prior:?} {h:?}");
            }
        }
    }

    #[test]
    fn rp_invalid_points() {
        let q = uniform_query(1.0, 12, 1.0);
        assert_eq!(rp_wwb(&q, &[1.0, 0.5]), Err(TestPointError::OutsideDomain));
        assert_eq!(rp_wwb(&q, &[-1.2, 0.5]), Err(TestPointError::OutsideDomain));
        assert_eq!(rp_wwb(&q, &[0.0, 0.0]), Err(TestPointError::Zero));
        assert_eq!(rp_wwb(&q, &[0.1, TWO_PI]), Err(TestPointError::OutsideDomain));
        assert_eq!(rp_wwb(&q, &[0.1]), Err(TestPointError::Dimension));
        assert!(rp_wwb(&q, &[1e-300, 0.0]).is_err());
    }

    #[test]
    fn rp_matrix_rank_one_psd() {
        let q = uniform_query(0.8, 12, 2.0);
        let e = rp_wwb(&q, &[0.3, 1.1]).unwrap();
        assert!(e.q > 0.0);
        let m = e.bound_matrix();
        assert!(m[0][0] >= 0.0 && m[1][1] >= 0.0);
        assert!((m[0][0] * m[1][1] - m[0][1] * m[1][0]).abs() < 1e-15);
        assert!((e.weighted_trace - m[0][0]).abs() < 1e-18);
    }

    #[test]
    fn rp_batch_equals_scalar() {
        let q = uniform_query(1.3, 7, 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let hs: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.gen_range(-1.5..1.5), rng.gen_range(0.0..7.0)])
            .collect();
        let batch = rp_wwb_batch(&q, &hs);
        for (h, b) in hs.iter().zip(batch) {
            assert_eq!(rp_wwb(&q, h), b);
        }
    }

    #[test]
    fn shifted_support_identity() {
        // |Θ̃(h, −h)| = |Θ̃(2h)| on the box
        let w = [0.9];
        let vol = |v: &[f64], vt: &[f64]| crate::priors::xi_uniform(&w, v, vt);
        let h = [0.3, 1.0];
        let nh = [-0.3, -1.0];
        let h2 = [0.6, 2.0];
        assert!((vol(&h, &nh) - vol(&h2, &h2)).abs() < 1e-15);
    }

    #[test]
    fn kp_examples() {
        let d = uniform_linear_array(12, PI).unwrap();
        let a = kp_wwb(1.0, &d, 1.3, 1.0, 0.37).unwrap();
        let b = kp_wwb(1.0, &d, 1.3, 1.0, -0.37).unwrap();
        assert!((a - b).abs() <= 1e-15 * a);
        assert!(kp_wwb(1.0, &d, 1.3, 1.0, 1.0).is_err());
        assert!(kp_wwb(1.0, &d, 1.3, 1.0, 0.0).is_err());
        let shifted: Vec<f64> = d.iter().map(|x| x + 2.0).collect();
        let c = kp_wwb(1.0, &shifted, 1.3, 1.0, 0.37).unwrap();
        assert!((a - c).abs() > 1e-6 * a);
    }

    #[test]
    fn uc_examples() {
        assert!((uc_kappa(1.0, 12) - 1.0 / 13.0).abs() < 1e-16);
        let d = uniform_linear_array(12, PI).unwrap();
        let a = uc_wwb(1.5, &d, 0.8, 1.0, 0.4).unwrap();
        let b = uc_wwb(1.5, &d, 0.8, 1.0, -0.4).unwrap();
        assert!((a - b).abs() <= 1e-15 * a);
        assert!(uc_wwb(1.5, &d, 0.8, 1.0, 1.5).is_err());
    }

    #[test]
    fn cost_invariances() {
        let cfg = WwbOptConfig::default();
        let q = uniform_query(1.0, 12, 1.0);
        let base = wwb_cost(&q, BoundModel::Rp, &cfg).unwrap();
        let mut shifted = q.clone();
        shifted.prior = PriorBelief::uniform(vec![0.4], vec![1.0]).unwrap();
        assert_eq!(wwb_cost(&shifted, BoundModel::Rp, &cfg).unwrap(), base);
        let mut doubled = q.clone();
        doubled.weights = vec![2.0, 0.0];
        let c2 = wwb_cost(&doubled, BoundModel::Rp, &cfg).unwrap();
        assert!((c2.cost - 2.0 * base.cost).abs() <= 1e-12 * base.cost);
    }

    #[test]
    fn cost_not_below_grid() {
        let cfg = WwbOptConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let du = rng.gen_range(0.2..2.0);
            let q = uniform_query(du, rng.gen_range(2..=12), db_to_linear(rng.gen_range(-10.0..5.0)));
            let f = cost_objective(&q, BoundModel::Rp).unwrap();
            let (b, pts) = cost_domain(&q, BoundModel::Rp, &cfg).unwrap();
            assert_eq!(pts.iter().product::<usize>(), 512);
            let scan = crate::optim::grid_scan(&f, &b, &pts).unwrap();
            let c = wwb_cost(&q, BoundModel::Rp, &cfg).unwrap();
            assert!(c.cost >= scan.best_f);
            assert_eq!(f(&c.h), c.cost);
        }
    }

    #[test]
    fn argmin_prefers_lowest_g() {
        assert_eq!(argmin_lowest_g(&[3.0, 1.0, 2.0], &[1.0, 1.0, 1.0]), 1);
        assert_eq!(argmin_lowest_g(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]), 1);
    }

    #[test]
    fn uc_needs_uniform_prior() {
        let q = CostQuery::frequency_weighted(PriorBelief::gaussian(vec![0.0], vec![0.1]).unwrap(), ula(12), 1.0).unwrap();
        assert!(wwb_cost(&q, BoundModel::Uc, &WwbOptConfig::default()).is_err());
        assert!(wwb_cost(&q, BoundModel::Kp, &WwbOptConfig::default()).is_ok());
    }

    proptest! {
        #[test]
        fn rp_symmetric(du in 0.2f64..2.0, a in -1.0f64..1.0, b in -6.2f64..6.2, snr_db in -10.0f64..5.0) {
            let q = uniform_query(du, 12, db_to_linear(snr_db));
            let h = [a * du * 0.999, b];
            let nh = [-h[0], -h[1]];
            match (rp_wwb(&q, &h), rp_wwb(&q, &nh)) {
                (Ok(x), Ok(y)) => {
                    prop_assert!((x.q - y.q).abs() <= 1e-12 * x.q);
                    prop_assert!(x.q > 0.0);
                }
                (Err(x), Err(y)) => prop_assert_eq!(x, y),
                _ => prop_assert!(false, "validity differs under negation"),
            }
            let g = CostQuery::frequency_weighted(
                PriorBelief::gaussian(vec![0.0], vec![du * du / 12.0]).unwrap(), ula(12), db_to_linear(snr_db)).unwrap();
            if let (Ok(x), Ok(y)) = (rp_wwb(&g, &h), rp_wwb(&g, &nh)) {
                prop_assert!((x.q - y.q).abs() <= 1e-12 * x.q);
            }
        }
    }
}
