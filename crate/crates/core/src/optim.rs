//! Bounded global maximization: tensor grid scan plus multi-particle annealing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                expected: lower.len(),
                actual: upper.len(),
                context: "box lower vs upper",
            });
        }
        if lower.is_empty() {
            return Err(Error::invalid("box has no dimensions"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(u > l) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::invalid("box is degenerate"));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| (*l..=*u).contains(v))
    }

    /// Reflects `x` into `[lower, upper]`.
    fn reflect(&self, i: usize, x: f64) -> f64 {
        let (l, u) = (self.lower[i], self.upper[i]);
        let w = u - l;
        let mut t = (x - l).rem_euclid(2.0 * w);
        if t > w {
            t = 2.0 * w - t;
        }
        (l + t).clamp(l, u)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealConfig {
    pub particles: usize,
    pub initial_temperature: f64,
    pub cooling: f64,
    pub steps_per_temperature: usize,
    /// Stop once the mean relative improvement over the last `window` temperatures drops below this.
    pub stop_threshold: f64,
    pub window: usize,
    pub min_temperatures: usize,
    pub max_temperatures: usize,
    /// Proposal standard deviation in units of `temperature × box width`.
    pub step_scale: f64,
    pub seed: u64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            particles: 32,
            initial_temperature: 1.0,
            cooling: 0.95,
            steps_per_temperature: 50,
            stop_threshold: 1e-4,
            window: 3,
            min_temperatures: 10,
            max_temperatures: 400,
            step_scale: 0.1,
            seed: 0,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            return Err(Error::invalid(format!("cooling factor {} not in (0, 1)", self.cooling)));
        }
        if self.particles == 0 {
            return Err(Error::invalid("annealing needs at least one particle"));
        }
        if self.steps_per_temperature == 0 || self.window == 0 || self.max_temperatures == 0 {
            return Err(Error::invalid("annealing step counts must be positive"));
        }
        if !(self.initial_temperature > 0.0) || !(self.step_scale > 0.0) {
            return Err(Error::invalid("temperature and step scale must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridScan {
    pub best_x: Vec<f64>,
    pub best_f: f64,
    /// Row-major over the tensor grid, last coordinate fastest.
    pub values: Vec<f64>,
}

/// Node `k` of `n` evenly spaced points on `[l, u]`, hitting both ends exactly.
#[inline]
fn grid_node(l: f64, u: f64, k: usize, n: usize) -> f64 {
    if k + 1 == n {
        u
    } else {
        l + (u - l) * k as f64 / (n - 1) as f64
    }
}

fn grid_point(bounds: &Bounds, points: &[usize], mut idx: usize, out: &mut [f64]) {
    for i in (0..bounds.dim()).rev() {
        let n = points[i];
        out[i] = grid_node(bounds.lower[i], bounds.upper[i], idx % n, n);
        idx /= n;
    }
}

fn check_points(bounds: &Bounds, points: &[usize]) -> Result<()> {
    if points.len() != bounds.dim() {
        return Err(Error::Dimension {
            expected: bounds.dim(),
            actual: points.len(),
            context: "grid points per dimension",
        });
    }
    if points.iter().any(|&n| n < 2) {
        return Err(Error::invalid("grid needs at least 2 points per dimension"));
    }
    Ok(())
}

/// Exhaustive evaluation on the tensor grid including the box corners.
///
/// `NaN` values are treated as `−∞`. Ties keep the lowest grid index.
pub fn grid_scan<F>(f: F, bounds: &Bounds, points: &[usize]) -> Result<GridScan>
where
    F: Fn(&[f64]) -> f64,
{
    check_points(bounds, points)?;
    let total: usize = points.iter().product();
    let mut x = vec![0.0; bounds.dim()];
    let mut values = Vec::with_capacity(total);
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for idx in 0..total {
        grid_point(bounds, points, idx, &mut x);
        let mut v = f(&x);
        if v.is_nan() {
            v = f64::NEG_INFINITY;
        }
        if v > best.1 {
            best = (idx, v);
        }
        values.push(v);
    }
    if best.0 == usize::MAX {
        return Ok(GridScan {
            best_x: Vec::new(),
            best_f: f64::NEG_INFINITY,
            values,
        });
    }
    grid_point(bounds, points, best.0, &mut x);
    Ok(GridScan {
        best_x: x,
        best_f: best.1,
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Maximum {
    pub x: Vec<f64>,
    pub f: f64,
}

/// Multi-particle simulated annealing started from `starts` (cycled if fewer than the particle count).
///
/// Each particle keeps its own best point; the result is the best over particles,
/// lowest particle index on ties. The returned value is never below the best start.
pub fn anneal_maximize<F>(f: F, bounds: &Bounds, starts: &[Vec<f64>], cfg: &AnnealConfig) -> Result<Maximum>
where
    F: Fn(&[f64]) -> f64,
{
    cfg.validate()?;
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    let starts: Vec<(Vec<f64>, f64)> = starts
        .iter()
        .filter(|s| bounds.contains(s))
        .map(|s| (s.clone(), eval(s)))
        .filter(|(_, v)| *v > f64::NEG_INFINITY)
        .collect();
    if starts.is_empty() {
        return Err(Error::NoValidTestPoint("no finite starting value".into()));
    }

    let dim = bounds.dim();
    let mut rngs: Vec<ChaCha8Rng> = (0..cfg.particles)
        .map(|p| {
            let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
            r.set_stream(p as u64);
            r
        })
        .collect();
    let mut cur: Vec<(Vec<f64>, f64)> = (0..cfg.particles).map(|p| starts[p % starts.len()].clone()).collect();
    let mut best = cur.clone();
    let mut history: Vec<f64> = Vec::new();
    let mut temp = cfg.initial_temperature;
    let mut cand = vec![0.0; dim];

    for level in 0..cfg.max_temperatures {
        let scale = best
            .iter()
            .map(|b| b.1.abs())
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut rel = 0.0;
        for p in 0..cfg.particles {
            let rng = &mut rngs[p];
            let before = best[p].1;
            for _ in 0..cfg.steps_per_temperature {
                for (i, c) in cand.iter_mut().enumerate() {
                    let step: f64 = rng.sample(StandardNormal);
                    *c = bounds.reflect(i, cur[p].0[i] + step * cfg.step_scale * temp * bounds.width(i));
                }
                let v = eval(&cand);
                let accept = v >= cur[p].1 || {
                    let d = (v - cur[p].1) / (temp * scale);
                    d.is_finite() && rng.gen::<f64>() < d.exp()
                };
                if accept {
                    cur[p].0.copy_from_slice(&cand);
                    cur[p].1 = v;
                    if v > best[p].1 {
                        best[p] = (cand.clone(), v);
                    }
                }
            }
            let denom = before.abs().max(f64::MIN_POSITIVE);
            rel += (best[p].1 - before) / denom;
        }
        history.push(rel / cfg.particles as f64);
        temp *= cfg.cooling;
        if level + 1 >= cfg.min_temperatures.max(cfg.window) {
            let recent = &history[history.len() - cfg.window..];
            if recent.iter().sum::<f64>() / (cfg.window as f64) < cfg.stop_threshold {
                break;
            }
        }
    }

    let mut winner = 0;
    for (p, b) in best.iter().enumerate() {
        if b.1 > best[winner].1 {
            winner = p;
        }
    }
    let (x, f) = best.swap_remove(winner);
    Ok(Maximum { x, f })
}

/// Grid scan followed by annealing seeded from the best grid nodes.
///
/// Errors when every grid value is `−∞`.
pub fn maximize<F>(f: F, bounds: &Bounds, points: &[usize], cfg: &AnnealConfig) -> Result<Maximum>
where
    F: Fn(&[f64]) -> f64,
{
    let scan = grid_scan(&f, bounds, points)?;
    if scan.best_f == f64::NEG_INFINITY {
        return Err(Error::NoValidTestPoint("every grid value is invalid".into()));
    }
    let mut order: Vec<usize> = (0..scan.values.len())
        .filter(|&i| scan.values[i] > f64::NEG_INFINITY)
        .collect();
    // stable sort keeps lower indices first on ties
    order.sort_by(|&a, &b| scan.values[b].total_cmp(&scan.values[a]));
    order.truncate(cfg.particles.max(1));
    let starts: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| {
            let mut x = vec![0.0; bounds.dim()];
            grid_point(bounds, points, i, &mut x);
            x
        })
        .collect();
    let m = anneal_maximize(&f, bounds, &starts, cfg)?;
    debug_assert!(m.f >= scan.best_f);
    Ok(m)
}
