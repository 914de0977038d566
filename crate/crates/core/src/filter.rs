//! Particle filter over `θ = (u, φ)`.
//!
//! Frequencies are static; the phase is redrawn uniformly at every step.

use std::f64::consts::PI;

use log::warn;
use num_complex::Complex64;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};
use crate::priors::PriorBelief;
use crate::signal::{wrap_phase, Observation, SamplingMatrix};

/// Weighted particles, row-major `N_P × q` with the phase last.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    dim: usize,
    data: Vec<f64>,
    weights: Vec<f64>,
}

impl ParticleSet {
    /// Builds a set, wrapping phases and normalizing the weights.
    pub fn new(dim: usize, mut data: Vec<f64>, mut weights: Vec<f64>) -> Result<Self> {
        if dim < 2 {
            return Err(Error::invalid("particles need at least one frequency and a phase"));
        }
        if data.len() != dim * weights.len() {
            return Err(Error::Dimension {
                expected: dim * weights.len(),
                actual: data.len(),
                context: "particle matrix vs weights",
            });
        }
        if weights.is_empty() {
            return Err(Error::invalid("empty particle set"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("particle weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("particle weights sum to zero"));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        for row in data.chunks_exact_mut(dim) {
            row[dim - 1] = wrap_phase(row[dim - 1]);
        }
        Ok(Self { dim, data, weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn particles(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Values of coordinate `c` across all particles.
    pub fn coordinate(&self, c: usize) -> Vec<f64> {
        self.particles().map(|p| p[c]).collect()
    }
}

/// I.i.d. draws from the prior with equal weights.
pub fn init_particles<R: Rng + ?Sized>(prior: &PriorBelief, n: usize, rng: &mut R) -> Result<ParticleSet> {
    if n == 0 {
        return Err(Error::invalid("need at least one particle"));
    }
    let dim = prior.dim();
    let mut data = Vec::with_capacity(n * dim);
    for _ in 0..n {
        data.extend(prior.sample(rng));
    }
    Ok(ParticleSet {
        dim,
        data,
        weights: vec![1.0 / n as f64; n],
    })
}

/// Redraws every phase from `U[−π, π)`; frequencies and weights are untouched.
pub fn motion_update<R: Rng + ?Sized>(p: &mut ParticleSet, rng: &mut R) {
    let dim = p.dim;
    for row in p.data.chunks_exact_mut(dim) {
        row[dim - 1] = rng.gen_range(-PI..PI);
    }
}

/// Log-likelihood of every particle up to a common additive constant.
pub fn log_likelihoods(p: &ParticleSet, x: &Observation, d: &SamplingMatrix, snr: f64) -> Result<Vec<f64>> {
    if x.len() != d.samples() {
        return Err(Error::Dimension {
            expected: d.samples(),
            actual: x.len(),
            context: "observation length vs sampling matrix",
        });
    }
    if p.dim != d.dim() {
        return Err(Error::Dimension {
            expected: d.dim(),
            actual: p.dim,
            context: "particle dimension vs sampling matrix",
        });
    }
    // −‖x − √γ a‖² = 2√γ Re(xᴴa) + const, since ‖a‖² = N
    let two_amp = 2.0 * snr.sqrt();
    let conj: Vec<Complex64> = x.samples.iter().map(|z| z.conj()).collect();
    Ok(p
        .particles()
        .map(|theta| {
            let s: Complex64 = conj
                .iter()
                .enumerate()
                .map(|(n, xc)| xc * Complex64::cis(d.row_dot(n, theta)))
                .sum();
            two_amp * s.re
        })
        .collect())
}

/// Replaces the weights by normalized likelihoods.
///
/// Returns `false` when every weight underflowed and uniform weights were used instead.
pub fn reweight(p: &mut ParticleSet, x: &Observation, d: &SamplingMatrix, snr: f64) -> Result<bool> {
    let ll = log_likelihoods(p, x, d, snr)?;
    let max = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = p.len();
    if max.is_finite() {
        let mut total = 0.0;
        for (w, l) in p.weights.iter_mut().zip(&ll) {
            *w = (l - max).exp();
            total += *w;
        }
        if total > 0.0 && total.is_finite() {
            p.weights.iter_mut().for_each(|w| *w /= total);
            return Ok(true);
        }
    }
    warn!("all particle likelihoods underflowed, falling back to uniform weights");
    p.weights.iter_mut().for_each(|w| *w = 1.0 / n as f64);
    Ok(false)
}

/// Residual resampling: `⌊N w_i⌋` deterministic copies plus multinomial draws on the remainders.
pub fn residual_resample<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Vec<usize> {
    let n = weights.len();
    let nf = n as f64;
    let mut out = Vec::with_capacity(n);
    let mut residual = Vec::with_capacity(n);
    for (i, &w) in weights.iter().enumerate() {
        let nw = nf * w;
        // the small bump keeps N·(1/N) from flooring to 0 after rounding
        let copies = (nw + 1e-9).floor();
        out.extend(std::iter::repeat(i).take(copies as usize));
        residual.push((nw - copies).max(0.0));
    }
    let rest = n - out.len();
    if rest > 0 {
        match WeightedIndex::new(&residual) {
            Ok(dist) => out.extend((0..rest).map(|_| dist.sample(rng))),
            Err(_) => {
                let dist = WeightedIndex::new(weights).expect("weights lie on the simplex");
                out.extend((0..rest).map(|_| dist.sample(rng)));
            }
        }
    }
    out.sort_unstable();
    out
}

/// Copies particles by index and resets the weights to `1/N`.
pub fn resample_with(p: &ParticleSet, indices: &[usize]) -> ParticleSet {
    let mut data = Vec::with_capacity(indices.len() * p.dim);
    for &i in indices {
        data.extend_from_slice(p.particle(i));
    }
    ParticleSet {
        dim: p.dim,
        data,
        weights: vec![1.0 / indices.len() as f64; indices.len()],
    }
}

/// Reweights by the likelihood of `x` and resamples. Returns `false` on likelihood underflow.
pub fn measurement_update<R: Rng + ?Sized>(
    p: &mut ParticleSet,
    x: &Observation,
    d: &SamplingMatrix,
    snr: f64,
    rng: &mut R,
) -> Result<bool> {
    let ok = reweight(p, x, d, snr)?;
    let idx = residual_resample(&p.weights, rng);
    *p = resample_with(p, &idx);
    Ok(ok)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    /// Weighted mean of every coordinate; the phase entry is the circular mean.
    pub mean: Vec<f64>,
    /// Weighted variance of each frequency coordinate.
    pub variance: Vec<f64>,
}

pub fn empirical_moments(p: &ParticleSet) -> Moments {
    let q1 = p.dim - 1;
    let mut mean = vec![0.0; p.dim];
    let (mut c, mut s) = (0.0, 0.0);
    for (row, &w) in p.particles().zip(&p.weights) {
        for j in 0..q1 {
            mean[j] += w * row[j];
        }
        c += w * row[q1].cos();
        s += w * row[q1].sin();
    }
    mean[q1] = s.atan2(c);
    let mut variance = vec![0.0; q1];
    for (row, &w) in p.particles().zip(&p.weights) {
        for j in 0..q1 {
            variance[j] += w * (row[j] - mean[j]).powi(2);
        }
    }
    Moments { mean, variance }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{synthesize_observation, uniform_linear_array, SourceParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Two-sample Kolmogorov–Smirnov statistic.
    fn ks2(mut a: Vec<f64>, mut b: Vec<f64>) -> f64 {
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let (mut i, mut j, mut d) = (0, 0, 0.0f64);
        while i < a.len() && j < b.len() {
            let x = a[i].min(b[j]);
            while i < a.len() && a[i] <= x {
                i += 1;
            }
            while j < b.len() && b[j] <= x {
                j += 1;
            }
            d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
        }
        d
    }

    fn ks_uniform(mut a: Vec<f64>, lo: f64, hi: f64) -> f64 {
        a.sort_by(f64::total_cmp);
        let n = a.len() as f64;
        a.iter()
            .enumerate()
            .map(|(i, x)| {
                let f = (x - lo) / (hi - lo);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    fn prior() -> PriorBelief {
        PriorBelief::uniform(vec![0.0], vec![1.0]).unwrap()
    }

    #[test]
    fn init_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = init_particles(&PriorBelief::uniform(vec![1.0], vec![2.0]).unwrap(), 4000, &mut rng).unwrap();
        assert!(p.weights().iter().all(|&w| w == 1.0 / 4000.0));
        let m = empirical_moments(&p).mean[0];
        let sigma = 2.0 / 12f64.sqrt();
        assert!((m - 1.0).abs() < 4.0 * sigma / (4000f64).sqrt());
        let again = init_particles(
            &PriorBelief::uniform(vec![1.0], vec![2.0]).unwrap(),
            4000,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn motion_redraws_phase_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = init_particles(&prior(), 10_000, &mut rng).unwrap();
        let u = p.coordinate(0);
        let w = p.weights().to_vec();
        motion_update(&mut p, &mut rng);
        assert_eq!(p.coordinate(0), u);
        assert_eq!(p.weights(), &w[..]);
        let d = ks_uniform(p.coordinate(1), -PI, PI);
        assert!(d < 1.628 / 100.0, "ks {d}");
    }

    #[test]
    fn resample_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(residual_resample(&[0.25; 4], &mut rng), vec![0, 1, 2, 3]);
        let uni = vec![1.0 / 2000.0; 2000];
        assert_eq!(residual_resample(&uni, &mut rng), (0..2000).collect::<Vec<_>>());
        assert_eq!(residual_resample(&[0.5, 0.5, 0.0, 0.0], &mut rng), vec![0, 0, 1, 1]);
        assert_eq!(residual_resample(&[0.1, 0.2, 0.3, 0.4], &mut rng).len(), 4);
    }

    #[test]
    fn resample_unbiased() {
        let w = [0.05, 0.33, 0.12, 0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reps = 20_000;
        let mut counts = [0usize; 4];
        for _ in 0..reps {
            for i in residual_resample(&w, &mut rng) {
                counts[i] += 1;
            }
        }
        for i in 0..4 {
            let expect = reps as f64 * 4.0 * w[i];
            assert!((counts[i] as f64 - expect).abs() / expect < 0.01, "{i}: {} vs {expect}", counts[i]);
        }
    }

    #[test]
    fn moments_examples() {
        let p = ParticleSet::new(2, vec![0.0, 0.0, 2.0, 0.0], vec![0.5, 0.5]).unwrap();
        let m = empirical_moments(&p);
        assert_eq!(m.mean[0], 1.0);
        assert_eq!(m.variance[0], 1.0);
        let p = ParticleSet::new(2, vec![0.7, 0.1], vec![1.0]).unwrap();
        assert_eq!(empirical_moments(&p).variance[0], 0.0);
        let p = ParticleSet::new(2, vec![0.7, 0.1, 3.0, 1.0], vec![1.0, 0.0]).unwrap();
        assert_eq!(empirical_moments(&p).mean[0], 0.7);
        // circular phase mean across the wrap point
        let p = ParticleSet::new(2, vec![0.0, PI - 0.1, 0.0, -PI + 0.1], vec![0.5, 0.5]).unwrap();
        assert!((empirical_moments(&p).mean[1].abs() - PI).abs() < 1e-12);
    }

    #[test]
    fn particle_set_normalizes() {
        let p = ParticleSet::new(2, vec![0.0, 4.0, 1.0, 0.0], vec![1.0, 3.0]).unwrap();
        assert_eq!(p.weights(), &[0.25, 0.75]);
        assert!(p.particle(0)[1] < PI);
        assert!(ParticleSet::new(2, vec![0.0; 3], vec![1.0, 1.0]).is_err());
        assert!(ParticleSet::new(2, vec![0.0; 4], vec![0.0, 0.0]).is_err());
        assert!(ParticleSet::new(2, vec![0.0; 4], vec![-1.0, 2.0]).is_err());
    }

    #[test]
    fn update_concentrates_at_high_snr() {
        let d = SamplingMatrix::from_column(uniform_linear_array(12, PI).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let truth = SourceParams::from_db(vec![0.137], 0.4, 20.0).unwrap();
        let a = crate::signal::steering_vector(&d, &truth).unwrap();
        let x = Observation {
            samples: a.iter().map(|z| z * truth.snr.sqrt()).collect(),
        };
        let mut p = init_particles(&prior(), 20_000, &mut rng).unwrap();
        reweight(&mut p, &x, &d, truth.snr).unwrap();
        let s: f64 = p.weights().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        let idx = residual_resample(p.weights(), &mut rng);
        let p = resample_with(&p, &idx);
        // mainlobe half-width of a 12-element half-wavelength array is 2/N in u
        let m = empirical_moments(&p).mean[0];
        assert!((m - 0.137).abs() < 2.0 * 2.0 / 12.0, "mean {m}");
        assert!((m - 0.137).abs() < 0.01, "mean {m}");
    }

    #[test]
    fn zero_snr_keeps_marginal() {
        let d = SamplingMatrix::from_column(uniform_linear_array(12, PI).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = init_particles(&prior(), 5000, &mut rng).unwrap();
        let before = p.coordinate(0);
        let truth = SourceParams::new(vec![0.2], 0.0, 0.0).unwrap();
        let x = synthesize_observation(&d, &truth, &mut rng).unwrap();
        assert!(measurement_update(&mut p, &x, &d, 0.0, &mut rng).unwrap());
        let n = before.len() as f64;
        let crit = 1.628 * (2.0 / n).sqrt();
        assert!(ks2(before, p.coordinate(0)) < crit);
    }

    #[test]
    fn underflow_falls_back_to_uniform() {
        let d = SamplingMatrix::from_column(vec![0.0]).unwrap();
        let mut p = ParticleSet::new(2, vec![0.0, 0.0, 0.1, 0.0], vec![0.9, 0.1]).unwrap();
        let x = Observation {
            samples: vec![Complex64::new(f64::NAN, 0.0)],
        };
        assert!(!reweight(&mut p, &x, &d, 1.0).unwrap());
        assert_eq!(p.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn update_is_deterministic() {
        let d = SamplingMatrix::from_column(uniform_linear_array(4, PI).unwrap()).unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(17);
            let mut p = init_particles(&prior(), 300, &mut rng).unwrap();
            let truth = SourceParams::new(vec![0.1], 0.0, 1.0).unwrap();
            for _ in 0..3 {
                motion_update(&mut p, &mut rng);
                let x = synthesize_observation(&d, &truth, &mut rng).unwrap();
                measurement_update(&mut p, &x, &d, 1.0, &mut rng).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}
