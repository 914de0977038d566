//! Single-source spatio-temporal observation model.
//!
//! An observation is `x = a(θ)·√γ + n`, where `θ = (u_1, …, u_{q-1}, φ)`,
//! `a(θ)_n = exp(i(Σ_j d_{j,n} u_j + φ))` and `n` is standard circularly
//! symmetric complex Gaussian noise. The sampling matrix `D` stores the
//! columns `d_j`; the trailing all-ones phase column is implicit.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Converts a power ratio in dB to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts a linear power ratio to dB.
pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Wraps an angle to `[-π, π)`.
pub fn wrap_phase(phi: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let w = (phi + PI).rem_euclid(two_pi) - PI;
    // rem_euclid may round up to exactly 2π for tiny negative inputs
    if w >= PI {
        w - two_pi
    } else {
        w
    }
}

/// Sampling matrix `D = (d_1, …, d_{q-1}, 1_N)` with the phase column implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingMatrix {
    columns: Vec<Vec<f64>>,
}

impl SamplingMatrix {
    pub fn new(columns: Vec<Vec<f64>>) -> Result<Self> {
        let first = columns
            .first()
            .ok_or_else(|| Error::invalid("sampling matrix needs at least one sampling column"))?;
        let n = first.len();
        if n == 0 {
            return Err(Error::invalid("sampling columns must have at least one sample"));
        }
        for c in &columns {
            if c.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    actual: c.len(),
                    context: "sampling column length",
                });
            }
        }
        Ok(Self { columns })
    }

    /// Single sampling vector (array positions or pulse times) plus phase.
    pub fn from_column(d: Vec<f64>) -> Result<Self> {
        Self::new(vec![d])
    }

    /// `D(g)`: all sampling columns multiplied by `g`, phase column untouched.
    pub fn scaled(&self, g: f64) -> Self {
        Self {
            columns: self
                .columns
                .iter()
                .map(|c| c.iter().map(|&x| g * x).collect())
                .collect(),
        }
    }

    /// Number of samples `N`.
    pub fn samples(&self) -> usize {
        self.columns[0].len()
    }

    /// Parameter dimension `q`, including the phase.
    pub fn dim(&self) -> usize {
        self.columns.len() + 1
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// Row `n` of `D·v` for a full parameter-space vector `v ∈ ℝ^q`.
    #[inline]
    pub fn row_dot(&self, n: usize, v: &[f64]) -> f64 {
        let q1 = self.columns.len();
        let mut acc = v[q1];
        for (j, c) in self.columns.iter().enumerate() {
            acc += c[n] * v[j];
        }
        acc
    }

    /// `Re 1ᵀ exp(i·s·D·v)` for a full parameter-space vector `v`.
    pub fn real_sum(&self, v: &[f64], s: f64) -> f64 {
        debug_assert_eq!(v.len(), self.dim());
        if self.columns.len() == 1 {
            let (c, ph) = (&self.columns[0], v[1]);
            let u = v[0];
            c.iter().map(|&d| (s * (d * u + ph)).cos()).sum()
        } else {
            (0..self.samples()).map(|n| (s * self.row_dot(n, v)).cos()).sum()
        }
    }

    /// `(Re 1ᵀ exp(i·D·v), Re 1ᵀ exp(i·2D·v))` from one cosine per sample.
    pub fn real_sums_1_2(&self, v: &[f64]) -> (f64, f64) {
        debug_assert_eq!(v.len(), self.dim());
        let (mut s1, mut s2) = (0.0, 0.0);
        for n in 0..self.samples() {
            let c = self.row_dot(n, v).cos();
            s1 += c;
            s2 += 2.0 * c * c - 1.0;
        }
        (s1, s2)
    }

    fn check_params(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                actual: len,
                context: "parameter vector vs sampling matrix",
            });
        }
        Ok(())
    }
}

/// Source parameters `θ = (u, φ)` together with the single-element SNR.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceParams {
    pub u: Vec<f64>,
    pub phase: f64,
    /// Linear scale.
    pub snr: f64,
}

impl SourceParams {
    pub fn new(u: Vec<f64>, phase: f64, snr: f64) -> Result<Self> {
        if !(snr >= 0.0) {
            return Err(Error::invalid(format!("snr must be >= 0, got {snr}")));
        }
        Ok(Self {
            u,
            phase: wrap_phase(phase),
            snr,
        })
    }

    pub fn from_db(u: Vec<f64>, phase: f64, snr_db: f64) -> Result<Self> {
        Self::new(u, phase, db_to_linear(snr_db))
    }

    /// `θ` as a flat vector with the phase last.
    pub fn theta(&self) -> Vec<f64> {
        let mut t = self.u.clone();
        t.push(self.phase);
        t
    }
}

/// Complex baseband samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub samples: Vec<Complex64>,
}

impl Observation {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Centered uniform linear array `d_n = spacing·(n − (N+1)/2)`, `n = 1..N`.
pub fn uniform_linear_array(n: usize, spacing: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("array needs at least one element"));
    }
    if !(spacing > 0.0) {
        return Err(Error::invalid(format!("spacing must be > 0, got {spacing}")));
    }
    let center = (n as f64 + 1.0) / 2.0;
    Ok((1..=n).map(|k| spacing * (k as f64 - center)).collect())
}

/// Spatio-temporal steering vector `a(θ) = exp(i·D·θ)`.
pub fn steering_vector(d: &SamplingMatrix, theta: &SourceParams) -> Result<Vec<Complex64>> {
    let t = theta.theta();
    d.check_params(t.len())?;
    Ok((0..d.samples())
        .map(|n| Complex64::from_polar(1.0, d.row_dot(n, &t)))
        .collect())
}

/// Draws `x = a(θ)√γ + n` with `n ~ CN(0, I)`.
pub fn synthesize_observation<R: Rng + ?Sized>(
    d: &SamplingMatrix,
    theta: &SourceParams,
    rng: &mut R,
) -> Result<Observation> {
    let a = steering_vector(d, theta)?;
    let amp = theta.snr.sqrt();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let samples = a
        .into_iter()
        .map(|an| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            an * amp + Complex64::new(s * re, s * im)
        })
        .collect();
    Ok(Observation { samples })
}

/// Log-likelihood `−‖x − a(θ)√γ‖²`; the constant `−N log π` is dropped.
pub fn log_likelihood(x: &Observation, d: &SamplingMatrix, theta: &SourceParams) -> Result<f64> {
    if x.len() != d.samples() {
        return Err(Error::Dimension {
            expected: d.samples(),
            actual: x.len(),
            context: "observation length vs sampling matrix",
        });
    }
    let a = steering_vector(d, theta)?;
    let amp = theta.snr.sqrt();
    Ok(-x
        .samples
        .iter()
        .zip(&a)
        .map(|(xn, an)| (xn - an * amp).norm_sqr())
        .sum::<f64>())
}

/// Array factor `B(h) = (1/N) Σ_n exp(i·g·d_n·h)`.
pub fn array_factor(d: &[f64], g: f64, h: f64) -> Result<Complex64> {
    if d.is_empty() {
        return Err(Error::invalid("array factor of an empty array"));
    }
    let sum: Complex64 = d.iter().map(|&dn| Complex64::from_polar(1.0, g * dn * h)).sum();
    Ok(sum / d.len() as f64)
}

/// TDM-MIMO configuration: one transmitter per pulse, a fixed receiver subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TdmMimoConfig {
    pub tx_positions: Vec<f64>,
    pub rx_positions: Vec<f64>,
    pub pulse_times: Vec<f64>,
    /// Transmitter index fired at each pulse.
    pub tx_activation: Vec<usize>,
    pub rx_selection: Vec<usize>,
    pub wavelength: f64,
}

impl TdmMimoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tx_activation.is_empty() {
            return Err(Error::invalid("tx_activation is empty"));
        }
        if self.rx_selection.is_empty() {
            return Err(Error::invalid("rx_selection is empty"));
        }
        if self.pulse_times.len() != self.tx_activation.len() {
            return Err(Error::Dimension {
                expected: self.tx_activation.len(),
                actual: self.pulse_times.len(),
                context: "pulse_times vs tx_activation",
            });
        }
        if !(self.wavelength > 0.0) {
            return Err(Error::invalid("wavelength must be > 0"));
        }
        if let Some(&t) = self.tx_activation.iter().find(|&&t| t >= self.tx_positions.len()) {
            return Err(Error::invalid(format!("transmitter index {t} out of range")));
        }
        let mut seen = vec![false; self.rx_positions.len()];
        for &r in &self.rx_selection {
            match seen.get_mut(r) {
                None => return Err(Error::invalid(format!("receiver index {r} out of range"))),
                Some(true) => return Err(Error::invalid(format!("receiver index {r} selected twice"))),
                Some(s) => *s = true,
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Virtual element positions `d^V` and times `t^V`, pulse-major.
    pub fn virtual_array(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        self.validate()?;
        let n = self.tx_activation.len() * self.rx_selection.len();
        let mut pos = Vec::with_capacity(n);
        let mut times = Vec::with_capacity(n);
        for (&tx, &t) in self.tx_activation.iter().zip(&self.pulse_times) {
            for &rx in &self.rx_selection {
                pos.push(self.tx_positions[tx] + self.rx_positions[rx]);
                times.push(t);
            }
        }
        Ok((pos, times))
    }
}

/// Sampling matrix `(d^V/λ, t^V/λ, 1)` for a TDM-MIMO configuration.
pub fn build_tdm_sampling_matrix(cfg: &TdmMimoConfig) -> Result<SamplingMatrix> {
    let (pos, times) = cfg.virtual_array()?;
    let inv = 1.0 / cfg.wavelength;
    SamplingMatrix::new(vec![
        pos.into_iter().map(|p| p * inv).collect(),
        times.into_iter().map(|t| t * inv).collect(),
    ])
}
