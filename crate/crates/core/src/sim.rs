//! Closed-loop trials and Monte Carlo MSE batches.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{
    enumerate_antenna_candidates, select_antennas, select_scaling, AntennaCandidate, AntennaEvaluator, AntennaGrid,
    BeliefSummary, DirectScaling, ScaleSearch, ScalingLut, ScalingPolicy,
};
use crate::error::{Error, Result};
use crate::filter::{empirical_moments, init_particles, measurement_update, motion_update};
use crate::priors::{approximate_from_particles, PriorBelief, PriorKind};
use crate::signal::{
    build_tdm_sampling_matrix, db_to_linear, synthesize_observation, uniform_linear_array, SamplingMatrix, SourceParams,
    TdmMimoConfig,
};
use crate::surrogate::Mlp;
use crate::wwb::{BoundModel, WwbOptConfig};

/// Measurement geometry before any scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArraySpec {
    /// Centered uniform linear array with the given phase spacing.
    Ula { elements: usize, spacing: f64 },
    Columns { columns: Vec<Vec<f64>> },
    Tdm(TdmMimoConfig),
}

impl ArraySpec {
    pub fn sampling_matrix(&self) -> Result<SamplingMatrix> {
        match self {
            Self::Ula { elements, spacing } => SamplingMatrix::from_column(uniform_linear_array(*elements, *spacing)?),
            Self::Columns { columns } => SamplingMatrix::new(columns.clone()),
            Self::Tdm(cfg) => build_tdm_sampling_matrix(cfg),
        }
    }
}

/// Serializable controller description; file paths are resolved by [`Controller::from_spec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerSpec {
    Fixed {
        g: f64,
    },
    Linear {
        g0: f64,
        slope: f64,
    },
    Random {
        lo: f64,
        hi: f64,
    },
    Lut {
        path: PathBuf,
    },
    Direct {
        model: BoundModel,
        #[serde(default)]
        search: ScaleSearch,
        #[serde(default)]
        opt: WwbOptConfig,
    },
    /// Antenna selection by exact known-phase cost.
    AntennaExact {
        #[serde(default)]
        grid: AntennaGrid,
        #[serde(default)]
        opt: WwbOptConfig,
    },
    AntennaSurrogate {
        #[serde(default)]
        grid: AntennaGrid,
        path: PathBuf,
    },
    /// Always the same extra transmitter and receiver (1-based labels).
    AntennaFixed {
        #[serde(default)]
        grid: AntennaGrid,
        tx: usize,
        rx: usize,
    },
}

pub enum Controller {
    Scaling(ScalingPolicy),
    AntennaExact {
        candidates: Vec<AntennaCandidate>,
        opt: WwbOptConfig,
    },
    AntennaSurrogate {
        grid: AntennaGrid,
        candidates: Vec<AntennaCandidate>,
        model: Mlp,
    },
    AntennaFixed(AntennaCandidate),
}

impl Controller {
    /// Loads referenced files relative to `base`.
    pub fn from_spec(spec: &ControllerSpec, scn: &Scenario, base: &Path) -> Result<Self> {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        Ok(match spec {
            ControllerSpec::Fixed { g } => Self::Scaling(ScalingPolicy::Fixed(*g)),
            ControllerSpec::Linear { g0, slope } => Self::Scaling(ScalingPolicy::Linear { g0: *g0, slope: *slope }),
            ControllerSpec::Random { lo, hi } => {
                if !(*lo > 0.0 && hi >= lo) {
                    return Err(Error::invalid("random scaling range must satisfy 0 < lo <= hi"));
                }
                Self::Scaling(ScalingPolicy::Random { lo: *lo, hi: *hi })
            }
            ControllerSpec::Lut { path } => Self::Scaling(ScalingPolicy::Lut(ScalingLut::load(&resolve(path))?)),
            ControllerSpec::Direct { model, search, opt } => {
                let d = scn.array.sampling_matrix()?;
                Self::Scaling(ScalingPolicy::Direct(Box::new(DirectScaling {
                    model: *model,
                    prior_kind: scn.approximation,
                    weights: crate::wwb::default_weights(d.dim()),
                    d,
                    search: search.clone(),
                    opt: opt.clone(),
                })))
            }
            ControllerSpec::AntennaExact { grid, opt } => Self::AntennaExact {
                candidates: enumerate_antenna_candidates(grid),
                opt: opt.clone(),
            },
            ControllerSpec::AntennaSurrogate { grid, path } => Self::AntennaSurrogate {
                grid: *grid,
                candidates: enumerate_antenna_candidates(grid),
                model: Mlp::load(&resolve(path))?,
            },
            ControllerSpec::AntennaFixed { grid, tx, rx } => {
                Self::AntennaFixed(AntennaCandidate::new(grid, tx.saturating_sub(1), rx.saturating_sub(1))?)
            }
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Scaling(p) => p.label(),
            Self::AntennaExact { .. } => "antenna_exact",
            Self::AntennaSurrogate { .. } => "antenna_surrogate",
            Self::AntennaFixed(_) => "antenna_fixed",
        }
    }

    fn choose(
        &self,
        base: &SamplingMatrix,
        belief: BeliefSummary,
        k: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Choice, SamplingMatrix)> {
        let snr = db_to_linear(belief.snr_db);
        let antenna = |c: &AntennaCandidate, idx: usize| {
            let (tx, rx) = c.labels();
            (Choice::Antenna { index: idx, tx, rx }, c.sampling_matrix())
        };
        Ok(match self {
            Self::Scaling(p) => {
                let g = select_scaling(p, belief, k, rng)?;
                (Choice::Scaling(g), base.scaled(g))
            }
            Self::AntennaExact { candidates, opt } => {
                let (i, _) = select_antennas(candidates, &AntennaEvaluator::ExactKp(opt), belief.variance, snr)?;
                antenna(&candidates[i], i)
            }
            Self::AntennaSurrogate {
                grid,
                candidates,
                model,
            } => {
                let ev = AntennaEvaluator::Surrogate { model, grid };
                let (i, _) = select_antennas(candidates, &ev, belief.variance, snr)?;
                antenna(&candidates[i], i)
            }
            Self::AntennaFixed(c) => antenna(c, usize::MAX),
        })
    }
}

fn default_delta() -> f64 {
    1.0
}

fn default_approximation() -> PriorKind {
    PriorKind::Uniform
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub array: ArraySpec,
    pub snr_db: f64,
    /// Initial belief; ground truth is drawn from it at the start of every trial.
    pub prior: PriorBelief,
    pub steps: usize,
    pub particles: usize,
    pub controller: ControllerSpec,
    /// Shape of the belief approximation handed to the controller.
    #[serde(default = "default_approximation")]
    pub approximation: PriorKind,
    /// Variance inflation applied to the particle variance.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::invalid("a scenario needs at least one step"));
        }
        if self.particles == 0 {
            return Err(Error::invalid("a scenario needs at least one particle"));
        }
        if !(self.delta >= 1.0) {
            return Err(Error::invalid(format!("delta must be >= 1, got {}", self.delta)));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::invalid("snr_db must be finite"));
        }
        self.prior.validate()?;
        let d = self.array.sampling_matrix()?;
        if d.dim() != self.prior.dim() {
            return Err(Error::Dimension {
                expected: d.dim(),
                actual: self.prior.dim(),
                context: "prior dimension vs sampling matrix",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    Scaling(f64),
    /// `index` is the position in the candidate list (`usize::MAX` for a fixed choice).
    Antenna { index: usize, tx: usize, rx: usize },
}

impl Choice {
    /// Value written to `choices.csv`: the scaling, or the 0-based candidate index.
    pub fn csv_value(&self) -> String {
        match self {
            Self::Scaling(g) => format!("{g}"),
            Self::Antenna { index: usize::MAX, tx, rx } => format!("tx{tx}rx{rx}"),
            Self::Antenna { index, .. } => format!("{index}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub choice: Choice,
    pub estimate: Vec<f64>,
    pub squared_error: f64,
    pub posterior_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub truth: Vec<f64>,
    pub steps: Vec<StepRecord>,
    /// Some likelihood update underflowed and fell back to uniform weights.
    pub degenerate: bool,
}

/// Timing of one trial; kept apart from [`TrialRecord`] so records stay reproducible.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialTiming {
    pub wall_clock: f64,
    pub max_decision: f64,
    pub total_decision: f64,
}

/// Runs motion, selection, observation and measurement update for every step.
pub fn run_closed_loop(
    scn: &Scenario,
    controller: &Controller,
    seed: u64,
) -> Result<(TrialRecord, TrialTiming)> {
    let start = Instant::now();
    let mut timing = TrialTiming::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = scn.array.sampling_matrix()?;
    let q1 = scn.prior.freq_dim();
    let snr = db_to_linear(scn.snr_db);
    let truth: Vec<f64> = scn.prior.sample(&mut rng)[..q1].to_vec();
    let mut particles = init_particles(&scn.prior, scn.particles, &mut rng)?;
    let mut steps = Vec::with_capacity(scn.steps);
    let mut degenerate = false;
    for k in 1..=scn.steps {
        motion_update(&mut particles, &mut rng);

        let t0 = Instant::now();
        let approx = approximate_from_particles(&particles, scn.approximation, scn.delta)?;
        let belief = BeliefSummary {
            variance: approx.variances()[0],
            snr_db: scn.snr_db,
        };
        let (choice, d) = controller.choose(&base, belief, k, &mut rng)?;
        let dt = t0.elapsed().as_secs_f64();
        timing.max_decision = timing.max_decision.max(dt);
        timing.total_decision += dt;

        let phase = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let source = SourceParams::new(truth.clone(), phase, snr)?;
        let x = synthesize_observation(&d, &source, &mut rng)?;
        if !measurement_update(&mut particles, &x, &d, snr, &mut rng)? {
            degenerate = true;
        }
        let m = empirical_moments(&particles);
        let estimate = m.mean[..q1].to_vec();
        let squared_error = estimate.iter().zip(&truth).map(|(a, b)| (a - b) * (a - b)).sum();
        steps.push(StepRecord {
            choice,
            estimate,
            squared_error,
            posterior_variance: m.variance.iter().sum(),
        });
    }
    if degenerate {
        warn!("trial {seed}: weight degeneracy during the filter update");
    }
    timing.wall_clock = start.elapsed().as_secs_f64();
    Ok((
        TrialRecord {
            seed,
            truth,
            steps,
            degenerate,
        },
        timing,
    ))
}

/// Log-spaced bins over absolute errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HistogramSpec {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Default for HistogramSpec {
    fn default() -> Self {
        Self {
            lo: 1e-6,
            hi: 1.0,
            bins: 60,
        }
    }
}

impl HistogramSpec {
    pub fn edges(&self) -> Vec<f64> {
        crate::control::log_space(self.lo, self.hi, self.bins + 1)
    }

    pub fn histogram(&self, values: impl IntoIterator<Item = f64>) -> Histogram {
        let edges = self.edges();
        let mut h = Histogram {
            counts: vec![0; self.bins],
            underflow: 0,
            overflow: 0,
            edges,
        };
        for x in values {
            if x < h.edges[0] {
                h.underflow += 1;
            } else if x >= h.edges[self.bins] {
                h.overflow += 1;
            } else {
                let i = h.edges.partition_point(|e| *e <= x) - 1;
                h.counts[i.min(self.bins - 1)] += 1;
            }
        }
        h
    }
}

/// Counts between consecutive `edges`, plus values below the first and at or above the last edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.underflow + self.overflow + self.counts.iter().sum::<u64>()
    }

    /// `(bin_lo, bin_hi, count)` rows with the open-ended bins at `0` and `inf`.
    pub fn rows(&self) -> Vec<(f64, f64, u64)> {
        let n = self.counts.len();
        let mut r = vec![(0.0, self.edges[0], self.underflow)];
        r.extend((0..n).map(|i| (self.edges[i], self.edges[i + 1], self.counts[i])));
        r.push((self.edges[n], f64::INFINITY, self.overflow));
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub policy: String,
    pub mse: Vec<f64>,
    pub histograms: Vec<Histogram>,
    pub records: Vec<TrialRecord>,
    pub timings: Vec<TrialTiming>,
}

impl MonteCarloResult {
    /// Squared errors of every trial at step `k` (1-based).
    pub fn squared_errors(&self, k: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.steps[k - 1].squared_error).collect()
    }
}

/// Per-step MSE over `1/N_T Σ_n`; trial `n` uses seed `seed_base + n`.
pub fn mse_from_records(records: &[TrialRecord], steps: usize) -> Vec<f64> {
    let n = records.len() as f64;
    (0..steps)
        .map(|k| records.iter().map(|r| r.steps[k].squared_error).sum::<f64>() / n)
        .collect()
}

pub fn monte_carlo_mse(
    scn: &Scenario,
    controller: &Controller,
    trials: usize,
    seed_base: u64,
    hist: &HistogramSpec,
) -> Result<MonteCarloResult> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    if !(hist.lo > 0.0 && hist.hi > hist.lo) || hist.bins == 0 {
        return Err(Error::invalid("histogram needs 0 < lo < hi and at least one bin"));
    }
    let out: Vec<(TrialRecord, TrialTiming)> = (0..trials as u64)
        .into_par_iter()
        .map(|n| run_closed_loop(scn, controller, seed_base.wrapping_add(n)))
        .collect::<Result<_>>()?;
    let (records, timings): (Vec<_>, Vec<_>) = out.into_iter().unzip();
    let histograms = (0..scn.steps)
        .map(|k| hist.histogram(records.iter().map(|r| r.steps[k].squared_error.sqrt())))
        .collect();
    Ok(MonteCarloResult {
        policy: controller.label().to_string(),
        mse: mse_from_records(&records, scn.steps),
        histograms,
        records,
        timings,
    })
}

#[derive(Serialize)]
struct JsonExport<'a> {
    policies: Vec<JsonPolicy<'a>>,
}

#[derive(Serialize)]
struct JsonPolicy<'a> {
    policy: &'a str,
    trials: usize,
    mse: &'a [f64],
    histograms: &'a [Histogram],
    choices: Vec<Vec<Choice>>,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `mse.csv`, `choices.csv`, `hist.csv` and `results.json` into `dir`.
pub fn export_results(results: &[MonteCarloResult], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut mse = String::from("step,policy,mse,trials\n");
    let mut choices = String::from("policy,trial,step,choice\n");
    let mut hist = String::from("policy,step,bin_lo,bin_hi,count\n");
    for r in results {
        for (k, m) in r.mse.iter().enumerate() {
            writeln!(mse, "{},{},{},{}", k + 1, r.policy, m, r.records.len()).expect("string write");
        }
        for (t, rec) in r.records.iter().enumerate() {
            for (k, s) in rec.steps.iter().enumerate() {
                writeln!(choices, "{},{},{},{}", r.policy, t, k + 1, s.choice.csv_value()).expect("string write");
            }
        }
        for (k, h) in r.histograms.iter().enumerate() {
            for (lo, hi, c) in h.rows() {
                writeln!(hist, "{},{},{},{},{}", r.policy, k + 1, lo, hi, c).expect("string write");
            }
        }
    }
    let json = JsonExport {
        policies: results
            .iter()
            .map(|r| JsonPolicy {
                policy: &r.policy,
                trials: r.records.len(),
                mse: &r.mse,
                histograms: &r.histograms,
                choices: r.records.iter().map(|t| t.steps.iter().map(|s| s.choice).collect()).collect(),
            })
            .collect(),
    };
    let paths: Vec<PathBuf> = ["mse.csv", "choices.csv", "hist.csv", "results.json"]
        .iter()
        .map(|f| dir.join(f))
        .collect();
    write(&paths[0], &mse)?;
    write(&paths[1], &choices)?;
    write(&paths[2], &hist)?;
    write(&paths[3], &serde_json::to_string_pretty(&json)?)?;
    Ok(paths)
}
