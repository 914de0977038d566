use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde_json::json;

use wwb_adapt::control::{
    build_scaling_lut, enumerate_antenna_candidates, log_space, select_antennas, AntennaEvaluator, AntennaGrid,
    LutSpec, ScaleSearch,
};
use wwb_adapt::priors::{PriorBelief, PriorKind};
use wwb_adapt::signal::db_to_linear;
use wwb_adapt::sim::{export_results, monte_carlo_mse, ArraySpec, Controller, ControllerSpec, HistogramSpec, Scenario};
use wwb_adapt::surrogate::{fidelity, train, AntennaDataset, Mlp, Optimizer, TrainConfig};
use wwb_adapt::wwb::{default_weights, scaling_cost_curve, BoundModel, WwbOptConfig};

use crate::manifest::{sidecar, RunManifest};
use crate::{CliError, CliResult};

/// One flag value holding a whole grid; a bare `Vec` would make clap expect repeated flags.
pub type Grid = Vec<f64>;

/// Inclusive `lo:step:hi` grid.
pub fn parse_range(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, step, hi] = parts.as_slice() else {
        return Err(format!("range {s:?} is not lo:step:hi"));
    };
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("range {s:?}: {t:?} is not a number"));
    let (lo, step, hi) = (num(lo)?, num(step)?, num(hi)?);
    if !(step > 0.0) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(format!("range {s:?} needs step > 0 and hi >= lo"));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| lo + step * i as f64).collect())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Rp,
    Kp,
    Uc,
}

impl From<ModelArg> for BoundModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Rp => BoundModel::Rp,
            ModelArg::Kp => BoundModel::Kp,
            ModelArg::Uc => BoundModel::Uc,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PriorArg {
    Uniform,
    Gaussian,
}

impl From<PriorArg> for PriorKind {
    fn from(p: PriorArg) -> Self {
        match p {
            PriorArg::Uniform => PriorKind::Uniform,
            PriorArg::Gaussian => PriorKind::Gaussian,
        }
    }
}

#[derive(Debug, Args)]
pub struct ArrayArgs {
    /// Elements of the centered uniform linear array.
    #[arg(long, default_value_t = 12)]
    pub elements: usize,
    /// Phase spacing between neighbouring elements (π is half a wavelength).
    #[arg(long, default_value_t = std::f64::consts::PI)]
    pub spacing: f64,
    /// JSON array description; overrides --elements/--spacing.
    #[arg(long)]
    pub array: Option<PathBuf>,
}

impl ArrayArgs {
    fn spec(&self) -> CliResult<ArraySpec> {
        match &self.array {
            Some(p) => {
                let text = read(p)?;
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
            }
            None => Ok(ArraySpec::Ula {
                elements: self.elements,
                spacing: self.spacing,
            }),
        }
    }

    fn inputs(&self) -> Vec<&Path> {
        self.array.iter().map(|p| p.as_path()).collect()
    }
}

#[derive(Debug, Args)]
pub struct VarianceGrid {
    #[arg(long, default_value_t = 1e-4)]
    pub var_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub var_max: f64,
    /// Log-spaced points between --var-min and --var-max.
    #[arg(long, default_value_t = 41)]
    pub var_points: usize,
}

impl VarianceGrid {
    fn values(&self) -> CliResult<Vec<f64>> {
        if !(self.var_min > 0.0 && self.var_max >= self.var_min) || self.var_points == 0 {
            return Err(CliError::Config("variance grid needs 0 < var-min <= var-max and points >= 1".into()));
        }
        Ok(log_space(self.var_min, self.var_max, self.var_points))
    }
}

fn read(p: &Path) -> CliResult<String> {
    fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
}

fn write(p: &Path, s: &str) -> CliResult<()> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(p, s).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
}

fn opt_config(seed: u64) -> WwbOptConfig {
    let mut c = WwbOptConfig::default();
    c.anneal.seed = seed;
    c
}

#[derive(Debug, Args)]
pub struct WwbArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value = "uniform")]
    pub prior: PriorArg,
    /// Prior support width Δu (a Gaussian prior gets the matching variance Δu²/12).
    #[arg(long, conflicts_with = "variance")]
    pub dv: Option<f64>,
    #[arg(long)]
    pub variance: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub snr_db: f64,
    /// Scalings as lo:step:hi.
    #[arg(long, value_parser = parse_range)]
    pub g_grid: Grid,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub array: ArrayArgs,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn cmd_wwb(a: &WwbArgs, threads: Option<usize>) -> CliResult<()> {
    let variance = match (a.dv, a.variance) {
        (Some(dv), None) => dv * dv / 12.0,
        (None, Some(v)) => v,
        _ => return Err(CliError::Config("give exactly one of --dv or --variance".into())),
    };
    let spec = a.array.spec()?;
    let d = spec.sampling_matrix()?;
    let prior = PriorBelief::centered(a.prior.into(), d.dim() - 1, variance)?;
    let cfg = opt_config(a.seed);
    let mut manifest = None;
    if let Some(out) = &a.out {
        let m = RunManifest::new(
            "wwb",
            json!({"model": BoundModel::from(a.model), "prior": prior, "snr_db": a.snr_db, "g_grid": a.g_grid, "array": spec, "opt": cfg}),
            json!({"anneal": a.seed}),
            threads,
            &a.array.inputs(),
        )?;
        m.write(&sidecar(out))?;
        manifest = Some(m);
    }
    let curve = scaling_cost_curve(
        &prior,
        &d,
        db_to_linear(a.snr_db),
        &default_weights(d.dim()),
        &a.g_grid,
        a.model.into(),
        &cfg,
    )?;
    let q = curve.h.first().map_or(0, |h| h.len());
    let mut csv = String::from("g,cost");
    for j in 0..q {
        write!(csv, ",h{}", j + 1).expect("string write");
    }
    csv.push_str(",argmin\n");
    for i in 0..curve.g.len() {
        write!(csv, "{},{}", curve.g[i], curve.cost[i]).expect("string write");
        for h in &curve.h[i] {
            write!(csv, ",{h}").expect("string write");
        }
        writeln!(csv, ",{}", u8::from(i == curve.argmin)).expect("string write");
    }
    match (&a.out, manifest) {
        (Some(out), Some(mut m)) => {
            write(out, &csv)?;
            m.finish(&sidecar(out), &[out.clone()])?;
            println!("argmin_g={} cost={}", curve.g_opt(), curve.cost[curve.argmin]);
        }
        _ => print!("{csv}"),
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct LutArgs {
    #[arg(long, value_enum)]
    pub model: ModelArg,
    #[arg(long, value_enum, default_value = "uniform")]
    pub prior: PriorArg,
    #[command(flatten)]
    pub variances: VarianceGrid,
    /// SNR axis in dB as lo:step:hi.
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true, default_value = "-20:1:10")]
    pub snr_db_grid: Grid,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Coarse points of the normalized scaling search.
    #[arg(long)]
    pub coarse_points: Option<usize>,
    #[command(flatten)]
    pub array: ArrayArgs,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_lut(a: &LutArgs, threads: Option<usize>) -> CliResult<()> {
    let spec_arr = a.array.spec()?;
    let d = spec_arr.sampling_matrix()?;
    let mut search = ScaleSearch::default();
    if let Some(n) = a.coarse_points {
        search.coarse_points = n;
    }
    let spec = LutSpec {
        model: a.model.into(),
        prior_kind: a.prior.into(),
        variance_axis: a.variances.values()?,
        snr_axis_db: a.snr_db_grid.clone(),
        weights: default_weights(d.dim()),
        search,
        opt: opt_config(a.seed),
    };
    let man_path = sidecar(&a.out);
    let mut m = RunManifest::new(
        "lut",
        json!({"lut": spec, "array": spec_arr}),
        json!({"anneal": a.seed}),
        threads,
        &a.array.inputs(),
    )?;
    m.write(&man_path)?;
    let lut = build_scaling_lut(&spec, &d)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    lut.save(&a.out)?;
    let mut json_side = a.out.as_os_str().to_owned();
    json_side.push(".json");
    m.finish(&man_path, &[a.out.clone(), PathBuf::from(json_side)])?;
    println!("cells={} out={}", lut.variance_axis().len() * lut.snr_axis_db().len(), a.out.display());
    Ok(())
}

/// `lut:<file>`, `fixed:<g>`, `linear:<g0>:<slope>`, `random:<lo>:<hi>`, `direct:<model>`,
/// `antenna-exact`, `antenna-surrogate:<file>`, `antenna-fixed:<tx>:<rx>`.
pub fn parse_controller(s: &str) -> Result<ControllerSpec, String> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    let nums = || -> Result<Vec<f64>, String> {
        rest.split(':')
            .map(|t| t.parse::<f64>().map_err(|_| format!("controller {s:?}: {t:?} is not a number")))
            .collect()
    };
    let want = |v: Vec<f64>, n: usize| {
        if v.len() == n {
            Ok(v)
        } else {
            Err(format!("controller {s:?} expects {n} numbers"))
        }
    };
    Ok(match kind {
        "lut" if !rest.is_empty() => ControllerSpec::Lut { path: rest.into() },
        "fixed" => ControllerSpec::Fixed { g: want(nums()?, 1)?[0] },
        "linear" => {
            let v = want(nums()?, 2)?;
            ControllerSpec::Linear { g0: v[0], slope: v[1] }
        }
        "random" => {
            let v = want(nums()?, 2)?;
            ControllerSpec::Random { lo: v[0], hi: v[1] }
        }
        "direct" => ControllerSpec::Direct {
            model: rest.parse().map_err(|e| format!("controller {s:?}: {e}"))?,
            search: ScaleSearch::default(),
            opt: WwbOptConfig::default(),
        },
        "antenna-exact" => ControllerSpec::AntennaExact {
            grid: AntennaGrid::default(),
            opt: WwbOptConfig::default(),
        },
        "antenna-surrogate" if !rest.is_empty() => ControllerSpec::AntennaSurrogate {
            grid: AntennaGrid::default(),
            path: rest.into(),
        },
        "antenna-fixed" => {
            let v = want(nums()?, 2)?;
            ControllerSpec::AntennaFixed {
                grid: AntennaGrid::default(),
                tx: v[0] as usize,
                rx: v[1] as usize,
            }
        }
        _ => return Err(format!("unknown controller {s:?}")),
    })
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub trials: usize,
    /// Base seed; trial n uses seed + n (defaults to the scenario seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Policies to run instead of the scenario's controller; repeatable.
    #[arg(long, value_parser = parse_controller)]
    pub controller: Vec<ControllerSpec>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-6)]
    pub hist_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub hist_hi: f64,
    #[arg(long, default_value_t = 60)]
    pub hist_bins: usize,
}

pub fn cmd_simulate(a: &SimulateArgs, threads: Option<usize>) -> CliResult<()> {
    let text = read(&a.config)?;
    let scn = Scenario::from_json(&text)?;
    let seed = a.seed.unwrap_or(scn.seed);
    let specs = if a.controller.is_empty() {
        vec![scn.controller.clone()]
    } else {
        a.controller.clone()
    };
    let out_dir = a.out_dir.clone().unwrap_or_else(|| PathBuf::from(format!("runs/simulate-seed{seed}")));
    fs::create_dir_all(&out_dir).map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let hist = HistogramSpec {
        lo: a.hist_lo,
        hi: a.hist_hi,
        bins: a.hist_bins,
    };

    let mut inputs: Vec<PathBuf> = vec![a.config.clone()];
    for s in &specs {
        match s {
            ControllerSpec::Lut { path } | ControllerSpec::AntennaSurrogate { path, .. } => {
                inputs.push(if path.is_absolute() { path.clone() } else { base.join(path) })
            }
            _ => {}
        }
    }
    let input_refs: Vec<&Path> = inputs.iter().map(|p| p.as_path()).collect();
    let man_path = out_dir.join("manifest.json");
    let mut m = RunManifest::new(
        "simulate",
        json!({"scenario": scn, "controllers": specs, "trials": a.trials, "histogram": hist}),
        json!({"base": seed, "trial_seed": "base + trial index"}),
        threads,
        &input_refs,
    )?;
    m.write(&man_path)?;

    let mut results = Vec::new();
    let mut timing = Vec::new();
    for spec in &specs {
        let ctl = Controller::from_spec(spec, &scn, base)?;
        let r = monte_carlo_mse(&scn, &ctl, a.trials, seed, &hist)?;
        let max = r.timings.iter().map(|t| t.max_decision).fold(0.0, f64::max);
        let total: f64 = r.timings.iter().map(|t| t.total_decision).sum();
        let steps = (a.trials * scn.steps) as f64;
        timing.push(json!({"policy": r.policy, "max_decision_seconds": max, "mean_decision_seconds": total / steps}));
        println!(
            "policy={} mse_final={} max_decision_seconds={max:e}",
            r.policy,
            r.mse[r.mse.len() - 1]
        );
        results.push(r);
    }
    let outputs = export_results(&results, &out_dir)?;
    m.timing = Some(json!(timing));
    m.finish(&man_path, &outputs)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EvaluatorArg {
    Exact,
    Surrogate,
}

#[derive(Debug, Args)]
pub struct AntennaArgs {
    #[arg(long, value_enum, default_value = "exact")]
    pub evaluator: EvaluatorArg,
    /// Trained surrogate model (required for --evaluator surrogate).
    #[arg(long)]
    pub model_file: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub snr_db: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub var_min: f64,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub var_max: f64,
    #[arg(long, default_value_t = 100)]
    pub var_points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn cmd_antenna(a: &AntennaArgs, threads: Option<usize>) -> CliResult<()> {
    let vars = VarianceGrid {
        var_min: a.var_min,
        var_max: a.var_max,
        var_points: a.var_points,
    }
    .values()?;
    let grid = AntennaGrid::default();
    let candidates = enumerate_antenna_candidates(&grid);
    let opt = opt_config(a.seed);
    let model = match (a.evaluator, &a.model_file) {
        (EvaluatorArg::Surrogate, Some(p)) => Some(Mlp::load(p)?),
        (EvaluatorArg::Surrogate, None) => return Err(CliError::Config("--evaluator surrogate needs --model-file".into())),
        _ => None,
    };
    let inputs: Vec<&Path> = a.model_file.iter().map(|p| p.as_path()).collect();
    let man_path = sidecar(&a.out);
    let mut m = RunManifest::new(
        "antenna",
        json!({"evaluator": format!("{:?}", a.evaluator).to_lowercase(), "snr_db": a.snr_db, "variances": vars, "grid": grid, "opt": opt}),
        json!({"anneal": a.seed}),
        threads,
        &inputs,
    )?;
    m.write(&man_path)?;
    let ev = match &model {
        Some(model) => AntennaEvaluator::Surrogate { model, grid: &grid },
        None => AntennaEvaluator::ExactKp(&opt),
    };
    let mut csv = String::from("variance,candidate,tx,rx,cost\n");
    for v in &vars {
        let (i, costs) = select_antennas(&candidates, &ev, *v, db_to_linear(a.snr_db))?;
        let (tx, rx) = candidates[i].labels();
        writeln!(csv, "{v},{i},{tx},{rx},{}", costs[i]).expect("string write");
    }
    write(&a.out, &csv)?;
    m.finish(&man_path, &[a.out.clone()])?;
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
    pub snr_db: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub var_min: f64,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub var_max: f64,
    #[arg(long, default_value_t = 100)]
    pub var_points: usize,
    /// Reuse costs from a previous --dataset-out instead of recomputing them.
    #[arg(long)]
    pub dataset_in: Option<PathBuf>,
    #[arg(long)]
    pub dataset_out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long, value_enum)]
    pub optimizer: Option<OptimizerArg>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub variance_gain: Option<f64>,
    /// Full-batch L-BFGS iterations after the mini-batch phase (0 to skip).
    #[arg(long)]
    pub refine_iterations: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn read_dataset(p: &Path, vars: &[f64]) -> CliResult<Vec<f64>> {
    let text = read(p)?;
    let nc = enumerate_antenna_candidates(&AntennaGrid::default()).len();
    let mut costs = Vec::new();
    for (i, line) in text.lines().skip(1).enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let bad = || CliError::Config(format!("{}: malformed line {}", p.display(), i + 2));
        if f.len() != 3 {
            return Err(bad());
        }
        let v: f64 = f[0].parse().map_err(|_| bad())?;
        if vars.get(i / nc) != Some(&v) {
            return Err(CliError::Config(format!("{}: variance grid differs from the flags", p.display())));
        }
        costs.push(f[2].parse().map_err(|_| bad())?);
    }
    if costs.len() != nc * vars.len() {
        return Err(CliError::Config(format!("{}: expected {} rows", p.display(), nc * vars.len())));
    }
    Ok(costs)
}

pub fn cmd_train_surrogate(a: &TrainArgs, threads: Option<usize>) -> CliResult<()> {
    let vars = VarianceGrid {
        var_min: a.var_min,
        var_max: a.var_max,
        var_points: a.var_points,
    }
    .values()?;
    let mut cfg = TrainConfig {
        seed: a.seed,
        ..TrainConfig::default()
    };
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(l) = a.learning_rate {
        cfg.learning_rate = l;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    if let Some(h) = &a.hidden {
        cfg.hidden = h.clone();
    }
    if let Some(v) = a.variance_gain {
        cfg.variance_gain = v;
    }
    if let Some(r) = a.refine_iterations {
        cfg.refine_iterations = r;
    }
    if let Some(o) = a.optimizer {
        cfg.optimizer = match o {
            OptimizerArg::Adam => Optimizer::Adam,
            OptimizerArg::Sgd => Optimizer::Sgd,
        };
    }
    let opt = opt_config(a.seed);
    let snr = db_to_linear(a.snr_db);
    let inputs: Vec<&Path> = a.dataset_in.iter().map(|p| p.as_path()).collect();
    let man_path = sidecar(&a.out);
    let mut m = RunManifest::new(
        "train-surrogate",
        json!({"snr_db": a.snr_db, "variances": vars, "train": cfg, "opt": opt}),
        json!({"train": a.seed, "anneal": a.seed}),
        threads,
        &inputs,
    )?;
    m.write(&man_path)?;
    let data = match &a.dataset_in {
        Some(p) => {
            let mut d = AntennaDataset::generate(AntennaGrid::default(), &[], snr, &opt)?;
            d.variances = vars.clone();
            d.costs = read_dataset(p, &vars)?;
            d
        }
        None => AntennaDataset::generate(AntennaGrid::default(), &vars, snr, &opt)?,
    };
    let mut outputs = vec![a.out.clone()];
    if let Some(p) = &a.dataset_out {
        let mut csv = String::from("variance,candidate,cost\n");
        let nc = data.candidates.len();
        for (k, c) in data.costs.iter().enumerate() {
            writeln!(csv, "{},{},{c}", data.variances[k / nc], k % nc).expect("string write");
        }
        write(p, &csv)?;
        outputs.push(p.clone());
    }
    let feats = data.features()?;
    let (model, report) = train(&feats, &data.costs, &cfg)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    model.save(&a.out)?;
    let f = fidelity(&model, &data)?;
    m.timing = Some(json!({"final_loss": report.epoch_loss.last()}));
    m.finish(&man_path, &outputs)?;
    println!(
        "max_relative_error={} mean_relative_error={} top1_agreement={}",
        f.max_relative_error, f.mean_relative_error, f.top1_agreement
    );
    Ok(())
}
