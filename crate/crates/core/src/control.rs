//! Sensing-parameter selection: scaling policies, the precomputed scaling table and
//! antenna selection for a sparse TDM-MIMO grid.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::debug;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::priors::{PriorBelief, PriorKind};
use crate::signal::{db_to_linear, SamplingMatrix};
use crate::surrogate::Mlp;
use crate::wwb::{argmin_lowest_g, scaling_cost_curve, wwb_cost, BoundModel, CostCurve, CostQuery, WwbOptConfig};

const LUT_MAGIC: &[u8; 8] = b"WWBLUT\0\0";
pub const LUT_VERSION: u32 = 1;

/// Log-spaced grid `c = g·w` of normalized scalings, where `w = √(12σ²)` is the
/// prior width (or its uniform equivalent for a Gaussian prior).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScaleSearch {
    pub c_min: f64,
    pub c_max: f64,
    pub coarse_points: usize,
    /// Points inserted between the neighbours of each refined local minimum.
    pub refine_points: usize,
    pub refine_minima: usize,
}

impl Default for ScaleSearch {
    fn default() -> Self {
        Self {
            c_min: 0.05,
            c_max: 8.0,
            coarse_points: 56,
            refine_points: 16,
            refine_minima: 2,
        }
    }
}

impl ScaleSearch {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_min > 0.0 && self.c_max > self.c_min) || self.coarse_points < 2 {
            return Err(Error::invalid("scale search needs 0 < c_min < c_max and at least 2 points"));
        }
        Ok(())
    }

    pub fn coarse_grid(&self) -> Vec<f64> {
        log_space(self.c_min, self.c_max, self.coarse_points)
    }

    /// Ratio between neighbouring coarse nodes.
    pub fn coarse_ratio(&self) -> f64 {
        (self.c_max / self.c_min).powf(1.0 / (self.coarse_points - 1) as f64)
    }
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| match k {
            0 => lo,
            k if k + 1 == n => hi,
            k => (a + (b - a) * k as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

/// Prior width used to normalize the scaling grid.
pub fn normalizing_width(variance: f64) -> f64 {
    (12.0 * variance).sqrt()
}

/// Cost-minimizing scaling on the normalized grid with local refinement.
///
/// The returned curve holds every evaluated scaling in increasing order.
pub fn optimal_scaling(
    prior: &PriorBelief,
    d: &SamplingMatrix,
    snr: f64,
    weights: &[f64],
    model: BoundModel,
    search: &ScaleSearch,
    cfg: &WwbOptConfig,
) -> Result<CostCurve> {
    search.validate()?;
    let width = normalizing_width(prior.variances()[0]);
    let coarse = search.coarse_grid();
    let g: Vec<f64> = coarse.iter().map(|c| c / width).collect();
    let curve = scaling_cost_curve(prior, d, snr, weights, &g, model, cfg)?;

    let n = coarse.len();
    let mut minima: Vec<usize> = (0..n)
        .filter(|&i| {
            let left = i == 0 || curve.cost[i] <= curve.cost[i - 1];
            let right = i + 1 == n || curve.cost[i] <= curve.cost[i + 1];
            left && right
        })
        .collect();
    minima.sort_by(|&a, &b| curve.cost[a].total_cmp(&curve.cost[b]).then(a.cmp(&b)));
    minima.truncate(search.refine_minima);

    let mut extra_c = Vec::new();
    if search.refine_points > 0 {
        for &i in &minima {
            let lo = coarse[i.saturating_sub(1)];
            let hi = coarse[(i + 1).min(n - 1)];
            let inner = log_space(lo, hi, search.refine_points + 2);
            extra_c.extend_from_slice(&inner[1..inner.len() - 1]);
        }
    }
    extra_c.retain(|c| !coarse.contains(c));
    extra_c.sort_by(f64::total_cmp);
    extra_c.dedup();
    if extra_c.is_empty() {
        return Ok(curve);
    }
    let extra_g: Vec<f64> = extra_c.iter().map(|c| c / width).collect();
    let fine = scaling_cost_curve(prior, d, snr, weights, &extra_g, model, cfg)?;

    let mut all: Vec<(f64, f64, Vec<f64>)> = curve
        .g
        .into_iter()
        .zip(curve.cost)
        .zip(curve.h)
        .chain(fine.g.into_iter().zip(fine.cost).zip(fine.h))
        .map(|((g, c), h)| (g, c, h))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let g: Vec<f64> = all.iter().map(|a| a.0).collect();
    let cost: Vec<f64> = all.iter().map(|a| a.1).collect();
    let argmin = argmin_lowest_g(&g, &cost);
    Ok(CostCurve {
        g,
        cost,
        h: all.into_iter().map(|a| a.2).collect(),
        argmin,
    })
}

/// What a table of optimal scalings was computed for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LutSpec {
    pub model: BoundModel,
    pub prior_kind: PriorKind,
    pub variance_axis: Vec<f64>,
    pub snr_axis_db: Vec<f64>,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub search: ScaleSearch,
    #[serde(default)]
    pub opt: WwbOptConfig,
}

impl LutSpec {
    /// Variance axis log-spaced over `[1e-4, 10]`, SNR axis `−20..=10` dB in 1 dB steps.
    pub fn with_default_axes(model: BoundModel, prior_kind: PriorKind) -> Self {
        Self {
            model,
            prior_kind,
            variance_axis: log_space(1e-4, 10.0, 41),
            snr_axis_db: (-20..=10).map(f64::from).collect(),
            weights: vec![1.0, 0.0],
            search: ScaleSearch::default(),
            opt: WwbOptConfig::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, axis) in [("variance", &self.variance_axis), ("snr", &self.snr_axis_db)] {
            if axis.is_empty() {
                return Err(Error::invalid(format!("{name} axis is empty")));
            }
            if axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::invalid(format!("{name} axis must be strictly increasing")));
            }
        }
        if self.variance_axis[0] <= 0.0 {
            return Err(Error::invalid("variances must be positive"));
        }
        self.search.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LutMetadata {
    pub format_version: u32,
    #[serde(flatten)]
    pub spec: LutSpec,
    pub array_hash: String,
    pub table_sha256: String,
}

/// Optimal scaling per `(variance, SNR)` cell; lookups are nearest-neighbour.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingLut {
    meta: LutMetadata,
    /// Variance-major: `table[i * n_snr + j]`.
    table: Vec<f64>,
}

/// SHA-256 of the little-endian bytes of every sampling column.
pub fn array_hash(d: &SamplingMatrix) -> String {
    let mut h = Sha256::new();
    for c in d.columns() {
        for x in c {
            h.update(x.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

fn f64_bytes(v: &[f64]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn nearest(axis: &[f64], x: f64) -> usize {
    let i = axis.partition_point(|a| *a < x);
    if i == 0 {
        0
    } else if i == axis.len() {
        axis.len() - 1
    } else if (x - axis[i - 1]).abs() <= (axis[i] - x).abs() {
        i - 1
    } else {
        i
    }
}

impl ScalingLut {
    pub fn from_parts(meta: LutMetadata, table: Vec<f64>) -> Result<Self> {
        meta.spec.validate()?;
        let n = meta.spec.variance_axis.len() * meta.spec.snr_axis_db.len();
        if table.len() != n {
            return Err(Error::Dimension {
                expected: n,
                actual: table.len(),
                context: "scaling table size",
            });
        }
        if table.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
            return Err(Error::Format("scaling table holds a non-positive entry".into()));
        }
        Ok(Self { meta, table })
    }

    pub fn meta(&self) -> &LutMetadata {
        &self.meta
    }

    pub fn variance_axis(&self) -> &[f64] {
        &self.meta.spec.variance_axis
    }

    pub fn snr_axis_db(&self) -> &[f64] {
        &self.meta.spec.snr_axis_db
    }

    pub fn get(&self, var_idx: usize, snr_idx: usize) -> f64 {
        self.table[var_idx * self.snr_axis_db().len() + snr_idx]
    }

    /// Scalings at a fixed SNR index, in order of increasing variance.
    pub fn column(&self, snr_idx: usize) -> Vec<f64> {
        (0..self.variance_axis().len()).map(|i| self.get(i, snr_idx)).collect()
    }

    /// Nearest cell in `(log σ², γ_dB)`; queries outside the axes use the edge cell.
    pub fn lookup(&self, variance: f64, snr_db: f64) -> f64 {
        let va = self.variance_axis();
        let sa = self.snr_axis_db();
        if variance < va[0] || variance > va[va.len() - 1] || snr_db < sa[0] || snr_db > sa[sa.len() - 1] {
            debug!("scaling table query ({variance:e}, {snr_db} dB) clamped to the table edge");
        }
        let lv = variance.max(f64::MIN_POSITIVE).ln();
        let i = {
            let j = va.partition_point(|a| a.ln() < lv);
            if j == 0 {
                0
            } else if j == va.len() {
                va.len() - 1
            } else if lv - va[j - 1].ln() <= va[j].ln() - lv {
                j - 1
            } else {
                j
            }
        };
        self.get(i, nearest(sa, snr_db))
    }

    fn sidecar(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".json");
        PathBuf::from(s)
    }

    fn table_bytes(&self) -> Vec<u8> {
        f64_bytes(&self.table)
    }

    /// Writes the binary table and its `.json` sidecar next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let spec = &self.meta.spec;
        let mut buf = Vec::new();
        buf.extend_from_slice(LUT_MAGIC);
        buf.extend_from_slice(&LUT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(spec.variance_axis.len() as u32).to_le_bytes());
        buf.extend_from_slice(&(spec.snr_axis_db.len() as u32).to_le_bytes());
        buf.extend(f64_bytes(&spec.variance_axis));
        buf.extend(f64_bytes(&spec.snr_axis_db));
        buf.extend(self.table_bytes());
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))?;
        let side = Self::sidecar(path);
        let json = serde_json::to_string_pretty(&self.meta)?;
        fs::write(&side, json).map_err(|e| Error::io(&side, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let side = Self::sidecar(path);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let meta: LutMetadata = serde_json::from_str(&text)?;
        if meta.format_version != LUT_VERSION {
            return Err(Error::Format(format!(
                "scaling table sidecar version {} (expected {LUT_VERSION})",
                meta.format_version
            )));
        }
        let mut r = ByteReader::new(&bytes);
        if r.take(8)? != LUT_MAGIC {
            return Err(Error::Format(format!("{} is not a scaling table", path.display())));
        }
        let version = r.u32()?;
        if version != LUT_VERSION {
            return Err(Error::Format(format!(
                "scaling table version {version} (expected {LUT_VERSION})"
            )));
        }
        let nv = r.u32()? as usize;
        let ns = r.u32()? as usize;
        let va = r.f64s(nv)?;
        let sa = r.f64s(ns)?;
        let table = r.f64s(nv * ns)?;
        if !r.is_empty() {
            return Err(Error::Format("trailing bytes after scaling table".into()));
        }
        if va != meta.spec.variance_axis || sa != meta.spec.snr_axis_db {
            return Err(Error::Format("scaling table axes disagree with the sidecar".into()));
        }
        let lut = Self::from_parts(meta, table)?;
        let hash = hex::encode(Sha256::digest(lut.table_bytes()));
        if hash != lut.meta.table_sha256 {
            return Err(Error::Format("scaling table hash mismatch".into()));
        }
        Ok(lut)
    }
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Format("unexpected end of file".into()));
        }
        let (a, b) = self.buf.split_at(n);
        self.buf = b;
        Ok(a)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }
}

/// Computes the optimal scaling of every cell; cells are independent.
pub fn build_scaling_lut(spec: &LutSpec, d: &SamplingMatrix) -> Result<ScalingLut> {
    spec.validate()?;
    let ns = spec.snr_axis_db.len();
    let cells: Vec<(usize, usize)> = (0..spec.variance_axis.len())
        .flat_map(|i| (0..ns).map(move |j| (i, j)))
        .collect();
    let table: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| {
            let var = spec.variance_axis[i];
            let snr_db = spec.snr_axis_db[j];
            let prior = PriorBelief::centered(spec.prior_kind, d.dim() - 1, var)?;
            optimal_scaling(&prior, d, db_to_linear(snr_db), &spec.weights, spec.model, &spec.search, &spec.opt)
                .map(|c| c.g_opt())
                .map_err(|e| Error::NoValidTestPoint(format!("cell (variance {var:e}, snr {snr_db} dB): {e}")))
        })
        .collect::<Result<_>>()?;
    let meta = LutMetadata {
        format_version: LUT_VERSION,
        spec: spec.clone(),
        array_hash: array_hash(d),
        table_sha256: hex::encode(Sha256::digest(f64_bytes(&table))),
    };
    ScalingLut::from_parts(meta, table)
}

/// Belief statistics a scaling controller sees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeliefSummary {
    pub variance: f64,
    pub snr_db: f64,
}

/// Fresh cost-curve minimization at every call.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectScaling {
    pub model: BoundModel,
    pub prior_kind: PriorKind,
    pub d: SamplingMatrix,
    pub weights: Vec<f64>,
    pub search: ScaleSearch,
    pub opt: WwbOptConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScalingPolicy {
    Fixed(f64),
    Linear { g0: f64, slope: f64 },
    Random { lo: f64, hi: f64 },
    Lut(ScalingLut),
    Direct(Box<DirectScaling>),
}

impl ScalingPolicy {
    /// Short label used in result files.
    pub fn label(&self) -> &'static str {
        match self {
            Self::Fixed(_) => "fixed",
            Self::Linear { .. } => "linear",
            Self::Random { .. } => "random",
            Self::Lut(_) => "lut",
            Self::Direct(_) => "direct",
        }
    }
}

/// Scaling for measurement step `k` (1-based).
pub fn select_scaling(policy: &ScalingPolicy, belief: BeliefSummary, k: usize, rng: &mut dyn RngCore) -> Result<f64> {
    if !(belief.variance > 0.0) {
        return Err(Error::invalid(format!("belief variance must be > 0, got {}", belief.variance)));
    }
    Ok(match policy {
        ScalingPolicy::Fixed(g) => *g,
        ScalingPolicy::Linear { g0, slope } => g0 + slope * k as f64,
        ScalingPolicy::Random { lo, hi } => rng.gen_range(*lo..=*hi),
        ScalingPolicy::Lut(lut) => lut.lookup(belief.variance, belief.snr_db),
        ScalingPolicy::Direct(p) => {
            let prior = PriorBelief::centered(p.prior_kind, p.d.dim() - 1, belief.variance)?;
            optimal_scaling(&prior, &p.d, db_to_linear(belief.snr_db), &p.weights, p.model, &p.search, &p.opt)?
                .g_opt()
        }
    })
}

/// Uniform element grid for the antenna task: positions `spacing·(1..=count)` in half-wavelengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntennaGrid {
    pub spacing: f64,
    pub count: usize,
}

impl Default for AntennaGrid {
    fn default() -> Self {
        Self { spacing: 0.9, count: 8 }
    }
}

impl AntennaGrid {
    /// Every distinct virtual position reachable by a candidate, as multiples of `spacing`.
    pub fn virtual_universe(&self) -> Vec<u32> {
        let mut u: Vec<u32> = enumerate_antenna_candidates(self)
            .iter()
            .flat_map(|c| c.virtual_units())
            .collect();
        u.sort_unstable();
        u.dedup();
        u
    }
}

/// One extra transmitter and one extra receiver next to the fixed first elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AntennaCandidate {
    /// Zero-based element index; element 0 is always active.
    pub tx: usize,
    pub rx: usize,
    spacing_bits: u64,
}

impl AntennaCandidate {
    pub fn new(grid: &AntennaGrid, tx: usize, rx: usize) -> Result<Self> {
        if tx == 0 || rx == 0 || tx >= grid.count || rx >= grid.count {
            return Err(Error::invalid(format!("antenna indices ({tx}, {rx}) outside 1..{}", grid.count)));
        }
        Ok(Self {
            tx,
            rx,
            spacing_bits: grid.spacing.to_bits(),
        })
    }

    pub fn spacing(&self) -> f64 {
        f64::from_bits(self.spacing_bits)
    }

    /// 1-based element labels, handy for printing (`Tx1` is the fixed one).
    pub fn labels(&self) -> (usize, usize) {
        (self.tx + 1, self.rx + 1)
    }

    /// Virtual positions as multiples of the grid spacing, pulse-major.
    pub fn virtual_units(&self) -> Vec<u32> {
        let mut v = Vec::with_capacity(4);
        for t in [0, self.tx] {
            for r in [0, self.rx] {
                v.push((t + 1 + r + 1) as u32);
            }
        }
        v
    }

    /// Virtual positions in half-wavelengths.
    pub fn virtual_positions(&self) -> Vec<f64> {
        let s = self.spacing();
        self.virtual_units().iter().map(|&k| k as f64 * s).collect()
    }

    /// Phase slopes per unit of electrical angle (half-wavelength spacing maps to π).
    ///
    /// Elements are sorted so that candidates with the same virtual multiset give
    /// bitwise-equal costs.
    pub fn sampling_matrix(&self) -> SamplingMatrix {
        let mut units = self.virtual_units();
        units.sort_unstable();
        let s = self.spacing();
        let d = units.into_iter().map(|k| std::f64::consts::PI * k as f64 * s).collect();
        SamplingMatrix::from_column(d).expect("candidates have four virtual elements")
    }
}

/// All `(count − 1)²` candidates, transmitter-major.
pub fn enumerate_antenna_candidates(grid: &AntennaGrid) -> Vec<AntennaCandidate> {
    (1..grid.count)
        .flat_map(|t| (1..grid.count).map(move |r| (t, r)))
        .map(|(t, r)| AntennaCandidate::new(grid, t, r).expect("indices are in range"))
        .collect()
}

/// Optimized known-phase DoA cost of a candidate under a uniform prior of matched variance.
pub fn antenna_cost_exact(cand: &AntennaCandidate, variance: f64, snr: f64, opt: &WwbOptConfig) -> Result<f64> {
    let prior = PriorBelief::centered(PriorKind::Uniform, 1, variance)?;
    let q = CostQuery::frequency_weighted(prior, cand.sampling_matrix(), snr)?;
    Ok(wwb_cost(&q, BoundModel::Kp, opt)?.cost)
}

pub enum AntennaEvaluator<'a> {
    ExactKp(&'a WwbOptConfig),
    Surrogate { model: &'a Mlp, grid: &'a AntennaGrid },
}

/// Index of the cheapest candidate (earliest on ties) together with all costs.
pub fn select_antennas(
    candidates: &[AntennaCandidate],
    evaluator: &AntennaEvaluator<'_>,
    variance: f64,
    snr: f64,
) -> Result<(usize, Vec<f64>)> {
    if candidates.is_empty() {
        return Err(Error::invalid("no antenna candidates"));
    }
    let costs: Vec<f64> = match evaluator {
        AntennaEvaluator::ExactKp(opt) => candidates
            .par_iter()
            .map(|c| antenna_cost_exact(c, variance, snr, opt))
            .collect::<Result<_>>()?,
        AntennaEvaluator::Surrogate { model, grid } => {
            let universe = grid.virtual_universe();
            candidates
                .iter()
                .map(|c| {
                    let f = crate::surrogate::encode_input(c, &universe, variance)?;
                    model.predict(&f)
                })
                .collect::<Result<_>>()?
        }
    };
    Ok((argmin_first(&costs), costs))
}

/// First index of the minimum.
pub fn argmin_first(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] < v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::uniform_linear_array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn ula12() -> SamplingMatrix {
        SamplingMatrix::from_column(uniform_linear_array(12, PI).unwrap()).unwrap()
    }

    fn small_spec(model: BoundModel) -> LutSpec {
        LutSpec {
            variance_axis: log_space(1e-3, 0.3, 4),
            snr_axis_db: vec![-10.0, 0.0],
            search: ScaleSearch {
                coarse_points: 24,
                refine_points: 4,
                ..ScaleSearch::default()
            },
            ..LutSpec::with_default_axes(model, PriorKind::Uniform)
        }
    }

    #[test]
    fn log_space_ends() {
        let g = log_space(1e-4, 10.0, 41);
        assert_eq!(g[0], 1e-4);
        assert_eq!(g[40], 10.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn fixed_linear_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = BeliefSummary {
            variance: 0.1,
            snr_db: -5.0,
        };
        for k in 1..5 {
            assert_eq!(select_scaling(&ScalingPolicy::Fixed(1.0), b, k, &mut rng).unwrap(), 1.0);
            let lin = ScalingPolicy::Linear { g0: 1.0, slope: 0.5 };
            assert_eq!(select_scaling(&lin, b, k, &mut rng).unwrap(), 1.0 + 0.5 * k as f64);
            let r = select_scaling(&ScalingPolicy::Random { lo: 2.0, hi: 3.0 }, b, k, &mut rng).unwrap();
            assert!((2.0..=3.0).contains(&r));
        }
        let bad = BeliefSummary { variance: 0.0, ..b };
        assert!(select_scaling(&ScalingPolicy::Fixed(1.0), bad, 1, &mut rng).is_err());
    }

    #[test]
    fn lut_nodes_and_clamping() {
        let lut = build_scaling_lut(&small_spec(BoundModel::Kp), &ula12()).unwrap();
        let va = lut.variance_axis().to_vec();
        let sa = lut.snr_axis_db().to_vec();
        for (i, v) in va.iter().enumerate() {
            for (j, s) in sa.iter().enumerate() {
                assert_eq!(lut.lookup(*v, *s), lut.get(i, j));
            }
        }
        assert_eq!(lut.lookup(1e-9, -40.0), lut.get(0, 0));
        assert_eq!(lut.lookup(1e3, 40.0), lut.get(va.len() - 1, sa.len() - 1));
        for j in 0..sa.len() {
            let col = lut.column(j);
            assert!(col.windows(2).all(|w| w[1] <= w[0]), "{col:?}");
        }
    }

    #[test]
    fn lut_roundtrip_and_corruption() {
        let lut = build_scaling_lut(&small_spec(BoundModel::Kp), &ula12()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.lut");
        lut.save(&path).unwrap();
        assert_eq!(ScalingLut::load(&path).unwrap(), lut);

        let mut bytes = fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 1] ^= 0x40;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(ScalingLut::load(&path), Err(Error::Format(_))));

        bytes[8] = 9;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(ScalingLut::load(&path), Err(Error::Format(_))));
        assert!(matches!(ScalingLut::load(&dir.path().join("missing")), Err(Error::Io { .. })));

        let mut meta = lut.meta.clone();
        meta.spec.variance_axis = log_space(1e-7, 1.0, 4);
        meta.spec.snr_axis_db = vec![-5.3, 0.1];
        let awkward = ScalingLut::from_parts(meta, lut.table.clone()).unwrap();
        awkward.save(&path).unwrap();
        assert_eq!(ScalingLut::load(&path).unwrap(), awkward);
    }

    #[test]
    fn direct_matches_lut_node() {
        let spec = small_spec(BoundModel::Kp);
        let lut = build_scaling_lut(&spec, &ula12()).unwrap();
        let direct = ScalingPolicy::Direct(Box::new(DirectScaling {
            model: spec.model,
            prior_kind: spec.prior_kind,
            d: ula12(),
            weights: spec.weights.clone(),
            search: spec.search.clone(),
            opt: spec.opt.clone(),
        }));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = BeliefSummary {
            variance: spec.variance_axis[2],
            snr_db: 0.0,
        };
        let g = select_scaling(&direct, b, 1, &mut rng).unwrap();
        assert_eq!(g, lut.get(2, 1));
    }

    #[test]
    fn candidates() {
        let grid = AntennaGrid::default();
        let c = enumerate_antenna_candidates(&grid);
        assert_eq!(c.len(), 49);
        assert!(c.iter().all(|x| x.virtual_units().contains(&2)));
        assert_eq!((c[0].tx, c[0].rx), (1, 1));
        assert_eq!((c[1].tx, c[1].rx), (1, 2));
        let p = c[0].virtual_positions();
        let expect = [0.9 + 0.9, 0.9 + 1.8, 1.8 + 0.9, 1.8 + 1.8];
        for (a, b) in p.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(grid.virtual_universe(), (2..=16).collect::<Vec<u32>>());
        assert!(AntennaCandidate::new(&grid, 0, 3).is_err());
    }

    #[test]
    fn wide_prior_prefers_compact_array() {
        let grid = AntennaGrid::default();
        let c = enumerate_antenna_candidates(&grid);
        let opt = WwbOptConfig::default();
        let var = 1.0 / 3.0;
        let snr = db_to_linear(-10.0);
        let compact = antenna_cost_exact(&c[0], var, snr, &opt).unwrap();
        let widest = antenna_cost_exact(&c[48], var, snr, &opt).unwrap();
        assert!(compact < widest, "compact {compact} widest {widest}");
        let (best, costs) = select_antennas(&c, &AntennaEvaluator::ExactKp(&opt), var, snr).unwrap();
        assert_eq!(costs[best], costs.iter().copied().fold(f64::INFINITY, f64::min));
    }

    #[test]
    fn argmin_first_breaks_ties_by_order() {
        assert_eq!(argmin_first(&[2.0, 1.0, 1.0]), 1);
        assert_eq!(argmin_first(&[1.0, 1.0]), 0);
    }
}
