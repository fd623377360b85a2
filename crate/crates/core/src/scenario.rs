//! Experiment definitions and the sweeps over mesh resolutions.
//!
//! A scenario is read from a TOML file:
//!
//! ```toml
//! name = "convergence"
//! kappa = 0.5
//! t_final = 20.0
//! tol = "h^2"
//!
//! [grid]
//! m = [64, 128]
//! bc = "periodic"
//!
//! [initial_data]
//! kind = "dalembert"
//! ```
//!
//! Scenarios run in double precision.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytic::{DAlembertCoeffs, ErrorTracker, Mode};
use crate::error::{Error, Result};
use crate::fixedpoint::{FixedPointOptions, SolverState};
use crate::grid::{Boundary, Grid, VectorField};
use crate::integrator::{
    self, default_stride, ConservationMonitor, Diagnostics, DiagnosticsRecorder, RunOptions, StepObserver,
};
use crate::scalar::{Scalar, Vec3};

/// Default convergence experiment at `M = 64`.
pub const DEFAULT_CONVERGENCE_TOML: &str = include_str!("../../../configs/convergence.toml");
/// Default blow-up experiment at `M ∈ {32, 64, 128}`.
pub const DEFAULT_BLOWUP_TOML: &str = include_str!("../../../configs/blowup.toml");

/// Largest resolution run without `full_scale = true`, for smooth and blow-up data.
pub const SMOOTH_M_CAP: usize = 256;
pub const BLOWUP_M_CAP: usize = 128;

/// Fixed-point tolerance as a function of the mesh width: `factor · h^power`,
/// or a constant. Written as a number or a string like `"h^2"`, `"0.5*h^2"`,
/// `"h^1.5"` or `"h^2/2"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TolRule {
    Power { factor: f64, power: f64 },
    Fixed(f64),
}

impl Default for TolRule {
    fn default() -> Self {
        TolRule::Power { factor: 1.0, power: 2.0 }
    }
}

impl TolRule {
    pub fn eval(&self, h: f64) -> f64 {
        match *self {
            TolRule::Power { factor, power } => factor * h.powf(power),
            TolRule::Fixed(v) => v,
        }
    }
}

impl std::fmt::Display for TolRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            TolRule::Power { factor: 1.0, power } => write!(f, "h^{power}"),
            TolRule::Power { factor, power } => write!(f, "{factor}*h^{power}"),
            TolRule::Fixed(v) => write!(f, "{v:e}"),
        }
    }
}

impl FromStr for TolRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse tolerance rule {s:?}"));
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if let Ok(v) = compact.parse::<f64>() {
            return Ok(TolRule::Fixed(v));
        }
        let (mut body, divisor) = match compact.split_once('/') {
            Some((b, d)) => (b.to_string(), d.parse::<f64>().map_err(|_| bad())?),
            None => (compact.clone(), 1.0),
        };
        let mut factor = 1.0;
        if let Some((f, rest)) = body.split_once('*') {
            factor = f.parse::<f64>().map_err(|_| bad())?;
            body = rest.to_string();
        }
        let power = match body.strip_prefix('h').ok_or_else(bad)? {
            "" => 1.0,
            p => p.strip_prefix('^').ok_or_else(bad)?.parse::<f64>().map_err(|_| bad())?,
        };
        Ok(TolRule::Power {
            factor: factor / divisor,
            power,
        })
    }
}

impl Serialize for TolRule {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            TolRule::Fixed(v) => s.serialize_f64(v),
            rule => s.serialize_str(&rule.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for TolRule {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(TolRule::Fixed(v)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// One resolution or a list of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Resolutions {
    One(usize),
    Many(Vec<usize>),
}

impl Resolutions {
    pub fn to_vec(&self) -> Vec<usize> {
        match self {
            Resolutions::One(m) => vec![*m],
            Resolutions::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    pub m: Resolutions,
    #[serde(default = "default_bc")]
    pub bc: Boundary,
    #[serde(default)]
    pub origin: Vec<f64>,
    #[serde(default = "default_extent")]
    pub extent: f64,
}

fn default_dim() -> usize {
    2
}

fn default_bc() -> Boundary {
    Boundary::Periodic
}

fn default_extent() -> f64 {
    1.0
}

fn default_kappa() -> f64 {
    0.5
}

fn default_max_iter() -> usize {
    FixedPointOptions::<f64>::DEFAULT_MAX_ITER
}

fn reference_modes() -> Vec<Mode> {
    DAlembertCoeffs::reference().modes
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// Planar angle solution; the default modes are the reference set.
    Dalembert {
        #[serde(default = "reference_modes")]
        modes: Vec<Mode>,
    },
    /// Bubble of a degree-one map collapsing at the origin, at rest.
    BlowUp,
    /// State read from a snapshot file; the file defines the grid.
    Snapshot { path: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    /// Per-step diagnostics CSV for each resolution.
    Diagnostics,
    /// Error table CSV over the sweep (exact solutions only).
    ErrorTable,
    /// Per-step errors against the exact solution.
    ErrorHistory,
    /// Final state snapshot.
    FinalSnapshot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub grid: GridConfig,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    pub t_final: f64,
    #[serde(default)]
    pub tol: TolRule,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    pub initial_data: InitialData,
    #[serde(default)]
    pub outputs: Vec<OutputKind>,
    /// Rows are written every `diagnostics_stride` steps (default depends on `M`).
    #[serde(default)]
    pub diagnostics_stride: Option<u64>,
    /// Write a snapshot every this many steps.
    #[serde(default)]
    pub snapshot_every: Option<u64>,
    /// Permit resolutions above the desk-scale caps.
    #[serde(default)]
    pub full_scale: bool,
}

impl FromStr for ScenarioConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }
}

impl ScenarioConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse::<Self>().map_err(|e| e.context(path.display().to_string()))
    }

    pub fn default_convergence() -> Self {
        DEFAULT_CONVERGENCE_TOML.parse().expect("embedded config parses")
    }

    pub fn default_blowup() -> Self {
        DEFAULT_BLOWUP_TOML.parse().expect("embedded config parses")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn resolutions(&self) -> Vec<usize> {
        self.grid.m.to_vec()
    }

    /// Checks the configuration; returns human-readable warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        let cfg = |msg: String| Err(Error::Config(msg));
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return cfg(format!("kappa must be positive, got {}", self.kappa));
        }
        if self.kappa > 0.5 {
            warnings.push(format!(
                "kappa = {} exceeds 1/2; the fixed-point iteration may fail to contract",
                self.kappa
            ));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return cfg(format!("t_final must be non-negative, got {}", self.t_final));
        }
        if self.max_iter == 0 {
            return cfg("max_iter must be at least 1".into());
        }
        let probe = self.tol.eval(0.5);
        if !(probe > 0.0 && probe.is_finite()) {
            return cfg(format!("tolerance rule {} does not give a positive tolerance", self.tol));
        }
        if self.diagnostics_stride == Some(0) || self.snapshot_every == Some(0) {
            return cfg("strides must be at least 1".into());
        }
        let ms = self.resolutions();
        if ms.is_empty() {
            return cfg("grid.m lists no resolutions".into());
        }
        let cap = match self.initial_data {
            InitialData::Dalembert { .. } => Some(SMOOTH_M_CAP),
            InitialData::BlowUp => Some(BLOWUP_M_CAP),
            InitialData::Snapshot { .. } => None,
        };
        if let Some(cap) = cap {
            let over: Vec<usize> = ms.iter().copied().filter(|&m| m > cap).collect();
            if !over.is_empty() {
                if !self.full_scale {
                    return cfg(format!(
                        "resolutions {over:?} exceed the desk-scale cap M = {cap}; set full_scale = true to run them"
                    ));
                }
                warnings.push(format!("resolutions {over:?} are above M = {cap} and may run for hours"));
            }
        }
        for &m in &ms {
            self.grid_for(m)?;
        }
        match &self.initial_data {
            InitialData::Dalembert { modes } => {
                DAlembertCoeffs::new(modes.clone()).map_err(|e| Error::Config(e.to_string()))?;
                if self.grid.dim != 2 {
                    return cfg("d'Alembert data needs dim = 2".into());
                }
                if self.grid.bc != Boundary::Periodic {
                    warnings.push("d'Alembert data is periodic; a Neumann grid will not match it".into());
                }
            }
            InitialData::BlowUp => {
                if self.grid.dim != 2 {
                    return cfg("blow-up data needs dim = 2".into());
                }
            }
            InitialData::Snapshot { .. } => {
                if self.outputs.contains(&OutputKind::ErrorTable) || self.outputs.contains(&OutputKind::ErrorHistory) {
                    return cfg("error outputs need an exact solution".into());
                }
            }
        }
        Ok(warnings)
    }

    pub fn grid_for(&self, m: usize) -> Result<Grid<f64>> {
        let mut origin = [0.0; 3];
        match self.grid.origin.len() {
            0 => {}
            n if n == self.grid.dim || n == 3 => origin[..n].copy_from_slice(&self.grid.origin),
            n => return Err(Error::Config(format!("grid.origin has {n} entries for dim = {}", self.grid.dim))),
        }
        Grid::new(self.grid.dim, m, self.grid.bc, origin, self.grid.extent).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn run_options(&self, grid: &Grid<f64>) -> RunOptions<f64> {
        let h = grid.h();
        RunOptions {
            dt: self.kappa * h,
            t_final: self.t_final,
            fixed_point: FixedPointOptions {
                tol: self.tol.eval(h),
                max_iter: self.max_iter,
            },
        }
    }

    pub fn stride_for(&self, m: usize) -> u64 {
        self.diagnostics_stride.unwrap_or_else(|| default_stride(m))
    }

    /// The grid and initial state for resolution `m`. For snapshot data the
    /// file's grid is used and must agree with `m`, `dim` and `bc`.
    pub fn initial_state(&self, m: usize) -> Result<SolverState<f64>> {
        match &self.initial_data {
            InitialData::Dalembert { modes } => {
                let grid = self.grid_for(m)?;
                let coeffs = DAlembertCoeffs::new(modes.clone())?;
                crate::analytic::analytic_state(0.0, &coeffs, &grid)
            }
            InitialData::BlowUp => build_blowup_initial(&self.grid_for(m)?),
            InitialData::Snapshot { path } => {
                let s = crate::io::read_snapshot(path)?;
                let g = s.grid();
                if g.m() != m || g.dim() != self.grid.dim || g.boundary() != self.grid.bc {
                    return Err(Error::Config(format!(
                        "snapshot {} holds a {}-D M = {} {} grid, config asks for {}-D M = {m} {}",
                        path.display(),
                        g.dim(),
                        g.m(),
                        g.boundary(),
                        self.grid.dim,
                        self.grid.bc
                    )));
                }
                Ok(s)
            }
        }
    }

    pub fn coefficients(&self) -> Option<DAlembertCoeffs> {
        match &self.initial_data {
            InitialData::Dalembert { modes } => Some(DAlembertCoeffs { modes: modes.clone() }),
            _ => None,
        }
    }
}

/// Initial director of the collapsing bubble on `[−½, ½]²`:
///
/// ```text
/// d⁰ = (2xa, 2ya, a² − r²) / (a² + r²)   for r < ½,   a = (1 − 2r)⁴
/// d⁰ = (0, 0, −1)                        otherwise
/// ```
///
/// with `w⁰ ≡ 0`. The grid's own origin and extent are used as given.
pub fn build_blowup_initial<T: Scalar>(grid: &Grid<T>) -> Result<SolverState<T>> {
    if grid.dim() != 2 {
        return Err(Error::InvalidArgument(format!("blow-up data is 2-D, got dim = {}", grid.dim())));
    }
    let d = VectorField::from_fn(*grid, |x| {
        let v = blowup_director(x[0].to_f64_lossy(), x[1].to_f64_lossy());
        Vec3::new(T::lit(v[0]), T::lit(v[1]), T::lit(v[2]))
    });
    integrator::initialize(&d, integrator::InitialRate::AtRest)
}

fn blowup_director(x: f64, y: f64) -> [f64; 3] {
    let r2 = x * x + y * y;
    let r = r2.sqrt();
    if r >= 0.5 {
        return [0.0, 0.0, -1.0];
    }
    let a = (1.0 - 2.0 * r).powi(4);
    let den = a * a + r2;
    [2.0 * x * a / den, 2.0 * y * a / den, (a * a - r2) / den]
}

/// One row of the convergence table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorRow {
    pub m: usize,
    pub h: f64,
    pub err_d: f64,
    pub err_w: f64,
    pub err_energy: f64,
    pub steps: u64,
    pub mean_iterations: f64,
    pub max_length_deviation: f64,
    pub max_energy_drift: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    /// Observed orders `log(E_{i−1}/E_i) / log(h_{i−1}/h_i)` for `(d, w, energy)`;
    /// `None` for the first row.
    pub fn rates(&self) -> Vec<Option<[f64; 3]>> {
        let mut out = vec![None; self.rows.len()];
        for i in 1..self.rows.len() {
            let (a, b) = (&self.rows[i - 1], &self.rows[i]);
            let lh = (a.h / b.h).ln();
            let r = |x: f64, y: f64| (x / y).ln() / lh;
            out[i] = Some([r(a.err_d, b.err_d), r(a.err_w, b.err_w), r(a.err_energy, b.err_energy)]);
        }
        out
    }

    /// Mean of the consecutive rates.
    pub fn average_rates(&self) -> Option<[f64; 3]> {
        let rates: Vec<[f64; 3]> = self.rates().into_iter().flatten().collect();
        if rates.is_empty() {
            return None;
        }
        let n = rates.len() as f64;
        let mut avg = [0.0; 3];
        for r in &rates {
            for k in 0..3 {
                avg[k] += r[k] / n;
            }
        }
        Some(avg)
    }
}

/// Runs the configured exact-solution scenario at resolution `m`.
///
/// `extra` sees every step as well (progress, diagnostics files, snapshots).
pub fn run_convergence_case<O: StepObserver<f64>>(
    config: &ScenarioConfig,
    m: usize,
    extra: &mut O,
) -> Result<(ErrorRow, ErrorTracker<f64>)> {
    let annotate = |e: Error| e.context(format!("{} at M = {m}", config.name));
    let coeffs = config
        .coefficients()
        .ok_or_else(|| Error::Config("convergence runs need d'Alembert initial data".into()))?;
    let s0 = config.initial_state(m).map_err(annotate)?;
    let grid = *s0.grid();
    let opts = config.run_options(&grid);
    let mut tracker = ErrorTracker::new(&grid, &coeffs)?;
    if config.outputs.contains(&OutputKind::ErrorHistory) {
        tracker = tracker.with_history();
    }
    let mut monitor = ConservationMonitor::default();
    let mut observers = ((&mut tracker, &mut monitor), extra);
    integrator::run(s0, &opts, &mut observers).map_err(annotate)?;
    let sup = tracker.suprema()?;
    let row = ErrorRow {
        m,
        h: grid.h(),
        err_d: sup.err_d,
        err_w: sup.err_w,
        err_energy: sup.err_energy,
        steps: monitor.steps,
        mean_iterations: monitor.mean_iterations(),
        max_length_deviation: monitor.max_length_deviation,
        max_energy_drift: monitor.max_energy_drift,
    };
    Ok((row, tracker))
}

/// All resolutions of the sweep, in order.
pub fn run_convergence_suite(config: &ScenarioConfig) -> Result<ErrorTable> {
    config.validate()?;
    let mut table = ErrorTable::default();
    for m in config.resolutions() {
        table.rows.push(run_convergence_case(config, m, &mut ())?.0);
    }
    Ok(table)
}

/// Diagnostics of one blow-up run plus the derived summary numbers.
#[derive(Clone, Debug, PartialEq)]
pub struct BlowupSeries {
    pub m: usize,
    pub h: f64,
    pub rows: Vec<Diagnostics<f64>>,
    /// Midpoint of the interval over which `grad_max` grows fastest.
    pub steepest_growth_time: f64,
    pub peak_grad_max: f64,
    pub peak_time: f64,
    pub max_length_deviation: f64,
    pub max_energy_drift: f64,
    pub mean_iterations: f64,
}

impl BlowupSeries {
    /// `max_m H_m / max(H_0, E_0)`.
    pub fn kinetic_ratio(&self) -> f64 {
        let first = &self.rows[0];
        let bound = first.kinetic_energy.max(first.energy);
        self.rows.iter().map(|r| r.kinetic_energy).fold(0.0, f64::max) / bound
    }
}

/// Steepest growth of `grad_max` between consecutive rows: returns the
/// midpoint time of that interval.
pub fn steepest_growth_time(rows: &[Diagnostics<f64>]) -> Option<f64> {
    rows.windows(2)
        .map(|w| ((w[1].grad_max - w[0].grad_max) / (w[1].t - w[0].t), 0.5 * (w[0].t + w[1].t)))
        .fold(None, |best: Option<(f64, f64)>, cur| match best {
            Some(b) if b.0 >= cur.0 => Some(b),
            _ => Some(cur),
        })
        .map(|(_, t)| t)
}

pub fn run_blowup_case<O: StepObserver<f64>>(config: &ScenarioConfig, m: usize, extra: &mut O) -> Result<BlowupSeries> {
    let annotate = |e: Error| e.context(format!("{} at M = {m}", config.name));
    let s0 = config.initial_state(m).map_err(annotate)?;
    let grid = *s0.grid();
    let opts = config.run_options(&grid);
    let mut recorder = DiagnosticsRecorder::new(Vec::new(), config.stride_for(m));
    let mut monitor = ConservationMonitor::default();
    let mut observers = ((&mut recorder, &mut monitor), extra);
    integrator::run(s0, &opts, &mut observers).map_err(annotate)?;
    let rows: Vec<Diagnostics<f64>> = recorder.into_sink();
    let (peak_grad_max, peak_time) = rows
        .iter()
        .map(|r| (r.grad_max, r.t))
        .fold((0.0, 0.0), |a, b| if b.0 > a.0 { b } else { a });
    Ok(BlowupSeries {
        m,
        h: grid.h(),
        steepest_growth_time: steepest_growth_time(&rows).unwrap_or(0.0),
        peak_grad_max,
        peak_time,
        rows,
        max_length_deviation: monitor.max_length_deviation,
        max_energy_drift: monitor.max_energy_drift,
        mean_iterations: monitor.mean_iterations(),
    })
}

pub fn run_blowup(config: &ScenarioConfig) -> Result<Vec<BlowupSeries>> {
    config.validate()?;
    config.resolutions().into_iter().map(|m| run_blowup_case(config, m, &mut ())).collect()
}
