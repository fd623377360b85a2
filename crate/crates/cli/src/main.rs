use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wavemap::checks;
use wavemap::fixedpoint::{SolverState, StepReport};
use wavemap::grid::Boundary;
use wavemap::integrator::{self, energy, DiagnosticsRecorder, StepObserver};
use wavemap::io::{self, DiagnosticsCsv, SnapshotWriter};
use wavemap::scenario::{self, ErrorTable, OutputKind, Resolutions, ScenarioConfig, TolRule};
use wavemap::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "wavemap", version, about = "Length- and energy-preserving wave maps into the sphere")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Single run at the first configured resolution.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Resolution sweep against the exact solution; writes the error table.
    Converge {
        /// Defaults to the built-in M = 64 convergence scenario.
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Blow-up sweep; writes one diagnostics file per resolution.
    Blowup {
        /// Defaults to the built-in M = 32, 64, 128 blow-up scenario.
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Runs the structural self-checks on a small grid.
    Validate {
        #[arg(long, default_value_t = 16)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Prints a built-in config.
    ShowConfig {
        #[arg(value_parser = ["convergence", "blowup"])]
        which: String,
    },
}

#[derive(Args, Debug, Default)]
struct Overrides {
    /// Resolution(s); repeat for a sweep.
    #[arg(long = "m")]
    m: Vec<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long = "t-final")]
    t_final: Option<f64>,
    /// Tolerance rule, e.g. `h^2`, `0.5*h^2` or `1e-10`.
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    bc: Option<Boundary>,
    #[arg(long = "out-dir", default_value = "out")]
    out_dir: PathBuf,
    #[arg(long = "snapshot-every")]
    snapshot_every: Option<u64>,
    /// Diagnostics row stride.
    #[arg(long)]
    stride: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Accepted for symmetry with `validate`; the solver itself is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Allow resolutions above the desk-scale caps.
    #[arg(long = "full-scale")]
    full_scale: bool,
    /// Suppress progress lines.
    #[arg(long, short)]
    quiet: bool,
}

impl Overrides {
    fn apply(&self, config: &mut ScenarioConfig) -> Result<()> {
        if !self.m.is_empty() {
            config.grid.m = Resolutions::Many(self.m.clone());
        }
        if let Some(k) = self.kappa {
            config.kappa = k;
        }
        if let Some(t) = self.t_final {
            config.t_final = t;
        }
        if let Some(tol) = &self.tol {
            config.tol = tol.parse::<TolRule>()?;
        }
        if let Some(bc) = self.bc {
            config.grid.bc = bc;
        }
        if self.snapshot_every.is_some() {
            config.snapshot_every = self.snapshot_every;
        }
        if self.stride.is_some() {
            config.diagnostics_stride = self.stride;
        }
        config.full_scale |= self.full_scale;
        Ok(())
    }
}

/// One stderr line every 100 steps.
struct Progress {
    label: String,
    total: u64,
    e0: Option<f64>,
    iterations: u64,
    steps: u64,
    quiet: bool,
}

impl Progress {
    fn new(label: String, total: u64, quiet: bool) -> Self {
        Progress {
            label,
            total,
            e0: None,
            iterations: 0,
            steps: 0,
            quiet,
        }
    }
}

impl StepObserver<f64> for Progress {
    fn on_step(&mut self, before: &SolverState<f64>, after: &SolverState<f64>, r: &StepReport<f64>, _: f64) -> Result<()> {
        let e0 = *self.e0.get_or_insert_with(|| energy(before));
        self.iterations += r.iterations as u64;
        self.steps += 1;
        if !self.quiet && (after.step_index().is_multiple_of(100) || after.step_index() == self.total) {
            eprintln!(
                "{} step {}/{} t = {:.4} dE = {:+.3e} mean iterations {:.2}",
                self.label,
                after.step_index(),
                self.total,
                after.t(),
                energy(after) - e0,
                self.iterations as f64 / self.steps as f64
            );
        }
        Ok(())
    }
}

fn load(path: Option<&Path>, fallback: fn() -> ScenarioConfig, overrides: &Overrides) -> Result<ScenarioConfig> {
    let mut config = match path {
        Some(p) => ScenarioConfig::from_file(p)?,
        None => fallback(),
    };
    overrides.apply(&mut config)?;
    for w in config.validate()? {
        eprintln!("warning: {w}");
    }
    std::fs::create_dir_all(&overrides.out_dir).map_err(|e| Error::Io {
        path: overrides.out_dir.clone(),
        source: e,
    })?;
    Ok(config)
}

fn snapshots(config: &ScenarioConfig, out: &Path, m: usize) -> Option<SnapshotWriter> {
    config
        .snapshot_every
        .map(|k| SnapshotWriter::new(out, format!("{}_M{m}", config.name), k))
}

fn diagnostics_file(config: &ScenarioConfig, out: &Path, m: usize) -> Result<Option<DiagnosticsRecorder<DiagnosticsCsv>>> {
    if !config.outputs.contains(&OutputKind::Diagnostics) {
        return Ok(None);
    }
    let csv = DiagnosticsCsv::create(out.join(format!("{}_M{m}_diagnostics.csv", config.name)))?;
    Ok(Some(DiagnosticsRecorder::new(csv, config.stride_for(m))))
}

fn finish_diagnostics(rec: Option<DiagnosticsRecorder<DiagnosticsCsv>>) -> Result<()> {
    match rec {
        Some(r) => r.into_sink().finish(),
        None => Ok(()),
    }
}

fn print_table(table: &ErrorTable) {
    println!("{:>6} {:>12} {:>12} {:>12} {:>12} {:>7} {:>7} {:>7} {:>6}", "M", "h", "err_d", "err_w", "err_E", "rate_d", "rate_w", "rate_E", "iters");
    for (r, rate) in table.rows.iter().zip(table.rates()) {
        let rates = rate.map_or_else(|| format!("{:>7} {:>7} {:>7}", "", "", ""), |[a, b, c]| format!("{a:>7.3} {b:>7.3} {c:>7.3}"));
        println!(
            "{:>6} {:>12.6e} {:>12.6} {:>12.6} {:>12.6} {rates} {:>6.2}",
            r.m, r.h, r.err_d, r.err_w, r.err_energy, r.mean_iterations
        );
    }
    if let Some([a, b, c]) = table.average_rates() {
        println!("average rates: d {a:.3}, w {b:.3}, E {c:.3}");
    }
}

fn cmd_run(config: ScenarioConfig, o: &Overrides) -> Result<()> {
    let m = config.resolutions()[0];
    let out = &o.out_dir;
    let s0 = config.initial_state(m)?;
    let opts = config.run_options(s0.grid());
    let label = format!("{} M={m}", config.name);
    let mut diag = diagnostics_file(&config, out, m)?;
    if diag.is_none() {
        // a single run always writes its diagnostics
        let csv = DiagnosticsCsv::create(out.join(format!("{}_M{m}_diagnostics.csv", config.name)))?;
        diag = Some(DiagnosticsRecorder::new(csv, config.stride_for(m)));
    }
    let mut snaps = snapshots(&config, out, m);
    let mut tracker = match config.coefficients() {
        Some(c) => Some(wavemap::analytic::ErrorTracker::new(s0.grid(), &c)?.with_history()),
        None => None,
    };
    let mut progress = Progress::new(label, opts.step_count(), o.quiet);
    let last = integrator::run(s0, &opts, &mut (((&mut diag, &mut snaps), &mut tracker), &mut progress));
    finish_diagnostics(diag)?;
    let last = last?;
    if config.outputs.contains(&OutputKind::FinalSnapshot) {
        io::write_snapshot(&last, &out.join(format!("{}_M{m}_final.wmsnap", config.name)))?;
    }
    println!("M = {m}: {} steps to t = {}, energy {:.12e}", last.step_index(), last.t(), energy(&last));
    if let Some(tr) = tracker {
        let s = tr.suprema()?;
        println!("err_d {:.6} err_w {:.6} err_E {:.6}", s.err_d, s.err_w, s.err_energy);
        if config.outputs.contains(&OutputKind::ErrorHistory) {
            io::write_error_history_csv(tr.history().unwrap_or(&[]), &out.join(format!("{}_M{m}_errors_vs_t.csv", config.name)))?;
        }
    }
    Ok(())
}

fn cmd_converge(config: ScenarioConfig, o: &Overrides) -> Result<()> {
    let out = &o.out_dir;
    let mut table = ErrorTable::default();
    for m in config.resolutions() {
        let grid = config.grid_for(m)?;
        let total = config.run_options(&grid).step_count();
        let mut diag = diagnostics_file(&config, out, m)?;
        let mut snaps = snapshots(&config, out, m);
        let mut progress = Progress::new(format!("{} M={m}", config.name), total, o.quiet);
        let res = scenario::run_convergence_case(&config, m, &mut ((&mut diag, &mut snaps), &mut progress));
        finish_diagnostics(diag)?;
        let (row, tracker) = res?;
        if config.outputs.contains(&OutputKind::ErrorHistory) {
            io::write_error_history_csv(tracker.history().unwrap_or(&[]), &out.join(format!("{}_M{m}_errors_vs_t.csv", config.name)))?;
        }
        table.rows.push(row);
    }
    let path = out.join(format!("{}_errors.csv", config.name));
    io::write_error_table_csv(&table, &path)?;
    print_table(&table);
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_blowup(config: ScenarioConfig, o: &Overrides) -> Result<()> {
    let out = &o.out_dir;
    println!("{:>6} {:>14} {:>10} {:>14} {:>10} {:>12}", "M", "steepest at t", "peak t", "peak grad", "H ratio", "mean iters");
    for m in config.resolutions() {
        let grid = config.grid_for(m)?;
        let total = config.run_options(&grid).step_count();
        let mut snaps = snapshots(&config, out, m);
        let mut progress = Progress::new(format!("{} M={m}", config.name), total, o.quiet);
        let s = scenario::run_blowup_case(&config, m, &mut (&mut snaps, &mut progress))?;
        io::write_diagnostics_csv(&s.rows, &out.join(format!("{}_M{m}_diagnostics.csv", config.name)))?;
        println!(
            "{:>6} {:>14.4} {:>10.4} {:>14.4} {:>10.4} {:>12.2}",
            m,
            s.steepest_growth_time,
            s.peak_time,
            s.peak_grad_max,
            s.kinetic_ratio(),
            s.mean_iterations
        );
    }
    Ok(())
}

fn set_threads(threads: Option<usize>) -> Result<()> {
    if let Some(k) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, overrides } => {
            set_threads(overrides.threads)?;
            let c = load(Some(&config), ScenarioConfig::default_convergence, &overrides)?;
            cmd_run(c, &overrides)?;
        }
        Command::Converge { config, overrides } => {
            set_threads(overrides.threads)?;
            let c = load(config.as_deref(), ScenarioConfig::default_convergence, &overrides)?;
            cmd_converge(c, &overrides)?;
        }
        Command::Blowup { config, overrides } => {
            set_threads(overrides.threads)?;
            let c = load(config.as_deref(), ScenarioConfig::default_blowup, &overrides)?;
            cmd_blowup(c, &overrides)?;
        }
        Command::Validate { m, seed, threads } => {
            set_threads(threads)?;
            if m < 4 {
                return Err(Error::Config("validate needs --m of at least 4".into()));
            }
            let results = checks::run_checks(m, seed)?;
            for r in &results {
                println!("{r}");
            }
            return Ok(results.iter().all(|r| r.passed));
        }
        Command::ShowConfig { which } => {
            let text = match which.as_str() {
                "blowup" => scenario::DEFAULT_BLOWUP_TOML,
                _ => scenario::DEFAULT_CONVERGENCE_TOML,
            };
            print!("{text}");
        }
    }
    Ok(true)
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::NotConverged { .. } | Error::NumericalFailure { .. } | Error::NonFinite { .. } => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
