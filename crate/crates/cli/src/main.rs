use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use dcqe_core::analysis::oracle::{run_oracle_checks, write_oracle_csv};
use dcqe_core::analysis::report::{write_file, write_fringe_plot_csv, write_visibility_csv, Manifest};
use dcqe_core::analysis::{default_sigma_grid, fit_all, reference_position, PipelineOutput};
use dcqe_core::coincidence::{build_fringes, marginal_histogram, write_records_csv};
use dcqe_core::events::default_distribution;
use dcqe_core::{
    delayed_choice_audit, match_coincidences, nominal_offsets, run_pipeline, run_scenario, run_simulation,
    sweep_timing, Apparatus, ApparatusConfig, DetectorId, EventStreams, Scenario, ScenarioOptions, SimOptions,
    SweepOptions, SweepParameter,
};

#[derive(Parser)]
#[command(name = "dcqe", version, about = "Delayed-choice quantum eraser simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Apparatus config (JSON); built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of emitted pairs.
    #[arg(long, default_value_t = 1_000_000)]
    events: usize,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn config(&self) -> anyhow::Result<ApparatusConfig> {
        match &self.config {
            Some(p) => ApparatusConfig::from_path(p).with_context(|| format!("reading {}", p.display())),
            None => Ok(ApparatusConfig::default()),
        }
    }

    fn apparatus(&self) -> anyhow::Result<Apparatus> {
        Ok(Apparatus::validate(self.config()?)?)
    }

    fn sim(&self) -> SimOptions {
        SimOptions { workers: self.workers, ..SimOptions::default() }
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum Param {
    Sigma,
    Window,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the D0 and idler event streams.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Append the hidden branch tag column (debug only).
        #[arg(long)]
        debug_tags: bool,
    },
    /// Match coincidences, from a fresh simulation or an events CSV.
    Coincide {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Conditional fringe histograms and visibility fits.
    Fringes {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Sweep the timing width or the coincidence window.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "sigma")]
        param: Param,
        #[arg(long, default_value_t = 10)]
        points: usize,
        /// Grid start in seconds (log-spaced to --max).
        #[arg(long, requires = "max")]
        min: Option<f64>,
        #[arg(long, requires = "min")]
        max: Option<f64>,
        /// Reference position for the local fit, in meters.
        #[arg(long)]
        x_ref: Option<f64>,
    },
    /// Check that every D0 click precedes the idler's first beam splitter.
    Audit {
        #[command(flatten)]
        common: Common,
    },
    /// Run a named scenario: kim-shih, single-slit, timing-sweep, oracle-check.
    Scenario {
        name: String,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10)]
        sweep_points: usize,
    },
    /// Recompute reference values with independent oracles.
    OracleCheck {
        #[command(flatten)]
        common: Common,
    },
}

fn finish(mut manifest: Manifest, start: Instant, out: &Path, files: &[PathBuf]) -> anyhow::Result<()> {
    manifest.outputs = files.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect();
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    let path = manifest.write(out)?;
    for f in files.iter().chain([&path]) {
        info!("wrote {}", f.display());
    }
    Ok(())
}

fn read_events(path: &Path) -> anyhow::Result<EventStreams> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(EventStreams::read_csv(BufReader::new(f))?)
}

fn pipeline(common: &Common, app: &Apparatus, input: Option<&Path>) -> anyhow::Result<PipelineOutput> {
    Ok(match input {
        None => run_pipeline(app, common.events, common.seed, &common.sim())?,
        Some(p) => {
            let streams = read_events(p)?;
            let records = match_coincidences(&streams, app.config().coincidence_window, &nominal_offsets(app))?;
            let fringes = build_fringes(&records, app);
            let marginal = marginal_histogram(&streams, app);
            PipelineOutput { streams, records, fringes, marginal }
        }
    })
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let start = Instant::now();
    match cli.command {
        Command::Simulate { common, debug_tags } => {
            let app = common.apparatus()?;
            let opts = SimOptions { keep_branch_tags: debug_tags, ..common.sim() };
            let streams = run_simulation(&app, common.events, common.seed, &opts)?;
            let files = [write_file(&common.out, "events.csv", |w| streams.write_csv(w, debug_tags))?];
            let m = Manifest::new("simulate", app.config(), common.seed, common.events, common.workers);
            finish(m, start, &common.out, &files)?;
        }
        Command::Coincide { common, input } => {
            let app = common.apparatus()?;
            let out = pipeline(&common, &app, input.as_deref())?;
            let with_truth = input.is_none();
            let files =
                [write_file(&common.out, "coincidences.csv", |w| write_records_csv(&out.records, w, with_truth))?];
            println!("coincidences: {}", out.records.len());
            let m = Manifest::new("coincide", app.config(), common.seed, common.events, common.workers);
            finish(m, start, &common.out, &files)?;
        }
        Command::Fringes { common, input } => {
            let app = common.apparatus()?;
            let mut out = pipeline(&common, &app, input.as_deref())?;
            fit_all(&mut out);
            let dist = default_distribution(&app);
            let x_ref = reference_position(&app);
            let mut rows: Vec<_> = out
                .fringes
                .histograms
                .iter()
                .map(|h| (h.detector, h.fit, h.total(), dist.analytic_visibility(h.detector, x_ref)))
                .collect();
            rows.push((DetectorId::D0, out.marginal.fit, out.marginal.total(), 0.0));
            for (det, fit, n, _) in &rows {
                match fit {
                    Some(f) => println!(
                        "{det}: V = {:.4} ± {:.4}, phase = {:.4}, counts = {n}",
                        f.visibility, f.visibility_se, f.phase
                    ),
                    None => println!("{det}: insufficient data, counts = {n}"),
                }
            }
            let files = [
                write_file(&common.out, "histograms.csv", |w| {
                    dcqe_core::coincidence::write_histograms_csv(
                        out.fringes.histograms.iter().chain([&out.marginal]),
                        w,
                    )
                })?,
                write_file(&common.out, "visibility.csv", |w| write_visibility_csv(w, &rows))?,
                write_file(&common.out, "plot.csv", |w| {
                    write_fringe_plot_csv(w, &out.fringes, Some(&out.marginal), &dist)
                })?,
            ];
            let m = Manifest::new("fringes", app.config(), common.seed, common.events, common.workers);
            finish(m, start, &common.out, &files)?;
        }
        Command::Sweep { common, param, points, min, max, x_ref } => {
            let app = common.apparatus()?;
            let x = x_ref.unwrap_or_else(|| reference_position(&app));
            let (parameter, grid) = match (param, min, max) {
                (Param::Sigma, None, _) => (SweepParameter::SigmaEff, default_sigma_grid(&app, x, points)),
                (Param::Window, None, _) => {
                    let w = app.config().coincidence_window;
                    (SweepParameter::Window, log_grid(w / 10.0, w * 10.0, points))
                }
                (p, Some(a), Some(b)) => {
                    let kind =
                        if matches!(p, Param::Sigma) { SweepParameter::SigmaEff } else { SweepParameter::Window };
                    (kind, log_grid(a, b, points))
                }
                _ => unreachable!("clap enforces --min with --max"),
            };
            let opts = SweepOptions {
                events: common.events,
                seed: common.seed,
                workers: common.workers,
                x_ref,
                ..SweepOptions::default()
            };
            let res = sweep_timing(&app, parameter, &grid, &opts)?;
            println!(
                "x_ref = {:e} m, delta_t = {:e} s, spearman(V_D1) = {:.4}",
                res.x_ref, res.delta_t_ref, res.spearman_d1
            );
            let files = [
                write_file(&common.out, "sweep.csv", |w| res.write_csv(w))?,
                write_file(&common.out, "sweep_plot.csv", |w| res.write_plot_csv(w))?,
            ];
            let m = Manifest::new("sweep", app.config(), common.seed, common.events, common.workers);
            finish(m, start, &common.out, &files)?;
        }
        Command::Audit { common } => {
            let app = common.apparatus()?;
            let streams = run_simulation(&app, common.events, common.seed, &common.sim())?;
            let fraction = delayed_choice_audit(&streams, &app).unwrap_or(f64::NAN);
            println!("delayed-choice fraction: {fraction}");
            let files = [write_file(&common.out, "audit.csv", |w| {
                writeln!(w, "pairs,first_splitter_delay_s,fraction")?;
                writeln!(w, "{},{:e},{fraction}", streams.d0.len(), app.first_splitter_delay())?;
                Ok(())
            })?];
            let m = Manifest::new("audit", app.config(), common.seed, common.events, common.workers);
            finish(m, start, &common.out, &files)?;
            return Ok(fraction == 1.0);
        }
        Command::Scenario { name, common, sweep_points } => {
            let scenario: Scenario = name.parse()?;
            let opts = ScenarioOptions {
                events: common.events,
                seed: common.seed,
                workers: common.workers,
                out_dir: common.out.clone(),
                sweep_points,
            };
            let report = run_scenario(scenario, &common.config()?, &opts)?;
            for (k, v) in &report.summary {
                println!("{k}: {v}");
            }
            if scenario == Scenario::OracleCheck && !report.passed {
                bail!(
                    "oracle mismatch: {}",
                    report.summary.iter().find(|(k, _)| k == "failed_checks").map_or("", |(_, v)| v)
                );
            }
            return Ok(report.passed);
        }
        Command::OracleCheck { common } => {
            let checks = run_oracle_checks(common.events, common.seed)?;
            for c in &checks {
                println!(
                    "{} {}: expected {:e}, computed {:e}, tol {:e}",
                    if c.passed() { "PASS" } else { "FAIL" },
                    c.name,
                    c.expected,
                    c.computed,
                    c.tolerance
                );
            }
            let files = [write_file(&common.out, "oracle.csv", |w| write_oracle_csv(w, &checks))?];
            let m =
                Manifest::new("oracle-check", &ApparatusConfig::default(), common.seed, common.events, common.workers);
            finish(m, start, &common.out, &files)?;
            let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name).collect();
            if !failed.is_empty() {
                bail!(dcqe_core::Error::OracleMismatch(failed.join(", ")));
            }
        }
    }
    Ok(true)
}

fn log_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    (0..n).map(|i| (la + (lb - la) * i as f64 / (n.max(2) - 1) as f64).exp()).collect()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("run finished but its checks did not pass");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
