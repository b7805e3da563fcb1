//! `daycorrect` — run, simulate and verify online forecast correction.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 verification
//! failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use daycorrect_core::engine::{run_stream, EngineConfig, Strategy};
use daycorrect_core::io::{
    self, GraphLoad, LoadedStream, MetricsDocument, RunSettings, WorldSettings,
};
use daycorrect_core::presets;
use daycorrect_core::smoothing::RegionGraph;
use daycorrect_core::synth::{generate, generate_stream, regime_shift_world, WorldConfig};
use daycorrect_core::tensor::{DayTensor, MetricReport};
use daycorrect_core::theory::{
    self, alpha_ucurve, mean, regret_audit, standard_error, verify_t1, verify_t2, verify_t3,
    TheoremId, TheoremTarget,
};

#[derive(Parser)]
#[command(
    name = "daycorrect",
    version,
    about = "Online correction of daily spatiotemporal demand forecasts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutputArgs {
    /// Directory results are written into.
    #[arg(long)]
    out: PathBuf,
    /// Omit timestamps so outputs are byte-for-byte reproducible.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world and save it as a stream directory.
    Synth {
        /// World settings JSON; built-in default world when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the settings' seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Additive bias step applied from --shift-day on (constant over the
        /// tensor).
        #[arg(long, requires = "shift_day")]
        shift_amount: Option<f64>,
        /// 1-based day the bias step lands on.
        #[arg(long, requires = "shift_amount")]
        shift_day: Option<usize>,
        /// Also write the ground-truth bias/drift/noise decomposition.
        #[arg(long)]
        with_truth: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Run a correction strategy over a stream and write metrics and a trace.
    Run {
        /// Stream directory (manifest.json plus day blocks).
        #[arg(long)]
        stream: PathBuf,
        /// Region adjacency edge list; regions are unconnected when absent.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Run settings JSON; stock defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the settings' strategy: ori, prev-day, fixed-ema, full,
        /// no-smooth.
        #[arg(long)]
        strategy: Option<String>,
        /// Smoothing factor for --strategy fixed-ema.
        #[arg(long)]
        fixed_alpha: Option<f64>,
        /// Drop regions with mean demand below 2 at ingestion.
        #[arg(long)]
        real_data: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Monte Carlo verification of the error identities and the regret bound.
    Verify {
        #[arg(long, value_enum, default_value_t = TheoremSelector::All)]
        theorem: TheoremSelector,
        /// World settings JSON; pinned per-check defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Restricts the EMA identity check to one smoothing factor.
        #[arg(long)]
        alpha: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// MAE as a function of the EMA smoothing factor, with the full method as
    /// comparator.
    SweepAlpha {
        /// Stream directory; mutually exclusive with --config.
        #[arg(long, conflicts_with = "config")]
        stream: Option<PathBuf>,
        /// Region adjacency for the full-method comparator on a stream.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// World settings JSON for a synthetic sweep.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Comma-separated grid; 0–0.95 in steps of 0.05 plus 1 when absent.
        #[arg(long, value_delimiter = ',')]
        alphas: Option<Vec<f64>>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Compare the full method, its no-smoothing ablation and the uncorrected
    /// baseline.
    Ablate {
        /// Stream directory; mutually exclusive with --config.
        #[arg(long, conflicts_with = "config")]
        stream: Option<PathBuf>,
        #[arg(long)]
        graph: Option<PathBuf>,
        /// World settings JSON for a synthetic comparison.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TheoremSelector {
    T1,
    T2,
    T3,
    T4,
    All,
}

enum CliError {
    Usage(String),
    Data(daycorrect_core::Error),
}

impl From<daycorrect_core::Error> for CliError {
    fn from(e: daycorrect_core::Error) -> Self {
        CliError::Data(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn timestamp(no_timestamp: bool) -> Option<String> {
    if no_timestamp {
        return None;
    }
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Some(format!("unix:{secs}"))
}

/// The built-in demonstration world: matches the verification presets'
/// default world.
fn default_world_settings() -> WorldSettings {
    WorldSettings {
        hours: 24,
        regions: 16,
        channels: 2,
        horizon: 500,
        base: Some(daycorrect_core::synth::BaseSignal::Sine {
            offset: 10.0,
            amplitude: 5.0,
        }),
        bias_init: 0.0,
        drift_std: 0.2,
        noise_std: 1.0,
        drift_rho: 0.5,
        noise_kind: daycorrect_core::synth::NoiseKind::Gaussian,
        noise_scale: None,
        seed: 42,
        grid: Some([4, 4]),
    }
}

fn load_world_settings(
    config: &Option<PathBuf>,
    seed: Option<u64>,
) -> Result<WorldSettings, CliError> {
    let mut settings = match config {
        Some(path) => WorldSettings::load(path)?,
        None => default_world_settings(),
    };
    if let Some(seed) = seed {
        settings.seed = seed;
    }
    Ok(settings)
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| {
        CliError::Data(daycorrect_core::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })
    })
}

fn dispatch(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Synth {
            config,
            seed,
            shift_amount,
            shift_day,
            with_truth,
            output,
        } => cmd_synth(config, seed, shift_day, shift_amount, with_truth, output),
        Command::Run {
            stream,
            graph,
            config,
            strategy,
            fixed_alpha,
            real_data,
            output,
        } => cmd_run(
            stream,
            graph,
            config,
            strategy,
            fixed_alpha,
            real_data,
            output,
        ),
        Command::Verify {
            theorem,
            config,
            trials,
            seed,
            alpha,
            output,
        } => cmd_verify(theorem, config, trials, seed, alpha, output),
        Command::SweepAlpha {
            stream,
            graph,
            config,
            trials,
            alphas,
            seed,
            output,
        } => cmd_sweep_alpha(stream, graph, config, trials, alphas, seed, output),
        Command::Ablate {
            stream,
            graph,
            config,
            trials,
            seed,
            output,
        } => cmd_ablate(stream, graph, config, trials, seed, output),
    }
}

fn cmd_synth(
    config: Option<PathBuf>,
    seed: Option<u64>,
    shift_day: Option<usize>,
    shift_amount: Option<f64>,
    with_truth: bool,
    output: OutputArgs,
) -> Result<u8, CliError> {
    let settings = load_world_settings(&config, seed)?;
    let world = settings.world_config()?;
    let trace = match (shift_day, shift_amount) {
        (Some(day), Some(amount)) => {
            let step = DayTensor::constant(world.shape, amount)?;
            regime_shift_world(&world, day, &step)?
        }
        _ => generate(&world)?,
    };
    prepare_out(&output.out)?;
    let ids = io::default_region_ids(world.shape.regions);
    let ts = timestamp(output.no_timestamp);
    io::save_stream(&output.out, &trace.records, &ids, ts.as_deref())?;
    if settings.grid.is_some() {
        io::save_graph(&output.out.join("graph.txt"), &settings.graph()?, &ids)?;
    }
    if with_truth {
        io::save_world_truth(&output.out.join("truth"), &trace, &ids)?;
    }
    println!(
        "wrote {} days over {} regions to {}",
        trace.records.len(),
        world.shape.regions,
        output.out.display()
    );
    Ok(0)
}

fn load_stream_and_graph(
    stream: &Path,
    graph: &Option<PathBuf>,
    floor: Option<f64>,
) -> Result<(LoadedStream, RegionGraph), CliError> {
    let loaded = io::load_stream(stream, floor)?;
    if !loaded.dropped_regions.is_empty() {
        eprintln!(
            "note: mean-demand floor dropped {} region(s): {}",
            loaded.dropped_regions.len(),
            loaded.dropped_regions.join(", ")
        );
    }
    let graph = match graph {
        None => RegionGraph::isolated(loaded.region_ids.len()),
        Some(path) => {
            let GraphLoad {
                graph,
                self_loops_dropped,
                inactive_edges_dropped,
            } = io::load_graph_with_inactive(path, &loaded.region_ids, &loaded.dropped_regions)?;
            if self_loops_dropped > 0 {
                eprintln!(
                    "warning: dropped {self_loops_dropped} self-loop(s) from {}",
                    path.display()
                );
            }
            if inactive_edges_dropped > 0 {
                eprintln!(
                    "note: dropped {inactive_edges_dropped} edge(s) touching filtered regions"
                );
            }
            graph
        }
    };
    Ok((loaded, graph))
}

fn cmd_run(
    stream: PathBuf,
    graph: Option<PathBuf>,
    config: Option<PathBuf>,
    strategy_flag: Option<String>,
    fixed_alpha: Option<f64>,
    real_data: bool,
    output: OutputArgs,
) -> Result<u8, CliError> {
    let mut settings = match &config {
        Some(path) => RunSettings::load(path)?,
        None => RunSettings::default(),
    };
    if let Some(name) = strategy_flag {
        io::parse_strategy(&name, fixed_alpha.or(settings.fixed_alpha).or(Some(0.5)))
            .map_err(|e| CliError::Usage(e.to_string()))?;
        settings.strategy = name;
    }
    if fixed_alpha.is_some() {
        settings.fixed_alpha = fixed_alpha;
    }
    let floor = settings
        .region_floor
        .or(if real_data { Some(2.0) } else { None });
    let strategy = settings.strategy()?;
    let engine_config = settings.engine_config();

    let (loaded, region_graph) = load_stream_and_graph(&stream, &graph, floor)?;
    let out = run_stream(&loaded.records, &strategy, &engine_config, &region_graph)?;
    let ori = run_stream(
        &loaded.records,
        &Strategy::Ori,
        &engine_config,
        &region_graph,
    )?;

    prepare_out(&output.out)?;
    let ts = timestamp(output.no_timestamp);
    let doc = MetricsDocument::new(strategy.name(), &out.report, &ori.report, ts.as_deref());
    io::write_metrics_json(&output.out.join("metrics.json"), &doc)?;
    io::write_trace_ndjson(&output.out.join("trace.ndjson"), &out.trace)?;
    io::write_summary_csv(
        &output.out.join("summary.csv"),
        &[
            (strategy.name().to_string(), out.report),
            ("ori".to_string(), ori.report),
        ],
        &ori.report,
        ts.as_deref(),
    )?;
    println!(
        "{}: mae {:.6} rmse {:.6} | uncorrected: mae {:.6} rmse {:.6} | improvement {:.2}% / {:.2}%",
        strategy.name(),
        out.report.mae,
        out.report.rmse,
        ori.report.mae,
        ori.report.rmse,
        doc.improve_mae_pct,
        doc.improve_rmse_pct
    );
    Ok(0)
}

fn world_for(
    selector: TheoremSelector,
    config: &Option<PathBuf>,
    seed: Option<u64>,
) -> Result<Option<WorldConfig>, CliError> {
    if config.is_none() {
        return Ok(None);
    }
    let settings = load_world_settings(config, seed)?;
    let _ = selector;
    Ok(Some(settings.world_config()?))
}

fn cmd_verify(
    selector: TheoremSelector,
    config: Option<PathBuf>,
    trials: Option<usize>,
    seed: Option<u64>,
    alpha: Option<f64>,
    output: OutputArgs,
) -> Result<u8, CliError> {
    if let Some(a) = alpha {
        if !(0.0..1.0).contains(&a) {
            return Err(CliError::Usage(format!(
                "--alpha must lie in [0, 1), got {a}"
            )));
        }
    }
    let custom = world_for(selector, &config, seed)?;
    let mut targets: Vec<TheoremTarget> = Vec::new();
    let mut failures = 0usize;

    let want = |s: TheoremSelector| selector == s || selector == TheoremSelector::All;

    if want(TheoremSelector::T1) {
        let trials = trials.unwrap_or(presets::T1_TRIALS);
        let worlds = match &custom {
            Some(w) => vec![w.clone()],
            None => vec![
                presets::t1_noiseless(),
                presets::t1_noise_world(),
                presets::t1_drift_world(),
            ],
        };
        for world in worlds {
            targets.push(verify_t1(&world, trials)?);
        }
    }
    if want(TheoremSelector::T2) {
        let world = custom.clone().unwrap_or_else(presets::t2_world);
        targets.push(verify_t2(&world, trials.unwrap_or(presets::T2_TRIALS))?);
    }
    if want(TheoremSelector::T3) {
        let world = custom.clone().unwrap_or_else(presets::t3_world);
        let alphas: Vec<f64> = match alpha {
            Some(a) => vec![a],
            None => presets::T3_ALPHAS.to_vec(),
        };
        for a in alphas {
            targets.push(verify_t3(&world, a, trials.unwrap_or(presets::T3_TRIALS))?);
        }
    }

    prepare_out(&output.out)?;
    let ts = timestamp(output.no_timestamp);

    if want(TheoremSelector::T4) {
        let world = custom.clone().unwrap_or_else(presets::default_world);
        let audits = regret_audit(
            &world,
            &[0.7, 0.8, 0.9, 1.0],
            10.0,
            trials.unwrap_or(presets::T4_TRIALS),
        )?;
        io::write_regret_csv(&output.out.join("regret.csv"), &audits, ts.as_deref())?;
        let regrets: Vec<f64> = audits
            .iter()
            .map(|a| a.mixture_cum_loss - a.best_expert_cum_loss)
            .collect();
        let bounds: Vec<f64> = audits.iter().map(|a| a.bound).collect();
        let satisfied = audits.iter().filter(|a| a.satisfied).count();
        let all = audits.len();
        targets.push(TheoremTarget {
            theorem_id: TheoremId::T4,
            alpha: None,
            closed_form: mean(&bounds),
            empirical: mean(&regrets),
            trials: all,
            standard_error: standard_error(&regrets),
            tolerance: mean(&bounds),
            pass: satisfied == all,
        });
        println!("t4: regret bound satisfied in {satisfied}/{all} audits");
    }

    io::write_verify_csv(&output.out.join("verify.csv"), &targets, ts.as_deref())?;
    for t in &targets {
        let alpha = t.alpha.map(|a| format!(" alpha={a}")).unwrap_or_default();
        let status = if t.pass { "pass" } else { "FAIL" };
        println!(
            "{}{}: empirical {:.4} closed {:.4} se {:.4} -> {status}",
            t.theorem_id, alpha, t.empirical, t.closed_form, t.standard_error
        );
        if !t.pass {
            failures += 1;
        }
    }
    if failures > 0 {
        eprintln!("{failures} verification check(s) failed");
        return Ok(3);
    }
    Ok(0)
}

fn cmd_sweep_alpha(
    stream: Option<PathBuf>,
    graph: Option<PathBuf>,
    config: Option<PathBuf>,
    trials: usize,
    alphas: Option<Vec<f64>>,
    seed: Option<u64>,
    output: OutputArgs,
) -> Result<u8, CliError> {
    let grid = alphas.unwrap_or_else(presets::alpha_grid);
    if grid.is_empty() || grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(CliError::Usage(format!(
            "--alphas must be a non-empty list within [0, 1], got {grid:?}"
        )));
    }
    if trials == 0 && stream.is_none() {
        return Err(CliError::Usage("--trials must be at least 1".to_string()));
    }
    prepare_out(&output.out)?;
    let ts = timestamp(output.no_timestamp);
    let engine_config = EngineConfig::default();

    let (sweep, full_report) = match &stream {
        Some(dir) => {
            let (loaded, region_graph) = load_stream_and_graph(dir, &graph, None)?;
            let mut rows = Vec::new();
            let mut per_trial = Vec::new();
            for &alpha in &grid {
                let strategy = if alpha == 1.0 {
                    Strategy::Ori
                } else {
                    Strategy::FixedEma(alpha)
                };
                let out = run_stream(&loaded.records, &strategy, &engine_config, &region_graph)?;
                rows.push(theory::UcurveRow {
                    alpha,
                    report: out.report,
                    mae_se: 0.0,
                });
                per_trial.push(vec![out.report.mae]);
            }
            let full = run_stream(
                &loaded.records,
                &Strategy::Full,
                &engine_config,
                &region_graph,
            )?;
            (
                theory::UcurveResult {
                    rows,
                    per_trial_mae: per_trial,
                },
                full.report,
            )
        }
        None => {
            let settings = load_world_settings(&config, seed)?;
            let world = settings.world_config()?;
            let region_graph = settings.graph()?;
            let sweep = alpha_ucurve(&world, &grid, trials)?;
            let full_reports: Vec<MetricReport> = (0..trials)
                .map(|t| {
                    let trace = generate_stream(&world, t as u64)?;
                    Ok(run_stream(
                        &trace.records,
                        &Strategy::Full,
                        &engine_config,
                        &region_graph,
                    )?
                    .report)
                })
                .collect::<Result<_, daycorrect_core::Error>>()?;
            let pooled = full_reports
                .iter()
                .skip(1)
                .try_fold(full_reports[0], |acc, r| acc.merge(r))?;
            (sweep, pooled)
        }
    };

    io::write_sweep_csv(
        &output.out.join("sweep.csv"),
        &sweep,
        Some(&full_report),
        ts.as_deref(),
    )?;
    let best = sweep.argmin();
    println!(
        "grid minimum: alpha {} (mae {:.6}); full method mae {:.6}",
        sweep.rows[best].alpha, sweep.rows[best].report.mae, full_report.mae
    );
    Ok(0)
}

fn cmd_ablate(
    stream: Option<PathBuf>,
    graph: Option<PathBuf>,
    config: Option<PathBuf>,
    trials: usize,
    seed: Option<u64>,
    output: OutputArgs,
) -> Result<u8, CliError> {
    let engine_config = EngineConfig::default();
    prepare_out(&output.out)?;
    let ts = timestamp(output.no_timestamp);
    let strategies = [Strategy::Ori, Strategy::Full, Strategy::NoSmooth];

    let rows: Vec<(String, MetricReport)> = match &stream {
        Some(dir) => {
            let (loaded, region_graph) = load_stream_and_graph(dir, &graph, None)?;
            strategies
                .iter()
                .map(|s| {
                    Ok((
                        s.name().to_string(),
                        run_stream(&loaded.records, s, &engine_config, &region_graph)?.report,
                    ))
                })
                .collect::<Result<_, daycorrect_core::Error>>()?
        }
        None => {
            let settings = load_world_settings(&config, seed)?;
            let world = settings.world_config()?;
            let region_graph = settings.graph()?;
            let mut rows = Vec::new();
            for s in &strategies {
                let reports: Vec<MetricReport> = (0..trials)
                    .map(|t| {
                        let trace = generate_stream(&world, t as u64)?;
                        Ok(run_stream(&trace.records, s, &engine_config, &region_graph)?.report)
                    })
                    .collect::<Result<_, daycorrect_core::Error>>()?;
                let pooled = reports
                    .iter()
                    .skip(1)
                    .try_fold(reports[0], |acc, r| acc.merge(r))?;
                rows.push((s.name().to_string(), pooled));
            }
            rows
        }
    };

    let ori = rows[0].1;
    io::write_summary_csv(&output.out.join("ablate.csv"), &rows, &ori, ts.as_deref())?;
    for (name, report) in &rows {
        println!(
            "{name}: mae {:.6} rmse {:.6} (improvement over uncorrected: {:.2}%)",
            report.mae,
            report.rmse,
            io::improvement_pct(ori.mae, report.mae)
        );
    }
    Ok(0)
}
