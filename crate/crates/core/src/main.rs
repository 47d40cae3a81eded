use clap::{Parser, Subcommand};
use colorpicker::app::{load_experiment, load_sweep, run_experiment, sweep_with, write_sweep_outputs};
use colorpicker::devices::SimulatedWorkcell;
use colorpicker::imaging::RgbImage;
use colorpicker::metrics::{compute, report_table};
use colorpicker::protocol::{meta, serve, Command, TcpClient, Transport};
use colorpicker::scene::SceneConfig;
use colorpicker::store::RunStore;
use colorpicker::workflow::{load_workcell, ClockMode, WorkcellConfig};
use colorpicker::{fixtures, vision};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "colorpicker", version, about = "Simulated autonomous color-matching laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Sleep one wall second per `scale` simulated seconds.
        #[arg(long, value_name = "SCALE")]
        realtime: Option<f64>,
    },
    /// Run a batch-size sweep and write its traces.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the output directory in the sweep file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve or stop the simulated instruments at their configured endpoints.
    Workcell {
        #[command(subcommand)]
        action: WorkcellCmd,
        /// Workcell file; the bundled one when omitted.
        #[arg(long, global = true)]
        workcell: Option<PathBuf>,
    },
    /// Inspect published runs.
    Runstore {
        #[command(subcommand)]
        action: StoreCmd,
        #[arg(long, global = true, default_value = "runs")]
        root: PathBuf,
    },
    /// Metrics of a published run.
    Metrics {
        #[command(subcommand)]
        action: MetricsCmd,
        #[arg(long, global = true, default_value = "runs")]
        root: PathBuf,
    },
    /// Plate image analysis.
    Vision {
        #[command(subcommand)]
        action: VisionCmd,
    },
    /// Write a synthetic image corpus with ground truth.
    Corpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum WorkcellCmd {
    Up {
        /// Camera noise seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    Down,
}

#[derive(Subcommand)]
enum StoreCmd {
    Ls,
    /// Full record of `<experiment>/<run>` or a unique run id.
    Show { run: String },
    RebuildIndex,
}

#[derive(Subcommand)]
enum MetricsCmd {
    Report { run: String },
}

#[derive(Subcommand)]
enum VisionCmd {
    Analyze { image: PathBuf },
}

type Fallible<T> = Result<T, Box<dyn std::error::Error>>;

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Pretty JSON on stdout; a closed pipe (`| head`) is not an error.
fn print_json(v: &impl serde::Serialize) -> Fallible<()> {
    let mut out = std::io::stdout().lock();
    match serde_json::to_writer_pretty(&mut out, v).map_err(std::io::Error::from).and_then(|()| writeln!(out)) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn workcell_file(path: Option<&Path>) -> Fallible<WorkcellConfig> {
    Ok(match path {
        Some(p) => load_workcell(p)?,
        None => fixtures::workcell(),
    })
}

fn dispatch(cmd: Cmd) -> Fallible<ExitCode> {
    match cmd {
        Cmd::Run { config, realtime } => {
            let mut cfg = load_experiment(&config)?;
            if let Some(scale) = realtime {
                cfg.clock = ClockMode::Realtime { scale };
            }
            let out = run_experiment(&cfg)?;
            println!("{}", out.termination);
            if let Some(best) = out.best_score() {
                println!("best score {best:.3} after {} samples", out.history.len());
            }
            if let Some(m) = &out.metrics {
                println!("{}", report_table(m));
            }
            if let Some(dir) = &out.run_dir {
                println!("published to {}", dir.display());
            }
            Ok(if out.termination.by_criteria() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Cmd::Sweep { config, out } => {
            let cfg = load_sweep(&config)?;
            let report = sweep_with(&cfg, |r| {
                let best = r.final_best.map_or("-".to_string(), |b| format!("{b:.2}"));
                eprintln!("B={:<3} seed={:<4} best={best} twh={:.0}s", r.batch_size, r.seed, r.twh_s);
            });
            if let Some(dir) = out.or(cfg.output) {
                write_sweep_outputs(&report, &dir)?;
                println!("wrote {}", dir.display());
            }
            println!("{}", report.summary_table());
            let all_ok = report.runs.iter().all(|r| r.completed);
            Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Cmd::Workcell { action, workcell } => {
            let cell = workcell_file(workcell.as_deref())?;
            match action {
                WorkcellCmd::Up { seed } => workcell_up(&cell, seed),
                WorkcellCmd::Down => workcell_down(&cell),
            }
        }
        Cmd::Runstore { action, root } => {
            let store = RunStore::open(root)?;
            match action {
                StoreCmd::Ls => {
                    for e in store.list()? {
                        println!("{}", serde_json::to_string(&e)?);
                    }
                }
                StoreCmd::Show { run } => print_json(&store.query_run(&run)?)?,
                StoreCmd::RebuildIndex => {
                    let entries = store.rebuild_index()?;
                    println!("indexed {} runs", entries.len());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Metrics { action: MetricsCmd::Report { run }, root } => {
            let store = RunStore::open(root)?;
            let dir = store.locate(&run)?;
            let record = store.query_run(&run)?;
            let m = compute(&dir, &record)?;
            println!("{}", report_table(&m));
            print_json(&m)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Vision { action: VisionCmd::Analyze { image } } => {
            let img = RgbImage::from_ppm(&std::fs::read(&image)?)?;
            print_json(&vision::analyze(&img, &SceneConfig::default())?)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Corpus { out, count, seed } => {
            let files = fixtures::generate_vision_corpus(&out, count, seed)?;
            println!("wrote {} images to {}", files.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn workcell_up(cell: &WorkcellConfig, seed: u64) -> Fallible<ExitCode> {
    let mut sim_cfg = cell.simulation(Default::default());
    sim_cfg.camera.seed = seed;
    let sim = SimulatedWorkcell::build(cell.modules.iter().map(|m| (m.name.as_str(), m.kind)), &sim_cfg);
    let mut handles = Vec::new();
    for (entry, (name, module)) in cell.modules.iter().zip(&sim.modules) {
        let endpoint = entry.endpoint.as_deref().ok_or_else(|| format!("module `{name}` has no endpoint"))?;
        let handle = serve(module.clone(), endpoint)?;
        println!("{name} listening on {}", handle.addr());
        handles.push(handle);
    }
    // each server returns once it receives `shutdown`
    for h in handles {
        h.wait();
    }
    Ok(ExitCode::SUCCESS)
}

fn workcell_down(cell: &WorkcellConfig) -> Fallible<ExitCode> {
    let mut code = ExitCode::SUCCESS;
    for m in &cell.modules {
        let Some(endpoint) = &m.endpoint else { continue };
        let cmd = Command::new(format!("shutdown-{}", m.name), &m.name, meta::SHUTDOWN);
        match TcpClient::new(endpoint.clone()).request(&cmd) {
            Ok(_) => println!("{} stopped", m.name),
            Err(e) => {
                eprintln!("{}: {e}", m.name);
                code = ExitCode::FAILURE;
            }
        }
    }
    Ok(code)
}
