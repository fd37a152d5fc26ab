//! `edgehand` — one binary wiring all the pieces: run a remote-execution
//! server, track a stored sequence, generate synthetic sequences, and run
//! benchmark matrices.
//!
//! Exit codes: 0 success, 2 configuration error, 3 transport error, 4 I/O
//! error, 1 anything else.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use edgehand_core::bench::{
    emit_report, generate_sequence, read_sequence, run_matrix, write_sequence, MatrixConfig,
    RunOptions, SequenceSpec,
};
use edgehand_core::offload::{ClockMode, Dispatcher, Granularity, PolicyMode};
use edgehand_core::tracker::{track_sequence, write_csv, write_summary_json};
use edgehand_core::transport::{serve, TcpRemote};
use edgehand_core::{Config, Error};

#[derive(Parser)]
#[command(name = "edgehand", version, about = "PSO hand tracker with edge offloading")]
struct Cli {
    /// JSON configuration file; compiled-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the optimizer seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Forced,
    Auto,
    LocalOnly,
}

#[derive(Clone, Copy, ValueEnum)]
enum GranularityArg {
    SingleStep,
    MultiStep,
}

#[derive(Subcommand)]
enum Command {
    /// Run the remote-execution server until interrupted.
    Serve {
        /// host:port to bind
        #[arg(long, default_value = "127.0.0.1:7401")]
        listen: String,
    },
    /// Track a stored sequence and write the per-frame record.
    Track {
        /// Directory holding frame_*.depth (+ optional ground_truth.json)
        #[arg(long)]
        input: PathBuf,
        /// host:port of a running server; omit for purely local tracking
        #[arg(long)]
        remote: Option<String>,
        #[arg(long, value_enum, default_value = "local-only")]
        policy: PolicyArg,
        #[arg(long, value_enum, default_value = "single-step")]
        granularity: GranularityArg,
        /// Pin the per-frame skip count (starvation studies)
        #[arg(long)]
        force_skip: Option<u32>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic depth sequence with ground truth.
    Gen {
        /// SequenceSpec JSON; defaults when omitted
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a scenario matrix and emit the report.
    Bench {
        /// MatrixConfig JSON; the built-in 12-scenario matrix when omitted
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Measure wall time instead of the virtual clock; networked
        /// scenarios then need --remote and results stop being
        /// bit-reproducible
        #[arg(long)]
        wall_clock: bool,
        /// host:port of a real server for wall-clock networked scenarios
        #[arg(long)]
        remote: Option<String>,
    },
}

static SHUTDOWN_REQUESTED: AtomicBool = AtomicBool::new(false);

extern "C" fn on_sigint(_: libc::c_int) {
    SHUTDOWN_REQUESTED.store(true, Ordering::SeqCst);
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config, Error> {
    let mut cfg = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.pso.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Error> {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Serve { listen } => cmd_serve(&listen, &config),
        Command::Track {
            input,
            remote,
            policy,
            granularity,
            force_skip,
            out,
        } => cmd_track(&config, &input, remote.as_deref(), policy, granularity, force_skip, &out),
        Command::Gen { spec, out } => cmd_gen(&config, spec.as_deref(), &out),
        Command::Bench {
            matrix,
            out,
            wall_clock,
            remote,
        } => cmd_bench(&config, matrix.as_deref(), &out, wall_clock, remote),
    }
}

fn cmd_serve(listen: &str, config: &Config) -> Result<(), Error> {
    let ctx = config.worker_context()?;
    let (handle, accept_loop) = serve(listen, ctx)?;
    unsafe {
        libc::signal(libc::SIGINT, on_sigint as extern "C" fn(libc::c_int) as libc::sighandler_t);
        libc::signal(libc::SIGTERM, on_sigint as extern "C" fn(libc::c_int) as libc::sighandler_t);
    }
    let watcher = {
        let handle = handle.clone();
        std::thread::spawn(move || loop {
            if SHUTDOWN_REQUESTED.load(Ordering::SeqCst) {
                handle.shutdown();
                return;
            }
            std::thread::sleep(std::time::Duration::from_millis(50));
        })
    };
    println!("listening on {}", handle.local_addr);
    accept_loop()?;
    SHUTDOWN_REQUESTED.store(true, Ordering::SeqCst);
    let _ = watcher.join();
    info!("server stopped");
    Ok(())
}

fn cmd_track(
    config: &Config,
    input: &std::path::Path,
    remote: Option<&str>,
    policy: PolicyArg,
    granularity: GranularityArg,
    force_skip: Option<u32>,
    out: &std::path::Path,
) -> Result<(), Error> {
    let mut policy_cfg = config.policy;
    policy_cfg.mode = match policy {
        PolicyArg::Forced => PolicyMode::Forced,
        PolicyArg::Auto => PolicyMode::Auto,
        PolicyArg::LocalOnly => PolicyMode::LocalOnly,
    };
    let granularity = match granularity {
        GranularityArg::SingleStep => Granularity::SingleStep,
        GranularityArg::MultiStep => Granularity::MultiStep,
    };
    if policy_cfg.mode == PolicyMode::Forced && remote.is_none() {
        return Err(Error::Config(
            "forced policy requires --remote host:port".into(),
        ));
    }

    let (frames, truth, fps) = read_sequence(input)?;
    let worker = config.worker_context()?;
    let mut tracker_cfg = config.tracker;
    tracker_cfg.clock.source_fps = fps;
    tracker_cfg.force_skip = force_skip;

    let mut dispatcher = Dispatcher::new(worker.clone(), policy_cfg, granularity, ClockMode::Wall);
    if let Some(addr) = remote {
        let endpoint = TcpRemote::connect(addr, &worker, policy_cfg.timeout_ms)?;
        info!("registered with {addr} as executor {}", endpoint.executor_id);
        dispatcher = dispatcher.with_remote(Box::new(endpoint));
    }

    let h0 = match &truth {
        Some(poses) => poses[0],
        None => {
            return Err(Error::Config(
                "sequence has no ground_truth.json; an initial pose is required".into(),
            ))
        }
    };
    let record = track_sequence(&frames, &h0, &mut dispatcher, &tracker_cfg, truth.as_deref())?;

    std::fs::create_dir_all(out)?;
    write_csv(&record, &out.join("record.csv"))?;
    write_summary_json(&record, &out.join("summary.json"))?;
    println!(
        "tracked {} frames ({} skipped): achieved {:.2} fps, mean loop {:.2} ms{}",
        record.consumed_frames,
        record.frames_skipped,
        record.achieved_fps,
        record.mean_loop_ms,
        match record.mean_fingertip_error_m {
            Some(e) => format!(", mean fingertip error {:.2} mm", e * 1000.0),
            None => String::new(),
        }
    );
    Ok(())
}

fn cmd_gen(
    config: &Config,
    spec_path: Option<&std::path::Path>,
    out: &std::path::Path,
) -> Result<(), Error> {
    let spec: SequenceSpec = match spec_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => SequenceSpec::default(),
    };
    let fps = config.tracker.clock.source_fps;
    let (frames, poses) = generate_sequence(&spec, &config.geometry(), &config.camera(), fps)?;
    write_sequence(out, &frames, &poses, &spec, fps)?;
    println!("wrote {} frames to {}", frames.len(), out.display());
    Ok(())
}

fn cmd_bench(
    config: &Config,
    matrix_path: Option<&std::path::Path>,
    out: &std::path::Path,
    wall_clock: bool,
    remote: Option<String>,
) -> Result<(), Error> {
    let matrix = match matrix_path {
        Some(path) => MatrixConfig::load(path)?,
        None => MatrixConfig::default(),
    };
    let worker = config.worker_context()?;
    let opts = RunOptions {
        wall_clock,
        remote_addr: remote,
    };
    let (report, records) = run_matrix(&matrix, &worker, &config.tracker, &opts)?;
    emit_report(&report, &records, out)?;
    println!(
        "ran {} scenarios over {} frames; report in {}",
        report.scenarios.len(),
        report.frame_count,
        out.display()
    );
    for s in &report.scenarios {
        println!(
            "  {:<24} {:>7.2} fps (processing), {:>6.2} fps (achieved)",
            s.name, s.processing_fps, s.achieved_fps
        );
    }
    Ok(())
}
