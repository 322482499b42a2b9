use std::fs;
use std::io::{self, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use snail_core::geometry::{CorrespondenceSet, Pose};
use snail_core::solver::SolverConfig;
use snail_harness::bench::{bench, write_csv, BenchConfig};
use snail_harness::scene::{gen_scene, read_matches_file, SyntheticScene};
use snail_harness::sim::{snail_sim, SimConfig, SimMode};
use snail_harness::{fixed_vs_float, sweep_study, HarnessError};
use snail_protocol::server::{serve, ServerConfig};
use snail_protocol::{Client, Encoding, Mode, PoseInput, Program, Role, SessionParams};

#[derive(Parser)]
#[command(name = "snail", about = "Private camera localization over garbled circuits")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ServerRole {
    Generator,
    Evaluator,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Offload,
    Split,
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyKind {
    Sweeps,
    Formats,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a generator or evaluator server.
    Serve {
        #[arg(long, value_enum)]
        role: ServerRole,
        #[arg(long)]
        listen: String,
        /// Evaluator in the split setting: scene JSON or matches CSV whose
        /// map points this server holds.
        #[arg(long)]
        map: Option<PathBuf>,
    },
    /// Localize one scene through a generator and an evaluator.
    Client {
        /// `generator,evaluator` addresses.
        #[arg(long, value_delimiter = ',', required = true)]
        servers: Vec<String>,
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        config: PathBuf,
    },
    /// Write a synthetic scene as JSON.
    Scene {
        #[arg(long, default_value_t = 6)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gate, byte and round table for a list of configurations.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Visual-servoing run toward a target pose.
    Sim {
        /// `rx,ry,rz,tx,ty,tz`.
        #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
        target: Pose,
        #[arg(long, default_value_t = 50)]
        frames: usize,
        #[arg(long, value_parser = parse_pose, allow_hyphen_values = true)]
        start: Option<Pose>,
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value = "sil")]
        mode: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Full per-frame record as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SVD sweep sufficiency or number-format study, as CSV on stdout.
    Study {
        #[arg(value_enum)]
        kind: StudyKind,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn parse_pose(s: &str) -> Result<Pose, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let a: [f64; 6] = v.try_into().map_err(|_| "a pose has six components".to_string())?;
    Ok(Pose::from_array(a))
}

/// `snail client` configuration file.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ClientConfig {
    /// Scene JSON; generated from `n`, `noise_sigma` and `rng_seed` if absent.
    scene: Option<PathBuf>,
    #[serde(default = "six")]
    n: usize,
    #[serde(default)]
    noise_sigma: f64,
    #[serde(default)]
    rng_seed: u64,
    encoding: Option<Encoding>,
    #[serde(default = "secret")]
    pose: PoseInput,
    #[serde(default)]
    latency_ms: u64,
    #[serde(default)]
    solver: Option<SolverConfig>,
}

fn six() -> usize {
    6
}

fn secret() -> PoseInput {
    PoseInput::Secret
}

#[derive(Serialize)]
struct ClientReport {
    pose: Pose,
    iterations: usize,
    converged: bool,
    translation_error: f64,
    rotation_error: f64,
    session: snail_protocol::SessionSummary,
}

fn load_scene(path: &Path) -> Result<CorrespondenceSet, HarnessError> {
    if path.extension().is_some_and(|e| e == "csv") {
        read_matches_file(path)
    } else {
        Ok(SyntheticScene::from_json(&fs::read_to_string(path)?)?.correspondences)
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.cmd {
        Cmd::Serve { role, listen, map } => {
            let role = match role {
                ServerRole::Generator => Role::Generator,
                ServerRole::Evaluator => Role::Evaluator,
            };
            let evaluator_values = match map {
                Some(p) => Some(load_scene(&p)?.map_points().iter().flatten().copied().collect()),
                None => None,
            };
            let listener = TcpListener::bind(&listen)?;
            eprintln!("serving {role:?} on {}", listener.local_addr()?);
            serve(
                role,
                listener,
                ServerConfig {
                    evaluator_values,
                    ..Default::default()
                },
            )?;
        }
        Cmd::Client { servers, mode, config } => {
            if servers.len() != 2 {
                return Err(HarnessError::Config("--servers takes generator,evaluator".into()));
            }
            let c: ClientConfig = serde_json::from_str(&fs::read_to_string(config)?)?;
            let scene = match &c.scene {
                Some(p) => SyntheticScene::from_json(&fs::read_to_string(p)?)?,
                None => gen_scene(c.n, c.noise_sigma, c.rng_seed)?,
            };
            let mode = match mode {
                ModeArg::Offload => Mode::Offload,
                ModeArg::Split => Mode::Split,
            };
            let encoding = c.encoding.unwrap_or(match mode {
                Mode::Offload => Encoding::Seeded,
                Mode::Split => Encoding::Naive,
            });
            let solver = c.solver.unwrap_or_default();
            let params = SessionParams {
                program: Program::SilStep {
                    n: scene.correspondences.len(),
                    intrinsics: scene.intrinsics,
                    solver,
                },
                mode,
                encoding,
                pose: c.pose,
                evaluator_addr: String::new(),
            };
            let mut client = Client::connect(&servers[0], &servers[1], params, Duration::from_millis(c.latency_ms))?;
            let (steps, _) = client.localize(&scene.correspondences, &scene.initial_guess())?;
            let session = client.close()?;
            let last = steps.last().expect("at least one step");
            let report = ClientReport {
                pose: last.pose,
                iterations: steps.len(),
                converged: snail_core::solver::client_converged(last, &solver),
                translation_error: last.pose.translation_error(&scene.ground_truth),
                rotation_error: last.pose.rotation_error(&scene.ground_truth),
                session,
            };
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Cmd::Scene { n, noise, seed, out } => {
            let s = gen_scene(n, noise, seed)?.to_json();
            match out {
                Some(p) => fs::write(p, s)?,
                None => println!("{s}"),
            }
        }
        Cmd::Bench { config, out } => {
            let configs: Vec<BenchConfig> = serde_json::from_str(&fs::read_to_string(config)?)?;
            let outcomes = bench(&configs)?;
            for o in &outcomes {
                if o.failures > 0 {
                    eprintln!(
                        "{:?} n={}: {} of {} sample runs did not converge",
                        o.row.algorithm, o.row.n, o.failures, o.samples
                    );
                }
            }
            let rows: Vec<_> = outcomes.into_iter().map(|o| o.row).collect();
            write_csv(&rows, fs::File::create(out)?)?;
        }
        Cmd::Sim {
            target,
            frames,
            start,
            n,
            noise,
            mode,
            seed,
            out,
        } => {
            let mut cfg = SimConfig::new(start.unwrap_or_default(), target);
            cfg.frames = frames;
            cfg.n = n;
            cfg.rng_seed = seed;
            cfg = cfg.with_noise(noise);
            cfg.mode = match mode.as_str() {
                "sil" => SimMode::Sil,
                "do" => SimMode::Do,
                m => return Err(HarnessError::Config(format!("unknown mode {m}"))),
            };
            let run = snail_sim(&cfg)?;
            let mut w = csv::Writer::from_writer(io::stdout());
            w.write_record(["frame", "invocations", "converged", "error_to_target", "and_gates"])?;
            for (i, f) in run.frames.iter().enumerate() {
                w.write_record([
                    i.to_string(),
                    f.invocations.to_string(),
                    f.converged.to_string(),
                    format!("{:.6}", f.error_to_target),
                    f.cost.and_gates.to_string(),
                ])?;
            }
            w.flush()?;
            eprintln!(
                "reached={} movements={} invocations={} median_after_first={:?} gate_ratio={:?} bound={:?} privacy={:?}",
                run.reached,
                run.movements,
                run.total_invocations,
                run.median_invocations_after_first(),
                run.gate_ratio(),
                run.gate_ratio_bound(),
                run.privacy.and_then(|p| p.bound),
            );
            if let Some(p) = out {
                fs::write(p, serde_json::to_string_pretty(&run)?)?;
            }
        }
        Cmd::Study { kind, samples, seed } => {
            let stdout = io::stdout();
            match kind {
                StudyKind::Sweeps => {
                    let s = sweep_study(samples.unwrap_or(10_000), seed)?;
                    let mut w = csv::Writer::from_writer(stdout.lock());
                    for r in &s.rows {
                        w.serialize(r)?;
                    }
                    w.flush()?;
                    eprintln!("samples={} scenes={} degenerate={}", s.samples, s.scenes, s.degenerate);
                }
                StudyKind::Formats => {
                    let s = fixed_vs_float(samples.unwrap_or(300), seed)?;
                    let mut w = csv::Writer::from_writer(stdout.lock());
                    w.serialize(&s.float32)?;
                    w.serialize(&s.fixed64)?;
                    w.flush()?;
                    eprintln!("relative degradation {:.3}", s.relative_degradation());
                }
            }
            stdout.lock().flush()?;
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
