//! Command-line front end: trace a scene, fit RM parameters, predict channel
//! coefficients and run the displacement and capacity experiments.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use rmchannel::channel::{scalar_channel, Tap};
use rmchannel::dp_fit::{fit_rm_dp, MatchConfig, SolveStatus};
use rmchannel::experiments::{capacity_sweep, displacement_experiment, CapacityConfig, DisplacementConfig};
use rmchannel::io::{read_json, read_rm, read_scene, write_capacity_csv, write_errors_csv, PathFile, RmFile};
use rmchannel::pathmodel::{pwa_distance, rm_distance_angles};
use rmchannel::rt_fit::fit_rm_rt;
use rmchannel::tracer::trace_paths;
use rmchannel::{ReferencePair, Vec3, SPEED_OF_LIGHT};

#[derive(Parser)]
#[command(name = "rmchannel", version, about = "Reflection-model multipath channel toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Trace all specular paths between two points and export them.
    Trace {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        tx: Vec3,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        rx: Vec3,
        #[arg(long, default_value_t = 2)]
        bounces: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit RM parameters.
    Fit {
        #[command(subcommand)]
        method: FitMethod,
    },
    /// Print the complex channel coefficient between two points.
    Predict {
        #[arg(long)]
        rm: PathBuf,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        tx: Vec3,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        rx: Vec3,
        /// Hz; defaults to the carrier stored in the RM file.
        #[arg(long)]
        freq: Option<f64>,
        #[arg(long, value_enum, default_value_t = PredictModel::Rm)]
        model: PredictModel,
    },
    /// Run an experiment and write its CSV.
    Experiment {
        #[command(subcommand)]
        kind: ExperimentKind,
    },
}

#[derive(Subcommand)]
enum FitMethod {
    /// From the routes in a path export.
    Rt {
        #[arg(long)]
        paths: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// From PWA parameters at a reference pair and two or more displaced pairs.
    Dp {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, num_args = 2.., required = true)]
        disp: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ExperimentKind {
    Displacement {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    Capacity {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PredictModel {
    Constant,
    Pwa,
    Rm,
}

#[derive(Serialize, Deserialize)]
struct DisplacementFile {
    tx: [f64; 3],
    rx: [f64; 3],
    #[serde(flatten)]
    config: DisplacementConfig,
}

#[derive(Serialize, Deserialize)]
struct CapacityFile {
    tx: [f64; 3],
    rx: [f64; 3],
    #[serde(flatten)]
    config: CapacityConfig,
}

fn parse_point(s: &str) -> std::result::Result<Vec3, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad coordinate {p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    match parts.as_slice() {
        [x, y, z] if parts.iter().all(|v| v.is_finite()) => Ok(Vec3::new(*x, *y, *z)),
        _ => Err(format!("expected x,y,z with three finite numbers, got {s:?}")),
    }
}

fn output(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut w = output(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn point(a: [f64; 3]) -> Vec3 {
    Vec3::new(a[0], a[1], a[2])
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Trace {
            scene,
            tx,
            rx,
            bounces,
            out,
        } => {
            let scene = read_scene(&scene).with_context(|| format!("reading scene {}", scene.display()))?;
            let reference = ReferencePair::new(tx, rx)?;
            let paths = trace_paths(&scene, &tx, &rx, bounces)?;
            info!("{} paths", paths.len());
            emit_json(out.as_deref(), &PathFile::from_traced(&reference, scene.carrier_freq, &paths)?)
        }
        Command::Fit {
            method: FitMethod::Rt { paths, out },
        } => {
            let file: PathFile = read_json(&paths).with_context(|| format!("reading {}", paths.display()))?;
            let reference = file.reference()?;
            let fitted = file
                .paths
                .iter()
                .enumerate()
                .map(|(i, rec)| {
                    let traced = rec.traced().with_context(|| format!("path {i} has no usable route"))?;
                    Ok(fit_rm_rt(&traced, &reference).with_context(|| format!("fitting path {i}"))?.0)
                })
                .collect::<Result<Vec<_>>>()?;
            emit_json(out.as_deref(), &RmFile::new(&reference, file.f0_hz, &fitted))
        }
        Command::Fit {
            method: FitMethod::Dp { reference, disp, out },
        } => {
            let ref_file: PathFile =
                read_json(&reference).with_context(|| format!("reading {}", reference.display()))?;
            let displaced = disp
                .iter()
                .map(|p| {
                    read_json::<PathFile>(p)
                        .with_context(|| format!("reading {}", p.display()))
                        .map(|f| f.observation())
                })
                .collect::<Result<Vec<_>>>()?;
            let pair = ref_file.reference()?;
            let fitted = fit_rm_dp(&ref_file.observation(), &displaced, &MatchConfig::default())?;
            let mut file = RmFile::new(&pair, ref_file.f0_hz, &fitted.iter().map(|p| p.path).collect::<Vec<_>>());
            for (rec, p) in file.paths.iter_mut().zip(&fitted) {
                rec.status = match p.solution.status {
                    SolveStatus::Solved => None,
                    SolveStatus::RankDeficient => Some("rank_deficient".into()),
                    SolveStatus::Ambiguous => Some("ambiguous".into()),
                    SolveStatus::Unmatched => Some("unmatched".into()),
                };
            }
            emit_json(out.as_deref(), &file)
        }
        Command::Predict {
            rm,
            tx,
            rx,
            freq,
            model,
        } => {
            let file = read_rm(&rm).with_context(|| format!("reading {}", rm.display()))?;
            let reference = file.reference()?;
            let f = freq.unwrap_or(file.f0_hz);
            if f.is_nan() || f <= 0.0 {
                bail!("frequency must be positive, got {f}");
            }
            let taps: Vec<Tap> = file
                .paths()
                .iter()
                .map(|p| Tap {
                    gain: p.gain,
                    ref_delay: p.delay,
                    distance: match model {
                        PredictModel::Constant => SPEED_OF_LIGHT * p.delay,
                        PredictModel::Pwa => pwa_distance(&rx, &tx, &reference, &p.pwa()),
                        PredictModel::Rm => rm_distance_angles(&rx, &tx, &reference, p),
                    },
                })
                .collect();
            let h = scalar_channel(&taps, f, file.f0_hz);
            println!("{:e} {:e}", h.re, h.im);
            Ok(())
        }
        Command::Experiment {
            kind: ExperimentKind::Displacement { scene, config, out },
        } => {
            let scene = read_scene(&scene).with_context(|| format!("reading scene {}", scene.display()))?;
            let cfg: DisplacementFile = read_json(&config).with_context(|| format!("reading {}", config.display()))?;
            let reference = ReferencePair::new(point(cfg.tx), point(cfg.rx))?;
            let result = displacement_experiment(&scene, &reference, &cfg.config)?;
            write_errors_csv(output(out.as_deref())?, &result.records)?;
            Ok(())
        }
        Command::Experiment {
            kind: ExperimentKind::Capacity { scene, config, out },
        } => {
            let scene = read_scene(&scene).with_context(|| format!("reading scene {}", scene.display()))?;
            let cfg: CapacityFile = read_json(&config).with_context(|| format!("reading {}", config.display()))?;
            let reference = ReferencePair::new(point(cfg.tx), point(cfg.rx))?;
            let sweep = capacity_sweep(&scene, &reference, &cfg.config)?;
            write_capacity_csv(output(out.as_deref())?, &sweep.rows)?;
            let t = sweep.traces;
            eprintln!(
                "traces: exhaustive {}, rm_rt {}, rm_dp {}, ratio {:.0}",
                t.exhaustive,
                t.rm_rt,
                t.rm_dp,
                t.ratio()
            );
            Ok(())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
