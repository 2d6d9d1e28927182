use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use circfbp::forward::{add_noise, circular_mean, wave_trace_p, wave_trace_w};
use circfbp::grids::{sample_phantom, DetectorRing, ImageGrid, Phantom, Point, RadialGrid, TimeGrid};
use circfbp::io::{export_pgm, load_phantom_spec, load_rgf, save_rgf, GridFile};
use circfbp::recon::{reconstruct, LaplacianStage, Method, ReconConfig, ReconInput, DEFAULT_TMAX_FACTOR};
use circfbp::verify::{
    convergence_study, diff_abel_profile, image_metrics, verify_diff_abel, verify_key_identity, verify_trace_identity,
    SimulationOptions, TraceIdentityConfig,
};
use circfbp::Error;

#[derive(Parser)]
#[command(
    name = "circfbp",
    version,
    about = "Filtered back-projection for circular means and wave traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a phantom spec on an image grid.
    Phantom {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        r0: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
    /// Simulate circular means or wave traces of a phantom.
    Forward {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        nphi: usize,
        #[arg(long)]
        nr: usize,
        #[arg(long, value_enum, default_value_t = DataKind::Means)]
        kind: DataKind,
        /// Time intervals of traces.
        #[arg(long)]
        nt: Option<usize>,
        /// Trace horizon; defaults to 2 R0 for W and 20 R0 for P traces.
        #[arg(long)]
        tmax: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        r0: f64,
        /// Points of the angular quadrature for Gaussian blobs.
        #[arg(long, default_value_t = 1024)]
        quad: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Add uniform noise relative to the data maximum.
    Noise {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        level: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct an image from means or traces.
    Recon {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_parser = parse_method)]
        method: Method,
        #[arg(long)]
        n: usize,
        /// Trace horizon used by the adjoint methods (default 20 R0).
        #[arg(long)]
        tmax: Option<f64>,
        #[arg(long, value_enum, default_value_t = Stage::Radial)]
        laplacian: Stage,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pgm: Option<PathBuf>,
    },
    /// Check one of the identities numerically.
    Verify {
        #[command(subcommand)]
        which: VerifyCommand,
    },
    /// Convergence study over grid sizes, written as a TSV table.
    Study {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_parser = parse_method)]
        method: Method,
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 1.0)]
        r0: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Relative L2 and max-abs error of an image against a reference.
    Metrics {
        #[arg(long)]
        recon: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
    },
}

#[derive(Subcommand)]
enum VerifyCommand {
    /// Integral identity for the logarithmic kernel on the circle.
    Keyident {
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        x: Point,
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
        y: Point,
        #[arg(long, default_value_t = 1.0)]
        r0: f64,
        #[arg(long, default_value_t = 1 << 16)]
        quad: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Inner product of two phantoms against their trace pairings.
    Trace {
        #[arg(long)]
        f: PathBuf,
        #[arg(long)]
        g: PathBuf,
        #[command(flatten)]
        grids: TraceGrids,
        #[arg(long, default_value_t = 1024)]
        quad: usize,
        /// Tolerance relative to ||f|| ||g||.
        #[arg(long, default_value_t = 0.01)]
        tol: f64,
    },
    /// Differentiation formula for the Abel-type integral.
    Diffabel {
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 256)]
        quad: usize,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
}

#[derive(Args)]
struct TraceGrids {
    #[arg(long, default_value_t = 1.0)]
    r0: f64,
    #[arg(long, default_value_t = 128)]
    nphi: usize,
    #[arg(long, default_value_t = 512)]
    nr: usize,
    #[arg(long, default_value_t = 4096)]
    nt: usize,
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long, default_value_t = 1600)]
    image_n: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataKind {
    Means,
    #[value(name = "traceP")]
    TraceP,
    #[value(name = "traceW")]
    TraceW,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Radial,
    Image,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|_| {
        let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

fn parse_point(s: &str) -> Result<Point, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    match parts[..] {
        [a, b] => Ok([a, b]),
        _ => Err("expected `x1,x2`".into()),
    }
}

/// Failure of a command, mapped to the process exit code.
enum Failure {
    Lib(Error),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(4)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Precondition { .. } => 2,
                Error::GridMismatch { .. } | Error::Format(_) | Error::Io(_) => 3,
            })
        }
    }
}

fn load_spec(path: &Path, r0: f64) -> Result<Phantom, Error> {
    let p = load_phantom_spec(path)?;
    p.validate(r0)?;
    Ok(p)
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Phantom { spec, n, r0, out, pgm } => {
            let img = sample_phantom(&load_spec(&spec, r0)?, &ImageGrid::new(r0, n)?)?;
            if let Some(p) = pgm {
                export_pgm(&img, &p)?;
            }
            save_rgf(&out, &GridFile::Image(img))?;
        }
        Command::Forward {
            spec,
            nphi,
            nr,
            kind,
            nt,
            tmax,
            r0,
            quad,
            out,
        } => {
            let ph = load_spec(&spec, r0)?;
            let ring = DetectorRing::new(r0, nphi + 1)?;
            let means = circular_mean(&ph, &ring, &RadialGrid::new(r0, nr)?, quad)?;
            let file = match kind {
                DataKind::Means => GridFile::Means(means),
                DataKind::TraceW => {
                    let tg = TimeGrid::with_horizon(tmax.unwrap_or(2.0 * r0), nt.unwrap_or(nr))?;
                    GridFile::Trace(wave_trace_w(&means, &tg)?)
                }
                DataKind::TraceP => {
                    let tg = TimeGrid::with_horizon(tmax.unwrap_or(DEFAULT_TMAX_FACTOR * r0), nt.unwrap_or(4096))?;
                    GridFile::Trace(wave_trace_p(&means, &tg)?)
                }
            };
            save_rgf(&out, &file)?;
        }
        Command::Noise {
            input,
            level,
            seed,
            out,
        } => {
            let noisy = match load_rgf(&input)? {
                GridFile::Means(m) => GridFile::Means(add_noise(&m, level, seed)?),
                GridFile::Trace(t) => GridFile::Trace(add_noise(&t, level, seed)?),
                GridFile::Image(_) => {
                    return Err(Error::Format("noise applies to means or traces, not images".into()).into())
                }
            };
            save_rgf(&out, &noisy)?;
        }
        Command::Recon {
            input,
            method,
            n,
            tmax,
            laplacian,
            out,
            pgm,
        } => {
            let data = load_rgf(&input)?;
            let (r0, input) = match &data {
                GridFile::Means(m) => (m.rgrid.r0(), ReconInput::Means(m)),
                GridFile::Trace(t) => (t.ring.radius(), ReconInput::Trace(t)),
                GridFile::Image(_) => return Err(Error::Format("cannot reconstruct from an image".into()).into()),
            };
            let cfg = ReconConfig {
                t_max: tmax.unwrap_or(DEFAULT_TMAX_FACTOR * r0),
                laplacian: match laplacian {
                    Stage::Radial => LaplacianStage::Radial,
                    Stage::Image => LaplacianStage::Image,
                },
                ..ReconConfig::new(method, r0)
            };
            let img = reconstruct(input, &ImageGrid::new(r0, n)?, &cfg)?;
            if let Some(p) = pgm {
                export_pgm(&img, &p)?;
            }
            save_rgf(&out, &GridFile::Image(img))?;
        }
        Command::Verify { which } => return run_verify(which),
        Command::Study {
            spec,
            method,
            sizes,
            r0,
            out,
        } => {
            let ph = load_spec(&spec, r0)?;
            let study = convergence_study(&ph, method, &sizes, r0, &SimulationOptions::default())?;
            // timings go to stdout only, so the table is reproducible
            let mut table = String::from("N\tmax_err\tl2_err\torder\n");
            for r in &study.rows {
                let order = r.order.map_or("-".to_string(), |o| format!("{o:.6}"));
                writeln!(table, "{}\t{:.6e}\t{:.6e}\t{order}", r.n, r.max_err, r.l2_err).unwrap();
                println!(
                    "N={} max_err={:.3e} l2_err={:.3e} order={order} time={:.3}s",
                    r.n, r.max_err, r.l2_err, r.seconds
                );
            }
            if !study.smooth {
                println!("note: indicator phantom, orders are not meaningful");
            }
            fs::write(&out, table).map_err(Error::from)?;
        }
        Command::Metrics { recon, reference } => {
            let (GridFile::Image(a), GridFile::Image(b)) = (load_rgf(&recon)?, load_rgf(&reference)?) else {
                return Err(Error::Format("metrics compare two image files".into()).into());
            };
            let m = image_metrics(&a, &b)?;
            println!("relL2\t{:.9e}\nmaxAbs\t{:.9e}", m.rel_l2, m.max_abs);
        }
    }
    Ok(())
}

fn run_verify(which: VerifyCommand) -> Outcome {
    match which {
        VerifyCommand::Keyident { x, y, r0, quad, tol } => {
            let k = verify_key_identity(x, y, r0, quad)?;
            println!(
                "lhs\t{:.15e}\nrhs\t{:.15e}\nresidual\t{:.3e}",
                k.lhs,
                k.rhs,
                k.residual()
            );
            if !within(k.residual(), tol) {
                return Err(Failure::Verification(format!(
                    "residual {:.3e} exceeds {tol:e}",
                    k.residual()
                )));
            }
        }
        VerifyCommand::Trace { f, g, grids, quad, tol } => {
            let cfg = TraceIdentityConfig {
                r0: grids.r0,
                n_phi: grids.nphi,
                n_r: grids.nr,
                n_t: grids.nt,
                t_max: grids.tmax.unwrap_or(DEFAULT_TMAX_FACTOR * grids.r0),
                image_n: grids.image_n,
                quad_n: quad,
            };
            let t = verify_trace_identity(&load_spec(&f, cfg.r0)?, &load_spec(&g, cfg.r0)?, &cfg)?;
            println!(
                "lhsL2\t{:.9e}\nrhsAsymm\t{:.9e}\nrhsSymm\t{:.9e}",
                t.lhs, t.rhs_asymm, t.rhs_symm
            );
            let gap = (t.rhs_asymm - t.lhs).abs().max((t.rhs_symm - t.lhs).abs());
            if !within(gap, tol * t.scale) {
                return Err(Failure::Verification(format!(
                    "gap {gap:.3e} exceeds {tol:e} x ||f|| ||g|| = {:.3e}",
                    tol * t.scale
                )));
            }
        }
        VerifyCommand::Diffabel { t, quad, tol } => {
            let d = verify_diff_abel(diff_abel_profile, t, quad)?;
            println!(
                "derivative\t{:.15e}\nformula\t{:.15e}\nrelative_gap\t{:.3e}",
                d.derivative,
                d.formula,
                d.relative_gap()
            );
            if !within(d.relative_gap(), tol) {
                return Err(Failure::Verification(format!(
                    "relative gap {:.3e} exceeds {tol:e}",
                    d.relative_gap()
                )));
            }
        }
    }
    Ok(())
}

/// NaN never passes.
fn within(value: f64, limit: f64) -> bool {
    value <= limit
}
