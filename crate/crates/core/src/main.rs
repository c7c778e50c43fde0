use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use magvisc::config::{parse_config, ConstraintMode, SimConfig};
use magvisc::gl::{self, GLConfig};
use magvisc::grid::Grid;
use magvisc::io::{self, RunManifest};
use magvisc::{lab, stability, Error};

#[derive(Parser)]
#[command(name = "magvisc", version, about = "Magnetoviscoelastic flow simulator and verification lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a configuration, writing energy.csv, snapshots and manifest.toml.
    Run {
        config: Option<PathBuf>,
        /// Rerun the configuration recorded in a manifest and compare its checks.
        #[arg(long, conflicts_with = "config")]
        from_manifest: Option<PathBuf>,
        /// Output directory (defaults to `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Differential and nodal identity suite with observed orders.
    Identities {
        #[arg(long, value_delimiter = ',', default_value = "32,64,128")]
        grid: Vec<usize>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Spectrum of the linearization about a constant magnetization.
    Spectrum {
        #[arg(long, default_value_t = 16)]
        grid: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,0,1")]
        mstar: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        physics: PhysicsArgs,
        /// Write the report as JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Perturb an equilibrium and compare the decay rate with the spectral gap.
    Decay {
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        t_start: f64,
        #[arg(long, default_value_t = 1e-12)]
        floor: f64,
    },
    /// Penalized sweep against the constrained run.
    GlCompare {
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05")]
        eps: Vec<f64>,
        /// CSV output for the deviation table.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Version and format summary.
    Info,
}

#[derive(Args)]
struct PhysicsArgs {
    #[arg(long, default_value_t = 1.0)]
    mu_s: f64,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
}

enum Failure {
    Usage(String),
    Assertion(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::InvalidGrid(_) | Error::Io { .. } => Failure::Usage(e.to_string()),
            e => Failure::Assertion(e.to_string()),
        }
    }
}

fn load(path: &Path) -> Result<SimConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn verdict(ok: bool, what: &str) -> Result<(), Failure> {
    if ok {
        Ok(())
    } else {
        Err(Failure::Assertion(format!("{what} failed")))
    }
}

fn cmd_run(config: Option<PathBuf>, from_manifest: Option<PathBuf>, out: Option<PathBuf>) -> Result<(), Failure> {
    let (cfg, previous) = match (config, from_manifest) {
        (Some(c), None) => (load(&c)?, None),
        (None, Some(m)) => {
            let text = std::fs::read_to_string(&m).map_err(|e| Failure::Usage(format!("{}: {e}", m.display())))?;
            let manifest = RunManifest::from_toml(&text).map_err(|e| Failure::Usage(format!("{}: {e}", m.display())))?;
            (manifest.config.clone(), Some(manifest))
        }
        _ => return Err(Failure::Usage("run needs a config file or --from-manifest".into())),
    };
    let dir = out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
    let outcome = io::run_to_dir(&cfg, &dir)?;
    let m = &outcome.manifest;
    println!("{} steps on {} ({}), outputs in {}", m.steps, m.grid, m.scheme, dir.display());
    for c in &m.checks {
        println!("  {:<22} {:<4} value {:.3e} threshold {:.3e}", c.name, if c.pass { "pass" } else { "FAIL" }, c.value, c.threshold);
    }
    if let Some(prev) = previous {
        verdict(prev.summary() == m.summary(), "manifest rerun reproduction")?;
    }
    verdict(m.pass(), "in-run checks")
}

fn cmd_identities(grid: &[usize], seed: u64) -> Result<(), Failure> {
    if grid.len() < 2 {
        return Err(Failure::Usage("identities needs at least two grids".into()));
    }
    let report = lab::identity_suite(grid, seed)?;
    print!("{}", report.table());
    verdict(report.pass(), "identity suite")
}

fn cmd_spectrum(grid: usize, dim: usize, mstar: &[f64], seed: u64, p: &PhysicsArgs, out: Option<PathBuf>) -> Result<(), Failure> {
    let &[a, b, c] = mstar else {
        return Err(Failure::Usage(format!("--mstar needs three components, got {}", mstar.len())));
    };
    let n = (a * a + b * b + c * c).sqrt();
    if (n - 1.0).abs() > 1e-12 {
        return Err(Failure::Usage(format!("--mstar must be a unit vector, has norm {n}")));
    }
    let g = Grid::unit(dim, grid)?;
    let physics = magvisc::Physics {
        mu_s: p.mu_s,
        kappa: p.kappa,
        alpha: p.alpha,
        beta: p.beta,
    };
    let op = stability::assemble_linearization(&g, [a, b, c], &physics)?;
    let report = stability::spectrum(&op, Some(seed))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    match out {
        Some(path) => io::write_text(&path, &json)?,
        None => println!("{json}"),
    }
    eprintln!(
        "dofs {}, near-zero {}, max Re {:.3e}, gap {:.4}, semisimple {}",
        report.dofs, report.near_zero_count, report.max_real, report.spectral_gap, report.kernel.semisimple
    );
    verdict(
        report.near_zero_count == 3 && report.max_real <= 1e-8 && report.kernel.semisimple && report.kernel.dim_kernel == 3,
        "spectrum",
    )
}

fn decay_default() -> SimConfig {
    let mut c = SimConfig::with_grid(&[16, 16]);
    c.time.dt_policy = magvisc::DtPolicy::Fixed;
    c.time.dt = Some(1e-3);
    c.time.t_end = 5.0;
    c.time.solver_tol = 1e-13;
    c.output.cadence = 10;
    c
}

fn cmd_decay(config: Option<PathBuf>, t_start: f64, floor: f64) -> Result<(), Failure> {
    let cfg = match config {
        Some(p) => load(&p)?,
        None => decay_default(),
    };
    let o = lab::decay_experiment(&cfg, t_start, floor)?;
    let f = &o.decay.fit;
    println!("fitted rate {:.6} (R^2 {:.6}, {} points), spectral gap {:.6}, ratio {:.4}", f.rate, f.r_squared, f.points, o.spectrum.spectral_gap, o.rate_ratio);
    println!("final distance {:.3e}, |m_inf| - 1 = {:.3e}", o.decay.final_distance, o.decay.m_inf_deviation);
    verdict(
        f.r_squared >= 0.99 && (o.rate_ratio - 1.0).abs() <= 0.2 && o.decay.final_distance <= 1e-6 && o.decay.m_inf_deviation <= 1e-8,
        "decay",
    )
}

fn gl_default() -> SimConfig {
    let mut c = SimConfig::with_grid(&[32, 32]);
    c.mode.initial = magvisc::InitialCondition::Smooth;
    c.time.t_end = 1.0;
    c.output.cadence = 50;
    c
}

fn cmd_gl(config: Option<PathBuf>, eps: Vec<f64>, out: Option<PathBuf>) -> Result<(), Failure> {
    let mut cfg = match config {
        Some(p) => load(&p)?,
        None => gl_default(),
    };
    cfg.mode.constraint = ConstraintMode::Projected;
    let glc = GLConfig::new(cfg.clone(), eps[0], eps)?;
    let s0 = lab::initial_state(&cfg)?;
    let report = gl::gl_sweep(&glc, &s0)?;
    let csv = io::deviation_csv(&report.rows);
    match out {
        Some(path) => io::write_text(&path, &csv)?,
        None => print!("{csv}"),
    }
    for (e, c) in &report.final_constraint {
        eprintln!("eps {e}: final ||m|-1|_inf = {c:.3e}");
    }
    verdict(report.monotone, "constraint monotonicity in epsilon")
}

fn info() {
    println!("magvisc {}", env!("CARGO_PKG_VERSION"));
    println!("snapshot: magic {:?}, version {}", std::str::from_utf8(&io::MAGIC).unwrap(), io::VERSION);
    println!("energy csv: {}", io::ENERGY_HEADER);
    println!("deviation csv: {}", io::DEVIATION_HEADER);
    println!("dense spectrum budget: {} dofs", stability::DOF_BUDGET);
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, from_manifest, out } => cmd_run(config, from_manifest, out),
        Command::Identities { grid, seed } => cmd_identities(&grid, seed),
        Command::Spectrum {
            grid,
            dim,
            mstar,
            seed,
            physics,
            out,
        } => cmd_spectrum(grid, dim, &mstar, seed, &physics, out),
        Command::Decay { config, t_start, floor } => cmd_decay(config, t_start, floor),
        Command::GlCompare { config, eps, out } => cmd_gl(config, eps, out),
        Command::Info => {
            info();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion(msg)) => {
            eprintln!("magvisc: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("magvisc: {msg}");
            ExitCode::from(2)
        }
    }
}
