use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use siplab::acceptance::all_criteria;
use siplab::harness::{exit_code, run, ExperimentConfig, ExperimentKind, RunManifest};
use siplab::Error;

const EXIT_ACCEPTANCE: u8 = 4;

#[derive(Parser)]
#[command(name = "siplab", version, about = "Inclusion-process simulation and verification lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replica count override.
    #[arg(long, global = true)]
    replicas: Option<usize>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (outputs do not depend on it).
    #[arg(long, global = true, env = "SIPLAB_THREADS")]
    threads: Option<usize>,
    /// Exit with status 4 when any verdict fails.
    #[arg(long, global = true)]
    check: bool,
    /// Overwrite an existing run in the output directory.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Run whatever kind the config declares.
    Simulate,
    Hydro,
    DualityCheck,
    /// Stationary or non-equilibrium fluctuation fields.
    Fluctuations,
    MoscoCheck,
    MomentBounds,
    /// Run the config across its n-ladder and print the convergence table.
    Sweep,
    /// Run the acceptance suite.
    Check,
}

impl Command {
    fn accepts(self, kind: ExperimentKind) -> bool {
        use ExperimentKind as K;
        match self {
            Command::Simulate | Command::Check => true,
            Command::Hydro => kind == K::Hydro,
            Command::DualityCheck => kind == K::DualityCheck,
            Command::Fluctuations => matches!(kind, K::StationaryFluct | K::NonEqFluct),
            Command::MoscoCheck => kind == K::MoscoCheck,
            Command::MomentBounds => kind == K::MomentBounds,
            Command::Sweep => matches!(kind, K::Hydro | K::MoscoCheck),
        }
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(e) as u8)
}

fn acceptance() -> ExitCode {
    let mut ok = true;
    for criterion in all_criteria() {
        let r = criterion();
        println!("{r}");
        for c in r.failures() {
            println!("    FAIL {}: {}", c.name, c.detail);
        }
        ok &= r.passed();
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_ACCEPTANCE)
    }
}

fn report(m: &RunManifest, sweep: bool) {
    println!(
        "{} run: config {} | {} events in {:.2} s on {} threads",
        m.kind.slug(),
        &m.config_sha256[..12],
        m.telemetry.events,
        m.telemetry.wall_clock_s,
        m.telemetry.threads
    );
    for f in &m.outputs {
        println!("  wrote {} ({} bytes)", f.name, f.bytes);
    }
    if sweep {
        if let Some(s) = &m.sweep {
            println!("  {:>6} {:>12} {:>12} {:>12}", "n", "l1_error", "pi_var", "form_err");
            let cell = |v: Option<f64>| v.map(|x| format!("{x:12.4e}")).unwrap_or_else(|| format!("{:>12}", "-"));
            for p in &s.points {
                println!("  {:>6} {} {} {}", p.n, cell(p.l1_error), cell(p.pi_variance), cell(p.dirichlet_residual));
            }
        }
    }
    for v in &m.verdicts {
        println!("  [{}] {}: {}", if v.passed { "ok" } else { "FAIL" }, v.name, v.detail);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(3);
        }
    }
    if cli.command == Command::Check {
        return acceptance();
    }
    let Some(path) = &cli.config else {
        return fail(&Error::Config("--config is required".into()));
    };
    let mut cfg = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if let Some(r) = cli.replicas {
        cfg.replicas = r;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Err(e) = cfg.validate() {
        return fail(&e);
    }
    if !cli.command.accepts(cfg.kind) {
        return fail(&Error::Config(format!("config kind {} does not match this subcommand", cfg.kind.slug())));
    }
    if cli.command == Command::Sweep && cfg.n_ladder.len() < 2 {
        return fail(&Error::MissingLadder {
            needed: 2,
            got: cfg.n_ladder.len(),
        });
    }
    let Some(out) = cli.out.clone().or_else(|| cfg.output_dir.clone()) else {
        return fail(&Error::Config("no output directory (--out or output_dir)".into()));
    };
    match run(&cfg, &out, cli.force) {
        Ok(m) => {
            report(&m, cli.command == Command::Sweep);
            if cli.check && !m.passed() {
                ExitCode::from(EXIT_ACCEPTANCE)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => fail(&e),
    }
}
