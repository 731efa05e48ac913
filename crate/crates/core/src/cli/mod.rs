mod config;
mod pipelines;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;
use pipelines::Run;

#[derive(Parser)]
#[command(name = "ccf", version, about = "Experiments with SL(2,R) cocycles and Schrödinger gap opening")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides CCF_OUT and the config's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Scan energies for gaps, refine, cross-check and label them.
    Spectrum(Common),
    /// Cone-field certificate of uniform hyperbolicity.
    UhTest(Common),
    /// Conjugate a cocycle near a rotation-valued one.
    RotateConjugate(Common),
    /// Reduce to a constant: hyperbolic diagonal or rotation.
    Reduce(Common),
    /// Approximate a function by a continuous coboundary plus a constant.
    Cohomology(Common),
    /// Perturb a potential so that the energy lies in a gap.
    OpenGap(Common),
    /// Fibered rotation numbers, with gap labels on circle bases.
    RotationNumber(Common),
    /// Re-check the invariants stored in a result document.
    Verify {
        result: PathBuf,
    },
}

const VERIFY_FAILED: u8 = 1;
const CONFIG_ERROR: u8 = 2;
const PIPELINE_ERROR: u8 = 3;

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common, run): (&'static str, Common, fn(&mut Run) -> ccf::Result<()>) = match cli.command {
        Command::Verify { result } => return verify_cmd(&result),
        Command::Spectrum(c) => ("spectrum", c, pipelines::spectrum),
        Command::UhTest(c) => ("uh-test", c, pipelines::uh),
        Command::RotateConjugate(c) => ("rotate-conjugate", c, pipelines::rotate),
        Command::Reduce(c) => ("reduce", c, pipelines::reduce),
        Command::Cohomology(c) => ("cohomology", c, pipelines::cohomology),
        Command::OpenGap(c) => ("open-gap", c, pipelines::open_gap),
        Command::RotationNumber(c) => ("rotation-number", c, pipelines::rotation),
    };
    let mut config = match ExperimentConfig::load(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Err(e) = config.validate(&common.config, name) {
        eprintln!("error: {e}");
        return ExitCode::from(CONFIG_ERROR);
    }
    if let Some(n) = common.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(CONFIG_ERROR);
        }
        // Only fails if a pool exists already, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let dir = pipelines::output_dir(common.out.as_deref(), &config);
    if let Err(e) = std::fs::create_dir_all(&dir) {
        eprintln!("error: {}: {e}", dir.display());
        return ExitCode::from(PIPELINE_ERROR);
    }
    let mut r = Run {
        config: &config,
        pipeline: name,
        dir,
        files: Vec::new(),
    };
    match run(&mut r) {
        Ok(()) => {
            for f in &r.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {name}: {e}");
            ExitCode::from(PIPELINE_ERROR)
        }
    }
}

fn verify_cmd(path: &Path) -> ExitCode {
    let checks = match verify::verify(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    let mut failed = 0;
    for c in &checks {
        println!("{} {}: {}", if c.ok { "ok  " } else { "FAIL" }, c.name, c.detail);
        failed += usize::from(!c.ok);
    }
    if failed == 0 {
        println!("{} invariants hold", checks.len());
        ExitCode::SUCCESS
    } else {
        let names: Vec<&str> = checks.iter().filter(|c| !c.ok).map(|c| c.name.as_str()).collect();
        eprintln!("verification failed: {}", names.join(", "));
        ExitCode::from(VERIFY_FAILED)
    }
}
