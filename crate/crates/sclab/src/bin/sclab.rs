use clap::{Parser, Subcommand};
use sclab::harness;
use sclab::{io, wigner, Error};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sclab", version, about = "Hartree-Fock, Vlasov and Fock-space experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evolve a density operator under Hartree-Fock.
    HfEvolve(RunArgs),
    /// Evolve a phase-space density under Vlasov.
    VlasovEvolve(RunArgs),
    /// Wigner transform of an operator dump.
    Wigner {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// HF vs Vlasov error across an ħ sweep.
    SemiclassicalRate(RunArgs),
    /// Exact many-body 1-pdm vs HF across particle numbers.
    MeanfieldCompare(RunArgs),
    /// Randomized inequality checks.
    IneqSuite {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Trials per check; omit for the standard counts.
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regularity channels across an ħ sweep.
    RegularityReport(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run_checked(kind: &str, args: &RunArgs) -> sclab::Result<harness::RunOutcome> {
    let (cfg, text) = harness::ExperimentConfig::load(&args.config)?;
    if cfg.experiment != kind {
        return Err(Error::Config(format!(
            "`experiment` = `{}` but the subcommand is {kind}",
            cfg.experiment
        )));
    }
    let dir = args
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs").join(kind));
    harness::run_config(&cfg, &text, &dir)
}

fn report(r: sclab::Result<harness::RunOutcome>) -> ExitCode {
    let code = harness::exit_code(&r);
    match &r {
        Ok(o) => {
            println!("wrote {} ({})", o.dir.display(), o.outputs.join(", "));
            if let Some(f) = &o.failed {
                eprintln!("check failed: {f}");
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::HfEvolve(a) => report(run_checked("hf-evolve", &a)),
        Cmd::VlasovEvolve(a) => report(run_checked("vlasov-evolve", &a)),
        Cmd::SemiclassicalRate(a) => report(run_checked("semiclassical-rate", &a)),
        Cmd::MeanfieldCompare(a) => report(run_checked("meanfield-compare", &a)),
        Cmd::RegularityReport(a) => report(run_checked("regularity-report", &a)),
        Cmd::Wigner { input, out } => {
            let r = io::load_operator(&input)
                .and_then(|op| wigner::wigner_of(&op))
                .and_then(|f| io::save_field(&out, &f));
            match r {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(if matches!(e, Error::Config(_)) { 2 } else { 3 })
                }
            }
        }
        Cmd::IneqSuite { seed, trials, out } => {
            let mut sc = match trials {
                Some(t) => sclab::ineq::SuiteConfig::new(seed, t),
                None => sclab::ineq::SuiteConfig::standard(seed),
            };
            sc.threads = harness::worker_count();
            match sclab::ineq::run_suite(&sc) {
                Ok(rep) => {
                    if let Err(e) = std::fs::write(&out, rep.to_csv()) {
                        eprintln!("error: {e}");
                        return ExitCode::from(3);
                    }
                    for r in &rep.reports {
                        println!("{:<22} trials={:<6} violations={}", r.check, r.trials, r.violations);
                    }
                    if rep.passed() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(3)
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(3)
                }
            }
        }
    }
}
