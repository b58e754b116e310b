use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use geolab::index_form::{self, PathBasis};
use geolab::pipeline::{self, RunOptions, Stage};
use geolab::report::{self, emit_report, Format, RunReport};
use geolab::scenario::{self, Scenario};
use geolab::{Error, MetricFamily};

#[derive(Parser)]
#[command(name = "geolab", version, about = "Fixed-endpoint geodesic laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Shoot the geodesic between the scenario endpoints.
    Geodesic(RunArgs),
    /// Conjugate points along the geodesic.
    Conjugate(RunArgs),
    /// Index form kernel; also writes the assembled matrices as text.
    Indexform(RunArgs),
    /// Surjectivity verdicts per perturbation class.
    Perturb(RunArgs),
    /// Degeneracy-breaking sweep over the eps list.
    Sweep(RunArgs),
    /// Sampled global-hyperbolicity check of a g-alpha-beta metric.
    HyperbolicCheck(RunArgs),
    /// Stationary counterexample: degenerate kernel invisible to stationary variations.
    Counterexample {
        #[arg(long, default_value = "out/counterexample")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 128)]
        m: usize,
    },
    /// Full pipeline.
    Run(RunArgs),
    /// Shipped scenarios.
    List,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file, or the name of a shipped scenario.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    #[arg(long)]
    m: Option<usize>,
    /// Comma-separated eps values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    eps: Option<Vec<f64>>,
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Parse { .. }
            | Error::Validation { .. }
            | Error::Io(_)
            | Error::InvalidParameters(_)
            | Error::EqualEndpoints
            | Error::StepCountTooSmall { .. }
    )
}

fn load(name: &str) -> Result<Scenario, Error> {
    let path = Path::new(name);
    if path.exists() {
        return scenario::parse_scenario(path);
    }
    let shipped = scenario::shipped_dir().join(format!("{name}.toml"));
    if shipped.exists() {
        scenario::parse_scenario(&shipped)
    } else {
        Err(Error::Io(format!(
            "{name}: no such scenario file or shipped scenario"
        )))
    }
}

fn out_dir(args: &RunArgs, s: &Scenario) -> PathBuf {
    args.out
        .clone()
        .or_else(|| s.outputs.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(&s.name))
}

fn write_matrices(s: &Scenario, dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let metric = s.metric.build()?;
    let (curve, _) = pipeline::scenario_geodesic(&metric, s, s.grid.m)?;
    let n = metric.dim();
    let ifm = index_form::assemble_index_form(
        &metric,
        &MetricFamily::flat(n),
        &curve,
        PathBasis::new(s.grid.m, n),
    )?;
    let mut out = Vec::new();
    for (name, a) in [
        ("index-form.txt", &ifm.a),
        ("mass.txt", &ifm.g),
        ("phi-part.txt", &ifm.phi_part),
        ("e-part.txt", &ifm.e_part),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, report::matrix_text(a))
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        out.push(path);
    }
    Ok(out)
}

fn summary(r: &RunReport) {
    for s in &r.stages {
        println!(
            "{:<14} {:<8} {}",
            s.stage,
            format!("{:?}", s.status).to_lowercase(),
            s.message
        );
    }
}

fn run(args: RunArgs, stage: Stage) -> Result<(), Error> {
    let base = load(&args.scenario)?;
    let s = RunOptions {
        seed: args.seed,
        m: args.m,
        eps: args.eps.clone(),
    }
    .apply(&base);
    let dir = out_dir(&args, &s);
    let r = pipeline::run_until(&s, stage)?;
    let mut files = emit_report(&r, &dir, args.format)?;
    if stage == Stage::IndexForm {
        files.extend(write_matrices(&s, &dir)?);
    }
    summary(&r);
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn dispatch(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Geodesic(a) => run(a, Stage::Geodesic),
        Command::Conjugate(a) => run(a, Stage::Conjugate),
        Command::Indexform(a) => run(a, Stage::IndexForm),
        Command::Perturb(a) => run(a, Stage::Perturb),
        Command::Sweep(a) => run(a, Stage::Sweep),
        Command::HyperbolicCheck(a) => run(a, Stage::Hyperbolicity),
        Command::Run(a) => run(a, Stage::Full),
        Command::Counterexample { out, seed, m } => {
            let r = pipeline::counterexample(m, seed, 20)?;
            std::fs::create_dir_all(&out)?;
            let path = out.join("counterexample.json");
            std::fs::write(&path, serde_json::to_string_pretty(&r).expect("serializes"))?;
            println!("kernel dimension      {}", r.kernel_dimension);
            println!("cosine to sin 2pi t   {:.6}", r.sine_cosine);
            println!("refinement ratio      {:?}", r.refinement_ratio);
            println!("max stationary pair   {:e}", r.max_stationary_pairing());
            println!("general bump pairing  {:.6}", r.general_pairing);
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::List => {
            for (_, p) in scenario::list_scenarios(&scenario::shipped_dir())? {
                let s = scenario::parse_scenario(&p)?;
                println!("{:<34} {}", s.name, s.description);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_config_error(&e) { 1 } else { 2 })
        }
    }
}
