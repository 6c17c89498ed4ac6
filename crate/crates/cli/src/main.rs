//! `adsorb`: find the most stable adsorbate configuration on a slab.
//!
//! Exit codes: 0 success, 1 error, 2 every configuration filtered,
//! 3 agent failure without fallback.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use adsorb_core::agent::{AgentConfig, Query};
use adsorb_core::calculator::{wire, BuiltinCalculator, CalcParams, Calculator};
use adsorb_core::eval;
use adsorb_core::pipeline::{self, CalculatorSpec, Fallback, LlmSpec, RunConfig, StrategyChoice};
use adsorb_core::placement::{Configuration, Provenance, Strategy};
use adsorb_core::relax::{self, AnomalyThresholds, FireParams, Status};
use adsorb_core::sites::{self, Site, SiteKind};
use adsorb_core::structures::{
    adsorbate_from_registry, build_slab, parse_extxyz, write_extxyz, AdsorbateSpec, LatticeTable, SlabMetadata,
    Structure, Tag,
};
use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "adsorb",
    version,
    about = "Adsorption-configuration search with an LLM planning loop"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Search for the minimum adsorption energy of one system.
    Run(Box<RunArgs>),
    /// List adsorption sites of a slab as JSON.
    Enumerate(EnumerateArgs),
    /// Relax one extXYZ structure and print energy and status.
    Relax(RelaxArgs),
    /// Compute SR, LEDR, RSR and consistency from a records CSV.
    Evaluate(EvaluateArgs),
    /// Cut a slab and write it as extXYZ.
    BuildSlab(SlabArgs),
    /// Serve the built-in calculator over stdio lines or HTTP.
    Calculator(ServeArgs),
}

#[derive(Args, Clone)]
struct SlabArgs {
    /// Catalyst formula, e.g. Pt or Cu3Pd.
    #[arg(long)]
    catalyst: Option<String>,
    /// Miller index as h,k,l.
    #[arg(long, value_parser = config::parse_triple)]
    miller: Option<[i32; 3]>,
    /// Read the slab from extXYZ instead of building it.
    #[arg(long)]
    slab: Option<PathBuf>,
    /// In-plane repeats, e.g. 2,2.
    #[arg(long, value_parser = config::parse_pair)]
    supercell: Option<[usize; 2]>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    vacuum: Option<f64>,
    #[arg(long)]
    shift: Option<f64>,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    adsorbate: Option<String>,
    #[command(flatten)]
    slab: SlabArgs,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// builtin, http:<url> or subprocess:<command line>.
    #[arg(long)]
    calculator: Option<String>,
    /// LJ cutoff of the built-in calculator in Å.
    #[arg(long)]
    cutoff: Option<f64>,
    /// mock:<dir> for recorded replies, or live (reads ADSORB_AGENT_API_KEY).
    #[arg(long)]
    llm: Option<String>,
    /// Chat model for live mode.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, value_enum)]
    fallback: Option<FallbackArg>,
    #[arg(long)]
    max_retries: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Output directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long)]
    n_random: Option<usize>,
    #[arg(long)]
    fmax: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Omit wall time so reports are byte-reproducible.
    #[arg(long)]
    no_timestamps: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Agent,
    Heuristic,
    Random,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum FallbackArg {
    Error,
    Heuristic,
}

#[derive(Args)]
struct EnumerateArgs {
    #[command(flatten)]
    slab: SlabArgs,
    /// Also draw this many area-weighted random sites.
    #[arg(long)]
    random: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RelaxArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value = "builtin")]
    calculator: String,
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long)]
    fmax: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Write the relaxed structure here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Per-system summary CSV or per-run CSV (schema picked from the header).
    records: PathBuf,
    /// Three-trial solutions JSON for the consistency ratio.
    #[arg(long)]
    solutions: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Print JSON instead of the text table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeArgs {
    /// Answer one JSON request per stdin line.
    #[arg(long, conflicts_with = "http")]
    stdio: bool,
    /// Listen on this address, e.g. 127.0.0.1:8123.
    #[arg(long)]
    http: Option<String>,
    /// Model this adsorbate's internal bonds with the elastic network.
    #[arg(long)]
    adsorbate: Option<String>,
    #[arg(long)]
    cutoff: Option<f64>,
}

fn builtin(cutoff: Option<f64>, ads: Option<&AdsorbateSpec>) -> BuiltinCalculator {
    let mut params = CalcParams::default();
    if let Some(rc) = cutoff {
        params.cutoff = rc;
    }
    let calc = BuiltinCalculator::new(params);
    match ads {
        Some(a) => calc.with_adsorbate(a),
        None => calc,
    }
}

fn slab_from(a: &SlabArgs) -> anyhow::Result<Structure> {
    if let Some(path) = &a.slab {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(parse_extxyz(&text)?);
    }
    let (Some(catalyst), Some(miller)) = (&a.catalyst, a.miller) else {
        bail!("give --slab FILE or both --catalyst and --miller");
    };
    let bulk = LatticeTable::default().bulk_for_formula(catalyst)?;
    let mut meta = SlabMetadata::new(catalyst, miller, a.layers.unwrap_or(3));
    meta.vacuum = a.vacuum.unwrap_or(meta.vacuum);
    meta.shift = a.shift.unwrap_or(meta.shift);
    let [nx, ny] = a.supercell.unwrap_or([2, 2]);
    Ok(build_slab(&bulk, &meta, (nx, ny))?)
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_config(a: &RunArgs) -> anyhow::Result<RunConfig> {
    let file = match &a.config {
        Some(p) => config::load(p)?,
        None => config::FileConfig::default(),
    };
    let sys = &file.system;
    let adsorbate = a
        .adsorbate
        .clone()
        .or(sys.adsorbate.clone())
        .context("--adsorbate is required")?;
    let slab_path = a.slab.slab.clone().or(sys.slab.clone());
    let catalyst = a.slab.catalyst.clone().or(sys.catalyst.clone());
    let miller = a.slab.miller.or(sys.miller);
    let mut query = match (catalyst, miller) {
        (Some(c), Some(m)) => Query::new(&adsorbate, &c, m)?,
        (c, m) if slab_path.is_some() => Query {
            adsorbate: adsorbate.clone(),
            catalyst: c.unwrap_or_else(|| "slab".into()),
            miller: m.unwrap_or([0, 0, 1]),
            slab_path: None,
        },
        _ => bail!("give --catalyst and --miller (or --slab FILE)"),
    };
    query.slab_path = slab_path;

    let mut c = RunConfig::new(query);
    c.supercell = a.slab.supercell.or(sys.supercell).unwrap_or(c.supercell);
    c.layers = a.slab.layers.or(sys.layers).unwrap_or(c.layers);
    c.vacuum = a.slab.vacuum.or(sys.vacuum).unwrap_or(c.vacuum);
    c.shift = a.slab.shift.or(sys.shift).unwrap_or(c.shift);

    let run = &file.run;
    c.strategy = match a.strategy {
        Some(StrategyArg::Agent) => StrategyChoice::Agent,
        Some(StrategyArg::Heuristic) => StrategyChoice::Heuristic,
        Some(StrategyArg::Random) => StrategyChoice::Random,
        Some(StrategyArg::All) => StrategyChoice::All,
        None => run.strategy.unwrap_or(c.strategy),
    };
    c.fallback = match a.fallback {
        Some(FallbackArg::Error) => Fallback::Error,
        Some(FallbackArg::Heuristic) => Fallback::Heuristic,
        None => run.fallback.unwrap_or(c.fallback),
    };
    c.seed = a.seed.or(run.seed).unwrap_or(c.seed);
    c.parallelism = a.parallelism.or(run.parallelism).unwrap_or(c.parallelism);
    c.output = a.output.clone().or(run.output.clone()).unwrap_or(c.output);
    c.n_random = a.n_random.or(run.n_random).unwrap_or(c.n_random);
    c.heuristic_binding_index = run.heuristic_binding_index.unwrap_or(c.heuristic_binding_index);
    c.timestamps = !a.no_timestamps;

    if let Some(calc) = &file.calculator {
        if let Some(spec) = calc.spec()? {
            c.calculator = spec;
        }
        c.cutoff = calc.cutoff;
        c.calc_timeout = calc.timeout.unwrap_or(c.calc_timeout);
    }
    if let Some(s) = &a.calculator {
        c.calculator = config::parse_calculator(s)?;
    }
    c.cutoff = a.cutoff.or(c.cutoff);

    let (file_mock, mut live) = match file.llm {
        Some(l) => (l.mock, Some(l.live)),
        None => (None, None),
    };
    c.llm = match a.llm.as_deref() {
        Some(s) if s.starts_with("mock:") => Some(LlmSpec::Mock {
            dir: PathBuf::from(&s[5..]),
        }),
        Some("live") => Some(LlmSpec::Live(live.take().unwrap_or_default())),
        Some(other) => bail!("--llm {other:?}: expected mock:<dir> or live"),
        None => match (file_mock, live.take()) {
            (Some(dir), _) => Some(LlmSpec::Mock { dir }),
            (None, Some(cfg)) => Some(LlmSpec::Live(cfg)),
            (None, None) => None,
        },
    };
    if let (Some(model), Some(LlmSpec::Live(cfg))) = (&a.model, c.llm.as_mut()) {
        cfg.model = model.clone();
    }
    if let Some(LlmSpec::Live(cfg)) = c.llm.as_mut() {
        if let Ok(url) = std::env::var(adsorb_core::agent::BASE_URL_VAR) {
            cfg.base_url = url;
        }
    }

    c.agent = file.agent.unwrap_or_else(AgentConfig::default);
    if let Some(n) = a.max_retries {
        c.agent.max_retries = n;
    }
    c.placement = file.placement.unwrap_or(c.placement);
    c.fire = file.fire.unwrap_or(c.fire);
    c.fire.fmax = a.fmax.unwrap_or(c.fire.fmax);
    c.fire.max_steps = a.max_steps.unwrap_or(c.fire.max_steps);
    c.anomaly = file.anomaly.unwrap_or(c.anomaly);
    Ok(c)
}

fn cmd_run(a: &RunArgs) -> anyhow::Result<ExitCode> {
    let c = run_config(a)?;
    let out = match pipeline::run(&c) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(e.exit_code() as u8));
        }
    };
    for r in &out.runs {
        let rep = &r.report;
        let strategy = serde_json::to_value(rep.strategy)?;
        match (&r.failure, rep.delta_e_ads) {
            (None, Some(e)) => println!(
                "{}  ΔE_ads = {e:.6} eV  (configuration {} of {}, {} valid)",
                strategy.as_str().unwrap_or_default(),
                rep.argmin.unwrap_or_default(),
                rep.n_init,
                rep.n_valid
            ),
            (failure, _) => eprintln!(
                "{}  failed: {}",
                strategy.as_str().unwrap_or_default(),
                failure
                    .as_ref()
                    .map_or_else(|| "no result".to_string(), ToString::to_string)
            ),
        }
    }
    if let Some(cmp) = &out.comparison {
        if let Some(rsr) = cmp.rsr_percent {
            println!("RSR = {rsr:.1} %");
        }
    }
    println!("report: {}", c.output.display());
    Ok(ExitCode::from(out.exit_code() as u8))
}

#[derive(Serialize)]
struct SiteDump<'a> {
    counts: Counts,
    sites: &'a [Site],
    #[serde(skip_serializing_if = "Option::is_none")]
    random: Option<Vec<Site>>,
}

#[derive(Serialize)]
struct Counts {
    ontop: usize,
    bridge: usize,
    hollow: usize,
}

fn cmd_enumerate(a: &EnumerateArgs) -> anyhow::Result<ExitCode> {
    let slab = slab_from(&a.slab)?;
    let found = sites::enumerate_heuristic_sites(&slab)?;
    let (ontop, bridge, hollow) = sites::count_by_kind(&found);
    let random = a
        .random
        .map(|n| sites::sample_random_sites(&slab, n, a.seed))
        .transpose()?;
    let dump = SiteDump {
        counts: Counts { ontop, bridge, hollow },
        sites: &found,
        random,
    };
    emit(a.slab.out.as_deref(), &(serde_json::to_string_pretty(&dump)? + "\n"))?;
    Ok(ExitCode::SUCCESS)
}

/// Tag-2 atoms of a structure as an adsorbate, so the built-in calculator
/// keeps their bonds.
fn adsorbate_of(s: &Structure) -> anyhow::Result<Option<AdsorbateSpec>> {
    let idx = s.indices_with_tag(Tag::Adsorbate);
    if idx.is_empty() {
        return Ok(None);
    }
    let z = idx.iter().map(|&i| s.atoms[i].z).collect();
    let pos = idx.iter().map(|&i| s.atoms[i].position).collect();
    Ok(Some(AdsorbateSpec::new("input", z, pos)?))
}

fn cmd_relax(a: &RelaxArgs) -> anyhow::Result<ExitCode> {
    let text = std::fs::read_to_string(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let s = parse_extxyz(&text)?;
    let calc: Box<dyn Calculator> = match config::parse_calculator(&a.calculator)? {
        CalculatorSpec::Builtin => Box::new(builtin(a.cutoff, adsorbate_of(&s)?.as_ref())),
        CalculatorSpec::Http { url } => Box::new(wire::HttpCalculator::new(&url, 60.0)),
        CalculatorSpec::Subprocess { command } => Box::new(wire::SubprocessCalculator::new(command, 60.0)?),
    };
    let mut fire = FireParams::default();
    fire.fmax = a.fmax.unwrap_or(fire.fmax);
    fire.max_steps = a.max_steps.unwrap_or(fire.max_steps);
    fire.validate()?;
    let site = Site {
        position: Default::default(),
        kind: SiteKind::Random,
        parents: vec![],
        parent_elements: vec![],
    };
    let cfg = Configuration {
        structure: s,
        provenance: Provenance {
            strategy: Strategy::Random,
            site,
            seed: 0,
            stream: 0,
            variant: 0,
        },
    };
    let r = relax::relax(&cfg, calc.as_ref(), &fire, &AnomalyThresholds::default(), false)?;
    let status = serde_json::to_value(r.status)?;
    println!(
        "status {}  energy {:.8} eV  max force {:.3e} eV/Å  steps {}",
        status.as_str().unwrap_or_default(),
        r.energy,
        r.max_force,
        r.steps
    );
    if let Some(reason) = r.rejection().filter(|_| r.status == Status::Converged) {
        println!("anomaly: {reason}");
    }
    if let Some(out) = &a.out {
        std::fs::write(out, write_extxyz(&r.structure)).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(if r.status == Status::Failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}

fn cmd_evaluate(a: &EvaluateArgs) -> anyhow::Result<ExitCode> {
    let records = eval::load_records(&a.records)?;
    let solutions = a.solutions.as_deref().map(eval::load_solutions).transpose()?;
    let report = eval::evaluate(&records, solutions.as_deref(), a.epsilon)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.to_text());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_build_slab(a: &SlabArgs) -> anyhow::Result<ExitCode> {
    let slab = slab_from(a)?;
    emit(a.out.as_deref(), &write_extxyz(&slab))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_calculator(a: &ServeArgs) -> anyhow::Result<ExitCode> {
    let ads = a.adsorbate.as_deref().map(adsorbate_from_registry).transpose()?;
    let calc = builtin(a.cutoff, ads.as_ref());
    if let Some(addr) = &a.http {
        let server = wire::serve_http(Arc::new(calc), addr)?;
        eprintln!("listening on {}", server.url());
        std::io::stderr().flush()?;
        server.join();
        return Ok(ExitCode::SUCCESS);
    }
    if !a.stdio {
        bail!("choose --stdio or --http ADDR");
    }
    let stdin = std::io::stdin();
    wire::serve_lines(&calc, stdin.lock(), std::io::stdout().lock())?;
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: &Cli) -> anyhow::Result<ExitCode> {
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Enumerate(a) => cmd_enumerate(a),
        Command::Relax(a) => cmd_relax(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::BuildSlab(a) => cmd_build_slab(a),
        Command::Calculator(a) => cmd_calculator(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
