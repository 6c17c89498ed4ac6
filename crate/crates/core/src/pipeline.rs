//! End-to-end run: slab → configurations (agent, heuristic or random) →
//! parallel relaxation → anomaly filter → ΔE_ads, persisted as report.json,
//! best.extxyz and transcript.json.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    self, AgentConfig, AgentError, ChatBackend, ChatError, HttpChat, LlmConfig, MockChat, Query, Solution,
    TranscriptEntry,
};
use crate::calculator::{
    wire::{HttpCalculator, SubprocessCalculator},
    BuiltinCalculator, CalcError, CalcParams, Calculator, ReferenceCache, References,
};
use crate::placement::{self, Configuration, PlacementError, PlacementParams};
use crate::relax::{self, AnomalyFlags, AnomalyThresholds, FireParams, RelaxError, RelaxationResult, Status};
use crate::sites::{Site, SiteKind};
use crate::structures::{
    adsorbate_from_registry, build_slab, parse_extxyz, write_extxyz, AdsorbateSpec, LatticeTable, SlabMetadata,
    Structure, StructureError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_ALL_FILTERED: i32 = 2;
pub const EXIT_AGENT_FAILURE: i32 = 3;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("structure: {0}")]
    Structure(#[from] StructureError),
    #[error("placement: {0}")]
    Placement(#[from] PlacementError),
    #[error("calculator: {0}")]
    Calc(#[from] CalcError),
    #[error("relaxation: {0}")]
    Relax(RelaxError),
    #[error("agent: {0}")]
    Agent(AgentError),
    #[error("{0}")]
    Chat(#[from] ChatError),
    #[error("io: {0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Relax(RelaxError::AllFiltered { .. }) => EXIT_ALL_FILTERED,
            RunError::Agent(_) => EXIT_AGENT_FAILURE,
            _ => EXIT_ERROR,
        }
    }
}

impl From<RelaxError> for RunError {
    fn from(e: RelaxError) -> Self {
        match e {
            RelaxError::Calc(c) => RunError::Calc(c),
            other => RunError::Relax(other),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> RunError + '_ {
    move |e| RunError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CalculatorSpec {
    Builtin,
    Http { url: String },
    Subprocess { command: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LlmSpec {
    Mock { dir: PathBuf },
    Live(LlmConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyChoice {
    Agent,
    Heuristic,
    Random,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fallback {
    Error,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub query: Query,
    pub supercell: [usize; 2],
    pub layers: usize,
    pub vacuum: f64,
    pub shift: f64,
    pub strategy: StrategyChoice,
    pub calculator: CalculatorSpec,
    /// Overrides the built-in LJ cutoff.
    pub cutoff: Option<f64>,
    pub calc_timeout: f64,
    pub llm: Option<LlmSpec>,
    pub agent: AgentConfig,
    pub fallback: Fallback,
    pub placement: PlacementParams,
    pub fire: FireParams,
    pub anomaly: AnomalyThresholds,
    pub heuristic_binding_index: usize,
    pub n_random: usize,
    pub seed: u64,
    pub parallelism: usize,
    pub output: PathBuf,
    pub timestamps: bool,
}

impl RunConfig {
    pub fn new(query: Query) -> Self {
        RunConfig {
            query,
            supercell: [2, 2],
            layers: 3,
            vacuum: 15.0,
            shift: 0.0,
            strategy: StrategyChoice::Heuristic,
            calculator: CalculatorSpec::Builtin,
            cutoff: None,
            calc_timeout: 60.0,
            llm: None,
            agent: AgentConfig::default(),
            fallback: Fallback::Error,
            placement: PlacementParams::default(),
            fire: FireParams::default(),
            anomaly: AnomalyThresholds::default(),
            heuristic_binding_index: 0,
            n_random: 50,
            seed: 0,
            parallelism: 1,
            output: PathBuf::from("adsorb-out"),
            timestamps: true,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        self.fire.validate()?;
        if self.parallelism == 0 {
            return Err(RunError::Config("parallelism must be ≥ 1".into()));
        }
        if self.supercell.contains(&0) {
            return Err(RunError::Config("supercell repeats must be ≥ 1".into()));
        }
        let needs_llm = matches!(self.strategy, StrategyChoice::Agent | StrategyChoice::All);
        if needs_llm && self.llm.is_none() {
            return Err(RunError::Config(
                "agent strategy needs an llm (mock:<dir> or live)".into(),
            ));
        }
        if let Some(LlmSpec::Live(c)) = &self.llm {
            c.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemEcho {
    pub adsorbate: String,
    pub catalyst: String,
    pub miller: [i32; 3],
    pub slab_formula: String,
    pub n_slab_atoms: usize,
    pub adsorbate_atoms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationReport {
    pub id: usize,
    pub strategy: placement::Strategy,
    pub site_kind: SiteKind,
    pub site: [f64; 3],
    pub variant: usize,
    pub status: Status,
    pub steps: usize,
    pub energy: f64,
    pub delta_e: f64,
    pub max_force: f64,
    pub anomalies: AnomalyFlags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub system: SystemEcho,
    pub strategy: StrategyChoice,
    pub solution: Option<Solution>,
    pub binding_indices: Option<Vec<usize>>,
    pub transcript: Option<Vec<TranscriptEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_reason: Option<String>,
    pub references: References,
    pub configurations: Vec<ConfigurationReport>,
    pub delta_e: Vec<f64>,
    pub delta_e_ads: Option<f64>,
    pub argmin: Option<usize>,
    pub n_init: usize,
    pub n_valid: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
    pub versions: BTreeMap<String, String>,
    pub config: RunConfig,
    pub fixture_hashes: BTreeMap<String, String>,
}

/// One strategy's outcome inside a `strategy = all` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub delta_e_ads: Option<f64>,
    pub n_init: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub agent: Option<StrategySummary>,
    pub heuristic: StrategySummary,
    pub random: StrategySummary,
    /// Best of heuristic and random, with their combined count.
    pub algorithm: StrategySummary,
    pub rsr_percent: Option<f64>,
}

pub fn load_or_build_slab(c: &RunConfig) -> Result<Structure, RunError> {
    if let Some(path) = &c.query.slab_path {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        return Ok(parse_extxyz(&text)?);
    }
    let bulk = LatticeTable::default().bulk_for_formula(&c.query.catalyst)?;
    let mut meta = SlabMetadata::new(&c.query.catalyst, c.query.miller, c.layers);
    meta.vacuum = c.vacuum;
    meta.shift = c.shift;
    Ok(build_slab(&bulk, &meta, (c.supercell[0], c.supercell[1]))?)
}

pub fn make_calculator(c: &RunConfig, ads: &AdsorbateSpec) -> Result<Box<dyn Calculator>, RunError> {
    Ok(match &c.calculator {
        CalculatorSpec::Builtin => {
            let mut params = CalcParams::default();
            if let Some(rc) = c.cutoff {
                params.cutoff = rc;
            }
            Box::new(BuiltinCalculator::new(params).with_adsorbate(ads))
        }
        CalculatorSpec::Http { url } => Box::new(HttpCalculator::new(url, c.calc_timeout)),
        CalculatorSpec::Subprocess { command } => Box::new(SubprocessCalculator::new(command.clone(), c.calc_timeout)?),
    })
}

/// sha256 of every JSON fixture in a mock directory, by file name.
pub fn fixture_hashes(dir: &Path) -> Result<BTreeMap<String, String>, RunError> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.extension().is_some_and(|x| x == "json") {
            let bytes = std::fs::read(&path).map_err(io_err(&path))?;
            let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            out.insert(name, crate::sha256_hex(&bytes));
        }
    }
    Ok(out)
}

fn chat_backend(c: &RunConfig) -> Result<Box<dyn ChatBackend>, RunError> {
    match c.llm.as_ref() {
        Some(LlmSpec::Mock { dir }) => Ok(Box::new(MockChat::load(dir, &c.query.system())?)),
        Some(LlmSpec::Live(cfg)) => Ok(Box::new(HttpChat::from_env(cfg.clone())?)),
        None => Err(RunError::Config("no llm configured".into())),
    }
}

struct Prepared {
    slab: Structure,
    ads: AdsorbateSpec,
    calc: Box<dyn Calculator>,
    refs: References,
    pool: rayon::ThreadPool,
}

fn prepare(c: &RunConfig, cache: &ReferenceCache) -> Result<Prepared, RunError> {
    c.validate()?;
    let slab = load_or_build_slab(c)?;
    let ads = adsorbate_from_registry(&c.query.adsorbate)?;
    let calc = make_calculator(c, &ads)?;
    let refs = cache.get_or_compute(&slab, &ads, calc.as_ref(), &c.fire)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(c.parallelism)
        .build()
        .map_err(|e| RunError::Config(e.to_string()))?;
    Ok(Prepared {
        slab,
        ads,
        calc,
        refs,
        pool,
    })
}

struct AgentPlan {
    outcome: Option<agent::AgentOutcome>,
    transcript: Option<Vec<TranscriptEntry>>,
    fallback_reason: Option<String>,
    configs: Vec<Configuration>,
}

fn agent_configurations(c: &RunConfig, p: &Prepared) -> Result<AgentPlan, (RunError, Option<Vec<TranscriptEntry>>)> {
    let mut chat = chat_backend(c).map_err(|e| (e, None))?;
    match agent::run_agent_loop(&c.query, &p.slab, &p.ads, chat.as_mut(), &c.agent) {
        Ok(out) => {
            let configs =
                placement::generate_configurations(&p.slab, &p.ads, &out.solution, &out.binding_indices, &c.placement)
                    .map_err(|e| (e.into(), Some(out.transcript.clone())))?;
            Ok(AgentPlan {
                transcript: Some(out.transcript.clone()),
                outcome: Some(out),
                fallback_reason: None,
                configs,
            })
        }
        Err(f) if c.fallback == Fallback::Heuristic => {
            let configs = heuristic(c, p).map_err(|e| (e, Some(f.transcript.clone())))?;
            Ok(AgentPlan {
                outcome: None,
                transcript: Some(f.transcript),
                fallback_reason: Some(f.error.to_string()),
                configs,
            })
        }
        Err(f) => Err((RunError::Agent(f.error), Some(f.transcript))),
    }
}

fn heuristic(c: &RunConfig, p: &Prepared) -> Result<Vec<Configuration>, RunError> {
    Ok(placement::heuristic_configurations(
        &p.slab,
        &p.ads,
        c.heuristic_binding_index,
        c.seed,
        &c.placement,
    )?)
}

fn random(c: &RunConfig, p: &Prepared) -> Result<Vec<Configuration>, RunError> {
    Ok(placement::random_configurations(
        &p.slab,
        &p.ads,
        c.n_random,
        c.seed,
        &c.placement,
    )?)
}

/// Relaxes every configuration on the pool. Results keep input order.
pub fn relax_all(
    configs: &[Configuration],
    calc: &dyn Calculator,
    fire: &FireParams,
    anomaly: &AnomalyThresholds,
    pool: &rayon::ThreadPool,
) -> Result<Vec<RelaxationResult>, RelaxError> {
    pool.install(|| {
        configs
            .par_iter()
            .map(|cfg| relax::relax(cfg, calc, fire, anomaly, false))
            .collect()
    })
}

fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([("adsorb-core".to_string(), env!("CARGO_PKG_VERSION").to_string())])
}

fn site_triplet(s: &Site) -> [f64; 3] {
    [s.position.x, s.position.y, s.position.z]
}

/// Result of one strategy, plus the structures needed to persist it.
pub struct StrategyRun {
    pub report: RunReport,
    pub best: Option<Structure>,
    pub failure: Option<RunError>,
}

impl StrategyRun {
    pub fn exit_code(&self) -> i32 {
        self.failure.as_ref().map_or(EXIT_OK, RunError::exit_code)
    }
}

fn run_strategy(c: &RunConfig, p: &Prepared, which: StrategyChoice) -> Result<StrategyRun, RunError> {
    let started = Instant::now();
    let (mut solution, mut binding, mut transcript, mut fallback_reason) = (None, None, None, None);
    let mut fixtures = BTreeMap::new();
    if let Some(LlmSpec::Mock { dir }) = &c.llm {
        if which == StrategyChoice::Agent {
            fixtures = fixture_hashes(dir)?;
        }
    }
    let report = |configs: &[Configuration], results: &[RelaxationResult], failure: Option<&RunError>| RunReport {
        system: SystemEcho {
            adsorbate: c.query.adsorbate.clone(),
            catalyst: c.query.catalyst.clone(),
            miller: c.query.miller,
            slab_formula: p.slab.formula(),
            n_slab_atoms: p.slab.len(),
            adsorbate_atoms: p.ads.symbols().iter().map(|s| s.to_string()).collect(),
        },
        strategy: which,
        solution: None,
        binding_indices: None,
        transcript: None,
        fallback_reason: None,
        references: p.refs,
        configurations: configs
            .iter()
            .zip(results)
            .enumerate()
            .map(|(id, (cfg, r))| ConfigurationReport {
                id,
                strategy: cfg.provenance.strategy,
                site_kind: cfg.provenance.site.kind,
                site: site_triplet(&cfg.provenance.site),
                variant: cfg.provenance.variant,
                status: r.status,
                steps: r.steps,
                energy: r.energy,
                delta_e: r.energy - p.refs.e_slab - p.refs.e_gas,
                max_force: r.max_force,
                anomalies: r.anomalies.clone(),
                rejection: r.rejection(),
            })
            .collect(),
        delta_e: results
            .iter()
            .map(|r| r.energy - p.refs.e_slab - p.refs.e_gas)
            .collect(),
        delta_e_ads: None,
        argmin: None,
        n_init: configs.len(),
        n_valid: results.iter().filter(|r| r.is_valid()).count(),
        seed: c.seed,
        error: failure.map(|e| e.to_string()),
        wall_time_s: None,
        versions: versions(),
        config: c.clone(),
        fixture_hashes: BTreeMap::new(),
    };

    let configs = match which {
        StrategyChoice::Agent => match agent_configurations(c, p) {
            Ok(plan) => {
                if let Some(out) = &plan.outcome {
                    solution = Some(out.solution.clone());
                    binding = Some(out.binding_indices.clone());
                }
                transcript = plan.transcript;
                fallback_reason = plan.fallback_reason;
                plan.configs
            }
            Err((e, t)) => {
                let mut r = report(&[], &[], Some(&e));
                r.transcript = t;
                r.fixture_hashes = fixtures;
                return Ok(StrategyRun {
                    report: r,
                    best: None,
                    failure: Some(e),
                });
            }
        },
        StrategyChoice::Heuristic => heuristic(c, p)?,
        StrategyChoice::Random => random(c, p)?,
        StrategyChoice::All => return Err(RunError::Config("`all` is not a single strategy".into())),
    };

    let results = relax_all(&configs, p.calc.as_ref(), &c.fire, &c.anomaly, &p.pool)?;
    let selection = relax::adsorption_energy(&results, p.refs.e_slab, p.refs.e_gas);
    let failure = selection.as_ref().err().map(|e| RunError::from(e.clone()));
    let mut r = report(&configs, &results, failure.as_ref());
    r.solution = solution;
    r.binding_indices = binding;
    r.transcript = transcript;
    r.fallback_reason = fallback_reason;
    r.fixture_hashes = fixtures;
    let mut best = None;
    if let Ok(rec) = &selection {
        r.delta_e_ads = Some(rec.delta_e_ads);
        r.argmin = Some(rec.argmin);
        best = Some(results[rec.argmin].structure.clone());
    }
    if c.timestamps {
        r.wall_time_s = Some(started.elapsed().as_secs_f64());
    }
    Ok(StrategyRun {
        report: r,
        best,
        failure,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| RunError::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

/// Writes report.json, best.extxyz (when a minimum exists) and
/// transcript.json (agent mode) into `dir`.
pub fn persist(run: &StrategyRun, dir: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_json(&dir.join("report.json"), &run.report)?;
    if let Some(best) = &run.best {
        let path = dir.join("best.extxyz");
        std::fs::write(&path, write_extxyz(best)).map_err(io_err(&path))?;
    }
    if let Some(t) = &run.report.transcript {
        write_json(&dir.join("transcript.json"), t)?;
    }
    Ok(())
}

pub struct RunOutcome {
    pub runs: Vec<StrategyRun>,
    pub comparison: Option<ComparisonReport>,
}

impl RunOutcome {
    /// The first failing strategy decides the exit code.
    pub fn exit_code(&self) -> i32 {
        self.runs
            .iter()
            .map(StrategyRun::exit_code)
            .find(|&c| c != EXIT_OK)
            .unwrap_or(EXIT_OK)
    }
}

fn summary(r: &RunReport) -> StrategySummary {
    StrategySummary {
        delta_e_ads: r.delta_e_ads,
        n_init: r.n_init,
    }
}

/// Runs the configured strategy (or all three) and persists the results
/// under `config.output` (per-strategy subdirectories for `all`).
pub fn run(c: &RunConfig) -> Result<RunOutcome, RunError> {
    let cache = ReferenceCache::in_memory();
    let p = prepare(c, &cache)?;
    if c.strategy != StrategyChoice::All {
        let r = run_strategy(c, &p, c.strategy)?;
        persist(&r, &c.output)?;
        return Ok(RunOutcome {
            runs: vec![r],
            comparison: None,
        });
    }
    let mut runs = Vec::new();
    for which in [StrategyChoice::Agent, StrategyChoice::Heuristic, StrategyChoice::Random] {
        let r = run_strategy(c, &p, which)?;
        let name = serde_json::to_value(which).expect("serialisable");
        persist(&r, &c.output.join(name.as_str().unwrap_or("run")))?;
        runs.push(r);
    }
    let (h, rnd) = (summary(&runs[1].report), summary(&runs[2].report));
    let best = [h.delta_e_ads, rnd.delta_e_ads].into_iter().flatten().reduce(f64::min);
    let algorithm = StrategySummary {
        delta_e_ads: best,
        n_init: h.n_init + rnd.n_init,
    };
    let agent = (runs[0].failure.is_none() || runs[0].report.n_init > 0).then(|| summary(&runs[0].report));
    let comparison = ComparisonReport {
        rsr_percent: agent
            .as_ref()
            .filter(|_| algorithm.n_init > 0)
            .map(|a| 100.0 * a.n_init as f64 / algorithm.n_init as f64),
        agent,
        heuristic: h,
        random: rnd,
        algorithm,
    };
    write_json(&c.output.join("comparison.json"), &comparison)?;
    Ok(RunOutcome {
        runs,
        comparison: Some(comparison),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(dir: &Path, strategy: StrategyChoice) -> RunConfig {
        let mut c = RunConfig::new(Query::new("H", "Pt", [1, 1, 1]).unwrap());
        c.strategy = strategy;
        c.fire.fmax = 1e-3;
        c.fire.max_steps = 1000;
        c.seed = 7;
        c.output = dir.to_path_buf();
        c.timestamps = false;
        c.llm = Some(LlmSpec::Mock {
            dir: Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/mocks"),
        });
        c
    }

    #[test]
    fn heuristic_run_writes_a_consistent_report() {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&config(dir.path(), StrategyChoice::Heuristic)).unwrap();
        assert_eq!(out.exit_code(), EXIT_OK);
        let r = &out.runs[0].report;
        assert_eq!(r.n_init, 24);
        let min = r
            .configurations
            .iter()
            .filter(|c| c.rejection.is_none())
            .map(|c| c.delta_e)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(r.delta_e_ads, Some(min));
        for f in ["report.json", "best.extxyz"] {
            assert!(dir.path().join(f).is_file(), "{f}");
        }
        assert!(!dir.path().join("transcript.json").exists());
    }

    #[test]
    fn agent_run_is_byte_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut ca = config(a.path(), StrategyChoice::Agent);
        let mut cb = config(b.path(), StrategyChoice::Agent);
        ca.parallelism = 1;
        cb.parallelism = 3;
        cb.output = ca.output.clone();
        // the config echo differs in `parallelism`; everything else is identical
        let strip = |bytes: &[u8]| {
            let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
            v["config"]["parallelism"] = serde_json::Value::Null;
            serde_json::to_vec_pretty(&v).unwrap()
        };
        run(&ca).unwrap();
        let first = std::fs::read(a.path().join("report.json")).unwrap();
        let transcript = std::fs::read(a.path().join("transcript.json")).unwrap();
        run(&cb).unwrap();
        assert_eq!(
            strip(&first),
            strip(&std::fs::read(a.path().join("report.json")).unwrap())
        );
        assert_eq!(transcript, std::fs::read(a.path().join("transcript.json")).unwrap());
        run(&ca).unwrap();
        assert_eq!(first, std::fs::read(a.path().join("report.json")).unwrap());
        let r: RunReport = serde_json::from_slice(&first).unwrap();
        assert_eq!(r.solution.unwrap().site_type, SiteKind::Hollow);
        assert!(r.fixture_hashes.contains_key("h-pt111.json"));
        assert!(a.path().join("transcript.json").is_file());
    }

    #[test]
    fn agent_failure_maps_to_exit_three_or_falls_back() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(dir.path(), StrategyChoice::Agent);
        c.query = Query::new("NNH", "Pt", [1, 1, 1]).unwrap();
        c.llm = Some(LlmSpec::Mock {
            dir: Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/mocks"),
        });
        let out = run(&c).unwrap();
        assert_eq!(out.exit_code(), EXIT_AGENT_FAILURE);
        assert!(dir.path().join("transcript.json").is_file());

        c.fallback = Fallback::Heuristic;
        let out = run(&c).unwrap();
        let r = &out.runs[0].report;
        assert!(r.fallback_reason.is_some());
        assert_eq!(r.n_init, 24);
    }

    #[test]
    fn all_filtered_maps_to_exit_two() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(dir.path(), StrategyChoice::Heuristic);
        // every relaxed H sits further than 0.1 Å from the surface
        c.anomaly.desorption_distance = 0.1;
        let out = run(&c).unwrap();
        assert_eq!(out.exit_code(), EXIT_ALL_FILTERED);
        assert!(out.runs[0].report.error.as_deref().unwrap().contains("filtered"));
        assert!(!dir.path().join("best.extxyz").exists());
    }

    #[test]
    fn missing_llm_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(dir.path(), StrategyChoice::Agent);
        c.llm = None;
        assert!(matches!(run(&c), Err(RunError::Config(_))));
    }
}
