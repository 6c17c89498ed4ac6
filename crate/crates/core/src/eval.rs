//! Comparison metrics between agent and algorithmic searches: success
//! ratio, lower-energy discovery ratio, reduced search space ratio and
//! cross-trial consistency.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Energies within this of a threshold count as on it (the tables carry
/// three decimals, so differences like 0.1 are not exact in binary).
pub const BOUNDARY_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("row {row}: {message}")]
    Schema { row: usize, message: String },
    #[error("no records")]
    Empty,
    #[error("system {0} has no algorithm runs")]
    MissingAlgorithm(usize),
    #[error("system {system} has a zero algorithm configuration count")]
    ZeroAlgorithmCount { system: usize },
    #[error("system {system} has {got} runs, expected 3")]
    WrongRunCount { system: usize, got: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Agent,
    Algorithm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub system_id: usize,
    pub method: Method,
    pub run: usize,
    pub e_min: f64,
    /// Mean counts from aggregated tables are fractional.
    pub n_init: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SrMode {
    /// |E_agent − E_algorithm| ≤ ε
    Strict,
    /// E_agent ≤ E_algorithm + ε
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalParams {
    pub epsilon: f64,
    pub sr_mode: SrMode,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            epsilon: 0.1,
            sr_mode: SrMode::Lenient,
        }
    }
}

impl EvalParams {
    pub fn validate(&self) -> Result<(), EvalError> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(EvalError::InvalidParams(format!(
                "epsilon {} must be positive",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Hits over (system, run) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub percent: f64,
    pub hits: usize,
    pub total: usize,
    pub members: Vec<(usize, usize)>,
}

impl Ratio {
    fn from_members(members: Vec<(usize, usize)>, total: usize) -> Self {
        Ratio {
            percent: 100.0 * members.len() as f64 / total as f64,
            hits: members.len(),
            total,
            members,
        }
    }

    pub fn systems(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.members.iter().map(|m| m.0).collect();
        set.into_iter().collect()
    }
}

fn row_err(row: usize) -> impl Fn(csv::Error) -> EvalError {
    move |e| EvalError::Schema {
        row,
        message: e.to_string(),
    }
}

fn read_rows<T: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<T>, EvalError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    // row numbers count the header as row 1
    for (i, rec) in reader.deserialize().enumerate() {
        out.push(rec.map_err(row_err(i + 2))?);
    }
    if out.is_empty() {
        return Err(EvalError::Schema {
            row: 1,
            message: "no data rows".into(),
        });
    }
    Ok(out)
}

fn read_file(path: &Path) -> Result<String, EvalError> {
    std::fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn check_finite(row: usize, pairs: &[(&str, f64)]) -> Result<(), EvalError> {
    for (name, v) in pairs {
        if !v.is_finite() {
            return Err(EvalError::Schema {
                row,
                message: format!("{name} is not finite"),
            });
        }
    }
    Ok(())
}

/// One row per system: agent mean over runs next to the algorithm mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub system_id: usize,
    pub adsorbate: String,
    pub catalyst: String,
    pub agent_mean: f64,
    pub agent_std: f64,
    pub algo_mean: f64,
    pub algo_std: f64,
    pub agent_ninit_mean: f64,
    pub algo_ninit: f64,
}

/// One row per (system, run).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub system_id: usize,
    pub run: usize,
    pub agent_e: f64,
    pub agent_ninit: f64,
    pub algo_mean: f64,
    pub algo_std: f64,
    pub algo_ninit: f64,
}

pub fn parse_summary_csv(text: &str) -> Result<Vec<SummaryRow>, EvalError> {
    let rows: Vec<SummaryRow> = read_rows(text)?;
    for (i, r) in rows.iter().enumerate() {
        check_finite(
            i + 2,
            &[
                ("agent_mean", r.agent_mean),
                ("algo_mean", r.algo_mean),
                ("agent_ninit_mean", r.agent_ninit_mean),
            ],
        )?;
    }
    Ok(rows)
}

pub fn parse_runs_csv(text: &str) -> Result<Vec<RunRow>, EvalError> {
    let rows: Vec<RunRow> = read_rows(text)?;
    for (i, r) in rows.iter().enumerate() {
        check_finite(i + 2, &[("agent_e", r.agent_e), ("algo_mean", r.algo_mean)])?;
    }
    Ok(rows)
}

pub fn summary_records(rows: &[SummaryRow]) -> Vec<TrialRecord> {
    rows.iter()
        .flat_map(|r| {
            [
                TrialRecord {
                    system_id: r.system_id,
                    method: Method::Agent,
                    run: 1,
                    e_min: r.agent_mean,
                    n_init: r.agent_ninit_mean,
                },
                TrialRecord {
                    system_id: r.system_id,
                    method: Method::Algorithm,
                    run: 1,
                    e_min: r.algo_mean,
                    n_init: r.algo_ninit,
                },
            ]
        })
        .collect()
}

/// The algorithm mean is repeated on every run row; it becomes one
/// algorithm record per run so the system mean is unchanged.
pub fn run_records(rows: &[RunRow]) -> Vec<TrialRecord> {
    rows.iter()
        .flat_map(|r| {
            [
                TrialRecord {
                    system_id: r.system_id,
                    method: Method::Agent,
                    run: r.run,
                    e_min: r.agent_e,
                    n_init: r.agent_ninit,
                },
                TrialRecord {
                    system_id: r.system_id,
                    method: Method::Algorithm,
                    run: r.run,
                    e_min: r.algo_mean,
                    n_init: r.algo_ninit,
                },
            ]
        })
        .collect()
}

/// Either fixture schema, told apart by the header.
pub fn load_records(path: &Path) -> Result<Vec<TrialRecord>, EvalError> {
    let text = read_file(path)?;
    let header = text.lines().next().unwrap_or_default();
    if header.contains("agent_mean") {
        Ok(summary_records(&parse_summary_csv(&text)?))
    } else if header.contains("agent_e") {
        Ok(run_records(&parse_runs_csv(&text)?))
    } else {
        Err(EvalError::Schema {
            row: 1,
            message: format!("unrecognised header '{header}'"),
        })
    }
}

struct Paired {
    /// (system, run, E_agent, E_algorithm)
    energies: Vec<(usize, usize, f64, f64)>,
}

fn pair(records: &[TrialRecord]) -> Result<Paired, EvalError> {
    let mut algo: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.method == Method::Algorithm) {
        algo.entry(r.system_id).or_default().push(r.e_min);
    }
    let mut energies = Vec::new();
    for r in records.iter().filter(|r| r.method == Method::Agent) {
        let runs = algo.get(&r.system_id).ok_or(EvalError::MissingAlgorithm(r.system_id))?;
        let mean = runs.iter().sum::<f64>() / runs.len() as f64;
        energies.push((r.system_id, r.run, r.e_min, mean));
    }
    if energies.is_empty() {
        return Err(EvalError::Empty);
    }
    energies.sort_by_key(|e| (e.0, e.1));
    Ok(Paired { energies })
}

fn ratio(records: &[TrialRecord], hit: impl Fn(f64, f64) -> bool) -> Result<Ratio, EvalError> {
    let p = pair(records)?;
    let members = p
        .energies
        .iter()
        .filter(|e| hit(e.2, e.3))
        .map(|e| (e.0, e.1))
        .collect();
    Ok(Ratio::from_members(members, p.energies.len()))
}

pub fn success_ratio(records: &[TrialRecord], p: &EvalParams) -> Result<Ratio, EvalError> {
    p.validate()?;
    let eps = p.epsilon + BOUNDARY_SLACK;
    match p.sr_mode {
        SrMode::Strict => ratio(records, |a, g| (a - g).abs() <= eps),
        SrMode::Lenient => ratio(records, |a, g| a <= g + eps),
    }
}

pub fn ledr(records: &[TrialRecord], p: &EvalParams) -> Result<Ratio, EvalError> {
    p.validate()?;
    ratio(records, |a, g| a <= g - p.epsilon + BOUNDARY_SLACK)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsrEntry {
    pub system_id: usize,
    pub run: usize,
    pub n_agent: f64,
    pub n_algorithm: f64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsrReport {
    pub entries: Vec<RsrEntry>,
    pub per_system: BTreeMap<usize, f64>,
    /// Mean over all (system, run) pairs.
    pub mean: f64,
    pub min: RsrEntry,
    pub max: RsrEntry,
}

pub fn rsr(records: &[TrialRecord]) -> Result<RsrReport, EvalError> {
    let mut algo: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.method == Method::Algorithm) {
        algo.entry(r.system_id).or_default().push(r.n_init);
    }
    let mut entries = Vec::new();
    for r in records.iter().filter(|r| r.method == Method::Agent) {
        let counts = algo.get(&r.system_id).ok_or(EvalError::MissingAlgorithm(r.system_id))?;
        let n_algorithm = counts.iter().sum::<f64>() / counts.len() as f64;
        if n_algorithm <= 0.0 {
            return Err(EvalError::ZeroAlgorithmCount { system: r.system_id });
        }
        entries.push(RsrEntry {
            system_id: r.system_id,
            run: r.run,
            n_agent: r.n_init,
            n_algorithm,
            percent: 100.0 * r.n_init / n_algorithm,
        });
    }
    if entries.is_empty() {
        return Err(EvalError::Empty);
    }
    entries.sort_by_key(|e| (e.system_id, e.run));
    let mut grouped: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for e in &entries {
        grouped.entry(e.system_id).or_default().push(e.percent);
    }
    let per_system = grouped
        .into_iter()
        .map(|(k, v)| (k, v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    let mean = entries.iter().map(|e| e.percent).sum::<f64>() / entries.len() as f64;
    // first occurrence wins on ties, so the extremes are order-stable
    let pick = |better: fn(f64, f64) -> bool| {
        entries
            .iter()
            .fold(None::<&RsrEntry>, |best, e| match best {
                Some(b) if !better(e.percent, b.percent) => Some(b),
                _ => Some(e),
            })
            .cloned()
            .expect("non-empty")
    };
    Ok(RsrReport {
        min: pick(|a, b| a < b),
        max: pick(|a, b| a > b),
        per_system,
        mean,
        entries,
    })
}

fn as_set(a: &[String]) -> BTreeSet<&str> {
    a.iter().map(String::as_str).collect()
}

fn sorted(a: &[String]) -> Vec<&str> {
    let mut v: Vec<&str> = a.iter().map(String::as_str).collect();
    v.sort_unstable();
    v
}

fn pair_consistent(a: &[String], b: &[String]) -> bool {
    if sorted(a) == sorted(b) {
        return true;
    }
    if a.len().abs_diff(b.len()) > 1 {
        return false;
    }
    let (sa, sb) = (as_set(a), as_set(b));
    match a.len().cmp(&b.len()) {
        std::cmp::Ordering::Less => sa.is_subset(&sb),
        std::cmp::Ordering::Greater => sb.is_subset(&sa),
        // equal length: neither is "the shorter", so either containment will do
        std::cmp::Ordering::Equal => sa.is_subset(&sb) || sb.is_subset(&sa),
    }
}

/// Three trials agree when every pair is equal up to order, or differs in
/// length by at most one with the shorter's elements all in the longer.
pub fn check_consistency(arrays: &[Vec<String>; 3]) -> bool {
    (0..3).all(|i| ((i + 1)..3).all(|j| pair_consistent(&arrays[i], &arrays[j])))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialArrays {
    pub surface_binding_atoms: Vec<String>,
    pub adsorbate_binding_atoms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionTriple {
    pub system_id: usize,
    #[serde(default)]
    pub adsorbate: String,
    #[serde(default)]
    pub catalyst: String,
    pub runs: Vec<TrialArrays>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub total: f64,
    pub surface: f64,
    pub adsorbate: f64,
    pub n: usize,
    pub surface_inconsistent: Vec<usize>,
    pub adsorbate_inconsistent: Vec<usize>,
}

pub fn consistency_ratio(triples: &[SolutionTriple]) -> Result<ConsistencyReport, EvalError> {
    if triples.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut surf_bad, mut ads_bad, mut total_ok) = (Vec::new(), Vec::new(), 0usize);
    for t in triples {
        let runs: &[TrialArrays; 3] = t.runs.as_slice().try_into().map_err(|_| EvalError::WrongRunCount {
            system: t.system_id,
            got: t.runs.len(),
        })?;
        let s = check_consistency(&runs.clone().map(|r| r.surface_binding_atoms));
        let a = check_consistency(&runs.clone().map(|r| r.adsorbate_binding_atoms));
        if !s {
            surf_bad.push(t.system_id);
        }
        if !a {
            ads_bad.push(t.system_id);
        }
        total_ok += usize::from(s && a);
    }
    let n = triples.len();
    let pct = |k: usize| 100.0 * k as f64 / n as f64;
    Ok(ConsistencyReport {
        total: pct(total_ok),
        surface: pct(n - surf_bad.len()),
        adsorbate: pct(n - ads_bad.len()),
        n,
        surface_inconsistent: surf_bad,
        adsorbate_inconsistent: ads_bad,
    })
}

pub fn load_solutions(path: &Path) -> Result<Vec<SolutionTriple>, EvalError> {
    let text = read_file(path)?;
    serde_json::from_str(&text).map_err(|e| EvalError::Schema {
        row: e.line(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub epsilon: f64,
    pub sr_strict: Ratio,
    pub sr_lenient: Ratio,
    pub ledr: Ratio,
    pub rsr: RsrReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consistency: Option<ConsistencyReport>,
}

pub fn evaluate(
    records: &[TrialRecord],
    solutions: Option<&[SolutionTriple]>,
    epsilon: f64,
) -> Result<EvalReport, EvalError> {
    let strict = EvalParams {
        epsilon,
        sr_mode: SrMode::Strict,
    };
    let lenient = EvalParams {
        epsilon,
        sr_mode: SrMode::Lenient,
    };
    Ok(EvalReport {
        epsilon,
        sr_strict: success_ratio(records, &strict)?,
        sr_lenient: success_ratio(records, &lenient)?,
        ledr: ledr(records, &lenient)?,
        rsr: rsr(records)?,
        consistency: solutions.map(consistency_ratio).transpose()?,
    })
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut t = String::new();
        let line = |t: &mut String, name: &str, r: &Ratio| {
            let _ = writeln!(t, "{name:<12} {:>6.1} %  ({}/{})", r.percent, r.hits, r.total);
        };
        let _ = writeln!(t, "epsilon      {} eV", self.epsilon);
        line(&mut t, "SR strict", &self.sr_strict);
        line(&mut t, "SR lenient", &self.sr_lenient);
        line(&mut t, "LEDR", &self.ledr);
        let _ = writeln!(
            t,
            "RSR          {:>6.1} %  (min {:.1} % system {} run {}, max {:.1} % system {} run {})",
            self.rsr.mean,
            self.rsr.min.percent,
            self.rsr.min.system_id,
            self.rsr.min.run,
            self.rsr.max.percent,
            self.rsr.max.system_id,
            self.rsr.max.run
        );
        if let Some(c) = &self.consistency {
            let _ = writeln!(
                t,
                "consistency  {:>6.1} %  (surface {:.1} %, adsorbate {:.1} %, n = {})",
                c.total, c.surface, c.adsorbate, c.n
            );
        }
        let _ = writeln!(t, "\nsystem  run   RSR %");
        for e in &self.rsr.entries {
            let _ = writeln!(t, "{:>6} {:>4} {:>7.2}", e.system_id, e.run, e.percent);
        }
        t
    }
}
