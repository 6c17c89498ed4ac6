//! Planner → Critic → Binding Indexer loop over a chat backend.

mod chat;
mod critic;
mod parse;

pub use chat::{
    extract_content, ChatBackend, ChatError, HttpChat, LlmConfig, Message, MockChat, MockMatch, MockScript, Role,
    API_KEY_VAR, BASE_URL_VAR,
};
pub use critic::{critique_rules, CritiqueVerdict, Rule, Violation};
pub use parse::{last_json_object, normalize_orientation, normalize_site, parse_solution_block, ParseError};

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::sites::{self, SiteKind};
use crate::structures::{reduce_miller, AdsorbateSpec, Structure, StructureError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    #[serde(rename = "end-on")]
    EndOn,
    #[serde(rename = "side-on")]
    SideOn,
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::EndOn => "end-on",
            Orientation::SideOn => "side-on",
        })
    }
}

/// The planner's adsorption hypothesis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub site_type: SiteKind,
    pub surface_binding_atoms: Vec<String>,
    pub adsorbate_binding_atoms: Vec<String>,
    pub orientation: Orientation,
    #[serde(default)]
    pub reasoning: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub adsorbate: String,
    pub catalyst: String,
    pub miller: [i32; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slab_path: Option<PathBuf>,
}

impl Query {
    pub fn new(adsorbate: &str, catalyst: &str, miller: [i32; 3]) -> Result<Self, StructureError> {
        if adsorbate.trim().is_empty() || catalyst.trim().is_empty() {
            return Err(StructureError::Invalid("adsorbate and catalyst must be named".into()));
        }
        Ok(Query {
            adsorbate: adsorbate.trim().to_string(),
            catalyst: catalyst.trim().to_string(),
            miller: reduce_miller(miller)?,
            slab_path: None,
        })
    }

    /// Fixture key, e.g. `NNH/CuPd3(111)`.
    pub fn system(&self) -> String {
        let m: String = self.miller.iter().map(|i| i.to_string()).collect();
        format!("{}/{}({m})", self.adsorbate, self.catalyst)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    /// Planner parse attempts per cycle, and planner/critic cycles.
    pub max_retries: usize,
    /// Ask the chat backend for an advisory review after the rule checks.
    pub llm_critic: bool,
    /// Ask the chat backend for binding indices (validated, with fallback).
    pub llm_indexer: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            max_retries: 3,
            llm_critic: false,
            llm_indexer: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Module {
    Planner,
    Critic,
    Indexer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub module: Module,
    pub cycle: usize,
    /// Empty for rule-only steps that make no chat call.
    pub messages: Vec<Message>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<CritiqueVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error("planner gave no usable solution after {attempts} attempt(s) ({reason}); last reply: {last_reply}")]
    Planner {
        attempts: usize,
        reason: String,
        last_reply: String,
    },
    #[error("critic rejected the solution in all {cycles} cycle(s): {}", violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Rejected { cycles: usize, violations: Vec<Violation> },
    #[error("binding index derivation: {0}")]
    Derivation(String),
    #[error(transparent)]
    Site(#[from] sites::SiteError),
}

/// An agent error together with everything said before it happened.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{error}")]
pub struct AgentFailure {
    #[source]
    pub error: AgentError,
    pub transcript: Vec<TranscriptEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub solution: Solution,
    pub binding_indices: Vec<usize>,
    pub transcript: Vec<TranscriptEntry>,
}

impl AgentOutcome {
    pub fn planner_calls(&self) -> usize {
        count_calls(&self.transcript, Module::Planner)
    }
}

pub fn count_calls(transcript: &[TranscriptEntry], module: Module) -> usize {
    transcript
        .iter()
        .filter(|e| e.module == module && e.reply.is_some())
        .count()
}

pub mod prompts {
    pub const REASONING_QUESTIONS: &str = include_str!("../../../../assets/prompts/reasoning-questions.txt");
    pub const KNOWLEDGE: &str = include_str!("../../../../assets/prompts/knowledge-prompt.txt");
    pub const PLANNER_SYSTEM: &str = include_str!("../../../../assets/prompts/planner-system.txt");
    pub const CRITIC_SYSTEM: &str = include_str!("../../../../assets/prompts/critic-system.txt");
    pub const INDEXER_SYSTEM: &str = include_str!("../../../../assets/prompts/indexer-system.txt");

    pub fn planner_system() -> String {
        PLANNER_SYSTEM.replace("{reasoning_questions}", REASONING_QUESTIONS.trim_end())
    }

    pub fn critic_system() -> String {
        CRITIC_SYSTEM.replace("{knowledge}", KNOWLEDGE.trim_end())
    }
}

/// Distinct top-layer elements, sorted.
pub fn surface_elements(slab: &Structure) -> Result<Vec<String>, sites::SiteError> {
    let idx = sites::surface_atoms(slab, sites::DEFAULT_LAYER_WINDOW)?;
    let mut out: Vec<String> = idx.iter().map(|&i| slab.atoms[i].symbol().to_string()).collect();
    out.sort();
    out.dedup();
    Ok(out)
}

/// Plain-text description of the exposed layer for the planner prompt.
pub fn slab_summary(slab: &Structure) -> Result<String, sites::SiteError> {
    let idx = sites::surface_atoms(slab, sites::DEFAULT_LAYER_WINDOW)?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for &i in &idx {
        *counts.entry(slab.atoms[i].symbol()).or_default() += 1;
    }
    let layer = counts
        .iter()
        .map(|(e, n)| format!("{e} ×{n}"))
        .collect::<Vec<_>>()
        .join(", ");
    let (ontop, bridge, hollow) = sites::count_by_kind(&sites::enumerate_heuristic_sites(slab)?);
    Ok(format!(
        "Slab formula: {}. Top layer ({} atoms): {layer}. Distinct sites in the cell: {ontop} ontop, {bridge} bridge, {hollow} hollow.",
        slab.formula(),
        idx.len()
    ))
}

fn planner_user(q: &Query, ads: &AdsorbateSpec, summary: &str) -> String {
    format!(
        "Adsorbate: {} (atoms in order: {})\nCatalyst: {} surface ({} {} {})\n{summary}",
        q.adsorbate,
        ads.symbols().join(", "),
        q.catalyst,
        q.miller[0],
        q.miller[1],
        q.miller[2]
    )
}

fn corrective(e: &ParseError) -> String {
    format!(
        "Your answer could not be read ({e}). Reply again and end with exactly one JSON object with the keys site_type, surface_binding_atoms, adsorbate_binding_atoms, orientation and reasoning."
    )
}

/// One planning round: chat, parse, and on parse failure ask again with a
/// corrective message, up to `max_retries` replies.
fn plan(
    chat: &mut dyn ChatBackend,
    mut messages: Vec<Message>,
    max_retries: usize,
    cycle: usize,
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<Solution, AgentError> {
    let mut last = (String::new(), String::from("no reply"));
    for _ in 0..max_retries.max(1) {
        let reply = chat.chat(&messages)?;
        let parsed = parse_solution_block(&reply);
        transcript.push(TranscriptEntry {
            module: Module::Planner,
            cycle,
            messages: messages.clone(),
            reply: Some(reply.clone()),
            verdict: None,
            note: parsed.as_ref().err().map(|e| e.to_string()),
        });
        match parsed {
            Ok(s) => return Ok(s),
            Err(e) => {
                messages.push(Message::assistant(reply.clone()));
                messages.push(Message::user(corrective(&e)));
                last = (reply, e.to_string());
            }
        }
    }
    Err(AgentError::Planner {
        attempts: max_retries.max(1),
        reason: last.1,
        last_reply: last.0,
    })
}

/// Rule checks, plus an advisory LLM review when `use_llm` is set. The review
/// can add violations but never removes rule-based ones.
pub fn critique(
    sol: &Solution,
    surface_elements: &[String],
    ads: &AdsorbateSpec,
    chat: &mut dyn ChatBackend,
    use_llm: bool,
    cycle: usize,
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<CritiqueVerdict, AgentError> {
    let mut verdict = critique_rules(sol, surface_elements, ads);
    let mut entry = TranscriptEntry {
        module: Module::Critic,
        cycle,
        messages: Vec::new(),
        reply: None,
        verdict: None,
        note: None,
    };
    if use_llm {
        let messages = vec![
            Message::system(prompts::critic_system()),
            Message::user(format!(
                "Adsorbate {} has atoms {}. Surface elements: {}.\nProposed solution: {}",
                ads.key,
                ads.symbols().join(", "),
                surface_elements.join(", "),
                serde_json::to_string(sol).expect("serialisable")
            )),
        ];
        let reply = chat.chat(&messages)?;
        let review = last_json_object(&reply);
        let rejected = review.as_ref().and_then(|m| m.get("accepted")).and_then(Value::as_bool) == Some(false);
        if rejected {
            let remarks: Vec<String> = review
                .as_ref()
                .and_then(|m| m.get("violations"))
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(|v| v.as_str().map(str::to_string)).collect())
                .unwrap_or_default();
            let remarks = if remarks.is_empty() {
                vec!["reviewer rejected the solution".to_string()]
            } else {
                remarks
            };
            verdict.violations.extend(remarks.into_iter().map(|message| Violation {
                rule: Rule::Advisory,
                message,
            }));
            verdict.accepted = false;
        }
        if review.is_none() {
            entry.note = Some("review reply had no JSON object; ignored".into());
        }
        entry.messages = messages;
        entry.reply = Some(reply);
    }
    entry.verdict = Some(verdict.clone());
    transcript.push(entry);
    Ok(verdict)
}

/// Maps each requested element to the lowest unused atom index of that
/// element, in registry order.
pub fn derive_binding_indices(sol: &Solution, ads: &AdsorbateSpec) -> Result<Vec<usize>, AgentError> {
    let symbols = ads.symbols();
    let mut used = vec![false; symbols.len()];
    sol.adsorbate_binding_atoms
        .iter()
        .map(|e| {
            let i = (0..symbols.len())
                .find(|&i| !used[i] && symbols[i] == e.as_str())
                .ok_or_else(|| {
                    AgentError::Derivation(format!("no unused {e} atom in {} ({})", ads.key, symbols.join(", ")))
                })?;
            used[i] = true;
            Ok(i)
        })
        .collect()
}

/// True when `idx` is unique, in range and element-matches the solution
/// position by position.
pub fn indices_match(sol: &Solution, ads: &AdsorbateSpec, idx: &[usize]) -> bool {
    let symbols = ads.symbols();
    let mut seen = idx.to_vec();
    seen.sort_unstable();
    seen.dedup();
    idx.len() == sol.adsorbate_binding_atoms.len()
        && seen.len() == idx.len()
        && idx
            .iter()
            .zip(&sol.adsorbate_binding_atoms)
            .all(|(&i, e)| i < symbols.len() && symbols[i] == e.as_str())
}

fn llm_indices(
    chat: &mut dyn ChatBackend,
    sol: &Solution,
    ads: &AdsorbateSpec,
    cycle: usize,
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<Option<Vec<usize>>, AgentError> {
    let messages = vec![
        Message::system(prompts::INDEXER_SYSTEM.trim_end()),
        Message::user(format!(
            "Atomic numbers: {:?}\nBinding atoms: {}",
            ads.atomic_numbers,
            sol.adsorbate_binding_atoms.join(", ")
        )),
    ];
    let reply = chat.chat(&messages)?;
    let proposed: Option<Vec<usize>> = last_json_object(&reply)
        .and_then(|m| m.get("binding_indices").cloned())
        .and_then(|v| serde_json::from_value(v).ok());
    let ok = proposed.as_ref().is_some_and(|p| indices_match(sol, ads, p));
    transcript.push(TranscriptEntry {
        module: Module::Indexer,
        cycle,
        messages,
        reply: Some(reply),
        verdict: None,
        note: (!ok).then(|| "proposal failed element-match validation; using the deterministic mapping".into()),
    });
    Ok(proposed.filter(|_| ok))
}

/// Plan, critique and re-plan with the violations until accepted or
/// `max_retries` cycles pass, then derive binding indices.
pub fn run_agent_loop(
    q: &Query,
    slab: &Structure,
    ads: &AdsorbateSpec,
    chat: &mut dyn ChatBackend,
    config: &AgentConfig,
) -> Result<AgentOutcome, AgentFailure> {
    let mut transcript = Vec::new();
    match agent_loop(q, slab, ads, chat, config, &mut transcript) {
        Ok((solution, binding_indices)) => Ok(AgentOutcome {
            solution,
            binding_indices,
            transcript,
        }),
        Err(error) => Err(AgentFailure { error, transcript }),
    }
}

fn agent_loop(
    q: &Query,
    slab: &Structure,
    ads: &AdsorbateSpec,
    chat: &mut dyn ChatBackend,
    config: &AgentConfig,
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<(Solution, Vec<usize>), AgentError> {
    let surface = surface_elements(slab)?;
    let system = Message::system(prompts::planner_system());
    let user = planner_user(q, ads, &slab_summary(slab)?);
    let cycles = config.max_retries.max(1);
    let mut feedback: Vec<Violation> = Vec::new();
    for cycle in 0..cycles {
        let mut prompt = user.clone();
        if !feedback.is_empty() {
            prompt.push_str("\n\nA previous proposal was rejected for these reasons:\n");
            for v in &feedback {
                prompt.push_str(&format!("- {v}\n"));
            }
            prompt.push_str("Propose a corrected configuration.");
        }
        let sol = plan(
            chat,
            vec![system.clone(), Message::user(prompt)],
            config.max_retries,
            cycle,
            transcript,
        )?;
        let verdict = critique(&sol, &surface, ads, chat, config.llm_critic, cycle, transcript)?;
        if !verdict.accepted {
            feedback = verdict.violations;
            continue;
        }
        let rules = critique_rules(&sol, &surface, ads);
        if !rules.accepted {
            return Err(AgentError::Rejected {
                cycles: cycle + 1,
                violations: rules.violations,
            });
        }
        let fallback = derive_binding_indices(&sol, ads)?;
        let idx = if config.llm_indexer {
            llm_indices(chat, &sol, ads, cycle, transcript)?.unwrap_or(fallback)
        } else {
            fallback
        };
        return Ok((sol, idx));
    }
    Err(AgentError::Rejected {
        cycles,
        violations: feedback,
    })
}
