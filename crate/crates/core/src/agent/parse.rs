use serde_json::{Map, Value};
use thiserror::Error;

use super::{Orientation, Solution};
use crate::elements;
use crate::sites::SiteKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("no JSON object found in the reply")]
    NoJson,
    #[error("missing field '{0}'")]
    Missing(&'static str),
    #[error("invalid value for field '{field}': {value}")]
    Invalid { field: &'static str, value: String },
}

impl ParseError {
    pub fn field(&self) -> Option<&'static str> {
        match self {
            ParseError::NoJson => None,
            ParseError::Missing(f) | ParseError::Invalid { field: f, .. } => Some(f),
        }
    }
}

/// Byte spans of every top-level balanced `{...}` in `text`, skipping
/// braces inside JSON strings.
fn object_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let (mut depth, mut start) = (0usize, 0usize);
    let (mut in_str, mut escaped) = (false, false);
    for (i, c) in text.char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' if depth > 0 => in_str = true,
            '{' => {
                if depth == 0 {
                    start = i;
                }
                depth += 1;
            }
            '}' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    spans.push((start, i + 1));
                }
            }
            _ => {}
        }
    }
    spans
}

/// The last balanced JSON object in free text.
pub fn last_json_object(text: &str) -> Option<Map<String, Value>> {
    object_spans(text)
        .into_iter()
        .rev()
        .find_map(|(a, b)| match serde_json::from_str::<Value>(&text[a..b]) {
            Ok(Value::Object(m)) => Some(m),
            _ => None,
        })
}

fn words(s: &str) -> String {
    s.trim()
        .to_lowercase()
        .replace(['-', '_'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn normalize_site(s: &str) -> Option<SiteKind> {
    let w = words(s);
    match w.as_str() {
        "ontop" | "on top" | "top" | "atop" => Some(SiteKind::Ontop),
        "bridge" | "bridging" | "bridge site" => Some(SiteKind::Bridge),
        _ if w.ends_with("hollow") || w.ends_with("hollow site") => Some(SiteKind::Hollow),
        _ => None,
    }
}

pub fn normalize_orientation(s: &str) -> Option<Orientation> {
    match words(s).as_str() {
        "end on" | "endon" | "monodentate" => Some(Orientation::EndOn),
        "side on" | "sideon" | "bidentate" | "multidentate" => Some(Orientation::SideOn),
        _ => None,
    }
}

fn normalize_symbol(s: &str) -> Option<String> {
    let s = s.trim();
    let mut chars = s.chars();
    let first = chars.next()?.to_ascii_uppercase();
    let sym: String = std::iter::once(first)
        .chain(chars.map(|c| c.to_ascii_lowercase()))
        .collect();
    elements::is_valid_symbol(&sym).then_some(sym)
}

fn symbols(obj: &Map<String, Value>, field: &'static str) -> Result<Vec<String>, ParseError> {
    let raw: Vec<String> = match obj.get(field) {
        None | Some(Value::Null) => return Err(ParseError::Missing(field)),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect::<Option<_>>()
            .ok_or_else(|| ParseError::Invalid {
                field,
                value: Value::Array(items.clone()).to_string(),
            })?,
        Some(Value::String(s)) => s.split(',').map(str::to_string).collect(),
        Some(v) => {
            return Err(ParseError::Invalid {
                field,
                value: v.to_string(),
            })
        }
    };
    let out: Vec<String> = raw
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            normalize_symbol(s).ok_or_else(|| ParseError::Invalid {
                field,
                value: s.clone(),
            })
        })
        .collect::<Result<_, _>>()?;
    if out.is_empty() {
        return Err(ParseError::Invalid {
            field,
            value: "empty list".into(),
        });
    }
    Ok(out)
}

fn string<'a>(obj: &'a Map<String, Value>, field: &'static str) -> Result<&'a str, ParseError> {
    match obj.get(field) {
        None | Some(Value::Null) => Err(ParseError::Missing(field)),
        Some(Value::String(s)) => Ok(s),
        Some(v) => Err(ParseError::Invalid {
            field,
            value: v.to_string(),
        }),
    }
}

/// Extracts a Solution from a planner reply.
pub fn parse_solution_block(text: &str) -> Result<Solution, ParseError> {
    let obj = last_json_object(text).ok_or(ParseError::NoJson)?;
    let site = string(&obj, "site_type")?;
    let site_type = normalize_site(site).ok_or_else(|| ParseError::Invalid {
        field: "site_type",
        value: site.to_string(),
    })?;
    let surface_binding_atoms = symbols(&obj, "surface_binding_atoms")?;
    let adsorbate_binding_atoms = symbols(&obj, "adsorbate_binding_atoms")?;
    let o = string(&obj, "orientation")?;
    let orientation = normalize_orientation(o).ok_or_else(|| ParseError::Invalid {
        field: "orientation",
        value: o.to_string(),
    })?;
    let reasoning = obj
        .get("reasoning")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    Ok(Solution {
        site_type,
        surface_binding_atoms,
        adsorbate_binding_atoms,
        orientation,
        reasoning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_after_prose() {
        let text = r#"The N lone pair favours a mixed bridge. {"site_type":"bridge","surface_binding_atoms":["Cu","Pd"],"adsorbate_binding_atoms":["N"],"orientation":"end-on"}"#;
        let s = parse_solution_block(text).unwrap();
        assert_eq!(s.site_type, SiteKind::Bridge);
        assert_eq!(s.surface_binding_atoms, ["Cu", "Pd"]);
        assert_eq!(s.adsorbate_binding_atoms, ["N"]);
        assert_eq!(s.orientation, Orientation::EndOn);
        assert_eq!(s.reasoning, "");
    }

    #[test]
    fn synonyms() {
        for (raw, kind) in [
            ("4-fold hollow", SiteKind::Hollow),
            ("fcc hollow", SiteKind::Hollow),
            ("HCP_Hollow", SiteKind::Hollow),
            ("On-top", SiteKind::Ontop),
            ("Bridge", SiteKind::Bridge),
        ] {
            assert_eq!(normalize_site(raw), Some(kind), "{raw}");
        }
        assert_eq!(normalize_orientation("bidentate"), Some(Orientation::SideOn));
        assert_eq!(normalize_orientation("Monodentate"), Some(Orientation::EndOn));
        assert_eq!(normalize_orientation("Side-On"), Some(Orientation::SideOn));
    }

    #[test]
    fn flat_orientation_is_rejected_by_field() {
        let text = r#"{"site_type":"hollow","surface_binding_atoms":["Pt","Pt","Pt"],"adsorbate_binding_atoms":["O"],"orientation":"flat"}"#;
        let e = parse_solution_block(text).unwrap_err();
        assert_eq!(e.field(), Some("orientation"));
        assert!(e.to_string().contains("orientation"));
    }

    #[test]
    fn errors_name_the_field() {
        assert_eq!(parse_solution_block("no json here"), Err(ParseError::NoJson));
        let missing = r#"{"site_type":"ontop","surface_binding_atoms":["Au"],"orientation":"end-on"}"#;
        assert_eq!(
            parse_solution_block(missing),
            Err(ParseError::Missing("adsorbate_binding_atoms"))
        );
        let bad = r#"{"site_type":"ontop","surface_binding_atoms":["Xx"],"adsorbate_binding_atoms":["O"],"orientation":"end-on"}"#;
        assert_eq!(
            parse_solution_block(bad).unwrap_err().field(),
            Some("surface_binding_atoms")
        );
        let empty = r#"{"site_type":"ontop","surface_binding_atoms":[],"adsorbate_binding_atoms":["O"],"orientation":"end-on"}"#;
        assert_eq!(
            parse_solution_block(empty).unwrap_err().field(),
            Some("surface_binding_atoms")
        );
    }

    #[test]
    fn last_object_wins_and_braces_in_strings_are_ignored() {
        let text = r#"draft {"site_type":"ontop","surface_binding_atoms":["Au"],"adsorbate_binding_atoms":["O"],"orientation":"end-on"}
final {"site_type":"hollow","surface_binding_atoms":"mo, MO, pd","adsorbate_binding_atoms":["h"],"orientation":"end on","reasoning":"a } in text {"}"#;
        let s = parse_solution_block(text).unwrap();
        assert_eq!(s.site_type, SiteKind::Hollow);
        assert_eq!(s.surface_binding_atoms, ["Mo", "Mo", "Pd"]);
        assert_eq!(s.adsorbate_binding_atoms, ["H"]);
        assert_eq!(s.reasoning, "a } in text {");
    }

    #[test]
    fn fenced_block() {
        let text = "Answer:\n```json\n{\"site_type\": \"ontop\", \"surface_binding_atoms\": [\"Ag\"], \"adsorbate_binding_atoms\": [\"O\"], \"orientation\": \"end-on\"}\n```\n";
        assert_eq!(parse_solution_block(text).unwrap().surface_binding_atoms, ["Ag"]);
    }
}
