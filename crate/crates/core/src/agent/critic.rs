use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Orientation, Solution};
use crate::sites::SiteKind;
use crate::structures::AdsorbateSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    /// Site type vs number of surface binding atoms.
    R1,
    /// Orientation vs number of adsorbate binding atoms.
    R2,
    /// Surface binding atoms exist on the surface.
    R3,
    /// Adsorbate binding atoms exist in the adsorbate.
    R4,
    /// Free-form remark from an LLM reviewer.
    Advisory,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.rule, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CritiqueVerdict {
    pub accepted: bool,
    pub violations: Vec<Violation>,
}

impl CritiqueVerdict {
    pub fn from_violations(violations: Vec<Violation>) -> Self {
        CritiqueVerdict {
            accepted: violations.is_empty(),
            violations,
        }
    }
}

fn missing(wanted: &[String], have: &BTreeSet<&str>) -> Vec<String> {
    let mut out: Vec<String> = wanted.iter().filter(|e| !have.contains(e.as_str())).cloned().collect();
    out.dedup();
    out
}

/// Surface rules (R1, R3) and adsorbate rules (R2, R4).
pub fn critique_rules(sol: &Solution, surface_elements: &[String], ads: &AdsorbateSpec) -> CritiqueVerdict {
    let mut v = Vec::new();
    let n_surf = sol.surface_binding_atoms.len();
    let arity_ok = match sol.site_type {
        SiteKind::Ontop => n_surf == 1,
        SiteKind::Bridge => n_surf == 2,
        SiteKind::Hollow => n_surf == 3 || n_surf == 4,
        SiteKind::Random => false,
    };
    if !arity_ok {
        let expected = match sol.site_type {
            SiteKind::Ontop => "exactly 1",
            SiteKind::Bridge => "exactly 2",
            SiteKind::Hollow => "3 or 4",
            SiteKind::Random => "a named site type, not",
        };
        v.push(Violation {
            rule: Rule::R1,
            message: format!(
                "a {} site needs {expected} surface binding atoms, got {n_surf} ({})",
                sol.site_type,
                sol.surface_binding_atoms.join(", ")
            ),
        });
    }
    let n_ads = sol.adsorbate_binding_atoms.len();
    match sol.orientation {
        Orientation::EndOn if n_ads != 1 => v.push(Violation {
            rule: Rule::R2,
            message: format!(
                "end-on binding uses exactly one adsorbate atom, got {n_ads} ({})",
                sol.adsorbate_binding_atoms.join(", ")
            ),
        }),
        Orientation::SideOn if n_ads < 2 => v.push(Violation {
            rule: Rule::R2,
            message: format!("side-on binding needs at least two adsorbate atoms, got {n_ads}"),
        }),
        _ => {}
    }
    let surface: BTreeSet<&str> = surface_elements.iter().map(String::as_str).collect();
    let absent = missing(&sol.surface_binding_atoms, &surface);
    if !absent.is_empty() {
        v.push(Violation {
            rule: Rule::R3,
            message: format!(
                "{} not on the surface (surface has {})",
                absent.join(", "),
                surface.iter().copied().collect::<Vec<_>>().join(", ")
            ),
        });
    }
    let symbols = ads.symbols();
    let in_ads: BTreeSet<&str> = symbols.iter().copied().collect();
    let absent = missing(&sol.adsorbate_binding_atoms, &in_ads);
    if !absent.is_empty() {
        v.push(Violation {
            rule: Rule::R4,
            message: format!("{} not in adsorbate {}", absent.join(", "), ads.key),
        });
    } else {
        // more atoms of an element than the adsorbate has
        for e in &in_ads {
            let want = sol.adsorbate_binding_atoms.iter().filter(|x| x == e).count();
            let have = symbols.iter().filter(|x| *x == e).count();
            if want > have {
                v.push(Violation {
                    rule: Rule::R4,
                    message: format!("{want} {e} binding atoms requested but {} has only {have}", ads.key),
                });
            }
        }
    }
    CritiqueVerdict::from_violations(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structures::adsorbate_from_registry;

    fn sol(site: SiteKind, surf: &[&str], ads: &[&str], o: Orientation) -> Solution {
        Solution {
            site_type: site,
            surface_binding_atoms: surf.iter().map(|s| s.to_string()).collect(),
            adsorbate_binding_atoms: ads.iter().map(|s| s.to_string()).collect(),
            orientation: o,
            reasoning: String::new(),
        }
    }

    fn rules(v: &CritiqueVerdict) -> Vec<Rule> {
        v.violations.iter().map(|x| x.rule).collect()
    }

    fn cupd() -> Vec<String> {
        vec!["Cu".into(), "Pd".into()]
    }

    #[test]
    fn site_arity() {
        let nnh = adsorbate_from_registry("NNH").unwrap();
        let v = critique_rules(
            &sol(SiteKind::Ontop, &["Cu", "Pd"], &["N"], Orientation::EndOn),
            &cupd(),
            &nnh,
        );
        assert_eq!((v.accepted, rules(&v)), (false, vec![Rule::R1]));
        let v = critique_rules(
            &sol(SiteKind::Hollow, &["Pd", "Pd", "Cu", "Pd"], &["N"], Orientation::EndOn),
            &cupd(),
            &nnh,
        );
        assert!(v.accepted);
    }

    #[test]
    fn orientation_arity() {
        let nnh = adsorbate_from_registry("NNH").unwrap();
        let v = critique_rules(
            &sol(SiteKind::Bridge, &["Cu", "Pd"], &["N", "N"], Orientation::EndOn),
            &cupd(),
            &nnh,
        );
        assert_eq!(rules(&v), vec![Rule::R2]);
        let v = critique_rules(
            &sol(SiteKind::Bridge, &["Cu", "Pd"], &["N"], Orientation::SideOn),
            &cupd(),
            &nnh,
        );
        assert_eq!(rules(&v), vec![Rule::R2]);
    }

    #[test]
    fn coherent_solution_is_accepted() {
        let oh = adsorbate_from_registry("OH").unwrap();
        let v = critique_rules(
            &sol(SiteKind::Hollow, &["Pt", "Pt", "Pt"], &["O"], Orientation::EndOn),
            &["Pt".into()],
            &oh,
        );
        assert_eq!(
            v,
            CritiqueVerdict {
                accepted: true,
                violations: vec![]
            }
        );
    }

    #[test]
    fn element_membership() {
        let oh = adsorbate_from_registry("OH").unwrap();
        let v = critique_rules(
            &sol(SiteKind::Ontop, &["Au"], &["N"], Orientation::EndOn),
            &["Pt".into()],
            &oh,
        );
        assert_eq!(rules(&v), vec![Rule::R3, Rule::R4]);
        let v = critique_rules(
            &sol(SiteKind::Bridge, &["Pt", "Pt"], &["O", "O"], Orientation::SideOn),
            &["Pt".into()],
            &oh,
        );
        assert_eq!(rules(&v), vec![Rule::R4]);
    }
}
