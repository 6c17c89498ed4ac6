//! FIRE relaxation, anomaly filtering and adsorption-energy selection.

mod anomaly;
mod energy;

pub use anomaly::{detect_anomalies, AnomalyFlags, AnomalyThresholds};
pub use energy::{adsorption_energy, AdsorptionRecord};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calculator::{CalcError, Calculator};
use crate::placement::Configuration;
use crate::structures::{Structure, Tag, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RelaxError {
    #[error(transparent)]
    Calc(#[from] CalcError),
    #[error("invalid optimizer parameters: {0}")]
    InvalidParams(String),
    #[error("structures differ in atom count or order ({0} vs {1} atoms)")]
    Mismatch(usize, usize),
    #[error("reference energy: {0}")]
    Reference(String),
    #[error("no relaxation results supplied")]
    Empty,
    #[error("every configuration was filtered out: {}", reasons.join("; "))]
    AllFiltered { reasons: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FireParams {
    pub dt: f64,
    pub dt_max: f64,
    pub n_min: usize,
    pub f_inc: f64,
    pub f_dec: f64,
    pub alpha_start: f64,
    pub f_alpha: f64,
    pub fmax: f64,
    pub max_steps: usize,
    pub max_step: f64,
}

impl Default for FireParams {
    fn default() -> Self {
        FireParams {
            dt: 0.1,
            dt_max: 1.0,
            n_min: 5,
            f_inc: 1.1,
            f_dec: 0.5,
            alpha_start: 0.1,
            f_alpha: 0.99,
            fmax: 0.05,
            max_steps: 300,
            max_step: 0.2,
        }
    }
}

impl FireParams {
    pub fn validate(&self) -> Result<(), RelaxError> {
        let positive = [
            ("dt", self.dt),
            ("dt_max", self.dt_max),
            ("f_inc", self.f_inc),
            ("f_dec", self.f_dec),
            ("alpha_start", self.alpha_start),
            ("f_alpha", self.f_alpha),
            ("fmax", self.fmax),
            ("max_step", self.max_step),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(RelaxError::InvalidParams(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Converged,
    MaxSteps,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFrame {
    pub positions: Vec<Vec3>,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationResult {
    pub structure: Structure,
    pub energy: f64,
    pub max_force: f64,
    pub steps: usize,
    pub status: Status,
    pub anomalies: AnomalyFlags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<Vec<TrajectoryFrame>>,
}

impl RelaxationResult {
    pub fn is_valid(&self) -> bool {
        self.status == Status::Converged && self.anomalies.is_clean()
    }

    /// Why this result is excluded from the minimum, if it is.
    pub fn rejection(&self) -> Option<String> {
        match self.status {
            Status::Converged => self.anomalies.describe(),
            Status::MaxSteps => Some(format!("not converged after {} steps", self.steps)),
            Status::Failed => Some(format!(
                "failed: {}",
                self.message.as_deref().unwrap_or("non-finite energy or force")
            )),
        }
    }
}

fn max_norm(v: &[Vec3]) -> f64 {
    v.iter().map(|f| f.norm()).fold(0.0, f64::max)
}

/// FIRE minimisation with unit masses. Atoms tagged fixed never move.
/// Anomaly flags are left clean; `relax` fills them in.
pub fn relax_structure(
    s: &Structure,
    calc: &dyn Calculator,
    p: &FireParams,
    record: bool,
) -> Result<RelaxationResult, RelaxError> {
    p.validate()?;
    let frozen: Vec<bool> = s.atoms.iter().map(|a| a.tag == Tag::Fixed).collect();
    let mut positions = s.positions();
    let mut velocity = vec![Vec3::zeros(); s.len()];
    let (mut dt, mut alpha, mut n_pos) = (p.dt, p.alpha_start, 0usize);
    let mut trajectory = record.then(Vec::new);
    let mut steps = 0;
    loop {
        let current = s.with_positions(&positions);
        let ef = match calc.compute(&current) {
            Ok(ef) => ef,
            Err(CalcError::NonFinite) => {
                return Ok(RelaxationResult {
                    structure: current,
                    energy: f64::NAN,
                    max_force: f64::NAN,
                    steps,
                    status: Status::Failed,
                    anomalies: AnomalyFlags::default(),
                    message: Some(format!("non-finite energy or force at step {steps}")),
                    trajectory,
                });
            }
            Err(e) => return Err(e.into()),
        };
        let mut forces = ef.forces;
        for (f, &fixed) in forces.iter_mut().zip(&frozen) {
            if fixed {
                *f = Vec3::zeros();
            }
        }
        let fmax = max_norm(&forces);
        if let Some(t) = trajectory.as_mut() {
            t.push(TrajectoryFrame {
                positions: positions.clone(),
                energy: ef.energy,
            });
        }
        let status = if fmax <= p.fmax {
            Some(Status::Converged)
        } else if steps >= p.max_steps {
            Some(Status::MaxSteps)
        } else {
            None
        };
        if let Some(status) = status {
            return Ok(RelaxationResult {
                structure: current,
                energy: ef.energy,
                max_force: fmax,
                steps,
                status,
                anomalies: AnomalyFlags::default(),
                message: None,
                trajectory,
            });
        }

        if steps > 0 {
            let vf: f64 = velocity.iter().zip(&forces).map(|(v, f)| v.dot(f)).sum();
            if vf > 0.0 {
                let v_norm = velocity.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
                let f_norm = forces.iter().map(|f| f.norm_squared()).sum::<f64>().sqrt();
                for (v, f) in velocity.iter_mut().zip(&forces) {
                    *v = *v * (1.0 - alpha) + f * (alpha * v_norm / f_norm);
                }
                if n_pos > p.n_min {
                    dt = (dt * p.f_inc).min(p.dt_max);
                    alpha *= p.f_alpha;
                }
                n_pos += 1;
            } else {
                velocity.iter_mut().for_each(|v| *v = Vec3::zeros());
                alpha = p.alpha_start;
                dt *= p.f_dec;
                n_pos = 0;
            }
        }
        for (v, f) in velocity.iter_mut().zip(&forces) {
            *v += f * dt;
        }
        let mut dr: Vec<Vec3> = velocity.iter().map(|v| v * dt).collect();
        let largest = max_norm(&dr);
        if largest > p.max_step {
            let scale = p.max_step / largest;
            dr.iter_mut().for_each(|d| *d *= scale);
        }
        for ((x, d), &fixed) in positions.iter_mut().zip(&dr).zip(&frozen) {
            if !fixed {
                *x += d;
            }
        }
        steps += 1;
    }
}

/// Relaxes one configuration and flags anomalies against its start.
pub fn relax(
    c: &Configuration,
    calc: &dyn Calculator,
    p: &FireParams,
    thresholds: &AnomalyThresholds,
    record: bool,
) -> Result<RelaxationResult, RelaxError> {
    let mut r = relax_structure(&c.structure, calc, p, record)?;
    if r.status != Status::Failed {
        r.anomalies = detect_anomalies(&c.structure, &r.structure, thresholds)?;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculator::{BuiltinCalculator, CalcParams};
    use crate::structures::{build_slab, Atom, BulkSpec, Lattice, SlabMetadata};

    fn dimer(r: f64) -> Structure {
        Structure::new(
            Lattice::new(Lattice::cubic(30.0).cell, [false; 3]).unwrap(),
            vec![
                Atom::new("Pt", Vec3::new(5.0, 5.0, 5.0), Tag::Surface).unwrap(),
                Atom::new("Pt", Vec3::new(5.0 + r, 5.0, 5.0), Tag::Surface).unwrap(),
            ],
        )
        .unwrap()
    }

    fn unshifted() -> BuiltinCalculator {
        BuiltinCalculator::new(CalcParams {
            shift: false,
            ..CalcParams::default()
        })
    }

    #[test]
    fn dimer_relaxes_to_lj_minimum() {
        let calc = unshifted();
        let lj = calc.params.get("Pt").unwrap();
        let p = FireParams {
            fmax: 1e-6,
            max_steps: 5000,
            ..FireParams::default()
        };
        let r = relax_structure(&dimer(1.3 * lj.sigma), &calc, &p, false).unwrap();
        assert_eq!(r.status, Status::Converged);
        let d = (r.structure.atoms[1].position - r.structure.atoms[0].position).norm();
        assert!((d - 2f64.powf(1.0 / 6.0) * lj.sigma).abs() < 1e-3, "{d}");
        assert!((r.energy + lj.epsilon).abs() < 1e-4);
    }

    #[test]
    fn converged_start_takes_no_steps() {
        let calc = unshifted();
        let lj = calc.params.get("Pt").unwrap();
        let r = relax_structure(
            &dimer(2f64.powf(1.0 / 6.0) * lj.sigma),
            &calc,
            &FireParams::default(),
            false,
        )
        .unwrap();
        assert_eq!((r.status, r.steps), (Status::Converged, 0));
    }

    #[test]
    fn step_budget_exhausted() {
        let calc = unshifted();
        let p = FireParams {
            max_steps: 1,
            ..FireParams::default()
        };
        let r = relax_structure(&dimer(2.2), &calc, &p, false).unwrap();
        assert_eq!((r.status, r.steps), (Status::MaxSteps, 1));
    }

    #[test]
    fn frozen_atoms_stay_bitwise_and_energy_descends() {
        let bulk = BulkSpec::Fcc {
            element: "Pt".into(),
            a: 3.8,
        };
        let mut s = build_slab(&bulk, &SlabMetadata::new("Pt", [1, 1, 1], 4), (2, 2)).unwrap();
        for a in s.atoms.iter_mut().filter(|a| a.tag == Tag::Surface) {
            a.position.z += 0.1;
        }
        let calc = BuiltinCalculator::new(CalcParams::default());
        let p = FireParams {
            fmax: 1e-3,
            ..FireParams::default()
        };
        let r = relax_structure(&s, &calc, &p, true).unwrap();
        assert_eq!(r.status, Status::Converged);
        for (a, b) in s.atoms.iter().zip(&r.structure.atoms) {
            if a.tag == Tag::Fixed {
                assert_eq!(a.position, b.position);
            }
        }
        let e0 = calc.compute(&s).unwrap().energy;
        assert!(r.energy <= e0 + 1e-6);
        let traj = r.trajectory.unwrap();
        assert_eq!(traj.len(), r.steps + 1);
        assert_eq!(traj.last().unwrap().energy, r.energy);
    }

    #[test]
    fn step_cap_bounds_each_displacement() {
        let calc = unshifted();
        let p = FireParams {
            dt: 1.0,
            max_steps: 30,
            ..FireParams::default()
        };
        let r = relax_structure(&dimer(2.0), &calc, &p, true).unwrap();
        let traj = r.trajectory.unwrap();
        for w in traj.windows(2) {
            for (a, b) in w[0].positions.iter().zip(&w[1].positions) {
                assert!((a - b).norm() <= 0.2 + 1e-12);
            }
        }
    }
}
