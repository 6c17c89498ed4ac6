use serde::{Deserialize, Serialize};

use super::{RelaxError, RelaxationResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdsorptionRecord {
    /// E_sys,i − E_slab − E_gas for every configuration, valid or not.
    pub delta_e: Vec<f64>,
    pub delta_e_ads: f64,
    pub argmin: usize,
    pub n_valid: usize,
    pub n_anomalous: usize,
}

/// Minimum adsorption energy over converged, anomaly-free results. Equal
/// minima resolve to the lowest configuration id.
pub fn adsorption_energy(
    results: &[RelaxationResult],
    e_slab: f64,
    e_gas: f64,
) -> Result<AdsorptionRecord, RelaxError> {
    if results.is_empty() {
        return Err(RelaxError::Empty);
    }
    let delta_e: Vec<f64> = results.iter().map(|r| r.energy - e_slab - e_gas).collect();
    let mut best: Option<usize> = None;
    for (i, r) in results.iter().enumerate() {
        if r.is_valid() && best.is_none_or(|b| delta_e[i] < delta_e[b]) {
            best = Some(i);
        }
    }
    let Some(argmin) = best else {
        return Err(RelaxError::AllFiltered {
            reasons: results
                .iter()
                .enumerate()
                .map(|(i, r)| format!("configuration {i}: {}", r.rejection().unwrap_or_default()))
                .collect(),
        });
    };
    Ok(AdsorptionRecord {
        delta_e_ads: delta_e[argmin],
        argmin,
        n_valid: results.iter().filter(|r| r.is_valid()).count(),
        n_anomalous: results.iter().filter(|r| !r.anomalies.is_clean()).count(),
        delta_e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relax::{AnomalyFlags, Status};
    use crate::structures::{Atom, Lattice, Structure, Tag, Vec3};

    fn result(energy: f64) -> RelaxationResult {
        RelaxationResult {
            structure: Structure::new(
                Lattice::cubic(5.0),
                vec![Atom::new("H", Vec3::zeros(), Tag::Adsorbate).unwrap()],
            )
            .unwrap(),
            energy,
            max_force: 0.0,
            steps: 0,
            status: Status::Converged,
            anomalies: AnomalyFlags::default(),
            message: None,
            trajectory: None,
        }
    }

    #[test]
    fn arithmetic() {
        let rec = adsorption_energy(&[result(-10.0), result(-10.5)], -8.0, -1.0).unwrap();
        assert_eq!(rec.delta_e, vec![-1.0, -1.5]);
        assert_eq!((rec.delta_e_ads, rec.argmin), (-1.5, 1));
    }

    #[test]
    fn anomalous_results_are_excluded() {
        let mut bad = result(-12.0);
        bad.anomalies.desorbed = true;
        let rec = adsorption_energy(&[result(-10.0), bad, result(-10.5)], -8.0, -1.0).unwrap();
        assert_eq!(
            (rec.delta_e_ads, rec.argmin, rec.n_valid, rec.n_anomalous),
            (-1.5, 2, 2, 1)
        );
    }

    #[test]
    fn single_and_ties() {
        let rec = adsorption_energy(&[result(-3.0)], -1.0, -1.0).unwrap();
        assert_eq!(rec.delta_e_ads, -1.0);
        let rec = adsorption_energy(&[result(-3.0), result(-3.0)], 0.0, 0.0).unwrap();
        assert_eq!(rec.argmin, 0);
    }

    #[test]
    fn all_filtered_reports_reasons() {
        let mut a = result(-1.0);
        a.status = Status::MaxSteps;
        let mut b = result(-1.0);
        b.anomalies.dissociated = true;
        match adsorption_energy(&[a, b], 0.0, 0.0) {
            Err(RelaxError::AllFiltered { reasons }) => {
                assert!(reasons[0].contains("not converged"));
                assert!(reasons[1].contains("dissociated"));
            }
            other => panic!("{other:?}"),
        }
    }
}
