//! Articulation model selection by BIC with a uniform prior over classes.

use serde::{Deserialize, Serialize};

use crate::artmodel::{fit_rigid, FitError, FitResult, ModelClass, ModelParams, Trajectory3};
use crate::geom::centroid;
use crate::mlesac::{estimate, MlesacConfig};

/// Stationarity pre-test radius, in units of the configured sigma.
const STATIONARY_SIGMAS: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecord {
    pub class: ModelClass,
    pub fit: Option<FitResult>,
    pub failure: Option<String>,
    pub bic: Option<f64>,
    /// exp(-BIC/2) normalized over the classes that fitted; 0 for failures.
    pub posterior_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub records: Vec<ClassRecord>,
    pub winner: ModelClass,
    pub sample_count: usize,
    /// True when every sample lies within 4 sigma of the centroid.
    pub stationary: bool,
}

impl SelectionReport {
    pub fn record(&self, class: ModelClass) -> &ClassRecord {
        self.records
            .iter()
            .find(|r| r.class == class)
            .expect("every class has a record")
    }

    pub fn winning_fit(&self) -> &FitResult {
        self.record(self.winner)
            .fit
            .as_ref()
            .expect("winner always fitted")
    }
}

pub fn bic(fit: &FitResult, n: usize) -> f64 {
    -2.0 * fit.log_likelihood + fit.dof as f64 * (n as f64).ln()
}

/// Every observation drawn uniformly over the outlier span.
pub fn free_log_likelihood(n: usize, cfg: &MlesacConfig) -> f64 {
    -(n as f64) * cfg.nu.ln()
}

pub fn free_fit(traj: &Trajectory3, cfg: &MlesacConfig) -> FitResult {
    let n = traj.len();
    FitResult {
        params: ModelParams::Free,
        residuals: vec![0.0; n],
        inlier_mask: vec![false; n],
        log_likelihood: free_log_likelihood(n, cfg),
        dof: ModelClass::Free.dof(),
    }
}

pub fn select_model(traj: &Trajectory3, cfg: &MlesacConfig) -> Result<SelectionReport, FitError> {
    cfg.validate()?;
    let n = traj.len();
    if n < 3 {
        return Err(FitError::InsufficientData { needed: 3, got: n });
    }
    let c = centroid(traj.points()).unwrap();
    let stationary = traj
        .points()
        .all(|p| (p - c).norm() < STATIONARY_SIGMAS * cfg.sigma);

    let fits: Vec<(ModelClass, Result<FitResult, FitError>)> = ModelClass::ALL
        .iter()
        .map(|&class| {
            let fit = match class {
                ModelClass::Rigid => fit_rigid(traj, cfg),
                ModelClass::Prismatic | ModelClass::Revolute => estimate(traj, class, cfg),
                ModelClass::Free => Ok(free_fit(traj, cfg)),
            };
            (class, fit)
        })
        .collect();
    Ok(assemble_report(fits, n, stationary))
}

/// Ranks already-computed class fits. Exposed so callers holding their own
/// fits (or tests) can reuse the ranking rules.
pub fn assemble_report(
    fits: Vec<(ModelClass, Result<FitResult, FitError>)>,
    n: usize,
    stationary: bool,
) -> SelectionReport {
    let mut records: Vec<ClassRecord> = fits
        .into_iter()
        .map(|(class, fit)| match fit {
            Ok(fit) => {
                let b = bic(&fit, n);
                ClassRecord {
                    class,
                    fit: Some(fit),
                    failure: None,
                    bic: Some(b),
                    posterior_weight: 0.0,
                }
            }
            Err(e) => ClassRecord {
                class,
                fit: None,
                failure: Some(e.to_string()),
                bic: None,
                posterior_weight: 0.0,
            },
        })
        .collect();

    // Ties go to the simpler class (declaration order).
    let winner = records
        .iter()
        .filter_map(|r| r.bic.map(|b| (r.class, b)))
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(c, _)| c)
        .expect("at least one class must fit");
    let best = records
        .iter()
        .filter_map(|r| r.bic)
        .fold(f64::INFINITY, f64::min);
    let total: f64 = records
        .iter()
        .filter_map(|r| r.bic)
        .map(|b| (-(b - best) / 2.0).exp())
        .sum();
    for r in &mut records {
        if let Some(b) = r.bic {
            r.posterior_weight = (-(b - best) / 2.0).exp() / total;
        }
    }
    SelectionReport {
        records,
        winner,
        sample_count: n,
        stationary,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::orthonormal_complement;
    use nalgebra::{Point3, Vector3};
    use proptest::prelude::*;

    fn fit_with(ll: f64, dof: usize) -> FitResult {
        FitResult {
            params: ModelParams::Free,
            residuals: vec![],
            inlier_mask: vec![],
            log_likelihood: ll,
            dof,
        }
    }

    #[test]
    fn bic_examples() {
        assert_eq!(bic(&fit_with(0.0, 0), 100), 0.0);
        // 100 + 6 ln 100
        assert!((bic(&fit_with(-50.0, 6), 100) - 127.631_021_115_928_5).abs() < 1e-9);
        for n in 2..200 {
            assert!(bic(&fit_with(-3.0, 4), n) < bic(&fit_with(-3.0, 6), n));
        }
    }

    #[test]
    fn free_examples() {
        let mut cfg = MlesacConfig::default();
        assert_eq!(free_log_likelihood(1, &cfg), 0.0);
        assert_eq!(free_log_likelihood(100, &cfg), 0.0);
        cfg.nu = 2.0;
        assert!((free_log_likelihood(100, &cfg) + 69.314_718_055_994_53).abs() < 1e-9);
    }

    #[test]
    fn tight_structured_fit_beats_free() {
        let cfg = MlesacConfig::default();
        for n in 3..50 {
            let pts: Vec<_> = (0..n)
                .map(|i| Point3::new(0.01 * i as f64, 0.0, 1.0))
                .collect();
            let t = Trajectory3::from_points(&pts, 20.0).unwrap();
            let fit = FitResult::evaluate(
                ModelParams::Prismatic(
                    crate::artmodel::refine_prismatic(&t, &vec![true; n]).unwrap(),
                ),
                &t,
                &cfg,
            );
            assert!(bic(&fit, n) < bic(&free_fit(&t, &cfg), n), "n = {n}");
        }
    }

    #[test]
    fn too_few_samples() {
        let t = Trajectory3::from_points(&[Point3::origin(), Point3::new(1.0, 0.0, 0.0)], 20.0)
            .unwrap();
        assert_eq!(
            select_model(&t, &MlesacConfig::default()),
            Err(FitError::InsufficientData { needed: 3, got: 2 })
        );
    }

    #[test]
    fn noiseless_line_never_revolute() {
        let cfg = MlesacConfig::default();
        for n in [3usize, 10, 50] {
            let pts: Vec<_> = (0..n)
                .map(|i| {
                    Point3::new(0.1, 0.0, 1.0) + Vector3::new(0.3, 0.1, -0.2) * i as f64 / n as f64
                })
                .collect();
            let t = Trajectory3::from_points(&pts, 20.0).unwrap();
            let rep = select_model(&t, &cfg).unwrap();
            assert_ne!(rep.winner, ModelClass::Revolute);
            let rev = rep.record(ModelClass::Revolute);
            let pri = rep.record(ModelClass::Prismatic);
            if let (Some(r), Some(p)) = (rev.bic, pri.bic) {
                assert!(r > p);
            }
        }
    }

    #[test]
    fn noiseless_short_arcs_are_revolute() {
        // sigma matched to noiseless data
        let cfg = MlesacConfig::with_sigma(1e-4);
        let (e1, e2) = orthonormal_complement(&Vector3::new(0.2, 1.0, 0.1).normalize());
        for deg in [10.0f64, 30.0, 90.0] {
            for n in [10usize, 25, 100] {
                let pts: Vec<_> = (0..n)
                    .map(|i| {
                        let t = deg.to_radians() * i as f64 / (n - 1) as f64;
                        Point3::new(0.0, 0.0, 1.0) + (e1 * t.cos() + e2 * t.sin()) * 0.15
                    })
                    .collect();
                let t = Trajectory3::from_points(&pts, 20.0).unwrap();
                assert_eq!(
                    select_model(&t, &cfg).unwrap().winner,
                    ModelClass::Revolute,
                    "{deg} deg, n={n}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn weights_form_distribution_and_follow_bic(
            lls in prop::collection::vec(-200.0..50.0f64, 4),
            offset in -100.0..100.0f64,
            fail in 0usize..5,
        ) {
            let n = 40;
            let mk = |shift: f64| -> Vec<(ModelClass, Result<FitResult, FitError>)> {
                ModelClass::ALL.iter().zip(&lls).enumerate().map(|(i, (&c, &ll))| {
                    let fit = if i == fail { Err(FitError::NoValidHypothesis) } else { Ok(fit_with(ll + shift, c.dof())) };
                    (c, fit)
                }).collect()
            };
            let rep = assemble_report(mk(0.0), n, false);
            let sum: f64 = rep.records.iter().map(|r| r.posterior_weight).sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            for a in &rep.records {
                for b in &rep.records {
                    if let (Some(ba), Some(bb)) = (a.bic, b.bic) {
                        if ba < bb { prop_assert!(a.posterior_weight >= b.posterior_weight); }
                    }
                }
            }
            let winner_bic = rep.record(rep.winner).bic.unwrap();
            prop_assert!(rep.records.iter().filter_map(|r| r.bic).all(|b| b >= winner_bic));
            // shared likelihood offset leaves the winner unchanged
            let shifted = assemble_report(mk(offset), n, false);
            prop_assert_eq!(shifted.winner, rep.winner);
        }
    }
}
