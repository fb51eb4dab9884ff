//! Maximum-likelihood consensus (MLESAC) over minimal-sample hypotheses.
//!
//! Hypotheses are scored by the negative log-likelihood of their residuals
//! under a two-component mixture: a zero-mean Gaussian of width `sigma` for
//! inliers and a uniform density over a span `nu` for outliers. The inlier
//! mixing weight is estimated per hypothesis with a few EM rounds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::artmodel::{
    fit_prismatic_minimal, fit_revolute_minimal, refine_prismatic, refine_revolute, residuals,
    FitError, FitResult, ModelClass, ModelParams, Trajectory3,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlesacConfig {
    pub iterations: usize,
    /// Inlier noise standard deviation, meters.
    pub sigma: f64,
    /// Diameter of the uniform outlier support, meters.
    pub nu: f64,
    pub em_steps: usize,
    pub seed: u64,
    /// Residual below which a sample is reported as an inlier, meters.
    pub inlier_threshold: f64,
}

impl Default for MlesacConfig {
    fn default() -> Self {
        Self::with_sigma(0.005)
    }
}

impl MlesacConfig {
    /// Defaults with the given noise level; the inlier threshold follows at
    /// 2.5 sigma.
    pub fn with_sigma(sigma: f64) -> Self {
        Self {
            iterations: 200,
            sigma,
            nu: 1.0,
            em_steps: 5,
            seed: 0,
            inlier_threshold: 2.5 * sigma,
        }
    }

    pub fn validate(&self) -> Result<(), FitError> {
        let bad = |m: &str| Err(FitError::InvalidConfig(m.to_string()));
        if self.iterations < 1 {
            return bad("iterations must be >= 1");
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be positive");
        }
        if !(self.nu > self.sigma && self.nu.is_finite()) {
            return bad("nu must exceed sigma");
        }
        if self.em_steps < 1 {
            return bad("em_steps must be >= 1");
        }
        if !(self.inlier_threshold > 0.0) {
            return bad("inlier_threshold must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureScore {
    pub neg_log_likelihood: f64,
    /// Inlier mixing weight in [0, 1].
    pub gamma: f64,
}

/// Mixture score of scalar residuals with a one-dimensional Gaussian inlier
/// term.
pub fn score_hypothesis(residuals: &[f64], cfg: &MlesacConfig) -> MixtureScore {
    score_residuals(residuals, cfg, 1)
}

/// Mixture score where each residual is the length of a `dim`-dimensional
/// offset: the inlier density is an isotropic `dim`-variate Gaussian
/// evaluated at that offset and the outlier density is `nu^-dim`.
pub fn score_residuals(residuals: &[f64], cfg: &MlesacConfig, dim: usize) -> MixtureScore {
    let k = dim as f64;
    let var = cfg.sigma * cfg.sigma;
    let log_norm = -0.5 * k * (2.0 * std::f64::consts::PI * var).ln();
    let log_out = -k * cfg.nu.ln();
    let log_in: Vec<f64> = residuals
        .iter()
        .map(|r| log_norm - r * r / (2.0 * var))
        .collect();

    let mut gamma: f64 = 0.5;
    for _ in 0..cfg.em_steps {
        if log_in.is_empty() {
            break;
        }
        let (lg, lng) = (gamma.ln(), (1.0 - gamma).ln());
        let total: f64 = log_in
            .iter()
            .map(|li| sigmoid(lg + li - lng - log_out))
            .sum();
        gamma = (total / log_in.len() as f64).clamp(0.0, 1.0);
    }
    let (lg, lng) = (gamma.ln(), (1.0 - gamma).ln());
    let nll = -log_in
        .iter()
        .map(|li| log_add_exp(lg + li, lng + log_out))
        .sum::<f64>();
    MixtureScore {
        neg_log_likelihood: nll,
        gamma,
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Upper bound on refine/re-mask rounds after the hypothesis search.
const REMASK_ROUNDS: usize = 10;

/// Best minimal hypothesis found by [`estimate`], before refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub params: ModelParams,
    pub score: MixtureScore,
}

/// Robust fit of a prismatic or revolute model.
pub fn estimate(
    traj: &Trajectory3,
    class: ModelClass,
    cfg: &MlesacConfig,
) -> Result<FitResult, FitError> {
    estimate_detailed(traj, class, cfg).map(|(fit, _)| fit)
}

/// Like [`estimate`], also returning the winning minimal hypothesis.
pub fn estimate_detailed(
    traj: &Trajectory3,
    class: ModelClass,
    cfg: &MlesacConfig,
) -> Result<(FitResult, Hypothesis), FitError> {
    cfg.validate()?;
    if !matches!(class, ModelClass::Prismatic | ModelClass::Revolute) {
        return Err(FitError::InvalidConfig(format!(
            "robust estimation does not apply to the {class} model"
        )));
    }
    let n = traj.len();
    let k = class.minimal_sample_size();
    if n < k {
        return Err(FitError::InsufficientData { needed: k, got: n });
    }

    // Draw every minimal sample up front so the hypothesis sequence depends
    // only on the seed.
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let draws: Vec<Vec<usize>> = (0..cfg.iterations)
        .map(|_| rand::seq::index::sample(&mut rng, n, k).into_vec())
        .collect();

    let dim = class.residual_dim();
    let mut best: Option<Hypothesis> = None;
    for idx in &draws {
        let hyp = match class {
            ModelClass::Prismatic => fit_prismatic_minimal(traj.point(idx[0]), traj.point(idx[1]))
                .map(ModelParams::Prismatic),
            _ => fit_revolute_minimal(traj.point(idx[0]), traj.point(idx[1]), traj.point(idx[2]))
                .map(ModelParams::Revolute),
        };
        let Ok(params) = hyp else { continue };
        let score = score_residuals(&residuals(&params, traj), cfg, dim);
        if best
            .as_ref()
            .is_none_or(|b| score.neg_log_likelihood < b.score.neg_log_likelihood)
        {
            best = Some(Hypothesis { params, score });
        }
    }
    let best = best.ok_or(FitError::NoValidHypothesis)?;

    let refine = |mask: &[bool]| -> Result<ModelParams, FitError> {
        Ok(match class {
            ModelClass::Prismatic => ModelParams::Prismatic(refine_prismatic(traj, mask)?),
            _ => ModelParams::Revolute(refine_revolute(traj, mask)?),
        })
    };
    let inliers = |p: &ModelParams| -> Vec<bool> {
        residuals(p, traj)
            .iter()
            .map(|&r| r < cfg.inlier_threshold)
            .collect()
    };

    // The minimal hypothesis only sees three points, so its mask can clip
    // the ends of the motion; re-mask with the refined model until stable.
    let mut mask = inliers(&best.params);
    let mut refined = refine(&mask)?;
    for _ in 0..REMASK_ROUNDS {
        let next = inliers(&refined);
        if next == mask {
            break;
        }
        match refine(&next) {
            Ok(p) => {
                refined = p;
                mask = next;
            }
            Err(_) => break,
        }
    }
    Ok((FitResult::evaluate(refined, traj, cfg), best))
}
