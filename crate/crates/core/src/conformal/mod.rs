//! Split conformal calibration and nested set-valued inference.
//!
//! Each method yields, per instance, a nested family of class sets and a
//! score for every label: the threshold at which the label's first
//! containing set is reached. Calibration takes the `⌈(1−α)(N+1)⌉`-th
//! smallest calibration score as `τ*`; prediction returns the largest set
//! whose score is within `τ*`.
//!
//! Scores interpolate as `mass(prev) + u·(mass(next) − mass(prev))` in both
//! calibration and prediction, so `y ∈ predict(x, u, τ)` holds exactly when
//! `score(x, y, u) ≤ τ` for a shared draw `u`.

mod crsvp;
mod crsvp_r;
mod family;
mod flat;
mod registry;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crsvp::Crsvp;
pub use crsvp_r::CrsvpR;
pub use family::{FamilyBuilder, FamilyEntry, NestedFamily, Prediction};
pub use flat::{Aps, Lac};
pub use registry::{builtin, MethodFactory, MethodParams, MethodRegistry, NestedSetMethod};

use crate::error::{Error, Result};
use crate::hierarchy::{ClassId, Hierarchy};
use crate::probmodel::ProbabilityView;

/// Stream id for calibration draws.
pub const CALIBRATION_STREAM: u64 = 0;
/// Stream id for prediction draws.
pub const PREDICTION_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalConfig {
    pub alpha: f64,
    pub method: String,
    pub r: Option<usize>,
    /// `false` selects the naive variant (`u` pinned to 0).
    pub randomized: bool,
    pub allow_empty: bool,
    pub seed: u64,
}

impl ConformalConfig {
    pub fn new(method: &str, alpha: f64) -> Self {
        ConformalConfig {
            alpha,
            method: method.to_string(),
            r: None,
            randomized: true,
            allow_empty: true,
            seed: 0,
        }
    }

    pub fn with_budget(mut self, r: usize) -> Self {
        self.r = Some(r);
        self
    }

    pub fn naive(mut self) -> Self {
        self.randomized = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.method == "crsvp-r" && self.r.is_none_or(|r| r == 0) {
            return Err(Error::InvalidParameter("crsvp-r requires r >= 1".into()));
        }
        self.build_method().map(|_| ())
    }

    pub fn build_method(&self) -> Result<Arc<dyn NestedSetMethod>> {
        builtin().build(&self.method, &MethodParams { r: self.r })
    }
}

/// Source of the per-instance uniform draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Randomizer {
    /// Naive variant: every draw is 0.
    Off,
    /// Same value for every instance.
    Fixed(f64),
    /// Counter-based: the draw for instance `i` depends only on
    /// `(seed, stream, i)`, never on evaluation order.
    Seeded { seed: u64, stream: u64 },
}

impl Randomizer {
    /// Picks the source implied by a configuration; a fixed draw overrides
    /// the seed, and the naive variant overrides both.
    pub fn for_config(config: &ConformalConfig, stream: u64, fixed_u: Option<f64>) -> Result<Self> {
        if !config.randomized {
            return Ok(Randomizer::Off);
        }
        match fixed_u {
            Some(u) if (0.0..=1.0).contains(&u) => Ok(Randomizer::Fixed(u)),
            Some(u) => Err(Error::InvalidParameter(format!(
                "u must lie in [0, 1], got {u}"
            ))),
            None => Ok(Randomizer::Seeded {
                seed: config.seed,
                stream,
            }),
        }
    }

    pub fn draw(&self, index: u64) -> f64 {
        match *self {
            Randomizer::Off => 0.0,
            Randomizer::Fixed(u) => u,
            Randomizer::Seeded { seed, stream } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                rng.set_word_pos(u128::from(index) * 2);
                rng.random::<f64>()
            }
        }
    }
}

/// `⌈(1−α)(N+1)⌉`, guarded against `0.7·10 = 7.000000000000001`.
pub fn required_rank(n: usize, alpha: f64) -> usize {
    ((1.0 - alpha) * (n as f64 + 1.0) - 1e-9).ceil().max(0.0) as usize
}

/// Smallest threshold reaching at least `⌈(1−α)(N+1)⌉` of the scores, or
/// `+∞` (predict everything) when that exceeds `N`.
pub fn conformal_quantile(scores: &[f64], alpha: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("calibration scores"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Distribution(format!("non-finite score {bad}")));
    }
    let m = required_rank(scores.len(), alpha);
    if m > scores.len() {
        return Ok(f64::INFINITY);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[m.max(1) - 1])
}

fn check_u(u: f64) -> Result<()> {
    if (0.0..=1.0).contains(&u) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "u must lie in [0, 1], got {u}"
        )))
    }
}

/// Score of label `y` under `method`.
pub fn score(
    method: &dyn NestedSetMethod,
    h: &Hierarchy,
    p: &ProbabilityView,
    y: ClassId,
    u: f64,
) -> Result<f64> {
    check_u(u)?;
    method.family(h, p)?.score(y, u)
}

/// Scores of a labelled batch, one draw per instance from `randomizer`.
pub fn batch_scores(
    method: &dyn NestedSetMethod,
    h: &Hierarchy,
    views: &[ProbabilityView],
    labels: &[ClassId],
    randomizer: Randomizer,
) -> Result<Vec<f64>> {
    if views.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "probability rows vs labels",
            left: views.len(),
            right: labels.len(),
        });
    }
    views
        .par_iter()
        .zip(labels.par_iter())
        .enumerate()
        .map(|(i, (view, &y))| {
            h.check_class(y)?;
            method.family(h, view)?.score(y, randomizer.draw(i as u64))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedPredictor {
    pub config: ConformalConfig,
    /// `+∞` when the calibration set is too small for the requested level.
    pub tau_star: f64,
    pub n_cal: usize,
    /// Class count of the calibration hierarchy, when known.
    pub num_classes: Option<usize>,
}

impl CalibratedPredictor {
    pub fn calibrate(
        h: &Hierarchy,
        views: &[ProbabilityView],
        labels: &[ClassId],
        config: ConformalConfig,
        randomizer: Randomizer,
    ) -> Result<Self> {
        config.validate()?;
        if views.is_empty() {
            return Err(Error::Empty("calibration set"));
        }
        let method = config.build_method()?;
        let scores = batch_scores(method.as_ref(), h, views, labels, randomizer)?;
        let tau_star = conformal_quantile(&scores, config.alpha)?;
        Ok(CalibratedPredictor {
            config,
            tau_star,
            n_cal: views.len(),
            num_classes: Some(h.num_classes()),
        })
    }

    pub fn from_threshold(config: ConformalConfig, tau_star: f64, n_cal: usize) -> Result<Self> {
        config.validate()?;
        if tau_star.is_nan() {
            return Err(Error::InvalidParameter("threshold is NaN".into()));
        }
        Ok(CalibratedPredictor {
            config,
            tau_star,
            n_cal,
            num_classes: None,
        })
    }

    /// Rejects a hierarchy with a different class count than calibration.
    pub fn check_hierarchy(&self, h: &Hierarchy) -> Result<()> {
        match self.num_classes {
            Some(k) if k != h.num_classes() => Err(Error::LengthMismatch {
                what: "predictor classes vs hierarchy classes",
                left: k,
                right: h.num_classes(),
            }),
            _ => Ok(()),
        }
    }

    pub fn is_full_set(&self) -> bool {
        self.tau_star == f64::INFINITY
    }

    pub fn required_rank(&self) -> usize {
        required_rank(self.n_cal, self.config.alpha)
    }

    pub fn method(&self) -> Result<Arc<dyn NestedSetMethod>> {
        self.config.build_method()
    }

    pub fn predict(&self, h: &Hierarchy, p: &ProbabilityView, u: f64) -> Result<Prediction> {
        check_u(u)?;
        self.check_hierarchy(h)?;
        let u = if self.config.randomized { u } else { 0.0 };
        let family = self.method()?.family(h, p)?;
        let entry = family.select(self.tau_star, u, self.config.allow_empty);
        Ok(family.prediction(h, entry, u))
    }

    pub fn predict_batch(
        &self,
        h: &Hierarchy,
        views: &[ProbabilityView],
        randomizer: Randomizer,
    ) -> Result<Vec<Prediction>> {
        self.check_hierarchy(h)?;
        let method = self.method()?;
        views
            .par_iter()
            .enumerate()
            .map(|(i, view)| {
                let u = randomizer.draw(i as u64);
                check_u(u)?;
                let family = method.family(h, view)?;
                let entry = family.select(self.tau_star, u, self.config.allow_empty);
                Ok(family.prediction(h, entry, u))
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PredictorFile::from(self)).expect("predictor serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PredictorFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Threshold {
    Finite(f64),
    Named(String),
}

/// On-disk predictor format.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PredictorFile {
    method: String,
    alpha: f64,
    r: Option<usize>,
    randomized: bool,
    allow_empty: bool,
    seed: u64,
    tau_star: Threshold,
    n_cal: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_classes: Option<usize>,
}

impl From<&CalibratedPredictor> for PredictorFile {
    fn from(p: &CalibratedPredictor) -> Self {
        let c = &p.config;
        PredictorFile {
            method: c.method.clone(),
            alpha: c.alpha,
            r: c.r,
            randomized: c.randomized,
            allow_empty: c.allow_empty,
            seed: c.seed,
            tau_star: if p.tau_star.is_finite() {
                Threshold::Finite(p.tau_star)
            } else {
                Threshold::Named("inf".into())
            },
            n_cal: p.n_cal,
            num_classes: p.num_classes,
        }
    }
}

impl TryFrom<PredictorFile> for CalibratedPredictor {
    type Error = Error;

    fn try_from(f: PredictorFile) -> Result<Self> {
        let tau_star = match f.tau_star {
            Threshold::Finite(t) => t,
            Threshold::Named(s) if s == "inf" => f64::INFINITY,
            Threshold::Named(s) => {
                return Err(Error::Format(format!(
                    "tau_star must be a number or \"inf\", got {s:?}"
                )))
            }
        };
        let config = ConformalConfig {
            alpha: f.alpha,
            method: f.method,
            r: f.r,
            randomized: f.randomized,
            allow_empty: f.allow_empty,
            seed: f.seed,
        };
        let mut predictor = CalibratedPredictor::from_threshold(config, tau_star, f.n_cal)?;
        predictor.num_classes = f.num_classes;
        Ok(predictor)
    }
}
