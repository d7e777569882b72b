//! Metrics, synthetic data and the resampled benchmark.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::conformal::{
    conformal_quantile, ConformalConfig, NestedFamily, NestedSetMethod, Randomizer,
};
use crate::error::{Error, Result};
use crate::fixtures::dirichlet_view;
use crate::hierarchy::{ClassId, Hierarchy};
use crate::numeric::compensated_sum;
use crate::probmodel::ProbabilityView;

fn mean(values: impl IntoIterator<Item = f64>) -> (f64, usize) {
    let values: Vec<f64> = values.into_iter().collect();
    let n = values.len();
    (compensated_sum(values) / n as f64, n)
}

/// Sample standard deviation; 0 for fewer than two values.
fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let (m, n) = mean(values.iter().copied());
    let ss = compensated_sum(values.iter().map(|v| (v - m) * (v - m)));
    (ss / (n - 1) as f64).sqrt()
}

/// Fraction of labels inside their prediction set.
pub fn coverage<S: AsRef<[ClassId]>>(sets: &[S], labels: &[ClassId]) -> Result<f64> {
    if sets.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "predictions vs labels",
            left: sets.len(),
            right: labels.len(),
        });
    }
    if sets.is_empty() {
        return Err(Error::Empty("prediction batch"));
    }
    let hits = sets
        .iter()
        .zip(labels)
        .filter(|(s, y)| s.as_ref().contains(y))
        .count();
    Ok(hits as f64 / sets.len() as f64)
}

pub fn average_size<S: AsRef<[ClassId]>>(sets: &[S]) -> Result<f64> {
    if sets.is_empty() {
        return Err(Error::Empty("prediction batch"));
    }
    Ok(mean(sets.iter().map(|s| s.as_ref().len() as f64)).0)
}

/// Mean representation complexity; empty sets count 0.
pub fn average_complexity<S: AsRef<[ClassId]>>(h: &Hierarchy, sets: &[S]) -> Result<f64> {
    if sets.is_empty() {
        return Err(Error::Empty("prediction batch"));
    }
    let counts = sets
        .iter()
        .map(|s| h.representation_complexity(s.as_ref()).map(|c| c as f64))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(counts).0)
}

/// Budget of a hierarchical method in a benchmark grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Budget {
    Nodes(usize),
    /// As many nodes as there are classes.
    AllClasses,
}

/// A benchmark column such as `crsvp`, `ncrsvp-3`, `crsvp-K`, `aps`, `nps`
/// or `lac`. A leading `n` (and `nps` for `aps`) selects the naive variant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodSpec {
    pub label: String,
    pub method: &'static str,
    pub budget: Option<Budget>,
    pub randomized: bool,
}

impl MethodSpec {
    pub fn config(&self, alpha: f64, num_classes: usize) -> ConformalConfig {
        let r = self.budget.map(|b| match b {
            Budget::Nodes(r) => r,
            Budget::AllClasses => num_classes,
        });
        ConformalConfig {
            r,
            randomized: self.randomized,
            ..ConformalConfig::new(self.method, alpha)
        }
    }

    /// Parses a comma-separated list.
    pub fn parse_list(list: &str) -> Result<Vec<MethodSpec>> {
        list.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect()
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let spec = |method, budget, randomized| MethodSpec {
            label: s.to_string(),
            method,
            budget,
            randomized,
        };
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "aps" => return Ok(spec("aps", None, true)),
            "nps" => return Ok(spec("aps", None, false)),
            "lac" => return Ok(spec("lac", None, false)),
            "crsvp" => return Ok(spec("crsvp", None, true)),
            "ncrsvp" => return Ok(spec("crsvp", None, false)),
            _ => {}
        }
        let (randomized, rest) = match lower.strip_prefix('n') {
            Some(rest) => (false, rest),
            None => (true, lower.as_str()),
        };
        let budget = rest.strip_prefix("crsvp-").and_then(|b| match b {
            "k" => Some(Budget::AllClasses),
            digits => digits.parse().ok().filter(|&r| r > 0).map(Budget::Nodes),
        });
        match budget {
            Some(b) => Ok(spec("crsvp-r", Some(b), randomized)),
            None => Err(Error::UnknownMethod(s.to_string())),
        }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// Metrics of one calibration/test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitMetrics {
    pub coverage: f64,
    pub size: f64,
    pub repr_complexity: f64,
    pub max_repr_complexity: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub method: String,
    pub coverage: f64,
    pub coverage_sd: f64,
    pub size: f64,
    pub size_sd: f64,
    pub repr_complexity: f64,
    pub repr_complexity_sd: f64,
    /// Largest per-instance complexity seen in any split.
    pub max_repr_complexity: usize,
    pub resamples: usize,
    #[serde(skip)]
    pub splits: Vec<SplitMetrics>,
}

impl MetricRow {
    pub fn from_splits(method: &str, splits: Vec<SplitMetrics>) -> Result<Self> {
        if splits.is_empty() {
            return Err(Error::Empty("resamples"));
        }
        let col = |f: fn(&SplitMetrics) -> f64| splits.iter().map(f).collect::<Vec<f64>>();
        let (cov, size, cx) = (
            col(|m| m.coverage),
            col(|m| m.size),
            col(|m| m.repr_complexity),
        );
        Ok(MetricRow {
            method: method.to_string(),
            coverage: mean(cov.iter().copied()).0,
            coverage_sd: sample_sd(&cov),
            size: mean(size.iter().copied()).0,
            size_sd: sample_sd(&size),
            repr_complexity: mean(cx.iter().copied()).0,
            repr_complexity_sd: sample_sd(&cx),
            max_repr_complexity: splits
                .iter()
                .map(|m| m.max_repr_complexity)
                .max()
                .unwrap_or(0),
            resamples: splits.len(),
            splits,
        })
    }

    /// Monte-Carlo standard error of the mean coverage.
    pub fn coverage_se(&self) -> f64 {
        self.coverage_sd / (self.resamples as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub alpha: Option<f64>,
    pub rows: Vec<MetricRow>,
}

impl MetricReport {
    /// Report for a single batch of predictions.
    pub fn evaluate<S: AsRef<[ClassId]>>(
        h: &Hierarchy,
        method: &str,
        sets: &[S],
        labels: &[ClassId],
    ) -> Result<Self> {
        let max = sets
            .iter()
            .map(|s| h.representation_complexity(s.as_ref()))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .max()
            .unwrap_or(0);
        let split = SplitMetrics {
            coverage: coverage(sets, labels)?,
            size: average_size(sets)?,
            repr_complexity: average_complexity(h, sets)?,
            max_repr_complexity: max,
        };
        Ok(MetricReport {
            alpha: None,
            rows: vec![MetricRow::from_splits(method, vec![split])?],
        })
    }

    pub fn row(&self, method: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        csv.write_record([
            "method",
            "coverage",
            "coverage_sd",
            "size",
            "size_sd",
            "repr_complexity",
            "repr_complexity_sd",
        ])?;
        for r in &self.rows {
            csv.write_record([
                r.method.clone(),
                r.coverage.to_string(),
                r.coverage_sd.to_string(),
                r.size.to_string(),
                r.size_sd.to_string(),
                r.repr_complexity.to_string(),
                r.repr_complexity_sd.to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        self.write_csv(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("csv output is utf-8")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Perfectly calibrated data: every label is drawn from its own row.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub hierarchy: Hierarchy,
    pub probs: Vec<ProbabilityView>,
    pub labels: Vec<ClassId>,
    pub seed: u64,
    pub concentration: f64,
}

/// Balanced `arity`-ary tree over `k` leaves; rows drawn from a symmetric
/// Dirichlet(`concentration`).
pub fn generate_synthetic(
    k: usize,
    arity: usize,
    n: usize,
    concentration: f64,
    seed: u64,
) -> Result<SyntheticDataset> {
    if !(concentration.is_finite() && concentration > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "concentration must be positive, got {concentration}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one instance".into()));
    }
    let hierarchy = Hierarchy::balanced(k, arity)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let view = dirichlet_view(k, concentration, &mut rng)?;
        let label = WeightedIndex::new(view.masses())
            .map_err(|e| Error::Distribution(e.to_string()))?
            .sample(&mut rng);
        probs.push(view);
        labels.push(label);
    }
    Ok(SyntheticDataset {
        hierarchy,
        probs,
        labels,
        seed,
        concentration,
    })
}

impl SyntheticDataset {
    pub fn benchmark(
        &self,
        methods: &[MethodSpec],
        alpha: f64,
        resamples: usize,
        seed: u64,
    ) -> Result<MetricReport> {
        run_benchmark(
            &self.hierarchy,
            &self.probs,
            &self.labels,
            methods,
            alpha,
            resamples,
            seed,
        )
    }
}

struct Column {
    label: String,
    randomized: bool,
    families: Vec<NestedFamily>,
}

/// Repeatedly splits the pool into calibration and test halves, calibrates
/// every method on the first half and scores it on the second.
///
/// Split `s` shuffles with stream `2s` of `seed` and draws `u` for pool
/// instance `i` from stream `2s + 1` at index `i`, so all methods in a split
/// share the same draws and results do not depend on thread count.
pub fn run_benchmark(
    h: &Hierarchy,
    probs: &[ProbabilityView],
    labels: &[ClassId],
    methods: &[MethodSpec],
    alpha: f64,
    resamples: usize,
    seed: u64,
) -> Result<MetricReport> {
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "probability rows vs labels",
            left: probs.len(),
            right: labels.len(),
        });
    }
    if probs.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least two instances to split, got {}",
            probs.len()
        )));
    }
    if resamples == 0 {
        return Err(Error::InvalidParameter("need at least one resample".into()));
    }
    if methods.is_empty() {
        return Err(Error::InvalidParameter("no methods selected".into()));
    }
    for &y in labels {
        h.check_class(y)?;
    }

    let columns = methods
        .iter()
        .map(|spec| {
            let config = spec.config(alpha, h.num_classes());
            config.validate()?;
            let method: Arc<dyn NestedSetMethod> = config.build_method()?;
            let families = probs
                .par_iter()
                .map(|p| method.family(h, p))
                .collect::<Result<Vec<_>>>()?;
            Ok(Column {
                label: spec.label.clone(),
                randomized: spec.randomized,
                families,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let n_cal = probs.len() / 2;
    let per_split: Vec<Vec<SplitMetrics>> = (0..resamples as u64)
        .into_par_iter()
        .map(|s| {
            let mut pool: Vec<usize> = (0..probs.len()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(2 * s);
            pool.shuffle(&mut rng);
            let (cal, test) = pool.split_at(n_cal);
            let draws = Randomizer::Seeded {
                seed,
                stream: 2 * s + 1,
            };
            columns
                .iter()
                .map(|col| split_metrics(col, cal, test, labels, draws, alpha))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let rows = columns
        .iter()
        .enumerate()
        .map(|(m, col)| {
            MetricRow::from_splits(&col.label, per_split.iter().map(|s| s[m]).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport {
        alpha: Some(alpha),
        rows,
    })
}

fn split_metrics(
    col: &Column,
    cal: &[usize],
    test: &[usize],
    labels: &[ClassId],
    draws: Randomizer,
    alpha: f64,
) -> Result<SplitMetrics> {
    let u = |i: usize| {
        if col.randomized {
            draws.draw(i as u64)
        } else {
            0.0
        }
    };
    let scores = cal
        .iter()
        .map(|&i| col.families[i].score(labels[i], u(i)))
        .collect::<Result<Vec<_>>>()?;
    let tau = conformal_quantile(&scores, alpha)?;
    let mut hits = 0usize;
    let mut sizes = Vec::with_capacity(test.len());
    let mut complexities = Vec::with_capacity(test.len());
    let mut max_complexity = 0;
    for &i in test {
        let family = &col.families[i];
        let entry = family.select(tau, u(i), true);
        hits += usize::from(family.covers(entry, labels[i]));
        sizes.push(family.size(entry) as f64);
        let c = family.complexity(entry);
        max_complexity = max_complexity.max(c);
        complexities.push(c as f64);
    }
    Ok(SplitMetrics {
        coverage: hits as f64 / test.len() as f64,
        size: mean(sizes).0,
        repr_complexity: mean(complexities).0,
        max_repr_complexity: max_complexity,
    })
}
