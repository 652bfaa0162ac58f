//! Concrete-scenario generation: Monte Carlo sampling from fitted densities,
//! entropy-weighted combinatorial generation, and importance-sampling
//! campaigns for rare dangerous events.
//!
//! Minimum test counts for a relative-precision target `z`:
//!
//! ```text
//! naive:      n = z (1 - γ) / γ
//! importance: n = z (E_f*[I² L²] / γ² - 1)
//! ```
//!
//! The importance form is written with divisor `γ²`. With `f* = f` the
//! second moment is `γ` and it reduces to the naive count. A divisor of
//! `γ² - 1` would be negative on `(0, 1)` and is not used.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashSet};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::analyze::ImportanceScores;
use crate::density::{Density, ParamDensity};
use crate::ontology::{concretize_with_id, Domain, OntologyError, ParamValue, ParameterSpec, Scenario, ScenarioKind};
use crate::seed;

/// Resampling attempts before a truncated draw is clamped into its domain.
pub const MAX_RESAMPLE: usize = 1000;

pub type Assignment = BTreeMap<String, ParamValue>;

#[derive(Debug, Error, PartialEq)]
pub enum GenerateError {
    #[error("densities do not match the logical scenario: {0}")]
    DomainDensityMismatch(String),
    #[error("parameter {0}: no in-domain draw after {MAX_RESAMPLE} tries")]
    ResampleExhausted(String),
    #[error("proposal density is zero at a point where the source density is not (parameter {0})")]
    ZeroProposalDensity(String),
    #[error("combinatorial generation needs at least one discrete parameter")]
    NoDiscreteSpecs,
    #[error("parameter {0} is not discrete")]
    NotDiscrete(String),
    #[error("parameter {0} appears more than once")]
    DuplicateParameter(String),
    #[error("importance sampling needs a proposal density")]
    MissingProposal,
    #[error("random generation draws from the source densities; remove the proposal")]
    UnexpectedProposal,
    #[error("second moment {second_moment} is below gamma^2 = {}", gamma * gamma)]
    MomentBelowSquare { second_moment: f64, gamma: f64 },
    #[error("invalid test budget: {0}")]
    InvalidBudget(String),
    #[error("at least one draw is required")]
    EmptyCampaign,
    #[error("the pilot run produced no dangerous draws; supply a shift direction")]
    NoDangerInPilot,
    #[error("no shift along the danger direction reaches the target hit rate")]
    ShiftSearchFailed,
    #[error("the estimates carry no usable danger probability")]
    DegenerateEstimate,
    #[error(transparent)]
    Ontology(#[from] OntologyError),
}

/// Everything needed to draw concrete scenarios from a logical one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingPlan {
    pub logical: Scenario,
    /// Source density `f` per continuous parameter.
    pub densities: BTreeMap<String, ParamDensity>,
    /// Relative level frequencies per discrete parameter. Missing entries
    /// mean uniform over the declared levels.
    #[serde(default)]
    pub level_freqs: BTreeMap<String, BTreeMap<String, f64>>,
    /// Proposal density `f*`, same keys as `densities`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal: Option<BTreeMap<String, ParamDensity>>,
    pub seed: u64,
    pub count: usize,
    /// Clamp into the domain once resampling is exhausted.
    #[serde(default = "default_true")]
    pub clamp: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Source {
    Nominal,
    Proposal,
}

impl SamplingPlan {
    pub fn new(logical: Scenario, densities: BTreeMap<String, ParamDensity>, seed: u64, count: usize) -> Self {
        SamplingPlan {
            logical,
            densities,
            level_freqs: BTreeMap::new(),
            proposal: None,
            seed,
            count,
            clamp: true,
        }
    }

    pub fn with_proposal(mut self, proposal: BTreeMap<String, ParamDensity>) -> Self {
        self.proposal = Some(proposal);
        self
    }

    pub fn validate(&self) -> Result<(), GenerateError> {
        if self.logical.kind != ScenarioKind::Logical {
            return Err(OntologyError::KindMismatch {
                expected: ScenarioKind::Logical,
                found: self.logical.kind,
            }
            .into());
        }
        let specs = self.logical.specs();
        for spec in &specs {
            match &spec.domain {
                Domain::Continuous { .. } => {
                    if !self.densities.contains_key(&spec.name) {
                        return Err(GenerateError::DomainDensityMismatch(format!("no density for {}", spec.name)));
                    }
                }
                Domain::Discrete { levels } => {
                    if self.densities.contains_key(&spec.name) {
                        return Err(GenerateError::DomainDensityMismatch(format!(
                            "{} is discrete but has a density",
                            spec.name
                        )));
                    }
                    if let Some(freqs) = self.level_freqs.get(&spec.name) {
                        if let Some(bad) = freqs.keys().find(|l| !levels.contains(l)) {
                            return Err(GenerateError::DomainDensityMismatch(format!(
                                "{}: unknown level {bad}",
                                spec.name
                            )));
                        }
                        if freqs.values().any(|p| !(p.is_finite() && *p >= 0.0)) || freqs.values().sum::<f64>() <= 0.0 {
                            return Err(GenerateError::DomainDensityMismatch(format!(
                                "{}: level frequencies must be non-negative with a positive sum",
                                spec.name
                            )));
                        }
                    }
                }
            }
        }
        if let Some(extra) = self.densities.keys().find(|k| !self.logical.params.contains_key(*k)) {
            return Err(GenerateError::DomainDensityMismatch(format!("density for unknown parameter {extra}")));
        }
        if let Some(extra) = self.level_freqs.keys().find(|k| !self.logical.params.contains_key(*k)) {
            return Err(GenerateError::DomainDensityMismatch(format!(
                "level frequencies for unknown parameter {extra}"
            )));
        }
        if let Some(p) = &self.proposal {
            if !p.keys().eq(self.densities.keys()) {
                return Err(GenerateError::DomainDensityMismatch(
                    "proposal must cover exactly the parameters of the source densities".into(),
                ));
            }
        }
        Ok(())
    }

    fn source(&self, which: Source) -> Result<&BTreeMap<String, ParamDensity>, GenerateError> {
        match which {
            Source::Nominal => Ok(&self.densities),
            Source::Proposal => self.proposal.as_ref().ok_or(GenerateError::MissingProposal),
        }
    }

    fn draw_seed(&self, which: Source) -> u64 {
        match which {
            Source::Nominal => self.seed,
            Source::Proposal => seed::stage_seed(self.seed, "proposal"),
        }
    }

    /// Draw `index` from the chosen source. Each draw has its own stream, so
    /// results do not depend on evaluation order.
    fn draw(&self, which: Source, index: u64) -> Result<Assignment, GenerateError> {
        let densities = self.source(which)?;
        let mut rng = seed::draw_rng(self.draw_seed(which), index);
        let mut out = Assignment::new();
        for (name, p) in &self.logical.params {
            let value = match p.domain() {
                Some(Domain::Continuous { lo, hi }) => {
                    ParamValue::Number(truncated_draw(&densities[name], *lo, *hi, self.clamp, name, &mut rng)?)
                }
                Some(Domain::Discrete { levels }) => {
                    ParamValue::Level(draw_level(levels, self.level_freqs.get(name), &mut rng))
                }
                None => unreachable!("validated logical scenario"),
            };
            out.insert(name.clone(), value);
        }
        Ok(out)
    }

    fn scenario(&self, assignment: &Assignment, id: String) -> Result<Scenario, GenerateError> {
        let mut s = concretize_with_id(&self.logical, assignment, &id)?;
        s.provenance.seed = Some(self.seed);
        Ok(s)
    }
}

fn truncated_draw<R: Rng + ?Sized>(
    d: &ParamDensity,
    lo: f64,
    hi: f64,
    clamp: bool,
    name: &str,
    rng: &mut R,
) -> Result<f64, GenerateError> {
    let mut last = f64::NAN;
    for _ in 0..MAX_RESAMPLE {
        last = d.draw(rng);
        if (lo..=hi).contains(&last) {
            return Ok(last);
        }
    }
    if clamp {
        Ok(if last.is_nan() { lo } else { last.clamp(lo, hi) })
    } else {
        Err(GenerateError::ResampleExhausted(name.to_string()))
    }
}

fn draw_level<R: Rng + ?Sized>(levels: &[String], freqs: Option<&BTreeMap<String, f64>>, rng: &mut R) -> String {
    let weights: Vec<f64> = match freqs {
        Some(f) => levels.iter().map(|l| f.get(l).copied().unwrap_or(0.0)).collect(),
        None => vec![1.0; levels.len()],
    };
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (l, w) in levels.iter().zip(&weights) {
        if u < *w {
            return l.clone();
        }
        u -= w;
    }
    // rounding can leave u just above the last positive weight
    let last = weights.iter().rposition(|w| *w > 0.0).unwrap_or(levels.len() - 1);
    levels[last].clone()
}

/// `count` concrete scenarios drawn from the source densities, each inside
/// the logical domain. Ids are `<logical id>-r<index>`.
pub fn random_generate(plan: &SamplingPlan) -> Result<Vec<Scenario>, GenerateError> {
    plan.validate()?;
    if plan.proposal.is_some() {
        return Err(GenerateError::UnexpectedProposal);
    }
    let width = digits(plan.count);
    (0..plan.count)
        .into_par_iter()
        .map(|j| {
            let a = plan.draw(Source::Nominal, j as u64)?;
            plan.scenario(&a, format!("{}-r{:0width$}", plan.logical.id, j))
        })
        .collect()
}

fn digits(count: usize) -> usize {
    count.saturating_sub(1).max(1).to_string().len()
}

#[derive(PartialEq)]
struct Ranked {
    score: f64,
    /// Level index per element in declaration order.
    tuple: Vec<usize>,
    /// Position per element in the contribution-sorted level order.
    ranks: Vec<usize>,
}

impl Eq for Ranked {}

impl Ord for Ranked {
    // max-heap: higher score first, then lexicographically smaller tuple
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.tuple.cmp(&self.tuple))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Score of one level combination: `sum_e weight(e) * (-p log2 p)` summed in
/// element order.
pub fn combination_score(specs: &[ParameterSpec], weights: &ImportanceScores, tuple: &[usize]) -> f64 {
    specs
        .iter()
        .zip(tuple)
        .map(|(s, &i)| match &s.domain {
            Domain::Discrete { levels } => element_term(weights, &s.name, &levels[i]),
            Domain::Continuous { .. } => 0.0,
        })
        .sum()
}

fn element_term(weights: &ImportanceScores, element: &str, level: &str) -> f64 {
    weights.weight.get(element).copied().unwrap_or(0.0) * weights.level_contribution(element, level)
}

/// The `budget` highest-scoring level combinations, ties broken by the
/// level-index tuple ascending. Returns the full factorial when it fits.
pub fn combinatorial_generate(
    specs: &[ParameterSpec],
    weights: &ImportanceScores,
    budget: usize,
) -> Result<Vec<Scenario>, GenerateError> {
    if specs.is_empty() {
        return Err(GenerateError::NoDiscreteSpecs);
    }
    let mut seen_names = HashSet::new();
    let mut level_lists = Vec::with_capacity(specs.len());
    for s in specs {
        if !seen_names.insert(s.name.as_str()) {
            return Err(GenerateError::DuplicateParameter(s.name.clone()));
        }
        match &s.domain {
            Domain::Discrete { levels } if !levels.is_empty() => level_lists.push(levels),
            _ => return Err(GenerateError::NotDiscrete(s.name.clone())),
        }
    }
    let budget = budget.max(1);

    // level indices of each element, best contribution first
    let order: Vec<Vec<usize>> = specs
        .iter()
        .zip(&level_lists)
        .map(|(s, levels)| {
            let mut idx: Vec<usize> = (0..levels.len()).collect();
            let term = |i: usize| element_term(weights, &s.name, &levels[i]);
            idx.sort_by(|&a, &b| term(b).total_cmp(&term(a)).then(a.cmp(&b)));
            idx
        })
        .collect();

    let make = |ranks: Vec<usize>| {
        let tuple: Vec<usize> = ranks.iter().zip(&order).map(|(&r, o)| o[r]).collect();
        Ranked {
            score: combination_score(specs, weights, &tuple),
            tuple,
            ranks,
        }
    };
    let mut heap = BinaryHeap::new();
    let mut pushed = HashSet::new();
    let start = vec![0; specs.len()];
    pushed.insert(start.clone());
    heap.push(make(start));
    let mut picked = Vec::new();
    while let Some(best) = heap.pop() {
        for e in 0..specs.len() {
            if best.ranks[e] + 1 < order[e].len() {
                let mut next = best.ranks.clone();
                next[e] += 1;
                if pushed.insert(next.clone()) {
                    heap.push(make(next));
                }
            }
        }
        picked.push(best.tuple);
        if picked.len() == budget {
            break;
        }
    }

    let logical = Scenario::logical("combinatorial", specs.iter().cloned());
    let width = digits(picked.len());
    picked
        .iter()
        .enumerate()
        .map(|(rank, tuple)| {
            let assignment: Assignment = specs
                .iter()
                .zip(tuple)
                .zip(&level_lists)
                .map(|((s, &i), levels)| (s.name.clone(), ParamValue::Level(levels[i].clone())))
                .collect();
            Ok(concretize_with_id(&logical, &assignment, &format!("combinatorial-c{rank:0width$}"))?)
        })
        .collect()
}

/// Precision factor `z` and danger probability `γ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestBudget {
    pub z: f64,
    pub gamma: f64,
}

impl TestBudget {
    pub fn new(z: f64, gamma: f64) -> Result<Self, GenerateError> {
        if !(z > 0.0 && z.is_finite()) {
            return Err(GenerateError::InvalidBudget(format!("z must be positive, got {z}")));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(GenerateError::InvalidBudget(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        Ok(TestBudget { z, gamma })
    }

    /// `z = (Φ⁻¹(1 - α/2) / β)²`: confidence `1 - α` that the estimate is
    /// within relative half-width `β`.
    pub fn z_for(alpha: f64, beta: f64) -> f64 {
        let q = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
        (q / beta).powi(2)
    }

    /// `z` for 95% confidence and 10% relative half-width (≈ 384.1).
    pub fn default_z() -> f64 {
        Self::z_for(0.05, 0.1)
    }

    pub fn with_gamma(self, gamma: f64) -> Result<Self, GenerateError> {
        TestBudget::new(self.z, gamma)
    }
}

/// Ceiling that first snaps values within 1e-9 (relative) of an integer,
/// so that rounding noise in `z (1 - γ) / γ` does not add a test.
fn ceil_count(x: f64) -> u64 {
    let x = x.max(0.0);
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

pub fn min_tests_naive(b: &TestBudget) -> u64 {
    ceil_count(b.z * (1.0 - b.gamma) / b.gamma)
}

pub fn min_tests_is(second_moment: f64, b: &TestBudget) -> Result<u64, GenerateError> {
    let g2 = b.gamma * b.gamma;
    if !second_moment.is_finite() || second_moment < g2 * (1.0 - 1e-12) {
        return Err(GenerateError::MomentBelowSquare {
            second_moment,
            gamma: b.gamma,
        });
    }
    Ok(ceil_count(b.z * (second_moment / g2 - 1.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Naive,
    Importance,
}

/// Min, max and mean of the likelihood ratios over all draws.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DangerEstimate {
    pub method: Method,
    pub n: usize,
    pub gamma_hat: f64,
    /// Sample standard deviation of the summands over `sqrt(n)`.
    pub std_error: f64,
    /// Empirical `E[I L²]`; equals `gamma_hat` for the naive method.
    pub second_moment: f64,
    pub weights: WeightSummary,
    pub seed: u64,
}

/// JSON record of one campaign.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub method: Method,
    pub n: usize,
    pub gamma_hat: f64,
    pub std_error: f64,
    pub second_moment: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceleration_factor: Option<f64>,
    pub seed: u64,
}

impl DangerEstimate {
    pub fn report(&self, acceleration_factor: Option<f64>) -> CampaignReport {
        CampaignReport {
            method: self.method,
            n: self.n,
            gamma_hat: self.gamma_hat,
            std_error: self.std_error,
            second_moment: self.second_moment,
            acceleration_factor,
            seed: self.seed,
        }
    }
}

/// Per-parameter truncation masses `Z = F(hi) - F(lo)` of a density set.
fn truncation_masses(plan: &SamplingPlan, densities: &BTreeMap<String, ParamDensity>) -> BTreeMap<String, f64> {
    densities
        .iter()
        .map(|(name, d)| {
            let z = match plan.logical.params[name].domain() {
                Some(Domain::Continuous { lo, hi }) => d.mass(*lo, *hi),
                _ => 1.0,
            };
            (name.clone(), z)
        })
        .collect()
}

/// Likelihood ratio `L = f(x) / f*(x)` of the domain-truncated densities.
/// Discrete parameters share one distribution and cancel.
fn likelihood_ratio(
    plan: &SamplingPlan,
    proposal: &BTreeMap<String, ParamDensity>,
    z_f: &BTreeMap<String, f64>,
    z_p: &BTreeMap<String, f64>,
    x: &Assignment,
) -> Result<f64, GenerateError> {
    let mut log_l = 0.0;
    for (name, f) in &plan.densities {
        let v = x[name].as_number().expect("continuous parameter");
        let fx = f.pdf(v) / z_f[name];
        let px = proposal[name].pdf(v) / z_p[name];
        if fx == 0.0 {
            return Ok(0.0);
        }
        if !(px > 0.0) || !px.is_finite() {
            return Err(GenerateError::ZeroProposalDensity(name.clone()));
        }
        log_l += fx.ln() - px.ln();
    }
    Ok(log_l.exp())
}

/// Estimates `γ = P_f(danger)` from `n` draws.
///
/// `Naive` draws from `f` and averages the indicator. `Importance` draws from
/// the proposal and averages `I(x) L(x)`.
pub fn is_estimate<F>(plan: &SamplingPlan, indicator: F, n: usize, method: Method) -> Result<DangerEstimate, GenerateError>
where
    F: Fn(&Scenario) -> bool + Sync,
{
    plan.validate()?;
    if n == 0 {
        return Err(GenerateError::EmptyCampaign);
    }
    let (source, weigh) = match method {
        Method::Naive => (Source::Nominal, None),
        Method::Importance => {
            let p = plan.proposal.as_ref().ok_or(GenerateError::MissingProposal)?;
            let z_f = truncation_masses(plan, &plan.densities);
            let z_p = truncation_masses(plan, p);
            (Source::Proposal, Some((p, z_f, z_p)))
        }
    };
    let width = digits(n);
    let draws: Vec<(bool, f64)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let x = plan.draw(source, j as u64)?;
            let l = match &weigh {
                None => 1.0,
                Some((p, z_f, z_p)) => likelihood_ratio(plan, p, z_f, z_p, &x)?,
            };
            let s = plan.scenario(&x, format!("{}-d{:0width$}", plan.logical.id, j))?;
            Ok((indicator(&s), l))
        })
        .collect::<Result<_, GenerateError>>()?;

    let nf = n as f64;
    let summands: Vec<f64> = draws.iter().map(|&(i, l)| if i { l } else { 0.0 }).collect();
    let mean = summands.iter().sum::<f64>() / nf;
    let var = if n > 1 {
        summands.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (nf - 1.0)
    } else {
        0.0
    };
    let second_moment = draws.iter().map(|&(i, l)| if i { l * l } else { 0.0 }).sum::<f64>() / nf;
    let ls = draws.iter().map(|d| d.1);
    let weights = WeightSummary {
        min: ls.clone().fold(f64::INFINITY, f64::min),
        max: ls.clone().fold(f64::NEG_INFINITY, f64::max),
        mean: ls.sum::<f64>() / nf,
    };
    Ok(DangerEstimate {
        method,
        n,
        gamma_hat: mean,
        std_error: (var / nf).sqrt(),
        second_moment,
        weights,
        seed: plan.seed,
    })
}

/// Inverse-variance pooled estimate of `γ`.
pub fn pooled_gamma(a: &DangerEstimate, b: &DangerEstimate) -> f64 {
    match (a.std_error > 0.0, b.std_error > 0.0) {
        (true, true) => {
            let (wa, wb) = (a.std_error.powi(-2), b.std_error.powi(-2));
            (wa * a.gamma_hat + wb * b.gamma_hat) / (wa + wb)
        }
        (false, true) => a.gamma_hat,
        (true, false) => b.gamma_hat,
        (false, false) => 0.5 * (a.gamma_hat + b.gamma_hat),
    }
}

/// Ratio of the naive test count to the importance-sampling test count at
/// the pooled `γ` (the latter floored at one test).
pub fn acceleration_factor(naive: &DangerEstimate, is: &DangerEstimate, b: &TestBudget) -> Result<f64, GenerateError> {
    let gamma = pooled_gamma(naive, is);
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(GenerateError::DegenerateEstimate);
    }
    let b = b.with_gamma(gamma)?;
    let n_naive = min_tests_naive(&b);
    let n_is = min_tests_is(is.second_moment.max(gamma * gamma), &b)?;
    Ok(n_naive as f64 / n_is.max(1) as f64)
}

/// Mean of the dangerous pilot draws minus the mean of all pilot draws, per
/// continuous parameter.
pub fn danger_direction<F>(plan: &SamplingPlan, indicator: F, pilot_n: usize) -> Result<BTreeMap<String, f64>, GenerateError>
where
    F: Fn(&Scenario) -> bool + Sync,
{
    plan.validate()?;
    let names: Vec<&String> = plan.densities.keys().collect();
    let pilot: Vec<(Vec<f64>, bool)> = (0..pilot_n)
        .into_par_iter()
        .map(|j| {
            let x = plan.draw(Source::Nominal, j as u64)?;
            let s = plan.scenario(&x, format!("{}-pilot", plan.logical.id))?;
            let v = names.iter().map(|n| x[*n].as_number().unwrap_or(0.0)).collect();
            Ok((v, indicator(&s)))
        })
        .collect::<Result<_, GenerateError>>()?;
    let danger: Vec<&Vec<f64>> = pilot.iter().filter(|p| p.1).map(|p| &p.0).collect();
    if danger.is_empty() {
        return Err(GenerateError::NoDangerInPilot);
    }
    let mean_of = |rows: &[&Vec<f64>], c: usize| rows.iter().map(|r| r[c]).sum::<f64>() / rows.len() as f64;
    let all: Vec<&Vec<f64>> = pilot.iter().map(|p| &p.0).collect();
    Ok(names
        .iter()
        .enumerate()
        .map(|(c, n)| ((*n).clone(), mean_of(&danger, c) - mean_of(&all, c)))
        .collect())
}

/// Source densities translated by `factor * direction`.
pub fn shifted_proposal(plan: &SamplingPlan, direction: &BTreeMap<String, f64>, factor: f64) -> BTreeMap<String, ParamDensity> {
    plan.densities
        .iter()
        .map(|(n, d)| (n.clone(), d.clone().shifted(factor * direction.get(n).copied().unwrap_or(0.0))))
        .collect()
}

/// Builds a proposal by shifting every source density along the danger
/// direction until at least `target_rate` of the proposal draws are
/// dangerous.
///
/// The direction comes from [`danger_direction`] on `pilot_n` source draws
/// unless given explicitly. The smallest sufficient shift factor is located
/// by doubling and then bisection on `rate_draws` draws that use common
/// random numbers across candidate shifts.
pub fn build_proposal<F>(
    plan: &SamplingPlan,
    indicator: F,
    pilot_n: usize,
    rate_draws: usize,
    target_rate: f64,
    direction: Option<BTreeMap<String, f64>>,
) -> Result<BTreeMap<String, ParamDensity>, GenerateError>
where
    F: Fn(&Scenario) -> bool + Sync,
{
    plan.validate()?;
    let direction = match direction {
        Some(d) => d,
        None => danger_direction(plan, &indicator, pilot_n)?,
    };
    if direction.values().all(|d| *d == 0.0) {
        return Err(GenerateError::ShiftSearchFailed);
    }
    let rate = |factor: f64| -> Result<f64, GenerateError> {
        let mut trial = plan.clone();
        trial.densities = shifted_proposal(plan, &direction, factor);
        trial.proposal = None;
        let hits = (0..rate_draws)
            .into_par_iter()
            .map(|j| {
                let x = trial.draw(Source::Nominal, j as u64)?;
                Ok(indicator(&trial.scenario(&x, format!("{}-rate", plan.logical.id))?))
            })
            .collect::<Result<Vec<bool>, GenerateError>>()?;
        Ok(hits.iter().filter(|h| **h).count() as f64 / rate_draws.max(1) as f64)
    };

    if rate(0.0)? >= target_rate {
        return Ok(shifted_proposal(plan, &direction, 0.0));
    }
    let mut hi = 1.0;
    let mut found = false;
    for _ in 0..30 {
        if rate(hi)? >= target_rate {
            found = true;
            break;
        }
        hi *= 2.0;
    }
    if !found {
        return Err(GenerateError::ShiftSearchFailed);
    }
    let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
    for _ in 0..20 {
        let mid = 0.5 * (lo + hi);
        if rate(mid)? >= target_rate {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    log::info!("proposal shift factor {hi:.4}");
    Ok(shifted_proposal(plan, &direction, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyze::importance_scores;
    use crate::density::{kde_fit, Bandwidth, Kernel};
    use crate::ontology::{contains, ElementCategory};

    fn speed_plan(count: usize) -> SamplingPlan {
        let logical = Scenario::logical(
            "follow",
            [ParameterSpec::continuous("speed", ElementCategory::EgoBasic, "m/s", 10.0, 30.0)],
        );
        let samples: Vec<f64> = (0..200).map(|i| 5.0 + 0.15 * i as f64).collect();
        let kde = kde_fit(&samples, Kernel::Gaussian, Bandwidth::Silverman).unwrap();
        SamplingPlan::new(logical, BTreeMap::from([("speed".into(), ParamDensity::Kde(kde))]), 7, count)
    }

    #[test]
    fn random_generate_respects_domain() {
        assert!(random_generate(&speed_plan(0)).unwrap().is_empty());
        let plan = speed_plan(100);
        let out = random_generate(&plan).unwrap();
        assert_eq!(out.len(), 100);
        for s in &out {
            let v = s.number("speed").unwrap();
            assert!((10.0..=30.0).contains(&v));
            assert!(contains(&plan.logical, s).unwrap());
            assert_eq!(s.provenance.parent.as_deref(), Some("follow"));
        }
        assert_eq!(out, random_generate(&plan).unwrap());
    }

    #[test]
    fn plan_validation() {
        let mut plan = speed_plan(3);
        plan.densities.clear();
        assert!(matches!(random_generate(&plan), Err(GenerateError::DomainDensityMismatch(_))));
        let mut plan = speed_plan(3);
        plan.proposal = Some(plan.densities.clone());
        assert_eq!(random_generate(&plan), Err(GenerateError::UnexpectedProposal));
    }

    #[test]
    fn resample_exhaustion_without_clamp() {
        let mut plan = speed_plan(2);
        plan.densities.insert("speed".into(), ParamDensity::normal(100.0, 0.1).unwrap());
        plan.clamp = false;
        assert_eq!(random_generate(&plan), Err(GenerateError::ResampleExhausted("speed".into())));
        plan.clamp = true;
        let out = random_generate(&plan).unwrap();
        assert!(out.iter().all(|s| s.number("speed") == Some(30.0)));
    }

    #[test]
    fn naive_counts() {
        assert_eq!(min_tests_naive(&TestBudget::new(1.0, 0.5).unwrap()), 1);
        assert_eq!(min_tests_naive(&TestBudget::new(100.0, 0.01).unwrap()), 9900);
        assert_eq!(min_tests_naive(&TestBudget::new(100.0, 0.99).unwrap()), 2);
    }

    #[test]
    fn importance_counts() {
        let b = TestBudget::new(100.0, 0.01).unwrap();
        assert_eq!(min_tests_is(0.01, &b).unwrap(), 9900);
        assert_eq!(min_tests_is(1e-4, &b).unwrap(), 0);
        assert_eq!(min_tests_is(2e-4, &b).unwrap(), 100);
        assert!(matches!(min_tests_is(5e-5, &b), Err(GenerateError::MomentBelowSquare { .. })));
    }

    #[test]
    fn budget_validation_and_default_z() {
        assert!(TestBudget::new(0.0, 0.1).is_err());
        assert!(TestBudget::new(1.0, 1.0).is_err());
        assert!((TestBudget::default_z() - 384.146).abs() < 1e-2);
    }

    fn estimate(gamma: f64, se: f64, second_moment: f64) -> DangerEstimate {
        DangerEstimate {
            method: Method::Importance,
            n: 1000,
            gamma_hat: gamma,
            std_error: se,
            second_moment,
            weights: WeightSummary { min: 1.0, max: 1.0, mean: 1.0 },
            seed: 0,
        }
    }

    #[test]
    fn acceleration_examples() {
        let b = TestBudget::new(100.0, 0.5).unwrap();
        let same = estimate(0.01, 0.003, 0.01);
        assert_eq!(acceleration_factor(&same, &same, &b).unwrap(), 1.0);
        let g: f64 = 0.01;
        let m = g * g * (1.0 + (1.0 - g) / g / 50.0);
        let f = acceleration_factor(&estimate(g, 1e-3, g), &estimate(g, 1e-3, m), &b).unwrap();
        assert_eq!(f, 50.0);
    }

    #[test]
    fn zero_indicator_gives_zero_estimate() {
        let plan = speed_plan(0);
        let e = is_estimate(&plan, |_| false, 50, Method::Naive).unwrap();
        assert_eq!((e.gamma_hat, e.std_error), (0.0, 0.0));
        let p = plan.clone().with_proposal(plan.densities.clone());
        let e = is_estimate(&p, |_| false, 50, Method::Importance).unwrap();
        assert_eq!((e.gamma_hat, e.std_error), (0.0, 0.0));
        assert_eq!(e.weights.min, 1.0);
        assert_eq!(is_estimate(&plan, |_| true, 5, Method::Importance), Err(GenerateError::MissingProposal));
    }

    fn two_by_three() -> (Vec<ParameterSpec>, ImportanceScores) {
        let specs = vec![
            ParameterSpec::discrete("light", ElementCategory::EnvWeatherLight, "", &["day", "night"]),
            ParameterSpec::discrete("road", ElementCategory::EnvStaticRoad, "", &["dry", "wet", "icy"]),
        ];
        let obs = BTreeMap::from([
            ("light".to_string(), ["day", "day", "day", "night"].map(String::from).to_vec()),
            ("road".to_string(), ["dry", "dry", "wet", "icy", "icy", "dry"].map(String::from).to_vec()),
        ]);
        (specs, importance_scores(&obs).unwrap())
    }

    #[test]
    fn combinatorial_full_factorial_and_ranking() {
        let (specs, w) = two_by_three();
        assert_eq!(combinatorial_generate(&specs, &w, 6).unwrap().len(), 6);
        assert_eq!(combinatorial_generate(&specs, &w, 60).unwrap().len(), 6);

        let mut all: Vec<Vec<usize>> = (0..2).flat_map(|a| (0..3).map(move |b| vec![a, b])).collect();
        all.sort_by(|a, b| {
            combination_score(&specs, &w, b)
                .total_cmp(&combination_score(&specs, &w, a))
                .then(a.cmp(b))
        });
        let top = combinatorial_generate(&specs, &w, 4).unwrap();
        let levels = [["day", "night"].as_slice(), ["dry", "wet", "icy"].as_slice()];
        for (s, t) in top.iter().zip(&all) {
            assert_eq!(s.params["light"].value().unwrap().as_level(), Some(levels[0][t[0]]));
            assert_eq!(s.params["road"].value().unwrap().as_level(), Some(levels[1][t[1]]));
        }
    }

    #[test]
    fn combinatorial_edge_cases() {
        let (specs, w) = two_by_three();
        assert_eq!(combinatorial_generate(&specs[1..], &w, 10).unwrap().len(), 3);
        assert_eq!(combinatorial_generate(&[], &w, 10), Err(GenerateError::NoDiscreteSpecs));
        let c = ParameterSpec::continuous("speed", ElementCategory::EgoBasic, "m/s", 0.0, 1.0);
        assert_eq!(combinatorial_generate(&[c], &w, 10), Err(GenerateError::NotDiscrete("speed".into())));
    }
}
