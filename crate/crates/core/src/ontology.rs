//! Scenario data model: the element taxonomy, the three abstraction levels
//! (functional, logical, concrete) and the checks that tie them together.
//!
//! A logical scenario is a parameter space; a concrete scenario is one point
//! in it. Domains are closed intervals, so boundary values are valid.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Leaf category of the scenario-element taxonomy.
///
/// The taxonomy is closed: the test vehicle itself is part of the scenario
/// (`ego.*`), everything else hangs under `env.*`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ElementCategory {
    #[serde(rename = "ego.basic")]
    EgoBasic,
    #[serde(rename = "ego.target")]
    EgoTarget,
    #[serde(rename = "ego.behavior")]
    EgoBehavior,
    #[serde(rename = "env.weather_light")]
    EnvWeatherLight,
    #[serde(rename = "env.static_road")]
    EnvStaticRoad,
    #[serde(rename = "env.dynamic_road")]
    EnvDynamicRoad,
    #[serde(rename = "env.participants")]
    EnvParticipants,
}

impl ElementCategory {
    pub const ALL: [ElementCategory; 7] = [
        ElementCategory::EgoBasic,
        ElementCategory::EgoTarget,
        ElementCategory::EgoBehavior,
        ElementCategory::EnvWeatherLight,
        ElementCategory::EnvStaticRoad,
        ElementCategory::EnvDynamicRoad,
        ElementCategory::EnvParticipants,
    ];

    pub fn path(self) -> &'static str {
        match self {
            ElementCategory::EgoBasic => "ego.basic",
            ElementCategory::EgoTarget => "ego.target",
            ElementCategory::EgoBehavior => "ego.behavior",
            ElementCategory::EnvWeatherLight => "env.weather_light",
            ElementCategory::EnvStaticRoad => "env.static_road",
            ElementCategory::EnvDynamicRoad => "env.dynamic_road",
            ElementCategory::EnvParticipants => "env.participants",
        }
    }

    /// Root of the hierarchy, `ego` or `env`.
    pub fn root(self) -> &'static str {
        self.path().split('.').next().unwrap_or_default()
    }
}

impl fmt::Display for ElementCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.path())
    }
}

impl FromStr for ElementCategory {
    type Err = OntologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ElementCategory::ALL
            .into_iter()
            .find(|c| c.path() == s)
            .ok_or_else(|| OntologyError::UnknownCategory(s.to_string()))
    }
}

/// Value domain of a logical parameter.
#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    /// Closed interval `[lo, hi]`.
    Continuous { lo: f64, hi: f64 },
    /// Finite list of named levels.
    Discrete { levels: Vec<String> },
}

impl Domain {
    pub fn contains(&self, value: &ParamValue) -> bool {
        match (self, value) {
            (Domain::Continuous { lo, hi }, ParamValue::Number(v)) => v.is_finite() && *lo <= *v && *v <= *hi,
            (Domain::Discrete { levels }, ParamValue::Level(l)) => levels.iter().any(|x| x == l),
            _ => false,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Domain::Discrete { .. })
    }
}

/// A concrete parameter value: a number for continuous domains, a level name
/// for discrete ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Level(String),
}

impl ParamValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            ParamValue::Number(v) => Some(*v),
            ParamValue::Level(_) => None,
        }
    }

    pub fn as_level(&self) -> Option<&str> {
        match self {
            ParamValue::Number(_) => None,
            ParamValue::Level(l) => Some(l),
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Number(v) => write!(f, "{v}"),
            ParamValue::Level(l) => f.write_str(l),
        }
    }
}

impl From<f64> for ParamValue {
    fn from(v: f64) -> Self {
        ParamValue::Number(v)
    }
}

impl From<&str> for ParamValue {
    fn from(v: &str) -> Self {
        ParamValue::Level(v.to_string())
    }
}

/// Quantified scenario element.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSpec {
    pub name: String,
    pub category: ElementCategory,
    pub unit: String,
    pub domain: Domain,
}

impl ParameterSpec {
    pub fn continuous(name: &str, category: ElementCategory, unit: &str, lo: f64, hi: f64) -> Self {
        ParameterSpec {
            name: name.to_string(),
            category,
            unit: unit.to_string(),
            domain: Domain::Continuous { lo, hi },
        }
    }

    pub fn discrete(name: &str, category: ElementCategory, unit: &str, levels: &[&str]) -> Self {
        ParameterSpec {
            name: name.to_string(),
            category,
            unit: unit.to_string(),
            domain: Domain::Discrete {
                levels: levels.iter().map(|s| s.to_string()).collect(),
            },
        }
    }

    /// Invariant violations of this spec alone.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        match &self.domain {
            Domain::Continuous { lo, hi } => {
                if !lo.is_finite() || !hi.is_finite() {
                    out.push(Violation::param(&self.name, "interval bounds must be finite"));
                } else if lo >= hi {
                    out.push(Violation::param(&self.name, "lo < hi"));
                }
            }
            Domain::Discrete { levels } => {
                if levels.is_empty() {
                    out.push(Violation::param(&self.name, "discrete domain needs at least one level"));
                }
                let distinct: BTreeSet<&String> = levels.iter().collect();
                if distinct.len() != levels.len() {
                    out.push(Violation::param(&self.name, "discrete levels must be distinct"));
                }
            }
        }
        out
    }
}

/// One parameter entry of a scenario: a spec on logical scenarios, an
/// assigned value on concrete ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParam", into = "RawParam")]
pub enum Param {
    Spec {
        category: ElementCategory,
        unit: String,
        domain: Domain,
    },
    Value {
        category: Option<ElementCategory>,
        unit: String,
        value: ParamValue,
    },
}

impl Param {
    pub fn unit(&self) -> &str {
        match self {
            Param::Spec { unit, .. } | Param::Value { unit, .. } => unit,
        }
    }

    pub fn category(&self) -> Option<ElementCategory> {
        match self {
            Param::Spec { category, .. } => Some(*category),
            Param::Value { category, .. } => *category,
        }
    }

    pub fn value(&self) -> Option<&ParamValue> {
        match self {
            Param::Value { value, .. } => Some(value),
            Param::Spec { .. } => None,
        }
    }

    pub fn domain(&self) -> Option<&Domain> {
        match self {
            Param::Spec { domain, .. } => Some(domain),
            Param::Value { .. } => None,
        }
    }

    pub fn to_spec(&self, name: &str) -> Option<ParameterSpec> {
        match self {
            Param::Spec { category, unit, domain } => Some(ParameterSpec {
                name: name.to_string(),
                category: *category,
                unit: unit.clone(),
                domain: domain.clone(),
            }),
            Param::Value { .. } => None,
        }
    }
}

impl From<ParameterSpec> for Param {
    fn from(s: ParameterSpec) -> Self {
        Param::Spec {
            category: s.category,
            unit: s.unit,
            domain: s.domain,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParam {
    unit: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<ElementCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    levels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<ParamValue>,
}

impl TryFrom<RawParam> for Param {
    type Error = String;

    fn try_from(r: RawParam) -> Result<Self, Self::Error> {
        match (r.lo, r.hi, r.levels, r.value) {
            (Some(lo), Some(hi), None, None) => Ok(Param::Spec {
                category: r.category.ok_or("interval parameter requires \"category\"")?,
                unit: r.unit,
                domain: Domain::Continuous { lo, hi },
            }),
            (None, None, Some(levels), None) => Ok(Param::Spec {
                category: r.category.ok_or("level parameter requires \"category\"")?,
                unit: r.unit,
                domain: Domain::Discrete { levels },
            }),
            (None, None, None, Some(value)) => Ok(Param::Value {
                category: r.category,
                unit: r.unit,
                value,
            }),
            _ => Err("parameter must carry exactly one of {lo,hi}, {levels} or {value}".to_string()),
        }
    }
}

impl From<Param> for RawParam {
    fn from(p: Param) -> Self {
        match p {
            Param::Spec { category, unit, domain } => match domain {
                Domain::Continuous { lo, hi } => RawParam {
                    unit,
                    category: Some(category),
                    lo: Some(lo),
                    hi: Some(hi),
                    levels: None,
                    value: None,
                },
                Domain::Discrete { levels } => RawParam {
                    unit,
                    category: Some(category),
                    lo: None,
                    hi: None,
                    levels: Some(levels),
                    value: None,
                },
            },
            Param::Value { category, unit, value } => RawParam {
                unit,
                category,
                lo: None,
                hi: None,
                levels: None,
                value: Some(value),
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Functional,
    Logical,
    Concrete,
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::Functional => "functional",
            ScenarioKind::Logical => "logical",
            ScenarioKind::Concrete => "concrete",
        })
    }
}

impl FromStr for ScenarioKind {
    type Err = OntologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "functional" => Ok(ScenarioKind::Functional),
            "logical" => Ok(ScenarioKind::Logical),
            "concrete" => Ok(ScenarioKind::Concrete),
            other => Err(OntologyError::UnknownKind(other.to_string())),
        }
    }
}

/// Where a scenario came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Id of the logical scenario a concrete scenario was drawn from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    pub kind: ScenarioKind,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    #[serde(default)]
    pub params: BTreeMap<String, Param>,
    #[serde(default)]
    pub provenance: Provenance,
}

impl Scenario {
    pub fn functional(id: &str, tags: &[&str]) -> Self {
        Scenario {
            id: id.to_string(),
            kind: ScenarioKind::Functional,
            tags: tags.iter().map(|t| t.to_string()).collect(),
            params: BTreeMap::new(),
            provenance: Provenance::default(),
        }
    }

    pub fn logical(id: &str, specs: impl IntoIterator<Item = ParameterSpec>) -> Self {
        Scenario {
            id: id.to_string(),
            kind: ScenarioKind::Logical,
            tags: BTreeSet::new(),
            params: specs.into_iter().map(|s| (s.name.clone(), Param::from(s))).collect(),
            provenance: Provenance::default(),
        }
    }

    pub fn with_tags(mut self, tags: &[&str]) -> Self {
        self.tags.extend(tags.iter().map(|t| t.to_string()));
        self
    }

    /// Logical parameter specs, in name order.
    pub fn specs(&self) -> Vec<ParameterSpec> {
        self.params.iter().filter_map(|(n, p)| p.to_spec(n)).collect()
    }

    /// Numeric value of a concrete parameter.
    pub fn number(&self, name: &str) -> Option<f64> {
        self.params.get(name).and_then(Param::value).and_then(ParamValue::as_number)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization is infallible")
    }
}

/// One broken invariant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param: Option<String>,
    pub reason: String,
}

impl Violation {
    fn param(name: &str, reason: &str) -> Self {
        Violation {
            param: Some(name.to_string()),
            reason: reason.to_string(),
        }
    }

    fn scenario(reason: &str) -> Self {
        Violation {
            param: None,
            reason: reason.to_string(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.param {
            Some(p) => write!(f, "{p}: {}", self.reason),
            None => f.write_str(&self.reason),
        }
    }
}

/// Result of [`validate_scenario`]; empty means valid.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join("; "))
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum OntologyError {
    #[error("expected a {expected} scenario, got {found}")]
    KindMismatch { expected: ScenarioKind, found: ScenarioKind },
    #[error("assignment is missing parameters: {}", .0.join(", "))]
    MissingParameter(Vec<String>),
    #[error("assignment names parameters the scenario does not declare: {}", .0.join(", "))]
    UnknownParameter(Vec<String>),
    #[error("value {value} is outside the domain of {name}")]
    OutOfDomain { name: String, value: String },
    #[error("unknown element category {0:?}")]
    UnknownCategory(String),
    #[error("unknown scenario kind {0:?}")]
    UnknownKind(String),
}

/// Lists every invariant the scenario breaks. When `parent` is given (the
/// logical scenario a concrete one was drawn from), concrete values are also
/// checked against the parent's domains.
pub fn validate_scenario(s: &Scenario, parent: Option<&Scenario>) -> ValidationReport {
    let mut v = Vec::new();
    if s.id.trim().is_empty() {
        v.push(Violation::scenario("id must be non-empty"));
    }
    match s.kind {
        ScenarioKind::Functional => {
            if !s.params.is_empty() {
                v.push(Violation::scenario("functional scenario must not carry parameters"));
            }
            if s.tags.is_empty() {
                v.push(Violation::scenario("functional scenario needs at least one tag"));
            }
        }
        ScenarioKind::Logical => {
            for (name, p) in &s.params {
                match p.to_spec(name) {
                    Some(spec) => v.extend(spec.violations()),
                    None => v.push(Violation::param(name, "logical scenario parameter must declare a domain")),
                }
            }
        }
        ScenarioKind::Concrete => {
            for (name, p) in &s.params {
                match p.value() {
                    Some(ParamValue::Number(x)) if !x.is_finite() => {
                        v.push(Violation::param(name, "value must be finite"))
                    }
                    Some(_) => {}
                    None => v.push(Violation::param(name, "concrete scenario parameter must carry a value")),
                }
            }
        }
    }
    if let (ScenarioKind::Concrete, Some(parent)) = (s.kind, parent) {
        if parent.kind != ScenarioKind::Logical {
            v.push(Violation::scenario("parent scenario is not logical"));
        } else {
            for (name, p) in &s.params {
                let Some(value) = p.value() else { continue };
                match parent.params.get(name).and_then(Param::domain) {
                    Some(domain) if domain.contains(value) => {}
                    Some(_) => v.push(Violation::param(
                        name,
                        &format!("value {value} outside the parent domain"),
                    )),
                    None => v.push(Violation::param(name, "parameter not declared by the parent")),
                }
            }
            for name in parent.params.keys() {
                if !s.params.contains_key(name) {
                    v.push(Violation::param(name, "parameter declared by the parent has no value"));
                }
            }
        }
    }
    ValidationReport { violations: v }
}

/// Deterministic id for a concrete point: parent id plus a hash of the
/// assignment.
fn assignment_id(parent: &str, assignment: &BTreeMap<String, ParamValue>) -> String {
    let canonical = serde_json::to_string(assignment).unwrap_or_default();
    format!("{parent}-{:016x}", crate::seed::fnv1a64(canonical.as_bytes()))
}

/// Binds every parameter of a logical scenario to a value.
pub fn concretize(logical: &Scenario, assignment: &BTreeMap<String, ParamValue>) -> Result<Scenario, OntologyError> {
    concretize_with_id(logical, assignment, &assignment_id(&logical.id, assignment))
}

pub fn concretize_with_id(
    logical: &Scenario,
    assignment: &BTreeMap<String, ParamValue>,
    id: &str,
) -> Result<Scenario, OntologyError> {
    if logical.kind != ScenarioKind::Logical {
        return Err(OntologyError::KindMismatch {
            expected: ScenarioKind::Logical,
            found: logical.kind,
        });
    }
    let missing: Vec<String> = logical
        .params
        .keys()
        .filter(|k| !assignment.contains_key(*k))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(OntologyError::MissingParameter(missing));
    }
    let unknown: Vec<String> = assignment
        .keys()
        .filter(|k| !logical.params.contains_key(*k))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(OntologyError::UnknownParameter(unknown));
    }

    let mut params = BTreeMap::new();
    for (name, p) in &logical.params {
        let value = &assignment[name];
        let Param::Spec { category, unit, domain } = p else {
            return Err(OntologyError::KindMismatch {
                expected: ScenarioKind::Logical,
                found: ScenarioKind::Concrete,
            });
        };
        if !domain.contains(value) {
            return Err(OntologyError::OutOfDomain {
                name: name.clone(),
                value: value.to_string(),
            });
        }
        params.insert(
            name.clone(),
            Param::Value {
                category: Some(*category),
                unit: unit.clone(),
                value: value.clone(),
            },
        );
    }
    Ok(Scenario {
        id: id.to_string(),
        kind: ScenarioKind::Concrete,
        tags: logical.tags.clone(),
        params,
        provenance: Provenance {
            source: logical.provenance.source.clone(),
            parent: Some(logical.id.clone()),
            seed: None,
            extra: BTreeMap::new(),
        },
    })
}

/// True iff `concrete` assigns exactly the parameters of `logical`, each
/// inside its domain.
pub fn contains(logical: &Scenario, concrete: &Scenario) -> Result<bool, OntologyError> {
    if logical.kind != ScenarioKind::Logical {
        return Err(OntologyError::KindMismatch {
            expected: ScenarioKind::Logical,
            found: logical.kind,
        });
    }
    if concrete.kind != ScenarioKind::Concrete {
        return Err(OntologyError::KindMismatch {
            expected: ScenarioKind::Concrete,
            found: concrete.kind,
        });
    }
    if logical.params.len() != concrete.params.len() {
        return Ok(false);
    }
    for (name, p) in &logical.params {
        let (Some(domain), Some(value)) = (p.domain(), concrete.params.get(name).and_then(Param::value)) else {
            return Ok(false);
        };
        if !domain.contains(value) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Parameter catalog shipped with the crate (see `data/starter_catalog.json`).
pub fn starter_catalog() -> Vec<ParameterSpec> {
    parse_catalog(include_str!("../data/starter_catalog.json")).expect("shipped catalog is valid")
}

/// Parses a catalog file: a JSON object mapping parameter name to a
/// logical parameter entry.
pub fn parse_catalog(text: &str) -> Result<Vec<ParameterSpec>, serde_json::Error> {
    let map: BTreeMap<String, Param> = serde_json::from_str(text)?;
    let mut out = Vec::with_capacity(map.len());
    for (name, p) in map {
        match p.to_spec(&name) {
            Some(s) => out.push(s),
            None => {
                return Err(serde::de::Error::custom(format!(
                    "catalog entry {name} must declare a domain, not a value"
                )))
            }
        }
    }
    Ok(out)
}
