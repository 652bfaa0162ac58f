//! Flat-file scenario library.
//!
//! ```text
//! <root>/index.json            version + one entry per scenario
//! <root>/scenarios/<id>.json   the scenario itself
//! ```
//!
//! Every write goes to a temporary file that is then renamed over the
//! target, so readers see either the old or the new index, never a partial
//! one. One writer at a time.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::{validate_scenario, Domain, Param, ParamValue, Scenario, ScenarioKind, ValidationReport};

pub const HOME_VAR: &str = "SCENLIB_HOME";
pub const INDEX_FILE: &str = "index.json";
pub const SCENARIO_DIR: &str = "scenarios";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("scenario {0:?} is already in the library")]
    DuplicateId(String),
    #[error("no scenario with id {0:?}")]
    NotFound(String),
    #[error("corrupt library entry {}: {reason}", path.display())]
    CorruptEntry { path: PathBuf, reason: String },
    #[error("scenario failed validation: {0}")]
    Invalid(ValidationReport),
    #[error("id {0:?} must be non-empty and use only letters, digits, '.', '_' and '-'")]
    InvalidId(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("no library root: pass one explicitly or set {HOME_VAR}")]
    NoLibraryRoot,
    #[error("storage failure: {0}")]
    StorageFailure(#[from] io::Error),
}

/// Indexed summary of one parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamSummary {
    Range { lo: f64, hi: f64 },
    Levels { levels: Vec<String> },
    Value(ParamValue),
}

impl ParamSummary {
    fn of(p: &Param) -> Self {
        match p {
            Param::Spec { domain: Domain::Continuous { lo, hi }, .. } => ParamSummary::Range { lo: *lo, hi: *hi },
            Param::Spec { domain: Domain::Discrete { levels }, .. } => ParamSummary::Levels { levels: levels.clone() },
            Param::Value { value, .. } => ParamSummary::Value(value.clone()),
        }
    }

    /// Concrete numbers must lie in `[lo, hi]`; logical intervals must
    /// overlap it.
    fn overlaps(&self, lo: f64, hi: f64) -> bool {
        match self {
            ParamSummary::Value(ParamValue::Number(v)) => lo <= *v && *v <= hi,
            ParamSummary::Range { lo: a, hi: b } => *a <= hi && lo <= *b,
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub kind: ScenarioKind,
    pub tags: BTreeSet<String>,
    pub summary: BTreeMap<String, ParamSummary>,
    /// Path relative to the library root.
    pub file: String,
}

impl IndexEntry {
    fn of(s: &Scenario) -> Self {
        IndexEntry {
            kind: s.kind,
            tags: s.tags.clone(),
            summary: s.params.iter().map(|(k, p)| (k.clone(), ParamSummary::of(p))).collect(),
            file: format!("{SCENARIO_DIR}/{}.json", s.id),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LibraryIndex {
    /// Incremented by every successful write.
    pub version: u64,
    pub entries: BTreeMap<String, IndexEntry>,
}

/// `lo <= value <= hi` on the named parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangePredicate {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawQuery")]
pub struct Query {
    /// Every tag must be present.
    pub tags: BTreeSet<String>,
    pub ranges: Vec<RangePredicate>,
    pub kind: Option<ScenarioKind>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuery {
    #[serde(default)]
    tags: BTreeSet<String>,
    #[serde(default)]
    ranges: Vec<RangePredicate>,
    #[serde(default)]
    kind: Option<ScenarioKind>,
}

impl TryFrom<RawQuery> for Query {
    type Error = StoreError;

    fn try_from(r: RawQuery) -> Result<Self, Self::Error> {
        Query::new(r.tags, r.ranges, r.kind)
    }
}

impl Query {
    pub fn new(
        tags: impl IntoIterator<Item = String>,
        ranges: Vec<RangePredicate>,
        kind: Option<ScenarioKind>,
    ) -> Result<Self, StoreError> {
        for r in &ranges {
            if r.lo.is_nan() || r.hi.is_nan() || r.lo > r.hi {
                return Err(StoreError::InvalidQuery(format!(
                    "range on {} needs lo <= hi, got [{}, {}]",
                    r.name, r.lo, r.hi
                )));
            }
        }
        Ok(Query {
            tags: tags.into_iter().collect(),
            ranges,
            kind,
        })
    }

    pub fn all() -> Self {
        Query::default()
    }

    pub fn with_range(mut self, name: &str, lo: f64, hi: f64) -> Result<Self, StoreError> {
        self.ranges.push(RangePredicate {
            name: name.to_string(),
            lo,
            hi,
        });
        Query::new(self.tags, self.ranges, self.kind)
    }

    pub fn with_tag(mut self, tag: &str) -> Self {
        self.tags.insert(tag.to_string());
        self
    }

    pub fn with_kind(mut self, kind: ScenarioKind) -> Self {
        self.kind = Some(kind);
        self
    }

    pub fn matches(&self, e: &IndexEntry) -> bool {
        self.kind.is_none_or(|k| k == e.kind)
            && self.tags.iter().all(|t| e.tags.contains(t))
            && self
                .ranges
                .iter()
                .all(|r| e.summary.get(&r.name).is_some_and(|s| s.overlaps(r.lo, r.hi)))
    }

    /// The same predicate evaluated on a full scenario.
    pub fn matches_scenario(&self, s: &Scenario) -> bool {
        self.matches(&IndexEntry::of(s))
    }
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'))
}

/// Writes `bytes` to `path` through a sibling temporary file and a rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

#[derive(Debug)]
pub struct Library {
    root: PathBuf,
    index: LibraryIndex,
}

impl Library {
    /// Opens (creating if needed) the library at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join(SCENARIO_DIR))?;
        let path = root.join(INDEX_FILE);
        let index = match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| StoreError::CorruptEntry {
                path: path.clone(),
                reason: e.to_string(),
            })?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => LibraryIndex::default(),
            Err(e) => return Err(e.into()),
        };
        Ok(Library { root, index })
    }

    /// Opens the library named by `SCENLIB_HOME`.
    pub fn from_env() -> Result<Self, StoreError> {
        match std::env::var_os(HOME_VAR) {
            Some(p) if !p.is_empty() => Library::open(PathBuf::from(p)),
            _ => Err(StoreError::NoLibraryRoot),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn index(&self) -> &LibraryIndex {
        &self.index
    }

    pub fn version(&self) -> u64 {
        self.index.version
    }

    pub fn len(&self) -> usize {
        self.index.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.index.entries.keys().cloned().collect()
    }

    fn check(&self, s: &Scenario) -> Result<(), StoreError> {
        if !valid_id(&s.id) {
            return Err(StoreError::InvalidId(s.id.clone()));
        }
        if self.index.entries.contains_key(&s.id) {
            return Err(StoreError::DuplicateId(s.id.clone()));
        }
        // concrete scenarios are also checked against a stored parent
        let parent = match s.provenance.parent.as_deref() {
            Some(p) if s.kind == ScenarioKind::Concrete && self.index.entries.contains_key(p) => Some(self.get(p)?),
            _ => None,
        };
        let report = validate_scenario(s, parent.as_ref());
        if !report.is_valid() {
            return Err(StoreError::Invalid(report));
        }
        Ok(())
    }

    fn next_index(&self, s: &Scenario) -> LibraryIndex {
        let mut next = self.index.clone();
        next.version += 1;
        next.entries.insert(s.id.clone(), IndexEntry::of(s));
        next
    }

    /// Validates and stores `s`, returning its id.
    pub fn put(&mut self, s: &Scenario) -> Result<String, StoreError> {
        self.check(s)?;
        let entry = IndexEntry::of(s);
        write_atomic(&self.root.join(&entry.file), s.to_json().as_bytes())?;
        let next = self.next_index(s);
        write_atomic(&self.root.join(INDEX_FILE), &index_bytes(&next))?;
        self.index = next;
        Ok(s.id.clone())
    }

    /// Stores several scenarios with one index write at the end.
    pub fn put_all<'a>(&mut self, scenarios: impl IntoIterator<Item = &'a Scenario>) -> Result<Vec<String>, StoreError> {
        let mut next = self.index.clone();
        let mut ids = Vec::new();
        for s in scenarios {
            let staged = Library {
                root: self.root.clone(),
                index: next.clone(),
            };
            staged.check(s)?;
            let entry = IndexEntry::of(s);
            write_atomic(&self.root.join(&entry.file), s.to_json().as_bytes())?;
            next.entries.insert(s.id.clone(), entry);
            ids.push(s.id.clone());
        }
        if !ids.is_empty() {
            next.version += 1;
            write_atomic(&self.root.join(INDEX_FILE), &index_bytes(&next))?;
            self.index = next;
        }
        Ok(ids)
    }

    /// Fault injection: performs a `put` up to the index rename and stops, as
    /// if the process died there.
    #[doc(hidden)]
    pub fn put_interrupted(&mut self, s: &Scenario) -> Result<(), StoreError> {
        self.check(s)?;
        let entry = IndexEntry::of(s);
        write_atomic(&self.root.join(&entry.file), s.to_json().as_bytes())?;
        let next = self.next_index(s);
        fs::write(self.root.join(INDEX_FILE).with_extension("json.tmp"), index_bytes(&next))?;
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<Scenario, StoreError> {
        let entry = self
            .index
            .entries
            .get(id)
            .ok_or_else(|| StoreError::NotFound(id.to_string()))?;
        let path = self.root.join(&entry.file);
        let corrupt = |reason: String| StoreError::CorruptEntry {
            path: path.clone(),
            reason,
        };
        let text = fs::read_to_string(&path).map_err(|e| corrupt(e.to_string()))?;
        let s = Scenario::from_json(&text).map_err(|e| corrupt(e.to_string()))?;
        if s.id != id {
            return Err(corrupt(format!("file holds scenario {:?}", s.id)));
        }
        Ok(s)
    }

    /// Ids of every entry matching `q`, ascending.
    pub fn search(&self, q: &Query) -> Vec<String> {
        self.index
            .entries
            .iter()
            .filter(|(_, e)| q.matches(e))
            .map(|(id, _)| id.clone())
            .collect()
    }
}

fn index_bytes(index: &LibraryIndex) -> Vec<u8> {
    let mut text = serde_json::to_string_pretty(index).expect("index serializes");
    text.push('\n');
    text.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ontology::{concretize, ElementCategory, ParameterSpec};

    fn logical() -> Scenario {
        Scenario::logical(
            "follow",
            [ParameterSpec::continuous("speed", ElementCategory::EgoBasic, "m/s", 10.0, 30.0)],
        )
        .with_tags(&["highway"])
    }

    fn concrete(v: f64) -> Scenario {
        concretize(&logical(), &BTreeMap::from([("speed".to_string(), ParamValue::Number(v))])).unwrap()
    }

    #[test]
    fn put_get_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut lib = Library::open(dir.path()).unwrap();
        let c = concrete(20.0);
        let id = lib.put(&c).unwrap();
        assert_eq!(lib.get(&id).unwrap(), c);
        assert!(matches!(lib.put(&c), Err(StoreError::DuplicateId(_))));
        assert!(matches!(lib.get("nope"), Err(StoreError::NotFound(_))));
        let reopened = Library::open(dir.path()).unwrap();
        assert_eq!(reopened.get(&id).unwrap().params, c.params);
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut lib = Library::open(dir.path()).unwrap();
        let bad = Scenario::logical(
            "bad",
            [ParameterSpec::continuous("speed", ElementCategory::EgoBasic, "m/s", 30.0, 10.0)],
        );
        match lib.put(&bad) {
            Err(StoreError::Invalid(r)) => assert_eq!(r.violations.len(), 1),
            other => panic!("{other:?}"),
        }
        let mut odd = concrete(20.0);
        odd.id = "../escape".into();
        assert!(matches!(lib.put(&odd), Err(StoreError::InvalidId(_))));
    }

    #[test]
    fn concrete_checked_against_stored_parent() {
        let dir = tempfile::tempdir().unwrap();
        let mut lib = Library::open(dir.path()).unwrap();
        lib.put(&logical()).unwrap();
        let mut c = concrete(20.0);
        if let Some(Param::Value { value, .. }) = c.params.get_mut("speed") {
            *value = ParamValue::Number(40.0);
        }
        assert!(matches!(lib.put(&c), Err(StoreError::Invalid(_))));
    }

    #[test]
    fn corrupt_file_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let mut lib = Library::open(dir.path()).unwrap();
        let id = lib.put(&concrete(12.0)).unwrap();
        let path = dir.path().join(SCENARIO_DIR).join(format!("{id}.json"));
        fs::write(&path, "{ not json").unwrap();
        match lib.get(&id) {
            Err(StoreError::CorruptEntry { path: p, .. }) => assert_eq!(p, path),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn search_semantics() {
        let dir = tempfile::tempdir().unwrap();
        let mut lib = Library::open(dir.path()).unwrap();
        lib.put(&logical()).unwrap();
        for v in [10.0, 15.0, 25.0, 30.0] {
            lib.put(&concrete(v)).unwrap();
        }
        assert_eq!(lib.search(&Query::all()).len(), 5);
        let q = Query::all().with_range("speed", 12.0, 26.0).unwrap();
        let hits = lib.search(&q);
        // the logical interval overlaps, and two concrete values fall inside
        assert_eq!(hits.len(), 3);
        assert!(hits.contains(&"follow".to_string()));
        let q = q.with_kind(ScenarioKind::Concrete);
        assert_eq!(lib.search(&q).len(), 2);
        assert!(lib.search(&Query::all().with_tag("urban")).is_empty());
        assert!(matches!(Query::all().with_range("speed", 30.0, 10.0), Err(StoreError::InvalidQuery(_))));
        assert!(serde_json::from_str::<Query>(r#"{"ranges":[{"name":"x","lo":2,"hi":1}]}"#).is_err());
    }

    #[test]
    fn versions_increase_and_interrupted_put_is_invisible() {
        let dir = tempfile::tempdir().unwrap();
        let mut lib = Library::open(dir.path()).unwrap();
        assert_eq!(lib.version(), 0);
        lib.put(&concrete(11.0)).unwrap();
        lib.put(&concrete(12.0)).unwrap();
        assert_eq!(lib.version(), 2);
        lib.put_interrupted(&concrete(13.0)).unwrap();
        let reopened = Library::open(dir.path()).unwrap();
        assert_eq!(reopened.version(), 2);
        assert_eq!(reopened.len(), 2);
        let ids = lib.put_all(&[concrete(14.0), concrete(15.0)]).unwrap();
        assert_eq!(ids.len(), 2);
        assert_eq!(Library::open(dir.path()).unwrap().version(), 3);
    }
}
