//! Shared domain types: queries, ranked lists, capabilities and the
//! declarative service/collection descriptors.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::PathBuf;
use std::time::Duration;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Result depth used when a request does not name one.
pub const DEFAULT_LIMIT: usize = 20;

/// One search request.
///
/// `relay_hops` counts how many relay forwards this query has already been
/// through; it is transport metadata and never part of a cache key.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Query {
    text: String,
    limit: usize,
    relay_hops: u32,
}

impl Query {
    pub fn new(text: impl Into<String>, limit: usize) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::EmptyQuery);
        }
        if limit == 0 {
            return Err(Error::InvalidLimit(limit));
        }
        Ok(Self {
            text,
            limit,
            relay_hops: 0,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn relay_hops(&self) -> u32 {
        self.relay_hops
    }

    pub fn with_limit(&self, limit: usize) -> Result<Self> {
        if limit == 0 {
            return Err(Error::InvalidLimit(limit));
        }
        Ok(Self {
            limit,
            ..self.clone()
        })
    }

    pub fn with_text(&self, text: impl Into<String>) -> Result<Self> {
        let mut q = Query::new(text, self.limit)?;
        q.relay_hops = self.relay_hops;
        Ok(q)
    }

    pub fn with_relay_hops(mut self, hops: u32) -> Self {
        self.relay_hops = hops;
        self
    }
}

/// Total order used by every ranking: score descending, then doc id ascending.
fn rank_order(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(&b.0))
}

/// A ranking of documents. Always held in canonical order with unique ids
/// and finite scores; the only way to build one is through
/// [`ScoredList::from_entries`], which validates and sorts.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoredList {
    entries: Vec<(String, f64)>,
}

impl ScoredList {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Validates and canonicalizes an arbitrary set of `(doc_id, score)` pairs.
    pub fn from_entries<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for (id, score) in entries {
            let id = id.into();
            if !score.is_finite() {
                return Err(Error::NonFiniteScore(id));
            }
            if !seen.insert(id.clone()) {
                return Err(Error::DuplicateDocId(id));
            }
            out.push((id, score));
        }
        out.sort_by(rank_order);
        Ok(Self { entries: out })
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }

    pub fn score_of(&self, doc_id: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(id, _)| id == doc_id)
            .map(|(_, s)| *s)
    }

    /// Keeps the first `k` entries.
    pub fn truncate(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidLimit(k));
        }
        Ok(Self {
            entries: self.entries.iter().take(k).cloned().collect(),
        })
    }

    pub fn into_entries(self) -> Vec<(String, f64)> {
        self.entries
    }
}

/// Free-function form of [`ScoredList::from_entries`] for already-built lists;
/// the result is identical to the input because lists are kept canonical.
pub fn canonicalize(list: &ScoredList) -> ScoredList {
    list.clone()
}

/// Serialized as a JSON object `{doc_id: score}` in canonical order.
impl Serialize for ScoredList {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.entries.len()))?;
        for (id, score) in &self.entries {
            map.serialize_entry(id, score)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for ScoredList {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct ListVisitor;
        impl<'de> Visitor<'de> for ListVisitor {
            type Value = ScoredList;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object mapping doc ids to scores")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> std::result::Result<ScoredList, A::Error> {
                let mut entries = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, f64>()? {
                    entries.push((k, v));
                }
                ScoredList::from_entries(entries).map_err(serde::de::Error::custom)
            }
        }
        deserializer.deserialize_map(ListVisitor)
    }
}

/// One of the four things an engine can do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Capability {
    Search,
    Score,
    Rewrite,
    Fuse,
}

impl Capability {
    pub const ALL: [Capability; 4] = [
        Capability::Search,
        Capability::Score,
        Capability::Rewrite,
        Capability::Fuse,
    ];

    fn bit(self) -> u8 {
        match self {
            Capability::Search => 1,
            Capability::Score => 2,
            Capability::Rewrite => 4,
            Capability::Fuse => 8,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Capability::Search => "search",
            Capability::Score => "score",
            Capability::Rewrite => "rewrite",
            Capability::Fuse => "fuse",
        }
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Capability {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Capability::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown capability {s:?}")))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CapabilitySet(u8);

impl CapabilitySet {
    pub fn new(caps: impl IntoIterator<Item = Capability>) -> Self {
        Self(caps.into_iter().fold(0, |acc, c| acc | c.bit()))
    }

    pub fn contains(self, cap: Capability) -> bool {
        self.0 & cap.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Capability> {
        Capability::ALL.into_iter().filter(move |c| self.contains(*c))
    }
}

impl fmt::Debug for CapabilitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl fmt::Display for CapabilitySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<_> = self.iter().map(Capability::as_str).collect();
        write!(f, "{{{}}}", names.join(", "))
    }
}

impl FromIterator<Capability> for CapabilitySet {
    fn from_iter<T: IntoIterator<Item = Capability>>(iter: T) -> Self {
        CapabilitySet::new(iter)
    }
}

impl Serialize for CapabilitySet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for CapabilitySet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let caps = Vec::<Capability>::deserialize(deserializer)?;
        Ok(CapabilitySet::new(caps))
    }
}

/// Characters allowed in service names; shared with the pipeline lexer.
pub fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-')
}

pub fn is_valid_service_name(name: &str) -> bool {
    !name.is_empty() && name.chars().all(is_name_char) && !name.bytes().all(|b| b.is_ascii_digit())
}

pub const DEFAULT_BATCH_SIZE: usize = 16;
pub const DEFAULT_MAX_WAIT: Duration = Duration::from_millis(50);

/// One hosted engine as declared in the node config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceDescriptor {
    pub name: String,
    #[serde(rename = "engine")]
    pub engine_kind: String,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_wait_ms", rename = "max_wait_ms")]
    pub max_wait_ms: u64,
    #[serde(default)]
    pub config: BTreeMap<String, serde_json::Value>,
}

fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}

fn default_max_wait_ms() -> u64 {
    DEFAULT_MAX_WAIT.as_millis() as u64
}

impl ServiceDescriptor {
    pub fn new(name: impl Into<String>, engine_kind: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            engine_kind: engine_kind.into(),
            batch_size: DEFAULT_BATCH_SIZE,
            max_wait_ms: default_max_wait_ms(),
            config: BTreeMap::new(),
        }
    }

    pub fn with_config(mut self, key: &str, value: serde_json::Value) -> Self {
        self.config.insert(key.to_string(), value);
        self
    }

    pub fn with_batching(mut self, batch_size: usize, max_wait: Duration) -> Self {
        self.batch_size = batch_size;
        self.max_wait_ms = max_wait.as_millis() as u64;
        self
    }

    pub fn max_wait(&self) -> Duration {
        Duration::from_millis(self.max_wait_ms)
    }

    pub fn validate(&self) -> Result<()> {
        if !is_valid_service_name(&self.name) {
            return Err(Error::Config(format!(
                "service name {:?} must match [A-Za-z0-9_.-]+ and not be all digits",
                self.name
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config(format!("service {:?}: batch_size must be >= 1", self.name)));
        }
        Ok(())
    }

    pub fn config_str(&self, key: &str) -> Option<&str> {
        self.config.get(key).and_then(|v| v.as_str())
    }

    pub fn config_f64(&self, key: &str) -> Result<Option<f64>> {
        match self.config.get(key) {
            None => Ok(None),
            Some(v) => v.as_f64().map(Some).ok_or_else(|| {
                Error::Config(format!("service {:?}: config {key:?} must be a number", self.name))
            }),
        }
    }
}

/// A JSONL document collection served by the node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectionDescriptor {
    pub name: String,
    pub doc_path: PathBuf,
    #[serde(default = "default_id_field")]
    pub id_field: String,
    /// Fields concatenated into document text for scoring. Empty means every
    /// string field except the id, in file order.
    #[serde(default)]
    pub text_fields: Vec<String>,
}

fn default_id_field() -> String {
    "id".to_string()
}

impl CollectionDescriptor {
    pub fn new(name: impl Into<String>, doc_path: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            doc_path: doc_path.into(),
            id_field: default_id_field(),
            text_fields: Vec::new(),
        }
    }
}
