//! Request and response bodies.

use serde::{Deserialize, Deserializer, Serialize};
use topicfield::{Direction, DocumentId, FieldSettings, FieldSnapshot, FrameRecord, PinDefault, SortKey, TopicId};

use crate::session::Snapshot;

#[derive(Debug, Clone, Deserialize)]
pub struct IdsBody {
    pub ids: Vec<DocumentId>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExpandBody {
    pub ids: Vec<DocumentId>,
    pub direction: Direction,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SearchBody {
    pub query: String,
    #[serde(default)]
    pub sort: SortKey,
    #[serde(default = "default_limit")]
    pub limit: usize,
}

fn default_limit() -> usize {
    50
}

/// Accepts plain numbers, or the strings `NaN`, `Infinity` and `-Infinity`
/// so that non-finite input can be rejected with a precise status.
fn coordinate<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Number(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Number(v) => Ok(v),
        Raw::Text(s) => match s.as_str() {
            "NaN" => Ok(f64::NAN),
            "Infinity" | "inf" => Ok(f64::INFINITY),
            "-Infinity" | "-inf" => Ok(f64::NEG_INFINITY),
            other => Err(serde::de::Error::custom(format!("`{other}` is not a coordinate"))),
        },
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct PositionBody {
    #[serde(deserialize_with = "coordinate")]
    pub x: f64,
    #[serde(deserialize_with = "coordinate")]
    pub y: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PinBody {
    pub pinned: bool,
}

#[derive(Debug, Clone, Deserialize)]
pub struct LabelBody {
    pub label: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SaveBody {
    pub path: String,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct CreateSessionBody {
    /// Restore a session previously written by `save`.
    #[serde(default)]
    pub from: Option<String>,
}

/// Partial settings update. Absent fields keep their current value.
#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SettingsPatch {
    pub auto_topics: Option<bool>,
    pub k: Option<usize>,
    pub pin_default: Option<PinDefault>,
    pub stiffness: Option<f64>,
    pub damping: Option<f64>,
    pub dt: Option<f64>,
    pub repulsion: Option<f64>,
    pub epsilon: Option<f64>,
    pub max_steps: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionCreated {
    pub id: String,
    pub num_topics: usize,
    pub labels: Vec<String>,
    pub version: u64,
    pub settings: FieldSettings,
}

/// The field as served to clients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldResponse {
    pub version: u64,
    pub epoch: u64,
    pub field: FieldSnapshot,
    pub layout: topicfield::LayoutParams,
}

impl From<&Snapshot> for FieldResponse {
    fn from(s: &Snapshot) -> Self {
        Self {
            version: s.version,
            epoch: s.epoch,
            field: FieldSnapshot::from(&s.field),
            layout: s.params,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchResult {
    pub doc: DocumentId,
    pub score: f64,
    pub title: String,
    pub authors: Vec<String>,
    pub year: Option<i32>,
    pub venue: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocumentResponse {
    pub id: DocumentId,
    pub title: String,
    pub authors: Vec<String>,
    pub year: Option<i32>,
    pub venue: Option<String>,
    pub body: String,
    pub theta: Vec<f64>,
    pub cites: Vec<DocumentId>,
    pub cited_by: Vec<DocumentId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermWeight {
    pub term: String,
    pub probability: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicResponse {
    pub topic: TopicId,
    pub label: String,
    pub top_terms: Vec<TermWeight>,
}

/// Payload of an `event: frame` message.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameEvent {
    pub epoch: u64,
    #[serde(flatten)]
    pub frame: FrameRecord,
}

/// Payload of an `event: epoch` message: a new simulation run has started.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochEvent {
    pub epoch: u64,
    pub version: u64,
}
