//! The mutable exploration session: document nodes, topic magnets, pins,
//! selection, visible citation edges and topic settings.
//!
//! Every mutation takes the corpus and model it is checked against and is
//! all-or-nothing: on error the field is left untouched.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, Direction, DocumentId};
use crate::geometry::{Bounds, Point};
use crate::topic_model::{ModelError, TopicId, TopicModel, DEFAULT_TOPIC_COUNT};

/// Ring radius as a fraction of the smaller field dimension.
pub const RING_RADIUS_FRACTION: f64 = 0.45;
/// Maximum distance of a new document from the field centre.
pub const JITTER_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Document,
    Topic,
}

impl std::str::FromStr for NodeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "document" => Ok(NodeKind::Document),
            "topic" => Ok(NodeKind::Topic),
            other => Err(format!("unknown node kind `{other}`")),
        }
    }
}

/// A handle to one node of the field.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeRef {
    Document(DocumentId),
    Topic(TopicId),
}

impl NodeRef {
    pub fn kind(&self) -> NodeKind {
        match self {
            NodeRef::Document(_) => NodeKind::Document,
            NodeRef::Topic(_) => NodeKind::Topic,
        }
    }

    /// The reference as it appears on the wire: the document id, or the topic index.
    pub fn reference(&self) -> String {
        match self {
            NodeRef::Document(id) => id.to_string(),
            NodeRef::Topic(t) => t.to_string(),
        }
    }

    pub fn parse(kind: NodeKind, reference: &str) -> Result<Self, String> {
        match kind {
            NodeKind::Document => Ok(NodeRef::Document(DocumentId::from(reference))),
            NodeKind::Topic => reference
                .parse()
                .map(|t| NodeRef::Topic(TopicId(t)))
                .map_err(|_| format!("`{reference}` is not a topic index")),
        }
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeRef::Document(id) => write!(f, "document {id}"),
            NodeRef::Topic(t) => write!(f, "topic {t}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldNode {
    pub position: Point,
    pub pinned: bool,
}

/// Which kind of node is pinned when it first enters the field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PinDefault {
    /// Magnets pinned, documents free.
    #[default]
    Topics,
    /// Documents pinned, magnets free.
    Documents,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSettings {
    pub auto_topics: bool,
    pub k: usize,
    #[serde(default)]
    pub pin_default: PinDefault,
}

impl Default for FieldSettings {
    fn default() -> Self {
        Self {
            auto_topics: true,
            k: DEFAULT_TOPIC_COUNT,
            pin_default: PinDefault::Topics,
        }
    }
}

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("document `{0}` is not in the corpus")]
    UnknownDocument(DocumentId),
    #[error("{0} is not in the field")]
    NotInField(NodeRef),
    #[error("non-finite position for {0}")]
    NonFinite(NodeRef),
    #[error("topics cannot be edited by hand while automatic topics are on")]
    AutoTopicsEnabled,
    #[error("topic count must be at least 1")]
    ZeroTopicCount,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Evenly spaced slots on the magnet ring. Slot 0 is at the top and slots
/// proceed clockwise as seen on screen.
pub fn ring_position(slot: usize, total: usize, bounds: Bounds) -> Point {
    let total = total.max(1);
    let radius = RING_RADIUS_FRACTION * bounds.width.min(bounds.height);
    let angle = TAU * slot as f64 / total as f64;
    let c = bounds.center();
    Point::new(c.x + radius * angle.sin(), c.y - radius * angle.cos())
}

// FNV-1a, stable across platforms and releases.
fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Entry position for a new document: the field centre plus a small offset
/// derived from the id.
pub fn entry_position(id: &DocumentId, bounds: Bounds) -> Point {
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(id.as_str()));
    let angle = rng.random::<f64>() * TAU;
    let radius = rng.random::<f64>() * JITTER_FRACTION * bounds.width.min(bounds.height);
    bounds.center() + Point::new(radius * angle.cos(), radius * angle.sin())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldState {
    doc_nodes: BTreeMap<DocumentId, FieldNode>,
    topic_nodes: BTreeMap<TopicId, FieldNode>,
    selection: BTreeSet<DocumentId>,
    visible_edges: BTreeSet<(DocumentId, DocumentId)>,
    settings: FieldSettings,
    bounds: Bounds,
}

impl FieldState {
    pub fn new(bounds: Bounds) -> Self {
        Self {
            bounds,
            ..Self::default()
        }
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn settings(&self) -> FieldSettings {
        self.settings
    }

    pub fn doc_nodes(&self) -> &BTreeMap<DocumentId, FieldNode> {
        &self.doc_nodes
    }

    pub fn topic_nodes(&self) -> &BTreeMap<TopicId, FieldNode> {
        &self.topic_nodes
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &DocumentId> {
        self.doc_nodes.keys()
    }

    pub fn topic_ids(&self) -> impl Iterator<Item = TopicId> + '_ {
        self.topic_nodes.keys().copied()
    }

    pub fn selection(&self) -> &BTreeSet<DocumentId> {
        &self.selection
    }

    /// Visible citation edges as (citing, cited) pairs.
    pub fn visible_edges(&self) -> &BTreeSet<(DocumentId, DocumentId)> {
        &self.visible_edges
    }

    pub fn node(&self, node: &NodeRef) -> Option<&FieldNode> {
        match node {
            NodeRef::Document(id) => self.doc_nodes.get(id),
            NodeRef::Topic(t) => self.topic_nodes.get(t),
        }
    }

    fn node_mut(&mut self, node: &NodeRef) -> Result<&mut FieldNode, FieldError> {
        match node {
            NodeRef::Document(id) => self.doc_nodes.get_mut(id),
            NodeRef::Topic(t) => self.topic_nodes.get_mut(t),
        }
        .ok_or_else(|| FieldError::NotInField(node.clone()))
    }

    /// All nodes, documents first, in id order.
    pub fn nodes(&self) -> impl Iterator<Item = (NodeRef, &FieldNode)> {
        self.doc_nodes
            .iter()
            .map(|(id, n)| (NodeRef::Document(id.clone()), n))
            .chain(self.topic_nodes.iter().map(|(t, n)| (NodeRef::Topic(*t), n)))
    }

    pub fn topic_positions(&self) -> BTreeMap<TopicId, Point> {
        self.topic_nodes.iter().map(|(t, n)| (*t, n.position)).collect()
    }

    fn check_in_field<'a>(&self, ids: impl IntoIterator<Item = &'a DocumentId>) -> Result<(), FieldError> {
        for id in ids {
            if !self.doc_nodes.contains_key(id) {
                return Err(FieldError::NotInField(NodeRef::Document(id.clone())));
            }
        }
        Ok(())
    }

    fn refresh_topics(&mut self, model: &TopicModel) -> Result<(), FieldError> {
        if !self.settings.auto_topics {
            return Ok(());
        }
        if self.doc_nodes.is_empty() {
            self.topic_nodes.clear();
            return Ok(());
        }
        let ranked = model.rank_topics(self.doc_nodes.keys(), self.settings.k)?;
        let pinned = self.settings.pin_default == PinDefault::Topics;
        let total = ranked.len();
        let mut next = BTreeMap::new();
        for (slot, topic) in ranked.into_iter().enumerate() {
            let node = self.topic_nodes.get(&topic).copied().unwrap_or(FieldNode {
                position: ring_position(slot, total, self.bounds),
                pinned,
            });
            next.insert(topic, node);
        }
        self.topic_nodes = next;
        Ok(())
    }

    /// Adds documents at the field centre. Ids already present are left alone.
    pub fn add_documents<'a, I>(&mut self, corpus: &Corpus, model: &TopicModel, ids: I) -> Result<(), FieldError>
    where
        I: IntoIterator<Item = &'a DocumentId>,
    {
        let ids: BTreeSet<&DocumentId> = ids.into_iter().collect();
        for id in &ids {
            if !corpus.contains(id) {
                return Err(FieldError::UnknownDocument((*id).clone()));
            }
            if !model.contains_document(id) {
                return Err(ModelError::UnknownDocument((*id).clone()).into());
            }
        }
        let before = self.clone();
        let pinned = self.settings.pin_default == PinDefault::Documents;
        for id in ids {
            if !self.doc_nodes.contains_key(id) {
                let position = entry_position(id, self.bounds);
                self.doc_nodes.insert(id.clone(), FieldNode { position, pinned });
            }
        }
        self.refresh_or_restore(model, before)
    }

    fn refresh_or_restore(&mut self, model: &TopicModel, before: FieldState) -> Result<(), FieldError> {
        if let Err(e) = self.refresh_topics(model) {
            *self = before;
            return Err(e);
        }
        Ok(())
    }

    pub fn remove_documents<'a, I>(&mut self, model: &TopicModel, ids: I) -> Result<(), FieldError>
    where
        I: IntoIterator<Item = &'a DocumentId>,
    {
        let ids: BTreeSet<&DocumentId> = ids.into_iter().collect();
        self.check_in_field(ids.iter().copied())?;
        let before = self.clone();
        for id in &ids {
            self.doc_nodes.remove(*id);
            self.selection.remove(*id);
        }
        self.visible_edges
            .retain(|(a, b)| !ids.contains(a) && !ids.contains(b));
        self.refresh_or_restore(model, before)
    }

    /// Adds the citation neighbourhood of `ids` and reveals every citation
    /// edge among field documents.
    pub fn expand_citations<'a, I>(
        &mut self,
        corpus: &Corpus,
        model: &TopicModel,
        ids: I,
        direction: Direction,
    ) -> Result<(), FieldError>
    where
        I: IntoIterator<Item = &'a DocumentId>,
    {
        let ids: BTreeSet<&DocumentId> = ids.into_iter().collect();
        self.check_in_field(ids.iter().copied())?;
        let neighbours = corpus.expand(ids, direction)?;
        self.add_documents(corpus, model, &neighbours)?;
        for id in self.doc_nodes.keys() {
            for target in corpus.cites(id)? {
                if self.doc_nodes.contains_key(&target) {
                    self.visible_edges.insert((id.clone(), target));
                }
            }
        }
        Ok(())
    }

    pub fn set_pin(&mut self, node: &NodeRef, pinned: bool) -> Result<(), FieldError> {
        self.node_mut(node)?.pinned = pinned;
        Ok(())
    }

    pub fn move_node(&mut self, node: &NodeRef, position: Point) -> Result<(), FieldError> {
        if !position.is_finite() {
            return Err(FieldError::NonFinite(node.clone()));
        }
        self.node_mut(node)?.position = position;
        Ok(())
    }

    pub fn set_selection<'a, I>(&mut self, ids: I) -> Result<(), FieldError>
    where
        I: IntoIterator<Item = &'a DocumentId>,
    {
        let ids: BTreeSet<DocumentId> = ids.into_iter().cloned().collect();
        self.check_in_field(&ids)?;
        self.selection = ids;
        Ok(())
    }

    pub fn delete_selection(&mut self, model: &TopicModel) -> Result<(), FieldError> {
        let selection = std::mem::take(&mut self.selection);
        if let Err(e) = self.remove_documents(model, &selection) {
            self.selection = selection;
            return Err(e);
        }
        Ok(())
    }

    /// Turning automatic topics on (or changing `k` while on) refreshes the magnets immediately.
    pub fn set_topic_settings(&mut self, model: &TopicModel, auto_topics: bool, k: usize) -> Result<(), FieldError> {
        if k == 0 {
            return Err(FieldError::ZeroTopicCount);
        }
        let before = self.clone();
        self.settings.auto_topics = auto_topics;
        self.settings.k = k;
        self.refresh_or_restore(model, before)
    }

    pub fn set_pin_default(&mut self, pin_default: PinDefault) {
        self.settings.pin_default = pin_default;
    }

    pub fn add_topic(&mut self, model: &TopicModel, topic: TopicId) -> Result<(), FieldError> {
        if self.settings.auto_topics {
            return Err(FieldError::AutoTopicsEnabled);
        }
        model.check_topic(topic)?;
        if self.topic_nodes.contains_key(&topic) {
            return Ok(());
        }
        let slot = self.topic_nodes.len();
        let total = self.settings.k.max(slot + 1);
        self.topic_nodes.insert(
            topic,
            FieldNode {
                position: ring_position(slot, total, self.bounds),
                pinned: self.settings.pin_default == PinDefault::Topics,
            },
        );
        Ok(())
    }

    pub fn remove_topic(&mut self, topic: TopicId) -> Result<(), FieldError> {
        if self.settings.auto_topics {
            return Err(FieldError::AutoTopicsEnabled);
        }
        self.topic_nodes
            .remove(&topic)
            .map(|_| ())
            .ok_or(FieldError::NotInField(NodeRef::Topic(topic)))
    }

    /// Writes simulated positions back. Nodes no longer in the field are ignored.
    pub fn apply_positions<'a, I>(&mut self, positions: I)
    where
        I: IntoIterator<Item = (&'a NodeRef, &'a Point)>,
    {
        for (node, p) in positions {
            if let Ok(n) = self.node_mut(node) {
                if !n.pinned {
                    n.position = *p;
                }
            }
        }
    }
}

/// One node as it appears in snapshots and exports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub kind: NodeKind,
    #[serde(rename = "ref")]
    pub reference: String,
    pub x: f64,
    pub y: f64,
    pub pinned: bool,
}

impl NodeRecord {
    pub fn new(node: &NodeRef, position: Point, pinned: bool) -> Self {
        Self {
            kind: node.kind(),
            reference: node.reference(),
            x: position.x,
            y: position.y,
            pinned,
        }
    }

    pub fn node_ref(&self) -> Result<NodeRef, String> {
        NodeRef::parse(self.kind, &self.reference)
    }
}

/// JSON form of a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSnapshot {
    pub nodes: Vec<NodeRecord>,
    pub selection: Vec<DocumentId>,
    pub edges: Vec<(DocumentId, DocumentId)>,
    pub settings: FieldSettings,
    pub bounds: Bounds,
}

impl From<&FieldState> for FieldSnapshot {
    fn from(field: &FieldState) -> Self {
        Self {
            nodes: field
                .nodes()
                .map(|(r, n)| NodeRecord::new(&r, n.position, n.pinned))
                .collect(),
            selection: field.selection.iter().cloned().collect(),
            edges: field.visible_edges.iter().cloned().collect(),
            settings: field.settings,
            bounds: field.bounds,
        }
    }
}

impl TryFrom<FieldSnapshot> for FieldState {
    type Error = String;

    fn try_from(s: FieldSnapshot) -> Result<Self, Self::Error> {
        let mut field = FieldState::new(s.bounds);
        field.settings = s.settings;
        for rec in &s.nodes {
            let node = FieldNode {
                position: Point::new(rec.x, rec.y),
                pinned: rec.pinned,
            };
            match rec.node_ref()? {
                NodeRef::Document(id) => field.doc_nodes.insert(id, node),
                NodeRef::Topic(t) => field.topic_nodes.insert(t, node),
            };
        }
        field.selection = s.selection.into_iter().collect();
        field.visible_edges = s.edges.into_iter().collect();
        if let Some(id) = field.selection.iter().find(|id| !field.doc_nodes.contains_key(*id)) {
            return Err(format!("selected document `{id}` is not in the field"));
        }
        if let Some((a, b)) = field
            .visible_edges
            .iter()
            .find(|(a, b)| !field.doc_nodes.contains_key(a) || !field.doc_nodes.contains_key(b))
        {
            return Err(format!("edge ({a}, {b}) has an endpoint outside the field"));
        }
        Ok(field)
    }
}

impl Serialize for FieldState {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        FieldSnapshot::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FieldState {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let snapshot = FieldSnapshot::deserialize(deserializer)?;
        FieldState::try_from(snapshot).map_err(serde::de::Error::custom)
    }
}
