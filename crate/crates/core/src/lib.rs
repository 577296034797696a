//! Exploration engine for document collections described by a topic model.
//!
//! Documents are found by keyword search, pulled into a field, and laid out
//! by springs toward topic magnets in proportion to their topic mixtures.
//! Magnet positions act as a hand-built projection of topic space: with the
//! magnets fixed, every document comes to rest at the mixture-weighted
//! average of the magnet positions.

pub mod corpus;
pub mod export;
pub mod field;
pub mod geometry;
pub mod layout;
pub mod search;
pub mod synth;
pub mod topic_model;

pub use corpus::{Corpus, CorpusError, Direction, Document, DocumentId};
pub use export::{final_frame, render_svg, FrameRecord};
pub use field::{
    ring_position, FieldError, FieldNode, FieldSettings, FieldSnapshot, FieldState, NodeKind, NodeRecord, NodeRef,
    PinDefault,
};
pub use geometry::{Bounds, Point};
pub use layout::{
    magnet_radius, project, renormalized_theta, run_to_convergence, LayoutError, LayoutParams, PositionFrame,
    Simulation, Velocities,
};
pub use search::{Index, SearchHit, SortKey};
pub use synth::{synth_corpus, synth_model};
pub use topic_model::{ModelError, TopicId, TopicModel, Violation};
