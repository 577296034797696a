//! One exploration session: a single-writer command queue over the field,
//! published as immutable snapshots, plus a simulation worker that streams
//! frames and writes converged positions back through the same queue.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use tokio::sync::{broadcast, mpsc, oneshot, watch};
use topicfield::{
    Corpus, Direction, DocumentId, FieldError, FieldState, FrameRecord, LayoutParams, NodeRef, Point, Simulation,
    TopicId, TopicModel,
};
use tracing::{debug, warn};

use crate::error::ApiError;
use crate::wire::{EpochEvent, FrameEvent, SettingsPatch};

/// Corpus and model shared by every session. Labels are the only mutable part.
#[derive(Debug)]
pub struct Catalog {
    pub corpus: Arc<Corpus>,
    model: RwLock<Arc<TopicModel>>,
}

impl Catalog {
    pub fn new(corpus: Arc<Corpus>, model: TopicModel) -> Self {
        Self {
            corpus,
            model: RwLock::new(Arc::new(model)),
        }
    }

    pub fn model(&self) -> Arc<TopicModel> {
        self.model.read().expect("model lock poisoned").clone()
    }

    fn rename_topic(&self, topic: TopicId, label: String) -> Result<(), ApiError> {
        let mut guard = self.model.write().expect("model lock poisoned");
        Arc::make_mut(&mut guard).rename_topic(topic, label)?;
        Ok(())
    }
}

/// Immutable view of a session at one version.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    /// Bumped by every accepted mutation.
    pub version: u64,
    /// Bumped by every mutation that restarts the simulation.
    pub epoch: u64,
    pub field: FieldState,
    pub params: LayoutParams,
}

#[derive(Debug, Clone)]
pub enum Command {
    AddDocuments(Vec<DocumentId>),
    RemoveDocuments(Vec<DocumentId>),
    Expand { ids: Vec<DocumentId>, direction: Direction },
    SetSelection(Vec<DocumentId>),
    DeleteSelection,
    MoveNode { node: NodeRef, position: Point },
    SetPin { node: NodeRef, pinned: bool },
    AddTopic(TopicId),
    RemoveTopic(TopicId),
    RenameTopic { topic: TopicId, label: String },
    UpdateSettings(SettingsPatch),
    /// Converged positions from the simulation run of `epoch`.
    ApplyLayout { epoch: u64, positions: BTreeMap<NodeRef, Point> },
}

impl Command {
    fn restarts_simulation(&self) -> bool {
        !matches!(
            self,
            Command::RenameTopic { .. } | Command::SetSelection(_) | Command::ApplyLayout { .. }
        )
    }
}

/// Events carried by the frame stream.
#[derive(Debug, Clone)]
pub enum StreamEvent {
    Epoch(EpochEvent),
    Frame(Arc<FrameEvent>),
    Error { epoch: u64, message: String },
}

struct Envelope {
    command: Command,
    expected_version: Option<u64>,
    reply: oneshot::Sender<Result<Arc<Snapshot>, ApiError>>,
}

#[derive(Debug, Clone, Copy)]
pub struct SessionOptions {
    /// Run the live simulation after mutations.
    pub simulate: bool,
    /// Pause between streamed simulation steps.
    pub frame_interval: Duration,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self {
            simulate: true,
            frame_interval: Duration::from_millis(10),
        }
    }
}

pub struct Session {
    pub id: String,
    commands: mpsc::Sender<Envelope>,
    snapshots: watch::Receiver<Arc<Snapshot>>,
    events: broadcast::Sender<StreamEvent>,
}

impl Session {
    pub fn spawn(id: String, catalog: Arc<Catalog>, initial: Snapshot, options: SessionOptions) -> Arc<Self> {
        let (cmd_tx, cmd_rx) = mpsc::channel(64);
        let (snap_tx, snap_rx) = watch::channel(Arc::new(initial));
        let (event_tx, _) = broadcast::channel(256);
        tokio::spawn(run_writer(catalog.clone(), cmd_rx, snap_tx));
        if options.simulate {
            tokio::spawn(run_simulation(
                catalog,
                snap_rx.clone(),
                cmd_tx.clone(),
                event_tx.clone(),
                options.frame_interval,
            ));
        }
        Arc::new(Self {
            id,
            commands: cmd_tx,
            snapshots: snap_rx,
            events: event_tx,
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshots.borrow().clone()
    }

    pub fn watch(&self) -> watch::Receiver<Arc<Snapshot>> {
        self.snapshots.clone()
    }

    pub fn subscribe(&self) -> broadcast::Receiver<StreamEvent> {
        self.events.subscribe()
    }

    /// Queues a command and waits for the resulting snapshot.
    pub async fn submit(&self, command: Command, expected_version: Option<u64>) -> Result<Arc<Snapshot>, ApiError> {
        submit(&self.commands, command, expected_version).await
    }
}

async fn submit(
    commands: &mpsc::Sender<Envelope>,
    command: Command,
    expected_version: Option<u64>,
) -> Result<Arc<Snapshot>, ApiError> {
    let (reply, rx) = oneshot::channel();
    commands
        .send(Envelope {
            command,
            expected_version,
            reply,
        })
        .await
        .map_err(|_| ApiError::Internal("session writer stopped".into()))?;
    rx.await
        .map_err(|_| ApiError::Internal("session writer dropped the request".into()))?
}

fn node_error(e: FieldError) -> ApiError {
    match e {
        FieldError::NotInField(_) => ApiError::NotFound(e.to_string()),
        other => other.into(),
    }
}

/// Applies one command to a copy of the current state.
fn apply(catalog: &Catalog, current: &Snapshot, command: Command) -> Result<Option<Snapshot>, ApiError> {
    let corpus = &catalog.corpus;
    let model = catalog.model();
    let mut field = current.field.clone();
    let mut params = current.params;
    let restart = command.restarts_simulation();
    match command {
        Command::AddDocuments(ids) => field.add_documents(corpus, &model, &ids)?,
        Command::RemoveDocuments(ids) => field.remove_documents(&model, &ids)?,
        Command::Expand { ids, direction } => field.expand_citations(corpus, &model, &ids, direction)?,
        Command::SetSelection(ids) => field.set_selection(&ids)?,
        Command::DeleteSelection => field.delete_selection(&model)?,
        Command::MoveNode { node, position } => field.move_node(&node, position).map_err(node_error)?,
        Command::SetPin { node, pinned } => field.set_pin(&node, pinned).map_err(node_error)?,
        Command::AddTopic(topic) => field.add_topic(&model, topic)?,
        Command::RemoveTopic(topic) => field.remove_topic(topic)?,
        Command::RenameTopic { topic, label } => catalog.rename_topic(topic, label)?,
        Command::UpdateSettings(patch) => {
            let settings = field.settings();
            if patch.auto_topics.is_some() || patch.k.is_some() {
                field.set_topic_settings(
                    &model,
                    patch.auto_topics.unwrap_or(settings.auto_topics),
                    patch.k.unwrap_or(settings.k),
                )?;
            }
            if let Some(p) = patch.pin_default {
                field.set_pin_default(p);
            }
            params.stiffness = patch.stiffness.unwrap_or(params.stiffness);
            params.damping = patch.damping.unwrap_or(params.damping);
            params.dt = patch.dt.unwrap_or(params.dt);
            params.repulsion = patch.repulsion.unwrap_or(params.repulsion);
            params.epsilon = patch.epsilon.unwrap_or(params.epsilon);
            params.max_steps = patch.max_steps.unwrap_or(params.max_steps);
            params.validate()?;
        }
        Command::ApplyLayout { epoch, positions } => {
            if epoch != current.epoch {
                return Ok(None);
            }
            field.apply_positions(&positions);
        }
    }
    Ok(Some(Snapshot {
        version: current.version + 1,
        epoch: current.epoch + u64::from(restart),
        field,
        params,
    }))
}

async fn run_writer(catalog: Arc<Catalog>, mut commands: mpsc::Receiver<Envelope>, snapshots: watch::Sender<Arc<Snapshot>>) {
    while let Some(envelope) = commands.recv().await {
        let current = snapshots.borrow().clone();
        let result = match envelope.expected_version {
            Some(expected) if expected != current.version => Err(ApiError::Conflict {
                expected,
                current: current.version,
            }),
            _ => apply(&catalog, &current, envelope.command).map(|next| match next {
                Some(next) => {
                    let next = Arc::new(next);
                    snapshots.send_replace(next.clone());
                    next
                }
                None => current,
            }),
        };
        let _ = envelope.reply.send(result);
    }
}

async fn run_simulation(
    catalog: Arc<Catalog>,
    mut snapshots: watch::Receiver<Arc<Snapshot>>,
    commands: mpsc::Sender<Envelope>,
    events: broadcast::Sender<StreamEvent>,
    interval: Duration,
) {
    // Epoch 0 is the empty start; anything later (a restored session) runs once.
    let mut last_epoch = 0;
    snapshots.mark_changed();
    loop {
        if snapshots.changed().await.is_err() {
            return;
        }
        'restart: loop {
            let snap = snapshots.borrow_and_update().clone();
            if snap.epoch == last_epoch {
                break;
            }
            last_epoch = snap.epoch;
            let _ = events.send(StreamEvent::Epoch(EpochEvent {
                epoch: snap.epoch,
                version: snap.version,
            }));
            let model = catalog.model();
            let mut sim = match Simulation::new(&snap.field, &model, snap.params) {
                Ok(sim) => sim,
                Err(e) => {
                    let _ = events.send(StreamEvent::Error {
                        epoch: snap.epoch,
                        message: e.to_string(),
                    });
                    break;
                }
            };
            let mut steps = 0;
            loop {
                if snapshots.has_changed().unwrap_or(false) {
                    if snapshots.borrow().epoch != snap.epoch {
                        debug!(epoch = snap.epoch, "simulation superseded");
                        continue 'restart;
                    }
                    snapshots.borrow_and_update();
                }
                let frame = match sim.step() {
                    Ok(frame) => frame,
                    Err(e) => {
                        warn!(epoch = snap.epoch, "simulation diverged: {e}");
                        let _ = events.send(StreamEvent::Error {
                            epoch: snap.epoch,
                            message: e.to_string(),
                        });
                        break 'restart;
                    }
                };
                steps += 1;
                let done = frame.max_displacement < snap.params.epsilon || steps >= snap.params.max_steps;
                let _ = events.send(StreamEvent::Frame(Arc::new(FrameEvent {
                    epoch: snap.epoch,
                    frame: FrameRecord::new(&frame, &snap.field),
                })));
                if done {
                    let command = Command::ApplyLayout {
                        epoch: snap.epoch,
                        positions: frame.positions,
                    };
                    if submit(&commands, command, None).await.is_err() {
                        return;
                    }
                    break 'restart;
                }
                if interval.is_zero() {
                    tokio::task::yield_now().await;
                } else {
                    tokio::time::sleep(interval).await;
                }
            }
        }
    }
}
