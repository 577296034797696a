use std::convert::Infallible;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Request, State};
use axum::http::header::{CONTENT_TYPE, ETAG, IF_MATCH};
use axum::http::{HeaderMap, HeaderValue};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::de::DeserializeOwned;
use tokio::sync::broadcast::error::RecvError;
use topicfield::{
    final_frame, render_svg, DocumentId, FieldState, NodeKind, NodeRef, Point, TopicId,
};

use crate::error::ApiError;
use crate::session::{Command, Snapshot, StreamEvent};
use crate::wire::{
    CreateSessionBody, DocumentResponse, ExpandBody, FieldResponse, IdsBody, LabelBody, PinBody, PositionBody,
    SaveBody, SearchBody, SearchResult, SessionCreated, SettingsPatch, TermWeight, TopicResponse,
};
use crate::AppState;

const TOPIC_PANEL_TERMS: usize = 10;

/// JSON body extractor whose rejections are plain 400s.
pub struct ApiJson<T>(pub T);

impl<S, T> FromRequest<S> for ApiJson<T>
where
    T: DeserializeOwned,
    S: Send + Sync,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(ApiJson(v)),
            Err(e) => Err(rejection(e)),
        }
    }
}

fn rejection(e: JsonRejection) -> ApiError {
    ApiError::BadRequest(e.body_text())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/search", post(search))
        .route("/sessions/{id}/field", get(get_field))
        .route("/sessions/{id}/field/documents", post(add_documents).delete(remove_documents))
        .route("/sessions/{id}/field/expand", post(expand))
        .route("/sessions/{id}/field/selection", post(set_selection).delete(delete_selection))
        .route("/sessions/{id}/nodes/{kind}/{ref}/position", post(move_node))
        .route("/sessions/{id}/nodes/{kind}/{ref}/pin", post(set_pin))
        .route("/sessions/{id}/topics/{topic}", post(add_topic).delete(remove_topic))
        .route("/sessions/{id}/topics/{topic}/label", post(rename_topic))
        .route("/sessions/{id}/settings", axum::routing::patch(update_settings))
        .route("/sessions/{id}/frames", get(frames))
        .route("/sessions/{id}/export.json", get(export_json))
        .route("/sessions/{id}/export.svg", get(export_svg))
        .route("/sessions/{id}/save", post(save))
        .route("/documents/{doc}", get(document))
        .route("/topics/{topic}", get(topic))
        .with_state(state)
}

fn field_response(snapshot: &Snapshot) -> Response {
    let mut response = Json(FieldResponse::from(snapshot)).into_response();
    if let Ok(v) = HeaderValue::from_str(&format!("\"{}\"", snapshot.version)) {
        response.headers_mut().insert(ETAG, v);
    }
    response
}

/// Parses an `If-Match` version, quoted or bare. `*` matches any version.
fn expected_version(headers: &HeaderMap) -> Result<Option<u64>, ApiError> {
    let Some(raw) = headers.get(IF_MATCH) else {
        return Ok(None);
    };
    let text = raw
        .to_str()
        .map_err(|_| ApiError::BadRequest("If-Match is not ASCII".into()))?
        .trim();
    if text == "*" {
        return Ok(None);
    }
    let text = text.strip_prefix("W/").unwrap_or(text).trim_matches('"');
    text.parse()
        .map(Some)
        .map_err(|_| ApiError::BadRequest(format!("If-Match `{text}` is not a version number")))
}

async fn mutate(state: &AppState, id: &str, headers: &HeaderMap, command: Command) -> Result<Response, ApiError> {
    let session = state.session(id)?;
    let snapshot = session.submit(command, expected_version(headers)?).await?;
    Ok(field_response(&snapshot))
}

fn parse_topic(raw: &str) -> Result<TopicId, ApiError> {
    raw.parse::<usize>()
        .map(TopicId)
        .map_err(|_| ApiError::BadRequest(format!("`{raw}` is not a topic index")))
}

fn parse_node(kind: &str, reference: &str) -> Result<NodeRef, ApiError> {
    let kind: NodeKind = kind.parse().map_err(ApiError::BadRequest)?;
    NodeRef::parse(kind, reference).map_err(ApiError::BadRequest)
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let request: CreateSessionBody = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSessionBody::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(e.to_string()))?
    };
    let restored = match request.from {
        Some(path) => Some(state.restore(&path)?),
        None => None,
    };
    let session = state.create_session(restored);
    let snapshot = session.snapshot();
    let model = state.catalog.model();
    Ok(Json(SessionCreated {
        id: session.id.clone(),
        num_topics: model.num_topics(),
        labels: model.labels().to_vec(),
        version: snapshot.version,
        settings: snapshot.field.settings(),
    })
    .into_response())
}

async fn search(
    State(state): State<AppState>,
    Path(id): Path<String>,
    ApiJson(body): ApiJson<SearchBody>,
) -> Result<Json<Vec<SearchResult>>, ApiError> {
    state.session(&id)?;
    let corpus = &state.catalog.corpus;
    let hits = state.index.search(&body.query, body.sort, body.limit);
    let results = hits
        .into_iter()
        .filter_map(|hit| {
            let doc = corpus.get(&hit.doc).ok()?;
            Some(SearchResult {
                doc: hit.doc,
                score: hit.score,
                title: doc.title.clone(),
                authors: doc.authors.clone(),
                year: doc.year,
                venue: doc.venue.clone(),
            })
        })
        .collect();
    Ok(Json(results))
}

async fn get_field(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(field_response(&state.session(&id)?.snapshot()))
}

async fn add_documents(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    ApiJson(body): ApiJson<IdsBody>,
) -> Result<Response, ApiError> {
    mutate(&state, &id, &headers, Command::AddDocuments(body.ids)).await
}

async fn remove_documents(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    ApiJson(body): ApiJson<IdsBody>,
) -> Result<Response, ApiError> {
    mutate(&state, &id, &headers, Command::RemoveDocuments(body.ids)).await
}

async fn expand(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    ApiJson(body): ApiJson<ExpandBody>,
) -> Result<Response, ApiError> {
    let command = Command::Expand {
        ids: body.ids,
        direction: body.direction,
    };
    mutate(&state, &id, &headers, command).await
}

async fn set_selection(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    ApiJson(body): ApiJson<IdsBody>,
) -> Result<Response, ApiError> {
    mutate(&state, &id, &headers, Command::SetSelection(body.ids)).await
}

async fn delete_selection(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    mutate(&state, &id, &headers, Command::DeleteSelection).await
}

async fn move_node(
    State(state): State<AppState>,
    Path((id, kind, reference)): Path<(String, String, String)>,
    headers: HeaderMap,
    ApiJson(body): ApiJson<PositionBody>,
) -> Result<Response, ApiError> {
    let node = parse_node(&kind, &reference)?;
    let command = Command::MoveNode {
        node,
        position: Point::new(body.x, body.y),
    };
    mutate(&state, &id, &headers, command).await
}

async fn set_pin(
    State(state): State<AppState>,
    Path((id, kind, reference)): Path<(String, String, String)>,
    headers: HeaderMap,
    ApiJson(body): ApiJson<PinBody>,
) -> Result<Response, ApiError> {
    let node = parse_node(&kind, &reference)?;
    let command = Command::SetPin {
        node,
        pinned: body.pinned,
    };
    mutate(&state, &id, &headers, command).await
}

async fn add_topic(
    State(state): State<AppState>,
    Path((id, topic)): Path<(String, String)>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let topic = parse_topic(&topic)?;
    mutate(&state, &id, &headers, Command::AddTopic(topic)).await
}

async fn remove_topic(
    State(state): State<AppState>,
    Path((id, topic)): Path<(String, String)>,
    headers: HeaderMap,
) -> Result<Response, ApiError> {
    let topic = parse_topic(&topic)?;
    mutate(&state, &id, &headers, Command::RemoveTopic(topic)).await
}

async fn rename_topic(
    State(state): State<AppState>,
    Path((id, topic)): Path<(String, String)>,
    headers: HeaderMap,
    ApiJson(body): ApiJson<LabelBody>,
) -> Result<Response, ApiError> {
    let topic = parse_topic(&topic)?;
    let command = Command::RenameTopic {
        topic,
        label: body.label,
    };
    mutate(&state, &id, &headers, command).await
}

async fn update_settings(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    ApiJson(body): ApiJson<SettingsPatch>,
) -> Result<Response, ApiError> {
    mutate(&state, &id, &headers, Command::UpdateSettings(body)).await
}

async fn frames(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let session = state.session(&id)?;
    let events = session.subscribe();
    let snapshots = session.watch();
    let current = snapshots.borrow().clone();
    let opening = json_event("epoch", &serde_json::json!({ "epoch": current.epoch, "version": current.version }));
    let live = stream::unfold((events, snapshots), |(mut events, snapshots)| async move {
        loop {
            let event = match events.recv().await {
                Ok(event) => event,
                Err(RecvError::Lagged(_)) => continue,
                Err(RecvError::Closed) => return None,
            };
            let latest = snapshots.borrow().epoch;
            let out = match event {
                StreamEvent::Frame(frame) if frame.epoch < latest => continue,
                StreamEvent::Frame(frame) => json_event("frame", frame.as_ref()),
                StreamEvent::Epoch(epoch) => json_event("epoch", &epoch),
                StreamEvent::Error { epoch, message } => {
                    json_event("error", &serde_json::json!({ "epoch": epoch, "error": message }))
                }
            };
            return Some((out, (events, snapshots)));
        }
    });
    let stream = stream::once(async move { opening }).chain(live).map(Ok);
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}

fn json_event<T: serde::Serialize>(name: &str, payload: &T) -> Event {
    Event::default()
        .event(name)
        .data(serde_json::to_string(payload).unwrap_or_else(|_| "null".into()))
}

async fn final_frame_of(state: &AppState, snapshot: Arc<Snapshot>) -> Result<(topicfield::FrameRecord, Arc<Snapshot>), ApiError> {
    let model = state.catalog.model();
    tokio::task::spawn_blocking(move || {
        let frame = final_frame(&snapshot.field, &model, &snapshot.params)?;
        Ok((frame, snapshot))
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn export_json(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let snapshot = state.session(&id)?.snapshot();
    let (frame, _) = final_frame_of(&state, snapshot).await?;
    Ok(Json(frame).into_response())
}

async fn export_svg(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let snapshot = state.session(&id)?.snapshot();
    let (frame, snapshot) = final_frame_of(&state, snapshot).await?;
    let svg = render_svg(&frame, &snapshot.field, &state.catalog.model());
    Ok(([(CONTENT_TYPE, "image/svg+xml")], svg).into_response())
}

async fn save(
    State(state): State<AppState>,
    Path(id): Path<String>,
    ApiJson(body): ApiJson<SaveBody>,
) -> Result<Response, ApiError> {
    let snapshot = state.session(&id)?.snapshot();
    let text = serde_json::to_string_pretty(&FieldResponse::from(snapshot.as_ref()))
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    std::fs::write(&body.path, text).map_err(|e| ApiError::BadRequest(format!("cannot write {}: {e}", body.path)))?;
    Ok(field_response(&snapshot))
}

async fn document(State(state): State<AppState>, Path(doc): Path<String>) -> Result<Json<DocumentResponse>, ApiError> {
    let id = DocumentId::new(doc);
    let corpus = &state.catalog.corpus;
    let model = state.catalog.model();
    let d = corpus.get(&id).map_err(|e| ApiError::NotFound(e.to_string()))?;
    let theta = model.theta_row(&id).map(|row| row.to_vec()).unwrap_or_default();
    let cites = corpus.cites(&id).map_err(|e| ApiError::NotFound(e.to_string()))?;
    let cited_by = corpus.cited_by(&id).map_err(|e| ApiError::NotFound(e.to_string()))?;
    Ok(Json(DocumentResponse {
        id,
        title: d.title.clone(),
        authors: d.authors.clone(),
        year: d.year,
        venue: d.venue.clone(),
        body: d.body.clone(),
        theta,
        cites: cites.into_iter().collect(),
        cited_by: cited_by.into_iter().collect(),
    }))
}

async fn topic(State(state): State<AppState>, Path(topic): Path<String>) -> Result<Json<TopicResponse>, ApiError> {
    let topic = parse_topic(&topic)?;
    let model = state.catalog.model();
    let label = model.label(topic)?.to_owned();
    let top_terms = model
        .top_terms(topic, TOPIC_PANEL_TERMS)?
        .into_iter()
        .map(|(term, probability)| TermWeight { term, probability })
        .collect();
    Ok(Json(TopicResponse { topic, label, top_terms }))
}

/// Checks a restored field against the loaded corpus and model.
pub(crate) fn check_restored(state: &AppState, field: &FieldState) -> Result<(), ApiError> {
    let model = state.catalog.model();
    for id in field.doc_ids() {
        if !state.catalog.corpus.contains(id) || !model.contains_document(id) {
            return Err(ApiError::BadRequest(format!("saved document `{id}` is not in the loaded data")));
        }
    }
    for t in field.topic_ids() {
        model.check_topic(t)?;
    }
    if field.doc_nodes().values().chain(field.topic_nodes().values()).any(|n| !n.position.is_finite()) {
        return Err(ApiError::Unprocessable("saved field has non-finite positions".into()));
    }
    Ok(())
}
