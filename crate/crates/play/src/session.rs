//! Session registry. Each session owns one deployment episode; sessions
//! share only the read-only checkpoint store.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use intervene_core::checkpoint;
use intervene_core::copilots::{Deployment, EpisodeLog, TrainedCopilot};
use intervene_core::env::EnvKind;
use intervene_core::harness::{episode_seed, Metrics};
use intervene_core::mdp::ActionId;

use crate::protocol::{parse_client_message, ClientMessage, ErrorCode, Hud, ServerMessage, PROTOCOL_VERSION};

/// Read-only checkpoints, loaded on first use from a directory. Ids are
/// file names inside that directory.
pub struct CheckpointStore {
    root: PathBuf,
    loaded: RwLock<HashMap<String, Arc<TrainedCopilot>>>,
}

impl CheckpointStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            loaded: RwLock::new(HashMap::new()),
        }
    }

    /// Registers an in-memory copilot under `id`.
    pub fn insert(&self, id: impl Into<String>, copilot: TrainedCopilot) {
        self.loaded.write().expect("store lock").insert(id.into(), Arc::new(copilot));
    }

    pub fn get(&self, id: &str) -> Result<Arc<TrainedCopilot>, ServerMessage> {
        if let Some(c) = self.loaded.read().expect("store lock").get(id) {
            return Ok(c.clone());
        }
        let valid = !id.is_empty() && Path::new(id).file_name().is_some_and(|f| f == id) && id != "..";
        if !valid {
            return Err(ServerMessage::error(
                ErrorCode::UnknownCheckpoint,
                format!("`{id}` is not a checkpoint name"),
                None,
            ));
        }
        let copilot = checkpoint::load(&self.root.join(id))
            .map_err(|e| ServerMessage::error(ErrorCode::UnknownCheckpoint, format!("{id}: {e}"), None))?
            .into_trained();
        let copilot = Arc::new(copilot);
        self.loaded
            .write()
            .expect("store lock")
            .insert(id.to_string(), copilot.clone());
        Ok(copilot)
    }
}

struct Session {
    copilot: Arc<TrainedCopilot>,
    run: Deployment,
    last_used: Instant,
}

impl Session {
    fn hud(&self) -> Hud {
        let records = self.run.records();
        let interventions = records.iter().filter(|r| r.intervened).count();
        Hud {
            step: self.run.step_count(),
            budget_remaining: self.run.budget(),
            lambda: self.run.lambda(),
            interventions,
            intervention_rate: if records.is_empty() {
                0.0
            } else {
                interventions as f64 / records.len() as f64
            },
            cumulative_return: records.iter().map(|r| r.raw_reward).sum(),
        }
    }

    fn log(&self) -> EpisodeLog {
        self.run.clone().into_log()
    }
}

/// Concurrent sessions; each session is serialized behind its own lock.
pub struct SessionManager {
    store: CheckpointStore,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    next_id: AtomicU64,
    ttl: Duration,
}

pub const DEFAULT_TTL: Duration = Duration::from_secs(30 * 60);

impl SessionManager {
    pub fn new(store: CheckpointStore, ttl: Duration) -> Self {
        Self {
            store,
            sessions: Mutex::new(HashMap::new()),
            next_id: AtomicU64::new(1),
            ttl,
        }
    }

    pub fn store(&self) -> &CheckpointStore {
        &self.store
    }

    /// Handles one raw client message and returns the replies in order.
    pub fn handle_text(&self, text: &str) -> Vec<ServerMessage> {
        match parse_client_message(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => vec![e],
        }
    }

    pub fn handle(&self, msg: ClientMessage) -> Vec<ServerMessage> {
        let result = match msg {
            ClientMessage::Create {
                env,
                checkpoint,
                seed,
                budget,
                ..
            } => self.create(env, &checkpoint, seed, budget).map(|m| vec![m]),
            ClientMessage::Action { session, action, .. } => self.act(&session, action),
        };
        result.unwrap_or_else(|e| vec![e])
    }

    /// Starts a session replaying episode 0 of an offline evaluation at
    /// `seed`.
    pub fn create(
        &self,
        env: EnvKind,
        checkpoint: &str,
        seed: u64,
        budget: Option<u32>,
    ) -> Result<ServerMessage, ServerMessage> {
        self.prune();
        let copilot = self.store.get(checkpoint)?;
        if copilot.env.kind() != env {
            return Err(ServerMessage::error(
                ErrorCode::EnvMismatch,
                format!("checkpoint `{checkpoint}` was trained on {}, not {env}", copilot.env.kind()),
                None,
            ));
        }
        let run = Deployment::start(Some(&copilot), &copilot.env, budget, episode_seed(seed, 0))
            .map_err(|e| ServerMessage::error(ErrorCode::Internal, e.to_string(), None))?;
        let id = format!("s{}", self.next_id.fetch_add(1, Ordering::Relaxed));
        let session = Session {
            copilot,
            run,
            last_used: Instant::now(),
        };
        let env_ref = session.run.env();
        let state = ServerMessage::State {
            protocol_version: PROTOCOL_VERSION,
            session: id.clone(),
            env,
            method: session.copilot.method.name().to_string(),
            action_names: (0..env_ref.action_count()).map(|a| env_ref.action_name(a).to_string()).collect(),
            map: env_ref.as_grid().map(|g| intervene_core::env::grid::render_map(g.map())),
            observation: session.run.observation().features.clone(),
            hud: session.hud(),
        };
        self.sessions
            .lock()
            .expect("session table lock")
            .insert(id, Arc::new(Mutex::new(session)));
        Ok(state)
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServerMessage> {
        self.prune();
        self.sessions
            .lock()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServerMessage::error(ErrorCode::UnknownSession, format!("no session `{id}`"), Some(id.into())))
    }

    /// Applies the pilot's action; the session is unchanged on error.
    pub fn act(&self, id: &str, action: ActionId) -> Result<Vec<ServerMessage>, ServerMessage> {
        let handle = self.session(id)?;
        let mut s = handle.lock().expect("session lock");
        s.last_used = Instant::now();
        if s.run.is_done() {
            return Err(ServerMessage::error(
                ErrorCode::OutOfTurn,
                "episode finished; create a new session",
                Some(id.into()),
            ));
        }
        if action >= s.run.env().action_count() {
            return Err(ServerMessage::error(
                ErrorCode::InvalidAction,
                format!("action {action} is not in 0..{}", s.run.env().action_count()),
                Some(id.into()),
            ));
        }
        let copilot = s.copilot.clone();
        let (rec, out) = s
            .run
            .step(Some(&copilot), action)
            .map_err(|e| ServerMessage::error(ErrorCode::Internal, e.to_string(), Some(id.into())))?;
        let mut replies = vec![ServerMessage::StepResult {
            protocol_version: PROTOCOL_VERSION,
            session: id.to_string(),
            human_action: rec.human_action,
            executed_action: rec.agent_action,
            intervened: rec.intervened,
            reward: rec.raw_reward,
            budget_remaining: rec.budget_after,
            lambda: rec.lambda_at_step,
            done: out.done,
            success: out.done.then_some(out.success),
            observation: out.observation.features.clone(),
            hud: s.hud(),
        }];
        if out.done {
            let log = s.log();
            replies.push(ServerMessage::Summary {
                protocol_version: PROTOCOL_VERSION,
                session: id.to_string(),
                metrics: Metrics::from_logs(std::slice::from_ref(&log)),
                success: log.success,
            });
        }
        Ok(replies)
    }

    /// The session's step records so far; available until the TTL lapses.
    pub fn replay(&self, id: &str) -> Result<EpisodeLog, ServerMessage> {
        let handle = self.session(id)?;
        let s = handle.lock().expect("session lock");
        Ok(s.log())
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("session table lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops sessions idle for longer than the TTL.
    pub fn prune(&self) {
        let now = Instant::now();
        self.sessions.lock().expect("session table lock").retain(|_, s| {
            // A session busy in another thread is in use, so keep it.
            s.try_lock()
                .map_or(true, |s| now.duration_since(s.last_used) <= self.ttl)
        });
    }
}
