use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use refgame_core::game::{BasketCatalog, Condition, PromptVariant, SessionConfig, SessionState};
use refgame_core::participants::{CompletionProvider, ParticipantKind, ParticipantSpec, Role, ScriptedBehavior};
use refgame_core::transcript::{Clock, Payload, SurveyResponse, TranscriptEvent};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::error::ServerError;
use crate::session::{Phase, Session};
use crate::store::{list_sessions, sessions_dir, JoinTokens, SessionRecord, SessionStore};

/// Builds the completion provider for a session's LLM participants, if any.
pub type ProviderFactory = Arc<dyn Fn(&SessionConfig) -> Option<Arc<dyn CompletionProvider>> + Send + Sync>;

pub const DEFAULT_EXPIRY_MIN: u64 = 30;

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub data_dir: PathBuf,
    /// Basket images, served under `/assets`.
    pub assets_dir: Option<PathBuf>,
    /// Browser client bundle, served at `/`.
    pub static_dir: Option<PathBuf>,
    pub session_expiry_ms: u64,
}

impl ServerConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServerConfig {
            data_dir: data_dir.into(),
            assets_dir: None,
            static_dir: None,
            session_expiry_ms: DEFAULT_EXPIRY_MIN * 60_000,
        }
    }
}

/// Body of `POST /sessions`. Human roles follow from the condition; agent roles
/// default to the perfect scripted policy.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub condition: Option<Condition>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub director: Option<ParticipantSpec>,
    #[serde(default)]
    pub matcher: Option<ParticipantSpec>,
    #[serde(default)]
    pub catalog: Option<BasketCatalog>,
    #[serde(default)]
    pub n_rounds: Option<u32>,
    #[serde(default)]
    pub turn_cap: Option<u32>,
    #[serde(default)]
    pub prompt_variant: Option<PromptVariant>,
    #[serde(default)]
    pub label: Option<String>,
}

impl CreateSession {
    pub fn into_config(self, fallback_seed: u64) -> Result<SessionConfig, ServerError> {
        let condition = self.condition.ok_or_else(|| ServerError::Invalid("condition is required".into()))?;
        let default_spec = |role: Role| {
            if condition.is_human(role) {
                ParticipantSpec::human(role)
            } else {
                ParticipantSpec::scripted(role, ScriptedBehavior::Perfect)
            }
        };
        let mut config = SessionConfig::new(
            condition,
            self.seed.unwrap_or(fallback_seed),
            self.catalog.unwrap_or_else(BasketCatalog::builtin),
            self.director.unwrap_or_else(|| default_spec(Role::Director)),
            self.matcher.unwrap_or_else(|| default_spec(Role::Matcher)),
        );
        config.n_distractors = config.catalog.distractors().len();
        if let Some(n) = self.n_rounds {
            config.n_rounds = n;
        }
        if let Some(cap) = self.turn_cap {
            config.turn_cap = cap;
        }
        if let Some(v) = self.prompt_variant {
            config.prompt_variant = v;
        }
        config.label = self.label;
        config.validate().map_err(|e| ServerError::Invalid(e.to_string()))?;
        if config.director.kind != ParticipantKind::Human && config.matcher.kind != ParticipantKind::Human {
            return Err(ServerError::Invalid(
                "agent-only sessions are run offline with the simulate command".into(),
            ));
        }
        Ok(config)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
    pub tokens: JoinTokens,
}

pub struct SessionHandle {
    pub session: Mutex<Session>,
}

/// All sessions of one service instance.
pub struct Registry {
    pub config: ServerConfig,
    clock: Arc<dyn Clock>,
    providers: ProviderFactory,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
}

impl Registry {
    /// Opens the data directory and replays every stored session.
    pub async fn open(
        config: ServerConfig,
        clock: Arc<dyn Clock>,
        providers: ProviderFactory,
    ) -> Result<Arc<Self>, ServerError> {
        std::fs::create_dir_all(sessions_dir(&config.data_dir))?;
        let mut sessions = HashMap::new();
        for path in list_sessions(&config.data_dir)? {
            let (store, record, events) = SessionStore::open(&path)?;
            let provider = providers(&record.config);
            let session = Session::new(record, store, events, provider)?;
            tracing::info!(session = %session.id, events = session.last_seq(), "recovered session");
            sessions.insert(
                session.id.clone(),
                Arc::new(SessionHandle {
                    session: Mutex::new(session),
                }),
            );
        }
        let registry = Arc::new(Registry {
            config,
            clock,
            providers,
            sessions: RwLock::new(sessions),
        });
        let handles: Vec<_> = registry.sessions.read().expect("sessions lock").values().cloned().collect();
        for h in handles {
            registry.kick(&h).await;
        }
        Ok(registry)
    }

    pub fn clock(&self) -> &dyn Clock {
        &*self.clock
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("sessions lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("sessions lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn handle(&self, id: &str) -> Result<Arc<SessionHandle>, ServerError> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServerError::UnknownSession(id.to_string()))
    }

    pub async fn create_session(&self, request: CreateSession) -> Result<CreatedSession, ServerError> {
        let fallback_seed = uuid::Uuid::new_v4().as_u64_pair().0;
        let config = request.into_config(fallback_seed)?;
        let token = |role: Role| {
            (config.participant(role).kind == ParticipantKind::Human).then(|| uuid::Uuid::new_v4().simple().to_string())
        };
        let tokens = JoinTokens {
            director: token(Role::Director),
            matcher: token(Role::Matcher),
        };
        let session_id = uuid::Uuid::new_v4().simple().to_string();
        let record = SessionRecord {
            session_id: session_id.clone(),
            created_ms: self.clock.now_ms(),
            tokens: tokens.clone(),
            config,
        };
        let store = SessionStore::create(&self.config.data_dir, &record)?;
        let provider = (self.providers)(&record.config);
        let session = Session::new(record, store, Vec::new(), provider)?;
        self.sessions.write().expect("sessions lock").insert(
            session_id.clone(),
            Arc::new(SessionHandle {
                session: Mutex::new(session),
            }),
        );
        tracing::info!(session = %session_id, "created session");
        Ok(CreatedSession { session_id, tokens })
    }

    pub async fn role_for_token(&self, id: &str, token: &str) -> Result<Role, ServerError> {
        let handle = self.handle(id)?;
        let s = handle.session.lock().await;
        s.role_for_token(token).ok_or(ServerError::BadToken)
    }

    /// Marks a participant connected; the first join of each role is logged.
    pub async fn join(self: &Arc<Self>, id: &str, token: &str) -> Result<(Role, Arc<SessionHandle>), ServerError> {
        let handle = self.handle(id)?;
        let role = {
            let mut s = handle.session.lock().await;
            let role = s.role_for_token(token).ok_or(ServerError::BadToken)?;
            s.join(role, &*self.clock)?;
            role
        };
        self.kick(&handle).await;
        Ok((role, handle))
    }

    pub async fn leave(&self, id: &str, role: Role) {
        if let Ok(handle) = self.handle(id) {
            handle.session.lock().await.leave(role);
        }
    }

    pub async fn ingest(self: &Arc<Self>, id: &str, role: Role, payload: Payload) -> Result<u64, ServerError> {
        let handle = self.handle(id)?;
        let seq = handle.session.lock().await.ingest(role, payload, &*self.clock)?;
        self.kick(&handle).await;
        Ok(seq)
    }

    pub async fn submit_survey(
        self: &Arc<Self>,
        id: &str,
        token: &str,
        response: SurveyResponse,
    ) -> Result<u64, ServerError> {
        let role = self.role_for_token(id, token).await?;
        self.ingest(id, role, Payload::SurveyResponse(response)).await
    }

    /// The full ordered event list of a session.
    pub async fn replay(&self, id: &str) -> Result<Vec<TranscriptEvent>, ServerError> {
        Ok(self.handle(id)?.session.lock().await.events().to_vec())
    }

    pub async fn state(&self, id: &str) -> Result<SessionState, ServerError> {
        Ok(self.handle(id)?.session.lock().await.state().clone())
    }

    pub async fn phase(&self, id: &str) -> Result<Phase, ServerError> {
        Ok(self.handle(id)?.session.lock().await.phase())
    }

    /// Expires sessions whose participants did not all join in time.
    pub async fn expire_stale(&self) -> Result<usize, ServerError> {
        let handles: Vec<_> = self.sessions.read().expect("sessions lock").values().cloned().collect();
        let now = self.clock.now_ms();
        let mut n = 0;
        for h in handles {
            let mut s = h.session.lock().await;
            if s.expire_if_stale(now, self.config.session_expiry_ms, &*self.clock)? {
                tracing::info!(session = %s.id, "session expired");
                n += 1;
            }
        }
        Ok(n)
    }

    /// Starts the agent driver for a session if an agent is due and none is running.
    pub async fn kick(self: &Arc<Self>, handle: &Arc<SessionHandle>) {
        {
            let mut s = handle.session.lock().await;
            if s.driving || s.pending_agent().is_none() {
                return;
            }
            s.driving = true;
        }
        let registry = Arc::clone(self);
        let handle = Arc::clone(handle);
        tokio::spawn(async move { registry.drive(handle).await });
    }

    /// Plays agent turns until no agent is due. Agents run on the blocking pool
    /// without holding the session lock.
    async fn drive(self: Arc<Self>, handle: Arc<SessionHandle>) {
        loop {
            let job = {
                let mut s = handle.session.lock().await;
                match s.take_agent_job(&*self.clock) {
                    Ok(Some(job)) => job,
                    Ok(None) => {
                        s.driving = false;
                        return;
                    }
                    Err(e) => {
                        tracing::error!(session = %s.id, error = %e, "could not start agent turn");
                        s.driving = false;
                        return;
                    }
                }
            };
            let (role, round_index) = (job.role, job.round.round_index);
            let outcome = tokio::task::spawn_blocking(move || job.run()).await;
            let mut s = handle.session.lock().await;
            let applied = match outcome {
                Ok((job, result)) => s.finish_agent_job(job, result, &*self.clock),
                Err(e) => {
                    tracing::error!(session = %s.id, %role, error = %e, "agent task panicked");
                    s.agent_panicked(role, round_index, &*self.clock)
                }
            };
            if let Err(e) = applied {
                tracing::error!(session = %s.id, error = %e, "could not record agent turn");
                s.driving = false;
                return;
            }
        }
    }

    /// Waits until no agent driver is running for the session.
    pub async fn settle(&self, id: &str) -> Result<(), ServerError> {
        let handle = self.handle(id)?;
        loop {
            {
                let s = handle.session.lock().await;
                if !s.driving {
                    return Ok(());
                }
            }
            tokio::time::sleep(std::time::Duration::from_millis(5)).await;
        }
    }
}
