use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use refgame_core::transcript::EventError;

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("join token not recognised")]
    BadToken,
    #[error("{0} is already connected with this token")]
    DuplicateJoin(String),
    #[error("session is no longer live: {0}")]
    Stale(String),
    #[error("unauthorized: {0}")]
    Unauthorized(String),
    #[error("not allowed now: {0}")]
    WrongPhase(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error(transparent)]
    Event(#[from] EventError),
    #[error("storage error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt session data: {0}")]
    Corrupt(String),
}

impl ServerError {
    /// Short machine-readable code sent to clients.
    pub fn code(&self) -> &'static str {
        match self {
            ServerError::UnknownSession(_) => "unknown_session",
            ServerError::BadToken => "bad_token",
            ServerError::DuplicateJoin(_) => "duplicate_join",
            ServerError::Stale(_) => "stale_session",
            ServerError::Unauthorized(_) => "unauthorized",
            ServerError::WrongPhase(_) => "wrong_phase",
            ServerError::Invalid(_) => "invalid",
            ServerError::Event(_) => "rejected",
            ServerError::Io(_) | ServerError::Corrupt(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServerError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServerError::BadToken => StatusCode::FORBIDDEN,
            ServerError::DuplicateJoin(_) => StatusCode::CONFLICT,
            ServerError::Stale(_) => StatusCode::GONE,
            ServerError::Unauthorized(_) => StatusCode::FORBIDDEN,
            ServerError::WrongPhase(_) => StatusCode::CONFLICT,
            ServerError::Invalid(_) | ServerError::Event(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServerError::Io(_) | ServerError::Corrupt(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServerError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.to_string(), "code": self.code() });
        (self.status(), Json(body)).into_response()
    }
}
