use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use thiserror::Error;
use tofbench::dataserver::ClientError;
use tofbench::retrievers::RetrieverError;
use tofbench::views::ViewError;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    /// The live data server failed or is unreachable.
    #[error("live server: {0}")]
    Upstream(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Upstream(_) => StatusCode::BAD_GATEWAY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.to_string() });
        (self.status(), Json(body)).into_response()
    }
}

impl From<ViewError> for ApiError {
    fn from(e: ViewError) -> Self {
        ApiError::BadRequest(e.to_string())
    }
}

impl From<RetrieverError> for ApiError {
    fn from(e: RetrieverError) -> Self {
        match e.root() {
            RetrieverError::Selection { .. } => ApiError::BadRequest(e.to_string()),
            RetrieverError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                ApiError::NotFound(e.to_string())
            }
            _ => ApiError::Internal(e.to_string()),
        }
    }
}

impl From<ClientError> for ApiError {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::NotFound(m) => ApiError::NotFound(m),
            ClientError::Server {
                code: tofbench::dataserver::ErrorCode::BadRequest,
                message,
            } => ApiError::BadRequest(message),
            e => ApiError::Upstream(e.to_string()),
        }
    }
}
