use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use lle_core::extract::{ExtractError, ExtractorError, RecordError};
use lle_core::kb::{KbError, RegistryError, SnapshotError, StackError};
use lle_core::session::{EvaluationError, SessionError, StatsError, StoreError};
use serde::Serialize;
use serde_json::{json, Value};

/// Error body returned by every endpoint. `code` is a stable machine string.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(serialize_with = "status_code")]
    pub http_status: StatusCode,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub details: Value,
}

fn status_code<S: serde::Serializer>(status: &StatusCode, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u16(status.as_u16())
}

impl ApiError {
    pub fn new(http_status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            http_status,
            code,
            message: message.into(),
            details: Value::Null,
        }
    }

    pub fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    pub fn validation(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }

    pub fn not_found(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }

    pub fn conflict(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, code, message)
    }

    fn internal(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.http_status, Json(&self)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::validation("InvalidRequest", e.body_text())
    }
}

impl From<KbError> for ApiError {
    fn from(e: KbError) -> Self {
        let message = e.to_string();
        match e {
            KbError::Schema(_) => ApiError::validation("SchemaError", message),
            KbError::RuleSyntax {
                recommendation,
                rule,
                source,
            } => ApiError::validation("RuleSyntax", message).with_details(json!({
                "recommendation": recommendation,
                "rule": rule.to_string(),
                "offset": source.offset(),
            })),
            KbError::UndefinedAtom { .. } => ApiError::validation("UndefinedAtom", message),
            KbError::DuplicateName { .. } => ApiError::validation("DuplicateName", message),
        }
    }
}

impl From<SnapshotError> for ApiError {
    fn from(e: SnapshotError) -> Self {
        let message = e.to_string();
        match e {
            SnapshotError::LintBlocked(findings) => {
                ApiError::validation("LintBlocked", message).with_details(json!({ "findings": findings }))
            }
        }
    }
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        let message = e.to_string();
        match e {
            RegistryError::VersionConflict { .. } => ApiError::conflict("VersionConflict", message),
            RegistryError::NotFound { .. } => ApiError::not_found("NotFound", message),
            RegistryError::Io { .. } => ApiError::internal("Io", message),
            RegistryError::Corrupt { .. } => ApiError::internal("Corrupt", message),
        }
    }
}

impl From<StackError> for ApiError {
    fn from(e: StackError) -> Self {
        match e {
            StackError::EmptyStack => ApiError::validation("EmptyStack", e.to_string()),
            StackError::NotFound(inner) => inner.into(),
            StackError::InvalidRef(_) => ApiError::validation("InvalidRef", e.to_string()),
        }
    }
}

impl From<RecordError> for ApiError {
    fn from(e: RecordError) -> Self {
        ApiError::validation("RecordError", e.to_string())
    }
}

impl From<ExtractError> for ApiError {
    fn from(e: ExtractError) -> Self {
        match e {
            ExtractError::EmptyFactorSet => ApiError::validation("EmptyFactorSet", e.to_string()),
        }
    }
}

impl From<ExtractorError> for ApiError {
    fn from(e: ExtractorError) -> Self {
        let code = match e {
            ExtractorError::Unavailable(_) => "ExtractorUnavailable",
            ExtractorError::InvalidReply(_) => "ExtractorInvalidReply",
        };
        ApiError::new(StatusCode::BAD_GATEWAY, code, e.to_string())
    }
}

impl From<EvaluationError> for ApiError {
    fn from(e: EvaluationError) -> Self {
        ApiError::validation("MissingAnswer", e.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let message = e.to_string();
        match e {
            SessionError::WrongState { expected, actual } => ApiError::conflict("WrongState", message)
                .with_details(json!({ "expected": expected, "actual": actual })),
            SessionError::UnknownFactor(_) => ApiError::not_found("UnknownFactor", message),
            SessionError::NoChange => ApiError::validation("NoChange", message),
            SessionError::UnknownRecommendation(_) => ApiError::not_found("UnknownRecommendation", message),
            SessionError::DuplicateId(_) => ApiError::conflict("DuplicateId", message),
            SessionError::InvalidMove { .. } => ApiError::validation("InvalidMove", message),
            SessionError::InvalidAdjustment(_) => ApiError::validation("InvalidAdjustment", message),
            SessionError::Conflict { expected, actual } => ApiError::conflict("Conflict", message)
                .with_details(json!({ "expected": expected, "actual": actual })),
            SessionError::Stack(e) => e.into(),
            SessionError::Record(e) => e.into(),
            SessionError::Extract(e) => e.into(),
            SessionError::Evaluation(e) => e.into(),
            SessionError::Replay { .. } => ApiError::internal("Corrupt", message),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        match e {
            StoreError::NotFound(_) => ApiError::not_found("SessionNotFound", message),
            StoreError::Exists(_) => ApiError::conflict("SessionExists", message),
            StoreError::Io { .. } => ApiError::internal("Io", message),
            StoreError::Corrupt { .. } => ApiError::internal("Corrupt", message),
            StoreError::Session(e) => e.into(),
        }
    }
}

impl From<StatsError> for ApiError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::EmptyInput => ApiError::not_found("EmptyInput", e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn body_shape() {
        let e = ApiError::from(SessionError::Conflict { expected: 1, actual: 2 });
        let body = serde_json::to_value(&e).unwrap();
        assert_eq!(body["http_status"], 409);
        assert_eq!(body["code"], "Conflict");
        assert_eq!(body["details"], json!({"expected": 1, "actual": 2}));
    }

    #[test]
    fn status_classes() {
        let cases: Vec<(ApiError, u16)> = vec![
            (SessionError::NoChange.into(), 422),
            (SessionError::UnknownFactor("x".into()).into(), 404),
            (StackError::EmptyStack.into(), 422),
            (
                RegistryError::NotFound {
                    namespace: "a".into(),
                    version: "1".into(),
                }
                .into(),
                404,
            ),
            (StoreError::NotFound("s".into()).into(), 404),
            (ExtractorError::Unavailable("down".into()).into(), 502),
            (StatsError::EmptyInput.into(), 404),
        ];
        for (e, status) in cases {
            assert_eq!(e.http_status.as_u16(), status, "{e:?}");
        }
    }
}
