use axum::extract::Path;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use serde_json::json;

use super::ApiError;

macro_rules! schema {
    ($name:literal) => {
        (
            $name,
            include_str!(concat!("../../schemas/", $name, ".schema.json")),
        )
    };
}

/// JSON Schema documents for the wire and API formats, by name.
pub const SCHEMAS: [(&str, &str); 11] = [
    schema!("action-command"),
    schema!("action-request"),
    schema!("analytics-bundle"),
    schema!("analytics-request"),
    schema!("api-error"),
    schema!("change-set"),
    schema!("kpi-samples"),
    schema!("signal-reading"),
    schema!("stream-frame"),
    schema!("twin-instance"),
    schema!("twin-relationship"),
];

pub async fn index() -> Response {
    let names: Vec<&str> = SCHEMAS.iter().map(|(n, _)| *n).collect();
    axum::Json(json!({ "schemas": names })).into_response()
}

pub async fn schema(Path(name): Path<String>) -> Result<Response, ApiError> {
    let name = name.strip_suffix(".schema.json").unwrap_or(&name);
    SCHEMAS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, doc)| ([(header::CONTENT_TYPE, "application/schema+json")], *doc).into_response())
        .ok_or_else(|| {
            ApiError::new(
                StatusCode::NOT_FOUND,
                "unknown_schema",
                format!("no schema named `{name}`"),
            )
        })
}
