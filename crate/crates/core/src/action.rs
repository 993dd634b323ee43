//! Commands sent from the twin side back to (simulated) end-devices.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Map, Value};

use crate::json;
use crate::signal::SignalKind;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    SetPrimaryInterface { interface: SignalKind },
    SetReportPeriod { kind: SignalKind, period_ms: u64 },
    Pause,
    Resume,
}

pub const VERBS: [&str; 4] = [
    "set_primary_interface",
    "set_report_period",
    "pause",
    "resume",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ActionError {
    #[error("unknown verb `{0}`")]
    InvalidVerb(String),
    #[error("invalid arguments for `{verb}`: {reason}")]
    InvalidArguments { verb: String, reason: String },
    #[error("malformed action command: {0}")]
    Malformed(String),
}

fn kind_arg(verb: &str, args: &Map<String, Value>, key: &str) -> Result<SignalKind, ActionError> {
    let s = args
        .get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| ActionError::InvalidArguments {
            verb: verb.into(),
            reason: format!("`{key}` must be a signal kind string"),
        })?;
    s.parse().map_err(|_| ActionError::InvalidArguments {
        verb: verb.into(),
        reason: format!("unknown signal kind `{s}`"),
    })
}

impl Action {
    pub fn verb(&self) -> &'static str {
        match self {
            Action::SetPrimaryInterface { .. } => "set_primary_interface",
            Action::SetReportPeriod { .. } => "set_report_period",
            Action::Pause => "pause",
            Action::Resume => "resume",
        }
    }

    /// Validates a verb and its argument object.
    pub fn parse(verb: &str, arguments: &Value) -> Result<Action, ActionError> {
        if !VERBS.contains(&verb) {
            return Err(ActionError::InvalidVerb(verb.to_string()));
        }
        let empty = Map::new();
        let args = match arguments {
            Value::Null => &empty,
            Value::Object(m) => m,
            _ => {
                return Err(ActionError::InvalidArguments {
                    verb: verb.into(),
                    reason: "arguments must be an object".into(),
                })
            }
        };
        match verb {
            "set_primary_interface" => {
                let interface = kind_arg(verb, args, "interface")?;
                if !interface.is_radio() {
                    return Err(ActionError::InvalidArguments {
                        verb: verb.into(),
                        reason: "interface must be a radio kind".into(),
                    });
                }
                Ok(Action::SetPrimaryInterface { interface })
            }
            "set_report_period" => {
                let kind = kind_arg(verb, args, "kind")?;
                let period_ms = args
                    .get("period_ms")
                    .and_then(Value::as_u64)
                    .filter(|p| *p > 0)
                    .ok_or_else(|| ActionError::InvalidArguments {
                        verb: verb.into(),
                        reason: "`period_ms` must be a positive integer".into(),
                    })?;
                Ok(Action::SetReportPeriod { kind, period_ms })
            }
            "pause" => Ok(Action::Pause),
            _ => Ok(Action::Resume),
        }
    }

    pub fn arguments(&self) -> Value {
        match self {
            Action::SetPrimaryInterface { interface } => json!({ "interface": interface.as_str() }),
            Action::SetReportPeriod { kind, period_ms } => {
                json!({ "kind": kind.as_str(), "period_ms": period_ms })
            }
            Action::Pause | Action::Resume => json!({}),
        }
    }
}

/// An action addressed to one device, as published on `netwin/actions/<device>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionCommand {
    pub device_id: String,
    pub action: Action,
    pub issued_by: String,
    pub issued_at: u64,
}

impl ActionCommand {
    pub fn to_value(&self) -> Value {
        json!({
            "device_id": self.device_id,
            "verb": self.action.verb(),
            "arguments": self.action.arguments(),
            "issued_by": self.issued_by,
            "issued_at": self.issued_at,
        })
    }

    pub fn encode(&self) -> String {
        json::to_canonical_string(&self.to_value())
    }

    pub fn decode(text: &str) -> Result<ActionCommand, ActionError> {
        let v: Value =
            serde_json::from_str(text).map_err(|e| ActionError::Malformed(e.to_string()))?;
        Self::from_value(&v)
    }

    pub fn from_value(v: &Value) -> Result<ActionCommand, ActionError> {
        if !v.is_object() {
            return Err(ActionError::Malformed(
                "action command must be an object".into(),
            ));
        }
        let field = |k: &str| {
            v.get(k)
                .ok_or_else(|| ActionError::Malformed(format!("missing `{k}`")))
        };
        let device_id = field("device_id")?
            .as_str()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| ActionError::Malformed("`device_id` must be a non-empty string".into()))?
            .to_string();
        let verb = field("verb")?
            .as_str()
            .ok_or_else(|| ActionError::Malformed("`verb` must be a string".into()))?;
        let action = Action::parse(verb, v.get("arguments").unwrap_or(&Value::Null))?;
        let issued_by = v
            .get("issued_by")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        let issued_at = v
            .get("issued_at")
            .and_then(Value::as_u64)
            .unwrap_or_default();
        Ok(ActionCommand {
            device_id,
            action,
            issued_by,
            issued_at,
        })
    }
}

impl Serialize for ActionCommand {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_value().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ActionCommand {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(deserializer)?;
        ActionCommand::from_value(&v).map_err(serde::de::Error::custom)
    }
}
