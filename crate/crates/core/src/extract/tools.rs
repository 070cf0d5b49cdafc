use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::dates::{age_at, days_between, CalendarDate, DateError};
use crate::rule::TriBool;

#[derive(Debug, thiserror::Error)]
pub enum ToolError {
    #[error("unknown tool `{0}`")]
    UnknownTool(String),
    #[error("bad arguments for `{tool}`: {message}")]
    BadArguments { tool: String, message: String },
    #[error(transparent)]
    Date(#[from] DateError),
}

/// Function-tool description in the JSON-schema form chat backends expect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub parameters: Value,
}

/// The callable tools advertised to extraction backends.
#[derive(Debug, Clone)]
pub struct ToolRegistry {
    specs: Vec<ToolSpec>,
}

impl Default for ToolRegistry {
    fn default() -> Self {
        Self::date_tools()
    }
}

fn date_params(a: &str, a_desc: &str, b: &str, b_desc: &str) -> Value {
    json!({
        "type": "object",
        "properties": {
            a: {"type": "string", "format": "date", "description": a_desc},
            b: {"type": "string", "format": "date", "description": b_desc},
        },
        "required": [a, b],
        "additionalProperties": false,
    })
}

impl ToolRegistry {
    pub fn date_tools() -> Self {
        ToolRegistry {
            specs: vec![
                ToolSpec {
                    name: "age_at".into(),
                    description: "Completed years of age on a reference date.".into(),
                    parameters: date_params(
                        "date_of_birth",
                        "Birth date, YYYY-MM-DD",
                        "reference",
                        "Date to compute the age at, YYYY-MM-DD",
                    ),
                },
                ToolSpec {
                    name: "days_between".into(),
                    description: "Signed number of days from start to end.".into(),
                    parameters: date_params("start", "YYYY-MM-DD", "end", "YYYY-MM-DD"),
                },
            ],
        }
    }

    pub fn specs(&self) -> &[ToolSpec] {
        &self.specs
    }

    pub fn call(&self, name: &str, args: &Value) -> Result<Value, ToolError> {
        let date = |key: &str| -> Result<CalendarDate, ToolError> {
            let text = args.get(key).and_then(Value::as_str).ok_or_else(|| ToolError::BadArguments {
                tool: name.to_string(),
                message: format!("missing string argument `{key}`"),
            })?;
            Ok(text.parse()?)
        };
        match name {
            "age_at" => Ok(json!({"years": age_at(date("date_of_birth")?, date("reference")?)?})),
            "days_between" => Ok(json!({"days": days_between(date("start")?, date("end")?)})),
            other => Err(ToolError::UnknownTool(other.to_string())),
        }
    }
}

fn expression_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^\s*(age_at|days_between)\s*\(\s*([A-Za-z0-9_.\-]+)\s*,\s*([A-Za-z0-9_.\-]+)\s*\)\s*(<=|>=|==|!=|<|>)\s*(-?\d+)\s*$",
        )
        .expect("valid regex")
    })
}

/// True if `text` looks like `age_at(a, b) < 65` or `days_between(a, b) <= 30`.
pub fn is_date_expression(text: &str) -> bool {
    expression_pattern().is_match(text)
}

/// Evaluates a date comparison whose arguments are ISO dates or names of
/// structured fields holding ISO dates. Missing fields give `Unknown`.
pub fn eval_date_expression(
    text: &str,
    fields: &BTreeMap<String, String>,
) -> Result<(TriBool, String), ToolError> {
    let caps = expression_pattern().captures(text).ok_or_else(|| ToolError::BadArguments {
        tool: "date expression".into(),
        message: format!("cannot parse {text:?}"),
    })?;
    let func = &caps[1];
    let resolve = |arg: &str| -> Result<Option<CalendarDate>, ToolError> {
        if let Ok(date) = arg.parse::<CalendarDate>() {
            return Ok(Some(date));
        }
        match fields.get(arg) {
            Some(value) => Ok(Some(value.trim().parse()?)),
            None => Ok(None),
        }
    };
    let (a, b) = match (resolve(&caps[2])?, resolve(&caps[3])?) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Ok((
                TriBool::Unknown,
                format!("{text}: a referenced date is missing from the record"),
            ))
        }
    };
    let threshold: i64 = caps[5].parse().map_err(|_| ToolError::BadArguments {
        tool: func.to_string(),
        message: format!("threshold {} out of range", &caps[5]),
    })?;
    let actual = match func {
        "age_at" => i64::from(age_at(a, b)?),
        _ => days_between(a, b),
    };
    let holds = match &caps[4] {
        "<" => actual < threshold,
        "<=" => actual <= threshold,
        ">" => actual > threshold,
        ">=" => actual >= threshold,
        "==" => actual == threshold,
        _ => actual != threshold,
    };
    Ok((
        TriBool::from(holds),
        format!("{func}({a}, {b}) = {actual}; {actual} {} {threshold} is {holds}", &caps[4]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tool_calls() {
        let tools = ToolRegistry::date_tools();
        assert_eq!(
            tools.call("age_at", &json!({"date_of_birth": "1960-03-15", "reference": "2025-03-14"})).unwrap(),
            json!({"years": 64})
        );
        assert_eq!(
            tools.call("days_between", &json!({"start": "2024-02-28", "end": "2024-03-01"})).unwrap(),
            json!({"days": 2})
        );
        assert!(matches!(tools.call("now", &json!({})), Err(ToolError::UnknownTool(_))));
        assert!(matches!(
            tools.call("age_at", &json!({"date_of_birth": "1960-02-30", "reference": "2025-01-01"})),
            Err(ToolError::Date(DateError::InvalidDate(_)))
        ));
        assert!(matches!(tools.call("age_at", &json!({})), Err(ToolError::BadArguments { .. })));
    }

    #[test]
    fn date_expressions() {
        let fields: BTreeMap<String, String> = [
            ("date_of_birth".to_string(), "1960-03-15".to_string()),
            ("diagnosis_date".to_string(), "2025-03-14".to_string()),
        ]
        .into();
        let (v, _) = eval_date_expression("age_at(date_of_birth, diagnosis_date) < 65", &fields).unwrap();
        assert_eq!(v, TriBool::True);
        let (v, _) = eval_date_expression("age_at(date_of_birth, 2025-03-15) < 65", &fields).unwrap();
        assert_eq!(v, TriBool::False);
        let (v, _) = eval_date_expression("days_between(diagnosis_date, 2025-04-13) <= 30", &fields).unwrap();
        assert_eq!(v, TriBool::True);
        let (v, _) = eval_date_expression("age_at(missing_field, diagnosis_date) < 65", &fields).unwrap();
        assert_eq!(v, TriBool::Unknown);
        assert!(!is_date_expression("yes"));
    }
}
