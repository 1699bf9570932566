//! JSON function-call envelopes, argument schemas and validation.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::embedding::Modality;
use crate::error::Error;
use crate::search::QueryPart;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub name: String,
    #[serde(default)]
    pub arguments: Map<String, Value>,
    pub call_id: String,
}

impl Envelope {
    pub fn new(name: impl Into<String>, arguments: Value, call_id: impl Into<String>) -> Self {
        Envelope {
            name: name.into(),
            arguments: match arguments {
                Value::Object(m) => m,
                _ => Map::new(),
            },
            call_id: call_id.into(),
        }
    }

    /// Parse one wire envelope. On failure the returned response carries
    /// whatever `call_id` could be recovered.
    pub fn parse(line: &str) -> Result<Envelope, Box<Response>> {
        let value: Value = serde_json::from_str(line).map_err(|e| {
            Box::new(Response::err(
                "",
                ErrorPayload::argument(None, format!("malformed envelope: {e}")),
            ))
        })?;
        let call_id = value
            .get("call_id")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        let obj = value.as_object().ok_or_else(|| {
            Box::new(Response::err(
                &call_id,
                ErrorPayload::argument(None, "envelope must be a JSON object"),
            ))
        })?;
        let field = |name: &str| -> Result<&Value, Box<Response>> {
            obj.get(name).ok_or_else(|| {
                Box::new(Response::err(
                    &call_id,
                    ErrorPayload::argument(Some(name), "missing envelope field"),
                ))
            })
        };
        let Some(name) = field("name")?.as_str().filter(|s| !s.is_empty()) else {
            return Err(Box::new(Response::err(
                &call_id,
                ErrorPayload::argument(Some("name"), "expected a nonempty string"),
            )));
        };
        if !field("call_id")?.is_string() {
            return Err(Box::new(Response::err(
                &call_id,
                ErrorPayload::argument(Some("call_id"), "expected a string"),
            )));
        }
        let arguments = match obj.get("arguments") {
            None | Some(Value::Null) => Map::new(),
            Some(Value::Object(m)) => m.clone(),
            Some(_) => {
                return Err(Box::new(Response::err(
                    &call_id,
                    ErrorPayload::argument(Some("arguments"), "expected an object"),
                )))
            }
        };
        Ok(Envelope {
            name: name.to_string(),
            arguments,
            call_id,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl ErrorPayload {
    pub fn new(kind: impl Into<String>, message: impl Into<String>) -> Self {
        ErrorPayload {
            kind: kind.into(),
            message: message.into(),
            field: None,
        }
    }

    pub fn argument(field: Option<&str>, message: impl Into<String>) -> Self {
        ErrorPayload {
            kind: "ArgumentError".into(),
            message: message.into(),
            field: field.map(str::to_string),
        }
    }
}

impl From<Error> for ErrorPayload {
    fn from(e: Error) -> Self {
        ErrorPayload::new(e.kind(), e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub call_id: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorPayload>,
}

impl Response {
    pub fn ok(call_id: &str, value: impl Into<String>) -> Self {
        Response {
            call_id: call_id.to_string(),
            ok: true,
            value: Some(value.into()),
            error: None,
        }
    }

    pub fn err(call_id: &str, error: ErrorPayload) -> Self {
        Response {
            call_id: call_id.to_string(),
            ok: false,
            value: None,
            error: Some(error),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("response serializes")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArgKind {
    Str,
    /// Nonnegative integer.
    Int,
    /// List of `[content, modality]` pairs.
    QueryList,
}

#[derive(Clone, Copy, Debug)]
pub struct ArgSpec {
    pub name: &'static str,
    pub kind: ArgKind,
    pub required: bool,
}

const fn req(name: &'static str, kind: ArgKind) -> ArgSpec {
    ArgSpec {
        name,
        kind,
        required: true,
    }
}

const fn opt(name: &'static str, kind: ArgKind) -> ArgSpec {
    ArgSpec {
        name,
        kind,
        required: false,
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FunctionSchema {
    pub name: &'static str,
    pub args: &'static [ArgSpec],
}

use ArgKind::*;

const FILE_MOTIVE: &[ArgSpec] = &[req("filepath", Str), req("motive", Str)];
const PROMPT_MOTIVE: &[ArgSpec] = &[req("prompt", Str), req("motive", Str)];

pub const FUNCTIONS: &[FunctionSchema] = &[
    FunctionSchema {
        name: "encode_image",
        args: FILE_MOTIVE,
    },
    FunctionSchema {
        name: "encode_audio",
        args: FILE_MOTIVE,
    },
    FunctionSchema {
        name: "encode_video",
        args: FILE_MOTIVE,
    },
    FunctionSchema {
        name: "core_memory_append",
        args: &[req("name", Str), req("content", Str)],
    },
    FunctionSchema {
        name: "core_memory_replace",
        args: &[
            req("name", Str),
            req("old_content", Str),
            req("new_content", Str),
        ],
    },
    FunctionSchema {
        name: "contextual_memory_insert",
        args: &[
            req("content", Str),
            req("tags", Str),
            req("conversation", Str),
            opt("filepath", Str),
            req("modality", Str),
        ],
    },
    FunctionSchema {
        name: "conversation_search",
        args: &[req("query", Str), opt("page", Int)],
    },
    FunctionSchema {
        name: "conversation_search_date",
        args: &[
            req("start_date", Str),
            req("end_date", Str),
            opt("page", Int),
        ],
    },
    FunctionSchema {
        name: "cope_search",
        args: &[
            req("query", QueryList),
            req("motive", Str),
            opt("topk", Int),
        ],
    },
    FunctionSchema {
        name: "generate_image",
        args: PROMPT_MOTIVE,
    },
    FunctionSchema {
        name: "generate_video",
        args: PROMPT_MOTIVE,
    },
    FunctionSchema {
        name: "generate_audio",
        args: PROMPT_MOTIVE,
    },
    FunctionSchema {
        name: "edit_image",
        args: &[
            req("prompt", Str),
            req("filepaths", Str),
            req("motive", Str),
        ],
    },
    FunctionSchema {
        name: "send_message",
        args: &[req("message", Str)],
    },
];

pub fn schema(name: &str) -> Option<&'static FunctionSchema> {
    FUNCTIONS.iter().find(|f| f.name == name)
}

/// Arguments that passed schema validation.
#[derive(Clone, Debug)]
pub struct Args<'a> {
    raw: &'a Map<String, Value>,
}

impl<'a> Args<'a> {
    pub fn raw(&self) -> &'a Map<String, Value> {
        self.raw
    }

    /// A string argument; absent or null optional arguments yield `None`.
    pub fn str(&self, name: &str) -> Option<&'a str> {
        self.raw.get(name).and_then(Value::as_str)
    }

    pub fn req_str(&self, name: &str) -> &'a str {
        self.str(name).expect("validated required argument")
    }

    pub fn int(&self, name: &str) -> Option<usize> {
        self.raw
            .get(name)
            .and_then(Value::as_u64)
            .map(|v| v as usize)
    }

    pub fn query(&self, name: &str) -> Vec<QueryPart> {
        parse_query(&self.raw[name]).expect("validated query list")
    }
}

fn parse_query(v: &Value) -> Result<Vec<QueryPart>, String> {
    let items = v
        .as_array()
        .ok_or("expected a list of [content, modality] pairs")?;
    if items.is_empty() {
        return Err("query list is empty".into());
    }
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let pair = item
                .as_array()
                .filter(|p| p.len() == 2)
                .ok_or_else(|| format!("item {i}: expected a [content, modality] pair"))?;
            let (Some(content), Some(modality)) = (pair[0].as_str(), pair[1].as_str()) else {
                return Err(format!("item {i}: content and modality must be strings"));
            };
            let modality: Modality = modality
                .parse()
                .map_err(|e: Error| format!("item {i}: {e}"))?;
            QueryPart::new(content, modality).map_err(|e| format!("item {i}: {e}"))
        })
        .collect()
}

/// Check `arguments` against the schema for `function`.
pub fn validate<'a>(
    function: &FunctionSchema,
    arguments: &'a Map<String, Value>,
) -> Result<Args<'a>, ErrorPayload> {
    for key in arguments.keys() {
        if !function.args.iter().any(|a| a.name == key) {
            return Err(ErrorPayload::argument(Some(key), "unexpected argument"));
        }
    }
    for spec in function.args {
        let value = match arguments.get(spec.name) {
            None | Some(Value::Null) if spec.required => {
                return Err(ErrorPayload::argument(
                    Some(spec.name),
                    "missing required argument",
                ))
            }
            None | Some(Value::Null) => continue,
            Some(v) => v,
        };
        let problem = match spec.kind {
            Str => (!value.is_string()).then(|| "expected a string".to_string()),
            Int => value
                .as_u64()
                .is_none()
                .then(|| "expected a nonnegative integer".to_string()),
            QueryList => parse_query(value).err(),
        };
        if let Some(message) = problem {
            return Err(ErrorPayload::argument(Some(spec.name), message));
        }
    }
    Ok(Args { raw: arguments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn args(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn missing_field_is_named() {
        let a = args(json!({"content": "c", "tags": "t", "conversation": "x"}));
        let e = validate(schema("contextual_memory_insert").unwrap(), &a).unwrap_err();
        assert_eq!(e.kind, "ArgumentError");
        assert_eq!(e.field.as_deref(), Some("modality"));
    }

    #[test]
    fn types_checked() {
        let s = schema("conversation_search").unwrap();
        assert!(validate(s, &args(json!({"query": "pet"}))).is_ok());
        assert_eq!(
            validate(s, &args(json!({"query": "pet", "page": -1})))
                .unwrap_err()
                .field
                .as_deref(),
            Some("page")
        );
        assert_eq!(
            validate(s, &args(json!({"query": 3})))
                .unwrap_err()
                .field
                .as_deref(),
            Some("query")
        );
        assert_eq!(
            validate(s, &args(json!({"query": "a", "limit": 3})))
                .unwrap_err()
                .field
                .as_deref(),
            Some("limit")
        );
    }

    #[test]
    fn query_list_schema() {
        let s = schema("cope_search").unwrap();
        let ok = args(json!({"query": [["a dog", "text"], ["x.png", "image"]], "motive": "m"}));
        let v = validate(s, &ok).unwrap();
        assert_eq!(v.query("query").len(), 2);
        for bad in [
            json!([]),
            json!("a dog"),
            json!([["a dog"]]),
            json!([["a dog", "smell"]]),
            json!([["", "text"]]),
        ] {
            let a = args(json!({"query": bad, "motive": "m"}));
            assert_eq!(validate(s, &a).unwrap_err().field.as_deref(), Some("query"));
        }
    }

    #[test]
    fn envelope_parsing() {
        let e = Envelope::parse(
            r#"{"name":"send_message","arguments":{"message":"hi"},"call_id":"c1"}"#,
        )
        .unwrap();
        assert_eq!(e.name, "send_message");
        assert_eq!(
            Envelope::parse("not json").unwrap_err().error.unwrap().kind,
            "ArgumentError"
        );
        let r = Envelope::parse(r#"{"arguments":{},"call_id":"c2"}"#).unwrap_err();
        assert_eq!(r.call_id, "c2");
        assert_eq!(r.error.unwrap().field.as_deref(), Some("name"));
        assert!(Envelope::parse(r#"{"name":"x","arguments":[],"call_id":"c3"}"#).is_err());
    }

    #[test]
    fn response_wire_form() {
        assert_eq!(
            Response::ok("c", "v").to_json(),
            r#"{"call_id":"c","ok":true,"value":"v"}"#
        );
        let e = Response::err("c", ErrorPayload::new("UnknownFunctionError", "no"));
        assert_eq!(
            e.to_json(),
            r#"{"call_id":"c","ok":false,"error":{"kind":"UnknownFunctionError","message":"no"}}"#
        );
    }
}
