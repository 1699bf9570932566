//! Pluggable tools behind the encode, generate, edit and send functions.

use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{Map, Value};

/// Tool-level failure, surfaced to the caller as a `ToolError` payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToolFailure(pub String);

pub trait Tool: Send {
    fn invoke(&mut self, arguments: &Map<String, Value>) -> Result<String, ToolFailure>;
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ToolCall {
    pub tool: String,
    pub arguments: Map<String, Value>,
    pub output: String,
}

/// Returns a canned, deterministic string and records each call.
#[derive(Clone, Debug)]
pub struct StubTool {
    name: String,
    calls: Vec<ToolCall>,
}

impl StubTool {
    pub fn new(name: impl Into<String>) -> Self {
        StubTool {
            name: name.into(),
            calls: Vec::new(),
        }
    }

    pub fn calls(&self) -> &[ToolCall] {
        &self.calls
    }

    fn canned(&self, arguments: &Map<String, Value>) -> String {
        let n = self.calls.len();
        let arg = |k: &str| arguments.get(k).and_then(Value::as_str).unwrap_or_default();
        match self.name.as_str() {
            "encode_image" | "encode_audio" | "encode_video" => {
                format!("caption of {}", arg("filepath"))
            }
            "generate_image" => format!("stub://generated/image/{n}.png"),
            "generate_video" => format!("stub://generated/video/{n}.mp4"),
            "generate_audio" => format!("stub://generated/audio/{n}.wav"),
            "edit_image" => format!("stub://edited/image/{n}.png"),
            "send_message" => format!("sent: {}", arg("message")),
            other => format!("{other} call {n}"),
        }
    }
}

impl Tool for StubTool {
    fn invoke(&mut self, arguments: &Map<String, Value>) -> Result<String, ToolFailure> {
        let output = self.canned(arguments);
        self.calls.push(ToolCall {
            tool: self.name.clone(),
            arguments: arguments.clone(),
            output: output.clone(),
        });
        Ok(output)
    }
}

/// Names of the functions routed to tools rather than to the engine.
pub const TOOL_FUNCTIONS: [&str; 8] = [
    "encode_image",
    "encode_audio",
    "encode_video",
    "generate_image",
    "generate_video",
    "generate_audio",
    "edit_image",
    "send_message",
];

#[derive(Default)]
pub struct ToolRegistry {
    tools: BTreeMap<String, Box<dyn Tool>>,
}

impl std::fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_set().entries(self.tools.keys()).finish()
    }
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// A registry with a [`StubTool`] for every tool function.
    pub fn with_stubs() -> Self {
        let mut r = Self::new();
        for name in TOOL_FUNCTIONS {
            r.register(name, Box::new(StubTool::new(name)));
        }
        r
    }

    pub fn register(&mut self, name: impl Into<String>, tool: Box<dyn Tool>) {
        self.tools.insert(name.into(), tool);
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut (dyn Tool + 'static)> {
        self.tools.get_mut(name).map(|t| t.as_mut())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tools.contains_key(name)
    }
}
