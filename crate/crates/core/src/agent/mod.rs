//! Function-call surface of the agent: routes envelopes to the engine, the
//! in-context memory, or registered tools.

mod context;
mod dispatch;
mod tools;

pub use context::{
    Eviction, InContextMemory, Message, PrefixSummarizer, Section, Summarizer, Tokenizer,
    WhitespaceTokenizer, SUMMARY_TOKENS_PER_MESSAGE,
};
pub use dispatch::{
    schema, validate, ArgKind, ArgSpec, Args, Envelope, ErrorPayload, FunctionSchema, Response,
    FUNCTIONS,
};
pub use tools::{StubTool, Tool, ToolCall, ToolFailure, ToolRegistry, TOOL_FUNCTIONS};

use std::io::BufRead;
use std::sync::Arc;

use crate::embedding::Modality;
use crate::engine::Engine;
use crate::error::Result;
use crate::memory::NewContext;
use crate::recall::Role;
use crate::search::SearchResult;

pub struct Agent {
    engine: Arc<Engine>,
    context: InContextMemory,
    tools: ToolRegistry,
}

impl std::fmt::Debug for Agent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Agent")
            .field("context", &self.context)
            .field("tools", &self.tools)
            .finish_non_exhaustive()
    }
}

impl Agent {
    pub fn new(engine: Arc<Engine>, context: InContextMemory, tools: ToolRegistry) -> Self {
        Agent {
            engine,
            context,
            tools,
        }
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    pub fn context(&self) -> &InContextMemory {
        &self.context
    }

    pub fn tools_mut(&mut self) -> &mut ToolRegistry {
        &mut self.tools
    }

    /// Record a user turn in the recall log and the message window.
    pub fn user_message(&mut self, text: &str) -> Result<Eviction> {
        self.engine.log_message(Role::User, text)?;
        self.context.push_message(Role::User, text)
    }

    /// Parse and dispatch one wire envelope.
    pub fn dispatch_json(&mut self, line: &str) -> Response {
        match Envelope::parse(line) {
            Ok(env) => self.dispatch(&env),
            Err(resp) => *resp,
        }
    }

    /// Dispatch every nonblank line of an envelope trace in order.
    pub fn replay<R: BufRead>(&mut self, reader: R) -> std::io::Result<Vec<Response>> {
        let mut out = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                out.push(self.dispatch_json(&line));
            }
        }
        Ok(out)
    }

    pub fn dispatch(&mut self, env: &Envelope) -> Response {
        let Some(function) = schema(&env.name) else {
            return Response::err(
                &env.call_id,
                ErrorPayload::new(
                    "UnknownFunctionError",
                    format!("no function named {:?}", env.name),
                ),
            );
        };
        let args = match validate(function, &env.arguments) {
            Ok(a) => a,
            Err(e) => return Response::err(&env.call_id, e),
        };
        match self.route(function.name, &args) {
            Ok(value) => Response::ok(&env.call_id, value),
            Err(e) => Response::err(&env.call_id, e),
        }
    }

    fn route(&mut self, name: &str, args: &Args<'_>) -> std::result::Result<String, ErrorPayload> {
        match name {
            "contextual_memory_insert" => self.insert(args),
            "cope_search" => {
                let result = self
                    .engine
                    .cope_search(&args.query("query"), args.int("topk"))?;
                Ok(self.render_search(&result))
            }
            "conversation_search" => {
                let page = args.int("page").unwrap_or(0);
                Ok(self
                    .engine
                    .conversation_search(args.req_str("query"), page)
                    .render(page))
            }
            "conversation_search_date" => {
                let page = args.int("page").unwrap_or(0);
                let found = self.engine.conversation_search_date(
                    args.req_str("start_date"),
                    args.req_str("end_date"),
                    page,
                )?;
                Ok(found.render(page))
            }
            "core_memory_append" => {
                let section = args.req_str("name");
                self.context
                    .core_memory_append(section, args.req_str("content"))?;
                Ok(format!("Appended to {section}."))
            }
            "core_memory_replace" => {
                let section = args.req_str("name");
                self.context.core_memory_replace(
                    section,
                    args.req_str("old_content"),
                    args.req_str("new_content"),
                )?;
                Ok(format!("Replaced in {section}."))
            }
            tool => {
                let Some(t) = self.tools.get_mut(tool) else {
                    return Err(ErrorPayload::new(
                        "UnknownToolError",
                        format!("no tool registered for {tool:?}"),
                    ));
                };
                let output = t
                    .invoke(args.raw())
                    .map_err(|f| ErrorPayload::new("ToolError", f.0))?;
                if tool == "send_message" {
                    let message = args.req_str("message");
                    self.engine.log_message(Role::Agent, message)?;
                    self.context.push_message(Role::Agent, message)?;
                }
                Ok(output)
            }
        }
    }

    fn insert(&mut self, args: &Args<'_>) -> std::result::Result<String, ErrorPayload> {
        let modality: Modality = args
            .req_str("modality")
            .parse()
            .map_err(|e: crate::Error| ErrorPayload::argument(Some("modality"), e.to_string()))?;
        let content = args.req_str("content");
        let filepath = args.str("filepath");
        let embed_source = match (modality, filepath) {
            (Modality::Text, _) => content,
            (_, Some(path)) if !path.is_empty() => path,
            _ => {
                return Err(ErrorPayload::argument(
                    Some("filepath"),
                    "required when modality is not text",
                ))
            }
        };
        let tags: Vec<String> = args
            .req_str("tags")
            .split(';')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(str::to_string)
            .collect();
        let embedding = self.engine.embed(embed_source, modality)?;
        let new = NewContext {
            content: content.to_string(),
            tags: tags.clone(),
            modality,
            uri: (modality != Modality::Text).then(|| embed_source.to_string()),
            timestamp: self.engine.now(),
            embedding,
        };
        let id = self.engine.insert_context(new)?;
        Ok(format!(
            "Inserted context {id} with tags [{}].",
            tags.join(", ")
        ))
    }

    fn render_search(&self, result: &SearchResult) -> String {
        let mem = self.engine.memory();
        let mut out = format!("Tags: {}", result.tags.join(", "));
        if result.contexts.is_empty() {
            out.push_str("\nNo contexts found.");
        }
        for (rank, hit) in result.contexts.iter().enumerate() {
            let Ok(node) = mem.context(hit.id) else {
                continue;
            };
            out.push_str(&format!(
                "\n{}. [{:.4}] ({}) {}",
                rank + 1,
                hit.score,
                node.modality,
                node.content
            ));
            if let Some(uri) = &node.uri {
                out.push_str(&format!(" <{uri}>"));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashEmbedder;
    use crate::engine::{EngineConfig, StepClock};
    use chrono::{Duration, TimeZone, Utc};
    use serde_json::json;

    fn agent() -> Agent {
        let engine = Engine::new(Arc::new(HashEmbedder::new(16, 3)))
            .with_clock(Arc::new(StepClock::new(
                Utc.with_ymd_and_hms(2024, 3, 1, 9, 0, 0).unwrap(),
                Duration::minutes(1),
            )))
            .with_config(EngineConfig {
                auto_rebuild_tree: true,
                ..EngineConfig::default()
            });
        Agent::new(
            Arc::new(engine),
            InContextMemory::new("I am a helpful assistant.", "", 200).unwrap(),
            ToolRegistry::with_stubs(),
        )
    }

    fn call(a: &mut Agent, name: &str, args: serde_json::Value) -> Response {
        a.dispatch(&Envelope::new(name, args, "c"))
    }

    #[test]
    fn routes_conversation_search() {
        let mut a = agent();
        a.user_message("I adopted a pet corgi").unwrap();
        let r = call(
            &mut a,
            "conversation_search",
            json!({"query": "PET", "page": 0}),
        );
        assert!(r.ok, "{r:?}");
        assert!(r.value.unwrap().contains("pet corgi"));
    }

    #[test]
    fn unknown_function_and_tool() {
        let mut a = agent();
        let r = call(&mut a, "fly_to_moon", json!({}));
        assert_eq!(r.error.unwrap().kind, "UnknownFunctionError");
        a.tools = ToolRegistry::new();
        let r = call(
            &mut a,
            "generate_image",
            json!({"prompt": "p", "motive": "m"}),
        );
        assert_eq!(r.error.unwrap().kind, "UnknownToolError");
    }

    #[test]
    fn insert_then_search() {
        let mut a = agent();
        let r = call(
            &mut a,
            "contextual_memory_insert",
            json!({"content": "My dog is Rex", "tags": "dog; pet", "conversation": "u: my dog is Rex", "modality": "text"}),
        );
        assert_eq!(
            r.value.as_deref(),
            Some("Inserted context 0 with tags [dog, pet].")
        );
        let r = call(
            &mut a,
            "cope_search",
            json!({"query": [["My dog is Rex", "text"]], "motive": "recall pet"}),
        );
        let v = r.value.unwrap();
        assert!(v.contains("1. [1.0000] (text) My dog is Rex"), "{v}");
    }

    #[test]
    fn insert_needs_filepath_for_media() {
        let mut a = agent();
        let r = call(
            &mut a,
            "contextual_memory_insert",
            json!({"content": "a photo", "tags": "photo", "conversation": "", "modality": "image"}),
        );
        assert_eq!(r.error.unwrap().field.as_deref(), Some("filepath"));
        let r = call(
            &mut a,
            "contextual_memory_insert",
            json!({"content": "a photo", "tags": " ; ", "conversation": "", "modality": "image", "filepath": "x.png"}),
        );
        assert_eq!(r.error.unwrap().kind, "ValidationError");
    }

    #[test]
    fn core_memory_calls() {
        let mut a = agent();
        assert!(
            call(
                &mut a,
                "core_memory_append",
                json!({"name": "human", "content": "likes corgis"})
            )
            .ok
        );
        assert_eq!(a.context().human(), "likes corgis");
        let r = call(
            &mut a,
            "core_memory_replace",
            json!({"name": "human", "old_content": "Corgis", "new_content": "cats"}),
        );
        assert_eq!(r.error.unwrap().kind, "NoMatchError");
        let r = call(
            &mut a,
            "core_memory_append",
            json!({"name": "tools", "content": "x"}),
        );
        assert_eq!(r.error.unwrap().kind, "SectionError");
    }

    #[test]
    fn send_message_is_logged() {
        let mut a = agent();
        let r = call(&mut a, "send_message", json!({"message": "Hello there"}));
        assert_eq!(r.value.as_deref(), Some("sent: Hello there"));
        assert_eq!(a.engine().recall().len(), 1);
        assert_eq!(a.context().messages().len(), 1);
    }
}
