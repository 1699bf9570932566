//! In-context memory: the persona and human blocks plus the running message
//! window, kept under a token budget by lossy eviction.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recall::Role;

/// Tokens kept from each evicted message by [`PrefixSummarizer`].
pub const SUMMARY_TOKENS_PER_MESSAGE: usize = 10;

pub trait Tokenizer: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// Counts whitespace-separated tokens.
#[derive(Clone, Copy, Debug, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

pub trait Summarizer: Send + Sync {
    fn summarize(&self, messages: &[Message]) -> String;
}

/// `"SUMMARY of k messages: "` followed by the first ten tokens of each
/// evicted message, separated by `" | "`.
#[derive(Clone, Copy, Debug, Default)]
pub struct PrefixSummarizer;

impl Summarizer for PrefixSummarizer {
    fn summarize(&self, messages: &[Message]) -> String {
        let parts: Vec<String> = messages
            .iter()
            .map(|m| {
                m.text
                    .split_whitespace()
                    .take(SUMMARY_TOKENS_PER_MESSAGE)
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        format!(
            "SUMMARY of {} messages: {}",
            messages.len(),
            parts.join(" | ")
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Persona,
    Human,
}

impl FromStr for Section {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "persona" => Ok(Section::Persona),
            "human" => Ok(Section::Human),
            other => Err(Error::Section(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
    /// Set on messages produced by eviction.
    #[serde(default)]
    pub summary: bool,
}

impl Message {
    pub fn new(role: Role, text: impl Into<String>) -> Self {
        Message {
            role,
            text: text.into(),
            summary: false,
        }
    }
}

/// What one call to [`InContextMemory::evict_if_needed`] did.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Eviction {
    /// Messages folded into summaries.
    pub summarized: usize,
    /// Messages dropped outright because summaries alone could not fit.
    pub dropped: usize,
}

pub struct InContextMemory {
    persona: String,
    human: String,
    messages: Vec<Message>,
    token_budget: usize,
    tokenizer: Box<dyn Tokenizer>,
    summarizer: Box<dyn Summarizer>,
}

impl std::fmt::Debug for InContextMemory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InContextMemory")
            .field("persona", &self.persona)
            .field("human", &self.human)
            .field("messages", &self.messages)
            .field("token_budget", &self.token_budget)
            .finish_non_exhaustive()
    }
}

impl InContextMemory {
    pub fn new(
        persona: impl Into<String>,
        human: impl Into<String>,
        token_budget: usize,
    ) -> Result<Self> {
        if token_budget == 0 {
            return Err(Error::Validation("token budget must be positive".into()));
        }
        let mem = InContextMemory {
            persona: persona.into(),
            human: human.into(),
            messages: Vec::new(),
            token_budget,
            tokenizer: Box::new(WhitespaceTokenizer),
            summarizer: Box::new(PrefixSummarizer),
        };
        mem.check_core()?;
        Ok(mem)
    }

    pub fn with_tokenizer(mut self, tokenizer: Box<dyn Tokenizer>) -> Self {
        self.tokenizer = tokenizer;
        self
    }

    pub fn with_summarizer(mut self, summarizer: Box<dyn Summarizer>) -> Self {
        self.summarizer = summarizer;
        self
    }

    pub fn persona(&self) -> &str {
        &self.persona
    }

    pub fn human(&self) -> &str {
        &self.human
    }

    pub fn section(&self, section: Section) -> &str {
        match section {
            Section::Persona => &self.persona,
            Section::Human => &self.human,
        }
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn token_budget(&self) -> usize {
        self.token_budget
    }

    fn core_tokens(&self) -> usize {
        self.tokenizer.count(&self.persona) + self.tokenizer.count(&self.human)
    }

    pub fn token_count(&self) -> usize {
        self.core_tokens()
            + self
                .messages
                .iter()
                .map(|m| self.tokenizer.count(&m.text))
                .sum::<usize>()
    }

    fn check_core(&self) -> Result<()> {
        let required = self.core_tokens();
        if required > self.token_budget {
            return Err(Error::Budget {
                budget: self.token_budget,
                required,
            });
        }
        Ok(())
    }

    fn section_mut(&mut self, section: Section) -> &mut String {
        match section {
            Section::Persona => &mut self.persona,
            Section::Human => &mut self.human,
        }
    }

    /// Append `content` to a section on a new line. The edit is rolled back
    /// if the blocks alone would exceed the budget.
    pub fn core_memory_append(&mut self, section: &str, content: &str) -> Result<Eviction> {
        let section: Section = section.parse()?;
        let block = self.section_mut(section);
        let before = block.len();
        if !block.is_empty() {
            block.push('\n');
        }
        block.push_str(content);
        if let Err(e) = self.check_core() {
            self.section_mut(section).truncate(before);
            return Err(e);
        }
        self.evict_if_needed()
    }

    /// Replace the first exact occurrence of `old` in a section.
    pub fn core_memory_replace(&mut self, section: &str, old: &str, new: &str) -> Result<Eviction> {
        let section: Section = section.parse()?;
        let block = self.section_mut(section);
        let at = match old.is_empty() {
            true => None,
            false => block.find(old),
        }
        .ok_or_else(|| Error::NoMatch(old.to_string()))?;
        let previous = block.clone();
        block.replace_range(at..at + old.len(), new);
        if let Err(e) = self.check_core() {
            *self.section_mut(section) = previous;
            return Err(e);
        }
        self.evict_if_needed()
    }

    pub fn push_message(&mut self, role: Role, text: impl Into<String>) -> Result<Eviction> {
        self.messages.push(Message::new(role, text));
        self.evict_if_needed()
    }

    fn can_summarize(&self) -> bool {
        match self.messages.as_slice() {
            [] => false,
            [first, ..] if first.summary => self.messages.len() > 2,
            _ => true,
        }
    }

    /// While over budget, fold the oldest half of the messages into one
    /// summary message. Once only a summary and one message remain, the
    /// oldest messages are dropped until the window fits.
    pub fn evict_if_needed(&mut self) -> Result<Eviction> {
        self.check_core()?;
        let mut report = Eviction::default();
        while self.token_count() > self.token_budget && self.can_summarize() {
            let k = self.messages.len().div_ceil(2);
            let evicted: Vec<Message> = self.messages.drain(..k).collect();
            let text = self.summarizer.summarize(&evicted);
            self.messages.insert(
                0,
                Message {
                    role: Role::System,
                    text,
                    summary: true,
                },
            );
            report.summarized += k;
        }
        while self.token_count() > self.token_budget && !self.messages.is_empty() {
            self.messages.remove(0);
            report.dropped += 1;
        }
        Ok(report)
    }
}
