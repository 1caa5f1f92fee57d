//! Basic and Advanced prompt rendering.
//!
//! Templates are plain text with `{{placeholder}}` markers. The last template
//! line is the score-only output instruction; the news block is inserted
//! directly before it so the rendered prompt always ends with that line.

use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::news::{NewsItem, NewsWindow};

const BASIC_TEMPLATE: &str = include_str!("../templates/basic.txt");
const ADVANCED_TEMPLATE: &str = include_str!("../templates/advanced.txt");

pub const PLACEHOLDERS: [&str; 7] =
    ["ticker", "as_of", "as_of_date", "lookback_days", "horizon_days", "target_date", "rebalance_word"];

pub const EMPTY_WINDOW_SENTINEL: &str = "No news items.";
const NEWS_HEADER: &str = "---- News Items ----";
const AGE_CUTOVER_HOURS: i64 = 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptVariant {
    Basic,
    Advanced,
}

impl PromptVariant {
    pub const ALL: [PromptVariant; 2] = [PromptVariant::Basic, PromptVariant::Advanced];
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptVariant::Basic => "basic",
            PromptVariant::Advanced => "advanced",
        })
    }
}

impl FromStr for PromptVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "basic" => Ok(PromptVariant::Basic),
            "advanced" => Ok(PromptVariant::Advanced),
            other => Err(format!("unknown prompt variant `{other}`")),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A validated template with its content digest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Template {
    text: String,
    hash: String,
}

impl Template {
    /// Parses template text. A single trailing newline is ignored; every
    /// `{{name}}` must be one of [`PLACEHOLDERS`].
    pub fn parse(raw: &str) -> Result<Self> {
        let text = raw.strip_suffix('\n').unwrap_or(raw).to_owned();
        let mut rest = text.as_str();
        while let Some(open) = rest.find("{{") {
            let after = &rest[open + 2..];
            let close = after.find("}}").ok_or_else(|| Error::Invalid("unterminated `{{` in template".into()))?;
            let name = &after[..close];
            if !PLACEHOLDERS.contains(&name) {
                return Err(Error::Invalid(format!("unknown template placeholder `{name}`")));
            }
            rest = &after[close + 2..];
        }
        if !text.contains('\n') {
            return Err(Error::Invalid("template needs a body and a final instruction line".into()));
        }
        let hash = sha256_hex(text.as_bytes());
        Ok(Self { text, hash })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    fn instantiate(&self, values: &[(&str, String)]) -> String {
        let mut out = self.text.clone();
        for (name, value) in values {
            out = out.replace(&format!("{{{{{name}}}}}"), value);
        }
        out
    }
}

/// The pair of templates used for scoring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    basic: Template,
    advanced: Template,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            basic: Template::parse(BASIC_TEMPLATE).expect("bundled basic template is valid"),
            advanced: Template::parse(ADVANCED_TEMPLATE).expect("bundled advanced template is valid"),
        }
    }
}

impl TemplateSet {
    /// Loads `basic.txt` and `advanced.txt` from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let p = dir.join(name);
            std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
        };
        Ok(Self { basic: Template::parse(&read("basic.txt")?)?, advanced: Template::parse(&read("advanced.txt")?)? })
    }

    pub fn get(&self, variant: PromptVariant) -> &Template {
        match variant {
            PromptVariant::Basic => &self.basic,
            PromptVariant::Advanced => &self.advanced,
        }
    }
}

/// Everything a prompt depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSpec {
    pub variant: PromptVariant,
    pub ticker: String,
    /// Request timestamp, 15:55 exchange-local on the rebalance date.
    pub as_of: NaiveDateTime,
    pub lookback_days: u32,
    pub horizon_days: u32,
    pub window: NewsWindow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub text: String,
    pub template_hash: String,
    pub content_hash: String,
    /// Byte range of the appended news block inside `text`.
    pub news_block: Range<usize>,
}

impl RenderedPrompt {
    /// The prompt with the news block cut out: the instantiated template alone.
    pub fn fixed_sections(&self) -> String {
        let mut s = String::with_capacity(self.text.len());
        s.push_str(&self.text[..self.news_block.start]);
        s.push_str(&self.text[self.news_block.end..]);
        s
    }

    pub fn news_block_text(&self) -> &str {
        &self.text[self.news_block.clone()]
    }
}

/// Age label without brackets: whole hours under 48 hours, whole days beyond.
pub fn relative_age(published_at: NaiveDateTime, as_of: NaiveDateTime) -> Result<String> {
    if published_at > as_of {
        return Err(Error::PublishedAfterAsOf { published_at, as_of });
    }
    let minutes = (as_of - published_at).num_minutes();
    let hours = minutes / 60;
    Ok(if hours < AGE_CUTOVER_HOURS { format!("{hours} hours ago") } else { format!("{} days ago", hours / 24) })
}

fn rebalance_word(horizon_days: u32) -> &'static str {
    if horizon_days == 5 {
        "EW"
    } else {
        "EM"
    }
}

fn single_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn news_block(items: &[NewsItem], as_of: NaiveDateTime) -> Result<String> {
    let mut block = format!("\n{NEWS_HEADER}\n");
    if items.is_empty() {
        block.push_str(EMPTY_WINDOW_SENTINEL);
        block.push('\n');
    }
    for item in items {
        let age = relative_age(item.published_at, as_of)?;
        block.push_str(&format!("\n[{age}]\n{}\n{}\n", single_line(&item.title), single_line(&item.summary)));
    }
    block.push('\n');
    Ok(block)
}

/// Renders `spec` against `templates`. `target_close_date` is the close
/// `horizon_days` business days after the request date.
pub fn render(templates: &TemplateSet, spec: &PromptSpec, target_close_date: NaiveDate) -> Result<RenderedPrompt> {
    let template = templates.get(spec.variant);
    let fixed = template.instantiate(&[
        ("ticker", spec.ticker.clone()),
        ("as_of", spec.as_of.format("%Y-%m-%d %H:%M").to_string()),
        ("as_of_date", spec.as_of.date().to_string()),
        ("lookback_days", spec.lookback_days.to_string()),
        ("horizon_days", spec.horizon_days.to_string()),
        ("target_date", target_close_date.to_string()),
        ("rebalance_word", rebalance_word(spec.horizon_days).to_owned()),
    ]);
    let split = fixed.rfind('\n').expect("template has at least two lines") + 1;
    let block = news_block(&spec.window.items, spec.as_of)?;
    let mut text = String::with_capacity(fixed.len() + block.len());
    text.push_str(&fixed[..split]);
    let start = text.len();
    text.push_str(&block);
    let end = text.len();
    text.push_str(&fixed[split..]);
    Ok(RenderedPrompt {
        content_hash: sha256_hex(text.as_bytes()),
        template_hash: template.hash().to_owned(),
        text,
        news_block: start..end,
    })
}
