//! The agent response grammar: a rationale, then one fenced `action` block.
//!
//! ````text
//! DISCUSSION
//! The baseline ignores the context; look at it first.
//!
//! ```action
//! read baseline.py
//! ```
//! ````

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentAction {
    ReadFile {
        path: String,
    },
    /// Replaces lines `start..=end` (1-based); `end == start - 1` inserts.
    EditFile {
        path: String,
        start: usize,
        end: usize,
        replacement: String,
    },
    RunCommand {
        command: String,
    },
    Submit,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("no ```action block found")]
    MissingAction,
    #[error("found {0} ```action blocks; send exactly one")]
    MultipleActions(usize),
    #[error("the ```action block is never closed")]
    Unterminated,
    #[error("unknown action `{0}`; use read, edit, run or submit")]
    UnknownVerb(String),
    #[error("malformed `{verb}` action: {reason}")]
    BadArguments { verb: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub rationale: String,
    pub action: AgentAction,
}

fn fence_len(line: &str) -> usize {
    line.bytes().take_while(|&b| b == b'`').count()
}

fn bad(verb: &'static str, reason: impl Into<String>) -> FormatError {
    FormatError::BadArguments {
        verb,
        reason: reason.into(),
    }
}

fn parse_range(text: &str) -> Option<(usize, usize)> {
    let (a, b) = text.split_once(':')?;
    Some((a.parse().ok()?, b.parse().ok()?))
}

fn parse_action(body: &str) -> Result<AgentAction, FormatError> {
    let (head, rest) = body.split_once('\n').unwrap_or((body, ""));
    let head = head.trim();
    let (verb, args) = head.split_once(char::is_whitespace).unwrap_or((head, ""));
    let args = args.trim();
    match verb {
        "read" => {
            if args.is_empty() || args.contains(char::is_whitespace) {
                return Err(bad("read", "expected `read <path>`"));
            }
            Ok(AgentAction::ReadFile { path: args.into() })
        }
        "edit" => {
            let mut parts = args.split_whitespace();
            let (Some(path), Some(range), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(bad("edit", "expected `edit <path> <start>:<end>` then the new lines"));
            };
            let (start, end) =
                parse_range(range).ok_or_else(|| bad("edit", format!("`{range}` is not <start>:<end>")))?;
            if start == 0 || end + 1 < start {
                return Err(bad("edit", format!("invalid line range {start}:{end}")));
            }
            Ok(AgentAction::EditFile {
                path: path.into(),
                start,
                end,
                replacement: rest.to_string(),
            })
        }
        "run" => {
            let command = if rest.is_empty() {
                args.to_string()
            } else {
                format!("{args}\n{rest}").trim().to_string()
            };
            if command.is_empty() {
                return Err(bad("run", "expected `run <command>`"));
            }
            Ok(AgentAction::RunCommand { command })
        }
        "submit" if args.is_empty() && rest.trim().is_empty() => Ok(AgentAction::Submit),
        "submit" => Err(bad("submit", "takes no arguments")),
        other => Err(FormatError::UnknownVerb(other.to_string())),
    }
}

/// Parses a full assistant message.
pub fn parse_response(text: &str) -> Result<ParsedResponse, FormatError> {
    let lines: Vec<&str> = text.split('\n').collect();
    let mut blocks = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let n = fence_len(lines[i]);
        if n < 3 {
            i += 1;
            continue;
        }
        let info = lines[i][n..].trim();
        let close = (i + 1..lines.len()).find(|&j| {
            let l = lines[j].trim_end();
            fence_len(l) >= n && fence_len(l) == l.len()
        });
        let Some(close) = close else {
            if info == "action" {
                return Err(FormatError::Unterminated);
            }
            break;
        };
        if info == "action" {
            blocks.push((i, close));
        }
        i = close + 1;
    }
    let (open, close) = match blocks.as_slice() {
        [] => return Err(FormatError::MissingAction),
        [one] => *one,
        many => return Err(FormatError::MultipleActions(many.len())),
    };
    let body = lines[open + 1..close].join("\n");
    let action = parse_action(&body)?;
    let before = lines[..open].join("\n");
    let before = before.trim();
    let rationale = before
        .strip_prefix("DISCUSSION")
        .map(str::trim_start)
        .unwrap_or(before)
        .to_string();
    Ok(ParsedResponse { rationale, action })
}

/// Canonical action block, inverse of the action part of `parse_response`.
impl fmt::Display for AgentAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let body = match self {
            AgentAction::ReadFile { path } => format!("read {path}"),
            AgentAction::EditFile {
                path,
                start,
                end,
                replacement,
            } => format!("edit {path} {start}:{end}\n{replacement}"),
            AgentAction::RunCommand { command } => format!("run {command}"),
            AgentAction::Submit => "submit".to_string(),
        };
        let longest = body
            .split(|c| c != '`')
            .map(str::len)
            .max()
            .unwrap_or(0);
        let fence = "`".repeat(longest.max(2) + 1);
        write!(f, "{fence}action\n{body}\n{fence}")
    }
}

/// Canonical assistant message for a rationale and action.
pub fn render_response(rationale: &str, action: &AgentAction) -> String {
    format!("DISCUSSION\n{}\n\n{action}", rationale.trim())
}
