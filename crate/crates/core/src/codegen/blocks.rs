//! Markdown file blocks: a fenced code block whose first line is `# <path>`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::check_relative_path;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BlockError {
    #[error("duplicate file path `{0}`")]
    DuplicatePath(String),
    #[error("unsafe file path `{path}`: {reason}")]
    UnsafePath { path: String, reason: String },
    #[error("code fence opened on line {line} is never closed")]
    UnterminatedFence { line: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileBlock {
    pub language_tag: String,
    pub path: String,
    pub content: String,
}

impl FileBlock {
    pub fn new(
        language_tag: impl Into<String>,
        path: impl Into<String>,
        content: impl Into<String>,
    ) -> Self {
        Self {
            language_tag: language_tag.into(),
            path: path.into(),
            content: content.into(),
        }
    }
}

/// Ordered files with pairwise distinct, safe relative paths.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FileBlock>", into = "Vec<FileBlock>")]
pub struct FileSet {
    blocks: Vec<FileBlock>,
}

impl TryFrom<Vec<FileBlock>> for FileSet {
    type Error = BlockError;

    fn try_from(blocks: Vec<FileBlock>) -> Result<Self, BlockError> {
        let mut set = FileSet::new();
        for b in blocks {
            set.push(b)?;
        }
        Ok(set)
    }
}

impl From<FileSet> for Vec<FileBlock> {
    fn from(set: FileSet) -> Self {
        set.blocks
    }
}

pub fn check_file_path(path: &str) -> Result<(), BlockError> {
    let unsafe_path = |reason: String| BlockError::UnsafePath {
        path: path.to_string(),
        reason,
    };
    check_relative_path(path).map_err(unsafe_path)?;
    if path.contains('\\') || path.split('/').any(|s| s.is_empty() || s == ".") {
        return Err(unsafe_path("path must be a plain `a/b/c` relative path".into()));
    }
    if path.chars().any(|c| c.is_whitespace() || c.is_control()) {
        return Err(unsafe_path("path contains whitespace".into()));
    }
    Ok(())
}

impl FileSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, block: FileBlock) -> Result<(), BlockError> {
        check_file_path(&block.path)?;
        if self.get(&block.path).is_some() {
            return Err(BlockError::DuplicatePath(block.path));
        }
        self.blocks.push(block);
        Ok(())
    }

    pub fn get(&self, path: &str) -> Option<&FileBlock> {
        self.blocks.iter().find(|b| b.path == path)
    }

    pub fn contains(&self, path: &str) -> bool {
        self.get(path).is_some()
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.blocks.iter().map(|b| b.path.as_str())
    }

    pub fn iter(&self) -> std::slice::Iter<'_, FileBlock> {
        self.blocks.iter()
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

impl<'a> IntoIterator for &'a FileSet {
    type Item = &'a FileBlock;
    type IntoIter = std::slice::Iter<'a, FileBlock>;

    fn into_iter(self) -> Self::IntoIter {
        self.blocks.iter()
    }
}

fn backtick_prefix(line: &str) -> usize {
    line.bytes().take_while(|&b| b == b'`').count()
}

fn is_closing_fence(line: &str, open_len: usize) -> bool {
    let line = line.trim_end();
    let n = backtick_prefix(line);
    n >= open_len && n == line.len()
}

/// Scans `markdown` for file blocks. Fences are three or more backticks at
/// the start of a line and close on a backtick-only line at least as long.
pub fn extract_file_blocks(markdown: &str) -> Result<FileSet, BlockError> {
    let lines: Vec<&str> = markdown.split('\n').collect();
    let mut set = FileSet::new();
    let mut i = 0;
    while i < lines.len() {
        let open = lines[i];
        let open_len = backtick_prefix(open);
        let info = open[open_len..].trim();
        if open_len < 3 || info.contains('`') {
            i += 1;
            continue;
        }
        let start = i;
        let Some(close) = (i + 1..lines.len()).find(|&j| is_closing_fence(lines[j], open_len)) else {
            return Err(BlockError::UnterminatedFence { line: start + 1 });
        };
        i = close + 1;

        let body = &lines[start + 1..close];
        let path = body
            .first()
            .and_then(|l| l.strip_prefix("# "))
            .map(|p| p.trim_end_matches('\r').trim())
            .filter(|p| !p.is_empty() && !p.contains(char::is_whitespace));
        let Some(path) = path else {
            tracing::warn!(line = start + 1, "code block has no `# path` line; ignored");
            continue;
        };
        set.push(FileBlock {
            language_tag: info.to_string(),
            path: path.to_string(),
            content: body[1..].join("\n"),
        })?;
    }
    Ok(set)
}

fn longest_backtick_run(text: &str) -> usize {
    let mut best = 0;
    let mut run = 0;
    for b in text.bytes() {
        if b == b'`' {
            run += 1;
            best = best.max(run);
        } else {
            run = 0;
        }
    }
    best
}

/// Canonical rendering; `extract_file_blocks` inverts it exactly.
pub fn write_file_blocks(files: &FileSet) -> String {
    let mut out = String::new();
    for (n, b) in files.iter().enumerate() {
        if n > 0 {
            out.push('\n');
        }
        let fence = "`".repeat(longest_backtick_run(&b.content).max(2) + 1);
        let _ = writeln!(out, "{fence}{}", b.language_tag);
        let _ = writeln!(out, "# {}", b.path);
        if !b.content.is_empty() {
            let _ = writeln!(out, "{}", b.content);
        }
        let _ = writeln!(out, "{fence}");
    }
    out
}

/// Language tag for a path, used when rendering configs and code.
pub fn language_for(path: &str) -> &'static str {
    match path.rsplit_once('.').map(|(_, ext)| ext) {
        Some("py") => "python",
        Some("yaml" | "yml") => "yaml",
        Some("json") => "json",
        Some("sh") => "bash",
        Some("md") => "markdown",
        _ => "text",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_yaml_block() {
        let set = extract_file_blocks("```yaml\n# tasks/demo.yaml\nid: demo\n```").unwrap();
        assert_eq!(set.len(), 1);
        let b = set.get("tasks/demo.yaml").unwrap();
        assert_eq!((b.language_tag.as_str(), b.content.as_str()), ("yaml", "id: demo"));
    }

    #[test]
    fn no_blocks_is_empty() {
        assert!(extract_file_blocks("just prose\nno code").unwrap().is_empty());
        assert!(extract_file_blocks("").unwrap().is_empty());
    }

    #[test]
    fn pathless_blocks_are_skipped() {
        let md = "Plan:\n```python\nprint(1)\n```\n```python\n# a.py\nprint(2)\n```\n";
        let set = extract_file_blocks(md).unwrap();
        assert_eq!(set.paths().collect::<Vec<_>>(), vec!["a.py"]);
        let comment = "```python\n# This is the baseline\nx = 1\n```";
        assert!(extract_file_blocks(comment).unwrap().is_empty());
    }

    #[test]
    fn errors() {
        let dup = "```\n# a.py\n```\n```\n# a.py\nx\n```";
        assert_eq!(extract_file_blocks(dup), Err(BlockError::DuplicatePath("a.py".into())));
        assert!(matches!(
            extract_file_blocks("```\n# ../evil.py\n```"),
            Err(BlockError::UnsafePath { .. })
        ));
        assert!(matches!(
            extract_file_blocks("```\n# /etc/passwd\n```"),
            Err(BlockError::UnsafePath { .. })
        ));
        assert_eq!(
            extract_file_blocks("text\n```python\n# a.py\nprint()"),
            Err(BlockError::UnterminatedFence { line: 2 })
        );
    }

    #[test]
    fn longer_fence_guards_inner_fences() {
        let md = "````markdown\n# README.md\n```python\nx = 1\n```\n````";
        let set = extract_file_blocks(md).unwrap();
        assert_eq!(set.get("README.md").unwrap().content, "```python\nx = 1\n```");
        assert_eq!(extract_file_blocks(&write_file_blocks(&set)).unwrap(), set);
    }

    #[test]
    fn writer_output_shape() {
        let mut set = FileSet::new();
        set.push(FileBlock::new("yaml", "tasks/demo.yaml", "id: demo")).unwrap();
        set.push(FileBlock::new("", "empty.txt", "")).unwrap();
        assert_eq!(
            write_file_blocks(&set),
            "```yaml\n# tasks/demo.yaml\nid: demo\n```\n\n```\n# empty.txt\n```\n"
        );
    }

    #[test]
    fn crlf_closing_fence() {
        let set = extract_file_blocks("```py\r\n# a.py\r\nx = 1\r\n```\r\n").unwrap();
        assert_eq!(set.get("a.py").unwrap().content, "x = 1\r");
    }
}
