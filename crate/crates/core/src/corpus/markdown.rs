//! Line-oriented block scanner that pairs fenced code blocks with the prose
//! paragraphs directly above them.
//!
//! Only the block structure matters here, so the scanner recognises a small
//! subset of CommonMark: ATX and setext headings, thematic breaks, fenced code
//! (backtick and tilde), indented code, HTML blocks, and everything else as
//! paragraph text. List items and block quotes are treated as paragraphs.

use std::path::Path;

use serde::Serialize;
use walkdir::WalkDir;

use super::{CorpusError, SnippetRecord};

/// Result of scanning one README.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub records: Vec<SnippetRecord>,
    pub warnings: Vec<ExtractWarning>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExtractWarning {
    /// A fence was opened and never closed; the record holds everything up to end of file.
    UnterminatedFence {
        source_path: String,
        line: usize,
        block_index: usize,
    },
    /// A fence with no code in it. It still separates paragraphs but yields no record.
    EmptyFence {
        source_path: String,
        line: usize,
        block_index: usize,
    },
}

struct OpenFence {
    marker: char,
    len: usize,
    indent: usize,
    info: Option<String>,
    line: usize,
    lines: Vec<String>,
    description: Option<String>,
}

enum HtmlEnd {
    BlankLine,
    Contains(&'static str),
}

/// Leading indentation in columns (tab = 4) and the remainder of the line.
fn split_indent(line: &str) -> (usize, &str) {
    let mut cols = 0;
    for (i, ch) in line.char_indices() {
        match ch {
            ' ' => cols += 1,
            '\t' => cols += 4 - cols % 4,
            _ => return (cols, &line[i..]),
        }
    }
    (cols, "")
}

/// Removes up to `n` columns of leading whitespace.
fn strip_columns(line: &str, n: usize) -> &str {
    let mut cols = 0;
    for (i, ch) in line.char_indices() {
        if cols >= n {
            return &line[i..];
        }
        match ch {
            ' ' => cols += 1,
            '\t' => cols += 4 - cols % 4,
            _ => return &line[i..],
        }
    }
    ""
}

/// `(marker, run length, info string)` when `rest` opens a fence.
fn fence_opener(rest: &str) -> Option<(char, usize, Option<String>)> {
    let marker = rest.chars().next()?;
    if marker != '`' && marker != '~' {
        return None;
    }
    let len = rest.chars().take_while(|&c| c == marker).count();
    if len < 3 {
        return None;
    }
    let info = rest[len..].trim();
    if marker == '`' && info.contains('`') {
        return None;
    }
    let info = (!info.is_empty()).then(|| info.to_string());
    Some((marker, len, info))
}

fn closes_fence(rest: &str, fence: &OpenFence) -> bool {
    let len = rest.chars().take_while(|&c| c == fence.marker).count();
    len >= fence.len && rest[len..].trim().is_empty()
}

fn is_atx_heading(rest: &str) -> bool {
    let hashes = rest.chars().take_while(|&c| c == '#').count();
    (1..=6).contains(&hashes)
        && rest[hashes..]
            .chars()
            .next()
            .is_none_or(|c| c == ' ' || c == '\t')
}

fn is_setext_underline(rest: &str) -> bool {
    let body = rest.trim_end();
    !body.is_empty() && (body.chars().all(|c| c == '=') || body.chars().all(|c| c == '-'))
}

fn is_thematic_break(rest: &str) -> bool {
    let mut marker = None;
    let mut count = 0;
    for ch in rest.chars() {
        match ch {
            ' ' | '\t' => {}
            '-' | '*' | '_' => {
                if *marker.get_or_insert(ch) != ch {
                    return false;
                }
                count += 1;
            }
            _ => return false,
        }
    }
    count >= 3
}

fn is_list_marker(rest: &str) -> bool {
    let mut chars = rest.chars();
    match chars.next() {
        Some('-' | '*' | '+') => matches!(chars.next(), None | Some(' ' | '\t')),
        Some(c) if c.is_ascii_digit() => {
            let digits = rest.chars().take_while(|c| c.is_ascii_digit()).count();
            let after = &rest[digits..];
            digits <= 9
                && (after.starts_with(". ") || after.starts_with(") ") || after == "." || after == ")")
        }
        _ => false,
    }
}

fn html_block_start(rest: &str) -> Option<HtmlEnd> {
    let lower = rest.to_ascii_lowercase();
    for (open, close) in [
        ("<pre", "</pre>"),
        ("<script", "</script>"),
        ("<style", "</style>"),
        ("<textarea", "</textarea>"),
    ] {
        if let Some(after) = lower.strip_prefix(open) {
            if after.is_empty() || after.starts_with(|c: char| c == '>' || c.is_whitespace()) {
                return Some(HtmlEnd::Contains(close));
            }
        }
    }
    if lower.starts_with("<!--") {
        return Some(HtmlEnd::Contains("-->"));
    }
    let mut chars = rest.chars();
    if chars.next() != Some('<') {
        return None;
    }
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '/' || c == '!' || c == '?' => {
            Some(HtmlEnd::BlankLine)
        }
        _ => None,
    }
}

struct Scanner<'a> {
    package_name: &'a str,
    source_path: &'a str,
    paragraphs: Vec<String>,
    current: Vec<String>,
    list_context: bool,
    in_indented: bool,
    html: Option<HtmlEnd>,
    fence: Option<OpenFence>,
    next_block: usize,
    out: Extraction,
}

impl<'a> Scanner<'a> {
    fn new(package_name: &'a str, source_path: &'a str) -> Self {
        Scanner {
            package_name,
            source_path,
            paragraphs: Vec::new(),
            current: Vec::new(),
            list_context: false,
            in_indented: false,
            html: None,
            fence: None,
            next_block: 0,
            out: Extraction::default(),
        }
    }

    fn end_paragraph(&mut self) {
        if !self.current.is_empty() {
            self.paragraphs.push(self.current.join("\n"));
            self.current.clear();
        }
    }

    /// Heading, rule or non-prose block: nothing above it can describe a later fence.
    fn boundary(&mut self) {
        self.current.clear();
        self.paragraphs.clear();
    }

    fn line(&mut self, lineno: usize, line: &str) {
        if let Some(fence) = self.fence.as_mut() {
            let (indent, rest) = split_indent(line);
            let max_indent = fence.indent + 3;
            if indent <= max_indent && closes_fence(rest, fence) {
                let fence = self.fence.take().expect("open fence");
                self.emit(fence, false);
            } else {
                fence.lines.push(strip_columns(line, fence.indent).to_string());
            }
            return;
        }

        if let Some(end) = &self.html {
            let done = match end {
                HtmlEnd::BlankLine => line.trim().is_empty(),
                HtmlEnd::Contains(close) => line.to_ascii_lowercase().contains(close),
            };
            if done {
                self.html = None;
            }
            return;
        }

        let (indent, rest) = split_indent(line);
        if rest.trim().is_empty() {
            self.end_paragraph();
            return;
        }

        let may_open = indent <= 3 || (self.list_context && !self.in_indented);
        if may_open {
            if let Some((marker, len, info)) = fence_opener(rest) {
                self.end_paragraph();
                let description = (!self.paragraphs.is_empty()).then(|| self.paragraphs.join("\n\n"));
                self.paragraphs.clear();
                self.in_indented = false;
                self.fence = Some(OpenFence {
                    marker,
                    len,
                    indent,
                    info,
                    line: lineno,
                    lines: Vec::new(),
                    description,
                });
                return;
            }
        }

        if indent >= 4 {
            if self.in_indented {
                return;
            }
            if self.current.is_empty() && !self.list_context {
                self.in_indented = true;
                self.boundary();
                return;
            }
        }
        self.in_indented = false;

        if indent <= 3 {
            if is_atx_heading(rest) {
                self.boundary();
                self.list_context = false;
                return;
            }
            if !self.current.is_empty() && is_setext_underline(rest) {
                self.boundary();
                self.list_context = false;
                return;
            }
            if is_thematic_break(rest) {
                self.boundary();
                self.list_context = false;
                return;
            }
            if self.current.is_empty() {
                if let Some(end) = html_block_start(rest) {
                    self.boundary();
                    let closed_on_same_line = match end {
                        HtmlEnd::Contains(close) => {
                            let lower = rest.to_ascii_lowercase();
                            // the closing tag may sit on the opening line
                            lower.find(close).is_some()
                        }
                        HtmlEnd::BlankLine => false,
                    };
                    if !closed_on_same_line {
                        self.html = Some(end);
                    }
                    return;
                }
            }
        }

        if is_list_marker(rest) {
            self.list_context = true;
        } else if self.current.is_empty() && indent == 0 {
            self.list_context = false;
        }
        self.current.push(rest.trim_end().to_string());
    }

    fn emit(&mut self, fence: OpenFence, unterminated: bool) {
        let block_index = self.next_block;
        self.next_block += 1;
        if unterminated {
            self.out.warnings.push(ExtractWarning::UnterminatedFence {
                source_path: self.source_path.to_string(),
                line: fence.line,
                block_index,
            });
        }
        let code = fence.lines.join("\n");
        if code.trim_end().is_empty() {
            self.out.warnings.push(ExtractWarning::EmptyFence {
                source_path: self.source_path.to_string(),
                line: fence.line,
                block_index,
            });
            return;
        }
        self.out.records.push(SnippetRecord {
            package_name: self.package_name.to_string(),
            snippet_id: SnippetRecord::make_id(self.package_name, self.source_path, block_index),
            language_hint: fence.info,
            code,
            description: fence.description,
            source_path: self.source_path.to_string(),
            block_index,
        });
    }

    fn finish(mut self) -> Extraction {
        if let Some(fence) = self.fence.take() {
            self.emit(fence, true);
        }
        self.out
    }
}

/// Extracts one record per fenced code block in `markdown_text`.
///
/// The description of a block is the run of paragraphs directly above it,
/// joined with a blank line. Headings, thematic breaks, earlier fences,
/// indented code and HTML blocks all end that run.
pub fn parse_readme(markdown_text: &str, source_path: &str, package_name: &str) -> Extraction {
    let mut scanner = Scanner::new(package_name, source_path);
    for (i, line) in markdown_text.lines().enumerate() {
        scanner.line(i + 1, line.strip_suffix('\r').unwrap_or(line));
    }
    scanner.finish()
}

/// True for `README.md`, `readme.markdown` and friends, case-insensitively.
pub fn is_readme_file(path: &Path) -> bool {
    let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
        return false;
    };
    if !stem.eq_ignore_ascii_case("readme") {
        return false;
    }
    match path.extension().and_then(|e| e.to_str()) {
        None => true,
        Some(ext) => ["md", "markdown", "mdown", "mkd"]
            .iter()
            .any(|known| ext.eq_ignore_ascii_case(known)),
    }
}

/// Output of [`extract_dir`].
#[derive(Debug, Default)]
pub struct DirExtraction {
    pub records: Vec<SnippetRecord>,
    pub warnings: Vec<ExtractWarning>,
    /// READMEs that could not be read or were not valid UTF-8.
    pub failed: Vec<(String, String)>,
    pub files_scanned: usize,
}

/// Walks `root` and parses every README found, in sorted path order.
///
/// The package name is the README's parent directory name (the root's own
/// name for a top-level README); `source_path` is relative to `root` with
/// `/` separators.
pub fn extract_dir(root: &Path) -> Result<DirExtraction, CorpusError> {
    let meta = std::fs::metadata(root).map_err(|e| CorpusError::io(root, e))?;
    if !meta.is_dir() {
        return Err(CorpusError::io(
            root,
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "not a directory"),
        ));
    }
    let root_name = root
        .canonicalize()
        .ok()
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "root".to_string());

    let mut out = DirExtraction::default();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = match entry {
            Ok(entry) => entry,
            Err(err) => {
                let path = err
                    .path()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default();
                out.failed.push((path, err.to_string()));
                continue;
            }
        };
        if !entry.file_type().is_file() || !is_readme_file(entry.path()) {
            continue;
        }
        let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
        let source_path = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        let package_name = rel
            .parent()
            .and_then(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| root_name.clone());

        out.files_scanned += 1;
        let bytes = match std::fs::read(entry.path()) {
            Ok(bytes) => bytes,
            Err(err) => {
                out.failed.push((source_path, err.to_string()));
                continue;
            }
        };
        let text = match String::from_utf8(bytes) {
            Ok(text) => text,
            Err(err) => {
                out.failed.push((source_path, format!("invalid UTF-8: {err}")));
                continue;
            }
        };
        let extraction = parse_readme(&text, &source_path, &package_name);
        out.records.extend(extraction.records);
        out.warnings.extend(extraction.warnings);
    }
    Ok(out)
}
