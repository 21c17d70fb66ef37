//! HTML to Markdown normalization for fetched pages.
//!
//! Headings become `#` prefixes, lists and tables become their Markdown
//! forms, scripts/styles/nav are stripped, links keep their anchor text.
//! The tokenizer is deliberately tolerant: page HTML in the wild is tag
//! soup and a dropped tag must never poison the whole document.

const STRIPPED_TAGS: &[&str] =
    &["script", "style", "nav", "head", "noscript", "template", "iframe", "svg"];

const VOID_TAGS: &[&str] = &["br", "hr", "img", "meta", "link", "input", "source", "wbr", "col"];

#[derive(Debug, PartialEq)]
enum Token {
    Text(String),
    Open(String),
    Close(String),
}

fn tokenize(html: &str) -> Vec<Token> {
    let bytes = html.as_bytes();
    let mut tokens = Vec::new();
    let mut pos = 0;
    let mut text_start = 0;

    while pos < bytes.len() {
        if bytes[pos] != b'<' {
            pos += 1;
            continue;
        }
        if pos > text_start {
            tokens.push(Token::Text(html[text_start..pos].to_string()));
        }
        if html[pos..].starts_with("<!--") {
            pos = match html[pos..].find("-->") {
                Some(end) => pos + end + 3,
                None => bytes.len(),
            };
        } else if html[pos..].starts_with("<!") || html[pos..].starts_with("<?") {
            pos = match html[pos..].find('>') {
                Some(end) => pos + end + 1,
                None => bytes.len(),
            };
        } else if html[pos..].starts_with("</") {
            let end = html[pos..].find('>').map(|e| pos + e).unwrap_or(bytes.len());
            let name = html[pos + 2..end].trim().to_ascii_lowercase();
            if !name.is_empty() {
                tokens.push(Token::Close(name));
            }
            pos = (end + 1).min(bytes.len());
        } else if bytes.get(pos + 1).map(|b| b.is_ascii_alphabetic()).unwrap_or(false) {
            // Opening tag: scan to '>' while honoring quoted attribute values.
            let mut cursor = pos + 1;
            let mut quote: Option<u8> = None;
            while cursor < bytes.len() {
                let b = bytes[cursor];
                match quote {
                    Some(q) if b == q => quote = None,
                    Some(_) => {}
                    None if b == b'"' || b == b'\'' => quote = Some(b),
                    None if b == b'>' => break,
                    None => {}
                }
                cursor += 1;
            }
            let end = cursor.min(bytes.len());
            let inner = &html[pos + 1..end];
            let self_closing = inner.trim_end().ends_with('/');
            let name: String = inner
                .chars()
                .take_while(|c| c.is_ascii_alphanumeric())
                .collect::<String>()
                .to_ascii_lowercase();
            if !name.is_empty() {
                tokens.push(Token::Open(name.clone()));
                if self_closing && !VOID_TAGS.contains(&name.as_str()) {
                    tokens.push(Token::Close(name));
                }
            }
            pos = (end + 1).min(bytes.len());
        } else {
            // Stray '<' in text; keep it literal.
            pos += 1;
            continue;
        }
        text_start = pos;
    }
    if text_start < bytes.len() {
        tokens.push(Token::Text(html[text_start..].to_string()));
    }
    tokens
}

fn decode_entities(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c != '&' {
            out.push(c);
            continue;
        }
        let rest = &text[i + 1..];
        let end = rest.char_indices().take(10).find(|(_, c)| *c == ';').map(|(j, _)| j);
        let Some(end) = end else {
            out.push('&');
            continue;
        };
        let name = &rest[..end];
        let decoded = match name {
            "amp" => Some('&'),
            "lt" => Some('<'),
            "gt" => Some('>'),
            "quot" => Some('"'),
            "apos" => Some('\''),
            "nbsp" => Some(' '),
            "ndash" => Some('\u{2013}'),
            "mdash" => Some('\u{2014}'),
            _ => name
                .strip_prefix("#x")
                .or_else(|| name.strip_prefix("#X"))
                .and_then(|hex| u32::from_str_radix(hex, 16).ok())
                .or_else(|| name.strip_prefix('#').and_then(|dec| dec.parse().ok()))
                .and_then(char::from_u32),
        };
        match decoded {
            Some(ch) => {
                out.push(ch);
                for _ in 0..=end {
                    chars.next();
                }
            }
            None => out.push('&'),
        }
    }
    out
}

struct ListLevel {
    ordered: bool,
    counter: usize,
}

#[derive(Default)]
struct TableState {
    rows: Vec<Vec<String>>,
    current_row: Option<Vec<String>>,
    cell: Option<String>,
    first_row_is_header: bool,
}

struct Converter {
    blocks: Vec<String>,
    inline: String,
    list_stack: Vec<ListLevel>,
    list_lines: Vec<String>,
    table: Option<TableState>,
    table_depth: usize,
    pre_buffer: String,
    pre_depth: usize,
    skip_depth: usize,
    heading_level: Option<usize>,
}

impl Converter {
    fn new() -> Self {
        Self {
            blocks: Vec::new(),
            inline: String::new(),
            list_stack: Vec::new(),
            list_lines: Vec::new(),
            table: None,
            table_depth: 0,
            pre_buffer: String::new(),
            pre_depth: 0,
            skip_depth: 0,
            heading_level: None,
        }
    }

    fn active_buffer(&mut self) -> Option<&mut String> {
        if self.skip_depth > 0 {
            return None;
        }
        if self.pre_depth > 0 {
            return Some(&mut self.pre_buffer);
        }
        if let Some(table) = self.table.as_mut() {
            return table.cell.as_mut();
        }
        if !self.list_stack.is_empty() {
            return self.list_lines.last_mut();
        }
        Some(&mut self.inline)
    }

    fn push_text(&mut self, raw: &str) {
        if self.skip_depth > 0 {
            return;
        }
        let decoded = decode_entities(raw);
        if self.pre_depth > 0 {
            self.pre_buffer.push_str(&decoded);
            return;
        }
        let Some(buffer) = self.active_buffer() else { return };
        for ch in decoded.chars() {
            if ch.is_whitespace() {
                if !buffer.ends_with([' ', '\n']) && !buffer.is_empty() {
                    buffer.push(' ');
                }
            } else {
                buffer.push(ch);
            }
        }
    }

    fn push_marker(&mut self, marker: &str) {
        if self.pre_depth > 0 {
            return;
        }
        if let Some(buffer) = self.active_buffer() {
            buffer.push_str(marker);
        }
    }

    fn push_break(&mut self) {
        if let Some(table) = self.table.as_mut() {
            if let Some(cell) = table.cell.as_mut() {
                cell.push(' ');
            }
            return;
        }
        if let Some(buffer) = self.active_buffer() {
            if !buffer.is_empty() {
                buffer.push('\n');
            }
        }
    }

    fn flush_inline(&mut self) {
        let text = normalize_block(&self.inline);
        self.inline.clear();
        if !text.is_empty() {
            let block = match self.heading_level {
                Some(level) => format!("{} {}", "#".repeat(level.clamp(1, 6)), text),
                None => text,
            };
            self.blocks.push(block);
        }
    }

    fn has_item_content(line: &str) -> bool {
        let body = line
            .trim_start()
            .trim_start_matches(|c: char| c == '-' || c.is_ascii_digit() || c == '.');
        !body.trim().is_empty()
    }

    fn open(&mut self, name: &str) {
        if STRIPPED_TAGS.contains(&name) {
            self.skip_depth += 1;
            return;
        }
        if self.skip_depth > 0 {
            return;
        }
        match name {
            "h1" | "h2" | "h3" | "h4" | "h5" | "h6" => {
                self.flush_inline();
                self.heading_level = Some(name[1..].parse().unwrap_or(1));
            }
            "p" | "div" | "section" | "article" | "blockquote" | "figure" => {
                if self.table.is_none() && self.list_stack.is_empty() {
                    self.flush_inline();
                }
            }
            "br" => self.push_break(),
            "hr" => {
                self.flush_inline();
                self.blocks.push("---".to_string());
            }
            "b" | "strong" => self.push_marker("**"),
            "i" | "em" => self.push_marker("*"),
            "code" if self.pre_depth == 0 => self.push_marker("`"),
            "pre" => {
                self.flush_inline();
                self.pre_depth += 1;
            }
            "ul" | "ol" => {
                if self.table.is_none() {
                    if self.list_stack.is_empty() {
                        self.flush_inline();
                    }
                    self.list_stack
                        .push(ListLevel { ordered: name == "ol", counter: 0 });
                }
            }
            "li" => {
                if self.table.is_none() && !self.list_stack.is_empty() {
                    let depth = self.list_stack.len();
                    let level = self.list_stack.last_mut().unwrap();
                    level.counter += 1;
                    let marker = if level.ordered {
                        format!("{}. ", level.counter)
                    } else {
                        "- ".to_string()
                    };
                    let indent = "  ".repeat(depth - 1);
                    self.list_lines.push(format!("{indent}{marker}"));
                }
            }
            "table" => {
                if self.table.is_none() {
                    self.flush_inline();
                    self.table = Some(TableState::default());
                } else {
                    self.table_depth += 1;
                }
            }
            "tr" => {
                if let Some(table) = self.table.as_mut() {
                    if self.table_depth == 0 {
                        table.current_row = Some(Vec::new());
                        table.cell = None;
                    }
                }
            }
            "td" | "th" => {
                let is_header = name == "th";
                if self.table_depth == 0 {
                    if let Some(table) = self.table.as_mut() {
                        if let Some(row) = table.current_row.as_mut() {
                            if let Some(done) = table.cell.take() {
                                row.push(done);
                            }
                        }
                        if table.rows.is_empty() && is_header {
                            table.first_row_is_header = true;
                        }
                        table.cell = Some(String::new());
                    }
                }
            }
            _ => {}
        }
    }

    fn close(&mut self, name: &str) {
        if STRIPPED_TAGS.contains(&name) {
            self.skip_depth = self.skip_depth.saturating_sub(1);
            return;
        }
        if self.skip_depth > 0 {
            return;
        }
        match name {
            "h1" | "h2" | "h3" | "h4" | "h5" | "h6" => {
                self.flush_inline();
                self.heading_level = None;
            }
            "p" | "div" | "section" | "article" | "blockquote" | "figure" => {
                if self.table.is_none() && self.list_stack.is_empty() {
                    self.flush_inline();
                }
            }
            "b" | "strong" => self.push_marker("**"),
            "i" | "em" => self.push_marker("*"),
            "code" if self.pre_depth == 0 => self.push_marker("`"),
            "pre" => {
                self.pre_depth = self.pre_depth.saturating_sub(1);
                if self.pre_depth == 0 {
                    let body = self.pre_buffer.trim_matches('\n').to_string();
                    self.pre_buffer.clear();
                    if !body.is_empty() {
                        self.blocks.push(format!("```\n{body}\n```"));
                    }
                }
            }
            "ul" | "ol" => {
                if self.table.is_none() && !self.list_stack.is_empty() {
                    self.list_stack.pop();
                    if self.list_stack.is_empty() {
                        let lines: Vec<String> = self
                            .list_lines
                            .drain(..)
                            .map(|l| l.trim_end().to_string())
                            .filter(|l| Self::has_item_content(l))
                            .collect();
                        if !lines.is_empty() {
                            self.blocks.push(lines.join("\n"));
                        }
                    }
                }
            }
            "table" => {
                if self.table_depth > 0 {
                    self.table_depth -= 1;
                } else if let Some(mut table) = self.table.take() {
                    if let Some(mut row) = table.current_row.take() {
                        if let Some(cell) = table.cell.take() {
                            row.push(cell);
                        }
                        if !row.is_empty() {
                            table.rows.push(row);
                        }
                    }
                    self.emit_table(table);
                }
            }
            "tr" => {
                if self.table_depth == 0 {
                    if let Some(table) = self.table.as_mut() {
                        if let Some(mut row) = table.current_row.take() {
                            if let Some(cell) = table.cell.take() {
                                row.push(cell);
                            }
                            if !row.is_empty() {
                                table.rows.push(row);
                            }
                        }
                    }
                }
            }
            "td" | "th" => {
                if self.table_depth == 0 {
                    if let Some(table) = self.table.as_mut() {
                        if let (Some(row), Some(cell)) =
                            (table.current_row.as_mut(), table.cell.take())
                        {
                            row.push(cell);
                        }
                    }
                }
            }
            _ => {}
        }
    }

    fn emit_table(&mut self, table: TableState) {
        if table.rows.is_empty() {
            return;
        }
        let mut lines = Vec::with_capacity(table.rows.len() + 1);
        for (i, row) in table.rows.iter().enumerate() {
            let cells: Vec<String> = row
                .iter()
                .map(|c| normalize_block(c).replace('\n', " ").replace('|', "\\|"))
                .collect();
            lines.push(format!("| {} |", cells.join(" | ")));
            if i == 0 && table.first_row_is_header {
                let seps = vec!["---"; row.len()];
                lines.push(format!("| {} |", seps.join(" | ")));
            }
        }
        self.blocks.push(lines.join("\n"));
    }

    fn finish(mut self) -> String {
        self.flush_inline();
        self.blocks.join("\n\n").trim().to_string()
    }
}

fn normalize_block(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for (i, line) in text.split('\n').enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if i > 0 && !out.is_empty() {
            out.push('\n');
        }
        out.push_str(trimmed);
    }
    out.trim().to_string()
}

/// Converts page HTML to normalized Markdown. Returns an empty string for
/// contentless input; the caller decides whether that is an error.
pub fn html_to_markdown(html: &str) -> String {
    let mut converter = Converter::new();
    for token in tokenize(html) {
        match token {
            Token::Text(text) => converter.push_text(&text),
            Token::Open(name) => converter.open(&name),
            Token::Close(name) => converter.close(&name),
        }
    }
    converter.finish()
}
