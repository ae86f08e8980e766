//! Reader and writer for the indentation-based document format used by
//! intent documents, episode cases and suite manifests.
//!
//! Supported: block mappings, block sequences, single-line flow
//! collections (`[a, b]`, `{k: v}`), plain/single-quoted/double-quoted
//! scalars, `#` comments. Rejected: anchors, aliases, tags, block
//! scalars, directives and document markers, tabs in indentation,
//! duplicate keys.

use std::fmt;

use crate::number::Number;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{pos}: {message}")]
pub struct DocError {
    pub pos: Pos,
    pub message: String,
}

impl DocError {
    fn new(pos: Pos, message: impl Into<String>) -> DocError {
        DocError { pos, message: message.into() }
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub value: Value,
    pub pos: Pos,
}

/// Positions are ignored: two nodes are equal when their trees are.
impl PartialEq for Node {
    fn eq(&self, other: &Node) -> bool {
        self.value == other.value
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Bool(bool),
    Num(Number),
    Str(String),
    Seq(Vec<Node>),
    Map(Vec<Entry>),
}

#[derive(Debug, Clone)]
pub struct Entry {
    pub key: String,
    pub key_pos: Pos,
    pub value: Node,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Entry) -> bool {
        self.key == other.key && self.value == other.value
    }
}

impl Node {
    pub fn new(value: Value) -> Node {
        Node { value, pos: Pos::default() }
    }

    pub fn get(&self, key: &str) -> Option<&Node> {
        match &self.value {
            Value::Map(entries) => entries.iter().find(|e| e.key == key).map(|e| &e.value),
            _ => None,
        }
    }

    pub fn entries(&self) -> &[Entry] {
        match &self.value {
            Value::Map(entries) => entries,
            _ => &[],
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match &self.value {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self.value, Value::Null)
    }

    pub fn kind(&self) -> &'static str {
        match self.value {
            Value::Null => "empty",
            Value::Bool(_) => "boolean",
            Value::Num(_) => "number",
            Value::Str(_) => "string",
            Value::Seq(_) => "sequence",
            Value::Map(_) => "mapping",
        }
    }

    /// Converts to JSON so typed records can be read with serde.
    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::Value as J;
        match &self.value {
            Value::Null => J::Null,
            Value::Bool(b) => J::Bool(*b),
            Value::Num(n) => {
                if n.is_integer() {
                    if let Ok(i) = i64::try_from(n.ratio().to_integer()) {
                        return J::from(i);
                    }
                }
                J::from(n.to_f64())
            }
            Value::Str(s) => J::String(s.clone()),
            Value::Seq(items) => J::Array(items.iter().map(Node::to_json).collect()),
            Value::Map(entries) => J::Object(entries.iter().map(|e| (e.key.clone(), e.value.to_json())).collect()),
        }
    }
}

struct Line {
    no: usize,
    indent: usize,
    text: String,
}

/// Parses a complete document. An input with no content yields `Null`.
pub fn parse(text: &str) -> Result<Node, DocError> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let stripped = strip_comment(raw);
        let trimmed_end = stripped.trim_end();
        if trimmed_end.trim().is_empty() {
            continue;
        }
        let indent = trimmed_end.len() - trimmed_end.trim_start_matches([' ', '\t']).len();
        if trimmed_end[..indent].contains('\t') {
            return Err(DocError::new(Pos { line: no, col: 1 }, "tab in indentation"));
        }
        let body = &trimmed_end[indent..];
        if body.starts_with("---") || body.starts_with("...") || body.starts_with('%') {
            return Err(DocError::new(
                Pos { line: no, col: indent + 1 },
                "document markers and directives are not supported",
            ));
        }
        lines.push(Line { no, indent, text: body.to_string() });
    }
    if lines.is_empty() {
        return Ok(Node { value: Value::Null, pos: Pos { line: 1, col: 1 } });
    }
    let mut p = BlockParser { lines, i: 0 };
    let indent = p.lines[0].indent;
    let node = p.block(indent)?;
    if p.i < p.lines.len() {
        let l = &p.lines[p.i];
        return Err(DocError::new(Pos { line: l.no, col: l.indent + 1 }, "unexpected indentation"));
    }
    Ok(node)
}

fn strip_comment(line: &str) -> &str {
    let mut in_single = false;
    let mut in_double = false;
    let mut prev_space = true;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        if in_double {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_double = false;
            }
        } else if in_single {
            if c == '\'' {
                in_single = false;
            }
        } else if c == '#' && prev_space {
            return &line[..i];
        } else if c == '"' {
            in_double = true;
        } else if c == '\'' {
            in_single = true;
        }
        prev_space = c == ' ' || c == '\t';
    }
    line
}

struct BlockParser {
    lines: Vec<Line>,
    i: usize,
}

fn is_seq_item(text: &str) -> bool {
    text == "-" || text.starts_with("- ")
}

impl BlockParser {
    fn pos(&self, i: usize, offset: usize) -> Pos {
        let l = &self.lines[i];
        Pos { line: l.no, col: l.indent + offset + 1 }
    }

    fn block(&mut self, indent: usize) -> Result<Node, DocError> {
        if is_seq_item(&self.lines[self.i].text) {
            self.sequence(indent)
        } else {
            self.mapping(indent)
        }
    }

    fn sequence(&mut self, indent: usize) -> Result<Node, DocError> {
        let start = self.pos(self.i, 0);
        let mut items = Vec::new();
        while self.i < self.lines.len() {
            let line = &self.lines[self.i];
            if line.indent < indent {
                break;
            }
            if line.indent > indent {
                return Err(DocError::new(self.pos(self.i, 0), "unexpected indentation"));
            }
            if !is_seq_item(&line.text) {
                break;
            }
            let rest = line.text[1..].trim_start().to_string();
            if rest.is_empty() {
                let item_pos = self.pos(self.i, 0);
                self.i += 1;
                items.push(self.nested_or_null(indent, item_pos)?);
                continue;
            }
            let offset = line.text.len() - rest.len();
            if is_seq_item(&rest) || find_mapping_colon(&rest).is_some() {
                // Re-enter the same line as a nested block starting at the
                // item's content column.
                let l = &mut self.lines[self.i];
                l.indent += offset;
                l.text = rest;
                let inner = l.indent;
                items.push(self.block(inner)?);
            } else {
                let pos = self.pos(self.i, offset);
                items.push(inline_value(&rest, pos)?);
                self.i += 1;
            }
        }
        Ok(Node { value: Value::Seq(items), pos: start })
    }

    /// Value of a `key:` or `-` with nothing after it: an indented block,
    /// a same-indent sequence (map values only), or empty.
    fn nested_or_null(&mut self, indent: usize, pos: Pos) -> Result<Node, DocError> {
        match self.lines.get(self.i) {
            Some(next) if next.indent > indent => {
                let inner = next.indent;
                self.block(inner)
            }
            _ => Ok(Node { value: Value::Null, pos }),
        }
    }

    fn mapping(&mut self, indent: usize) -> Result<Node, DocError> {
        let start = self.pos(self.i, 0);
        let mut entries: Vec<Entry> = Vec::new();
        while self.i < self.lines.len() {
            let line = &self.lines[self.i];
            if line.indent < indent {
                break;
            }
            if line.indent > indent {
                return Err(DocError::new(self.pos(self.i, 0), "unexpected indentation"));
            }
            if is_seq_item(&line.text) {
                return Err(DocError::new(self.pos(self.i, 0), "sequence item where a mapping key was expected"));
            }
            let text = line.text.clone();
            let key_pos = self.pos(self.i, 0);
            let colon = find_mapping_colon(&text).ok_or_else(|| DocError::new(key_pos, "expected `key: value`"))?;
            let key = parse_key(&text[..colon], key_pos)?;
            if entries.iter().any(|e| e.key == key) {
                return Err(DocError::new(key_pos, format!("duplicate key `{key}`")));
            }
            let rest = text[colon + 1..].trim_start();
            let value = if rest.is_empty() {
                self.i += 1;
                match self.lines.get(self.i) {
                    Some(next) if next.indent == indent && is_seq_item(&next.text) => self.sequence(indent)?,
                    _ => self.nested_or_null(indent, key_pos)?,
                }
            } else {
                let offset = text.len() - rest.len();
                let pos = self.pos(self.i, offset);
                self.i += 1;
                inline_value(rest, pos)?
            };
            entries.push(Entry { key, key_pos, value });
        }
        Ok(Node { value: Value::Map(entries), pos: start })
    }
}

/// Byte index of the `:` separating a block-mapping key from its value,
/// skipping quoted keys and colons inside flow or quoted values.
fn find_mapping_colon(text: &str) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut i = 0;
    if let Some(q @ (b'"' | b'\'')) = bytes.first().copied() {
        i = 1;
        while i < bytes.len() {
            if bytes[i] == b'\\' && q == b'"' {
                i += 2;
                continue;
            }
            if bytes[i] == q {
                break;
            }
            i += 1;
        }
        i += 1;
    } else if matches!(bytes.first(), Some(b'[' | b'{')) {
        return None;
    }
    while i < bytes.len() {
        if bytes[i] == b':' && (i + 1 == bytes.len() || bytes[i + 1] == b' ') {
            return Some(i);
        }
        i += 1;
    }
    None
}

fn parse_key(raw: &str, pos: Pos) -> Result<String, DocError> {
    let raw = raw.trim_end();
    if raw.is_empty() {
        return Err(DocError::new(pos, "empty mapping key"));
    }
    match raw.as_bytes()[0] {
        b'"' | b'\'' => {
            let (s, used) = quoted(raw, pos)?;
            if used != raw.len() {
                return Err(DocError::new(pos, "unexpected text after quoted key"));
            }
            Ok(s)
        }
        b'&' | b'*' | b'!' | b'?' | b'[' | b'{' => Err(DocError::new(pos, format!("unsupported key syntax `{raw}`"))),
        _ => Ok(raw.to_string()),
    }
}

fn inline_value(text: &str, pos: Pos) -> Result<Node, DocError> {
    let mut p = FlowParser { s: text.as_bytes(), text, i: 0, base: pos };
    let node = p.value(false)?;
    p.skip_ws();
    if p.i != text.len() {
        return Err(DocError::new(p.pos(), "unexpected trailing characters"));
    }
    Ok(node)
}

/// Parses a quoted scalar at the start of `s`; returns the value and the
/// number of bytes consumed.
fn quoted(s: &str, pos: Pos) -> Result<(String, usize), DocError> {
    let q = s.as_bytes()[0];
    let mut out = String::new();
    let mut chars = s.char_indices().skip(1);
    while let Some((i, c)) = chars.next() {
        if q == b'\'' && c == '\'' {
            if s[i + 1..].starts_with('\'') {
                out.push('\'');
                chars.next();
                continue;
            }
            return Ok((out, i + 1));
        }
        if q == b'"' && c == '"' {
            return Ok((out, i + 1));
        }
        if q == b'"' && c == '\\' {
            let (_, e) = chars.next().ok_or_else(|| DocError::new(pos, "unterminated escape"))?;
            out.push(match e {
                'n' => '\n',
                't' => '\t',
                'r' => '\r',
                '0' => '\0',
                '\\' => '\\',
                '"' => '"',
                '/' => '/',
                other => return Err(DocError::new(pos, format!("unsupported escape `\\{other}`"))),
            });
            continue;
        }
        out.push(c);
    }
    Err(DocError::new(pos, "unterminated quoted string"))
}

struct FlowParser<'a> {
    s: &'a [u8],
    text: &'a str,
    i: usize,
    base: Pos,
}

impl FlowParser<'_> {
    fn pos(&self) -> Pos {
        Pos { line: self.base.line, col: self.base.col + self.i }
    }

    fn skip_ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i] == b' ' {
            self.i += 1;
        }
    }

    fn value(&mut self, in_flow: bool) -> Result<Node, DocError> {
        self.skip_ws();
        let pos = self.pos();
        match self.s.get(self.i) {
            None => Ok(Node { value: Value::Null, pos }),
            Some(b'[') => self.flow_seq(),
            Some(b'{') => self.flow_map(),
            Some(b'"' | b'\'') => {
                let (s, used) = quoted(&self.text[self.i..], pos)?;
                self.i += used;
                Ok(Node { value: Value::Str(s), pos })
            }
            Some(b'&') => Err(DocError::new(pos, "anchors are not supported")),
            Some(b'*') => Err(DocError::new(pos, "aliases are not supported")),
            Some(b'!') => Err(DocError::new(pos, "tags are not supported")),
            Some(b'|' | b'>') => Err(DocError::new(pos, "block scalars are not supported")),
            Some(_) => {
                let start = self.i;
                while self.i < self.s.len() {
                    let c = self.s[self.i];
                    if in_flow && matches!(c, b',' | b']' | b'}') {
                        break;
                    }
                    if c == b':' && (self.i + 1 == self.s.len() || self.s[self.i + 1] == b' ') {
                        if in_flow {
                            break;
                        }
                        return Err(DocError::new(self.pos(), "nested mapping on a single line is not supported"));
                    }
                    self.i += 1;
                }
                let raw = self.text[start..self.i].trim_end();
                Ok(Node { value: plain_scalar(raw), pos })
            }
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), DocError> {
        self.skip_ws();
        if self.s.get(self.i) == Some(&c) {
            self.i += 1;
            Ok(())
        } else {
            Err(DocError::new(self.pos(), format!("expected `{}`", c as char)))
        }
    }

    fn flow_seq(&mut self) -> Result<Node, DocError> {
        let pos = self.pos();
        self.i += 1;
        let mut items = Vec::new();
        self.skip_ws();
        if self.s.get(self.i) == Some(&b']') {
            self.i += 1;
            return Ok(Node { value: Value::Seq(items), pos });
        }
        loop {
            items.push(self.value(true)?);
            self.skip_ws();
            match self.s.get(self.i) {
                Some(b',') => self.i += 1,
                Some(b']') => {
                    self.i += 1;
                    break;
                }
                _ => return Err(DocError::new(self.pos(), "unterminated flow sequence")),
            }
        }
        Ok(Node { value: Value::Seq(items), pos })
    }

    fn flow_map(&mut self) -> Result<Node, DocError> {
        let pos = self.pos();
        self.i += 1;
        let mut entries: Vec<Entry> = Vec::new();
        self.skip_ws();
        if self.s.get(self.i) == Some(&b'}') {
            self.i += 1;
            return Ok(Node { value: Value::Map(entries), pos });
        }
        loop {
            self.skip_ws();
            let key_pos = self.pos();
            let key_node = self.value(true)?;
            let key = match key_node.value {
                Value::Str(s) => s,
                Value::Num(n) => n.to_string(),
                Value::Bool(b) => b.to_string(),
                _ => return Err(DocError::new(key_pos, "flow mapping key must be a scalar")),
            };
            if entries.iter().any(|e| e.key == key) {
                return Err(DocError::new(key_pos, format!("duplicate key `{key}`")));
            }
            self.expect(b':')?;
            let value = self.value(true)?;
            entries.push(Entry { key, key_pos, value });
            self.skip_ws();
            match self.s.get(self.i) {
                Some(b',') => self.i += 1,
                Some(b'}') => {
                    self.i += 1;
                    break;
                }
                _ => return Err(DocError::new(self.pos(), "unterminated flow mapping")),
            }
        }
        Ok(Node { value: Value::Map(entries), pos })
    }
}

fn looks_numeric(s: &str) -> bool {
    let body = s.strip_prefix(['-', '+']).unwrap_or(s);
    let (mant, exp) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], Some(&body[i + 1..])),
        None => (body, None),
    };
    let (int, frac) = mant.split_once('.').unwrap_or((mant, ""));
    let digits = |x: &str| x.bytes().all(|b| b.is_ascii_digit());
    if int.is_empty() || !digits(int) || !digits(frac) || (mant.contains('.') && frac.is_empty()) {
        return false;
    }
    match exp {
        None => true,
        Some(e) => {
            let e = e.strip_prefix(['-', '+']).unwrap_or(e);
            !e.is_empty() && digits(e)
        }
    }
}

fn plain_scalar(raw: &str) -> Value {
    match raw {
        "" | "null" | "~" => Value::Null,
        "true" => Value::Bool(true),
        "false" => Value::Bool(false),
        _ if looks_numeric(raw) => match raw.parse::<Number>() {
            Ok(n) => Value::Num(n),
            Err(_) => Value::Str(raw.to_string()),
        },
        _ => Value::Str(raw.to_string()),
    }
}

fn needs_quotes(s: &str) -> bool {
    if s.is_empty() || s != s.trim() {
        return true;
    }
    if !matches!(plain_scalar(s), Value::Str(_)) {
        return true;
    }
    let first = s.as_bytes()[0];
    if matches!(
        first,
        b'-' | b'['
            | b']'
            | b'{'
            | b'}'
            | b'&'
            | b'*'
            | b'!'
            | b'|'
            | b'>'
            | b'\''
            | b'"'
            | b'%'
            | b'@'
            | b'`'
            | b'#'
            | b'?'
            | b','
    ) {
        return true;
    }
    s.contains(": ")
        || s.ends_with(':')
        || s.contains(" #")
        || s.contains([',', '[', ']', '{', '}', '\n', '\t', '\r', '"'])
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            '\0' => out.push_str("\\0"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn scalar_text(v: &Value) -> Option<String> {
    Some(match v {
        Value::Null => String::new(),
        Value::Bool(b) => b.to_string(),
        Value::Num(n) if n.is_integer() || !n.to_string().contains('/') => n.to_string(),
        // Non-terminating rationals have no plain literal; keep them exact.
        Value::Num(n) => quote(&n.to_string()),
        Value::Str(s) if needs_quotes(s) => quote(s),
        Value::Str(s) => s.clone(),
        Value::Seq(items) if items.is_empty() => "[]".into(),
        Value::Map(entries) if entries.is_empty() => "{}".into(),
        _ => return None,
    })
}

fn key_text(k: &str) -> String {
    if needs_quotes(k) {
        quote(k)
    } else {
        k.to_string()
    }
}

/// Serializes a node back to the document format.
pub fn to_string(node: &Node) -> String {
    let mut out = String::new();
    match scalar_text(&node.value) {
        Some(s) => {
            out.push_str(&s);
            out.push('\n');
        }
        None => write_block(node, 0, &mut out),
    }
    out
}

fn write_block(node: &Node, indent: usize, out: &mut String) {
    let pad = " ".repeat(indent);
    match &node.value {
        Value::Map(entries) => {
            for e in entries {
                out.push_str(&pad);
                write_entry(e, indent, out);
            }
        }
        Value::Seq(items) => {
            for item in items {
                out.push_str(&pad);
                match scalar_text(&item.value) {
                    Some(s) if s.is_empty() => out.push_str("-\n"),
                    Some(s) => {
                        out.push_str("- ");
                        out.push_str(&s);
                        out.push('\n');
                    }
                    None => match &item.value {
                        Value::Map(entries) => {
                            out.push_str("- ");
                            write_entry(&entries[0], indent + 2, out);
                            for e in &entries[1..] {
                                out.push_str(&" ".repeat(indent + 2));
                                write_entry(e, indent + 2, out);
                            }
                        }
                        _ => {
                            out.push_str("-\n");
                            write_block(item, indent + 2, out);
                        }
                    },
                }
            }
        }
        _ => {}
    }
}

fn write_entry(e: &Entry, indent: usize, out: &mut String) {
    out.push_str(&key_text(&e.key));
    out.push(':');
    match scalar_text(&e.value.value) {
        Some(s) if s.is_empty() => out.push('\n'),
        Some(s) => {
            out.push(' ');
            out.push_str(&s);
            out.push('\n');
        }
        None => {
            out.push('\n');
            write_block(&e.value, indent + 2, out);
        }
    }
}
