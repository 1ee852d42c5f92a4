//! Newick reader and writer with a minimal NHX annotation subset.
//!
//! Annotations are read from `[&&NHX:key=value:...]` comments and attached to
//! the node that precedes them. Branch lengths are accepted and dropped. Other
//! bracketed comments are skipped.

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NewickError {
    #[error("unbalanced parentheses at byte {0}")]
    UnbalancedParens(usize),
    #[error("leaf without a label at byte {0}")]
    EmptyLabelOnLeaf(usize),
    #[error("leaf label '{0}' occurs more than once")]
    DuplicateLeafLabel(String),
    #[error("unexpected input after ';' at byte {0}")]
    TrailingGarbage(usize),
    #[error("unexpected character '{ch}' at byte {pos}")]
    UnexpectedChar { ch: char, pos: usize },
    #[error("missing ';' terminator")]
    MissingTerminator,
    #[error("unterminated {what} starting at byte {pos}")]
    Unterminated { what: &'static str, pos: usize },
    #[error("malformed NHX annotation at byte {0}")]
    BadAnnotation(usize),
    #[error("empty input")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawNode {
    pub label: String,
    pub children: Vec<usize>,
    /// NHX key/value pairs in input order.
    pub annotations: Vec<(String, String)>,
}

impl RawNode {
    pub fn annotation(&self, key: &str) -> Option<&str> {
        self.annotations
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Arena-backed tree as read from a Newick statement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTree {
    pub nodes: Vec<RawNode>,
    pub root: usize,
}

impl RawTree {
    pub fn leaf(label: impl Into<String>) -> Self {
        RawTree {
            nodes: vec![RawNode {
                label: label.into(),
                ..Default::default()
            }],
            root: 0,
        }
    }

    pub fn push(&mut self, node: RawNode) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }

    /// Node indices in pre-order (parents before children, children in order).
    pub fn preorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            out.push(v);
            stack.extend(self.nodes[v].children.iter().rev());
        }
        out
    }

    pub fn leaves(&self) -> Vec<usize> {
        self.preorder()
            .into_iter()
            .filter(|&v| self.nodes[v].is_leaf())
            .collect()
    }

    /// Same shape, labels and annotations, ignoring arena layout.
    pub fn structurally_equal(&self, other: &RawTree) -> bool {
        fn eq(a: &RawTree, x: usize, b: &RawTree, y: usize) -> bool {
            let (nx, ny) = (&a.nodes[x], &b.nodes[y]);
            nx.label == ny.label
                && nx.annotations == ny.annotations
                && nx.children.len() == ny.children.len()
                && nx
                    .children
                    .iter()
                    .zip(&ny.children)
                    .all(|(&cx, &cy)| eq(a, cx, b, cy))
        }
        eq(self, self.root, other, other.root)
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            src,
            bytes: src.as_bytes(),
            pos: 0,
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b) if b.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn unexpected(&self) -> NewickError {
        let ch = self.src[self.pos..].chars().next().unwrap_or('\0');
        NewickError::UnexpectedChar { ch, pos: self.pos }
    }

    fn statement(&mut self) -> Result<RawTree, NewickError> {
        let mut tree = RawTree {
            nodes: Vec::new(),
            root: 0,
        };
        self.skip_ws();
        let root = self.subtree(&mut tree, 0)?;
        tree.root = root;
        self.skip_ws();
        match self.peek() {
            Some(b';') => {
                self.pos += 1;
            }
            Some(b')') => return Err(NewickError::UnbalancedParens(self.pos)),
            Some(_) => return Err(self.unexpected()),
            None => return Err(NewickError::MissingTerminator),
        }
        let mut seen = HashSet::new();
        for v in tree.leaves() {
            if !seen.insert(tree.nodes[v].label.as_str()) {
                return Err(NewickError::DuplicateLeafLabel(tree.nodes[v].label.clone()));
            }
        }
        Ok(tree)
    }

    fn subtree(&mut self, tree: &mut RawTree, depth: usize) -> Result<usize, NewickError> {
        self.skip_ws();
        let start = self.pos;
        let mut node = RawNode::default();
        if self.peek() == Some(b'(') {
            let open = self.pos;
            self.pos += 1;
            loop {
                let child = stacker::maybe_grow(64 * 1024, 1024 * 1024, || {
                    self.subtree(tree, depth + 1)
                })?;
                node.children.push(child);
                self.skip_ws();
                match self.peek() {
                    Some(b',') => self.pos += 1,
                    Some(b')') => {
                        self.pos += 1;
                        break;
                    }
                    None | Some(b';') => return Err(NewickError::UnbalancedParens(open)),
                    Some(_) => return Err(self.unexpected()),
                }
            }
        }
        self.skip_ws();
        node.label = self.label()?;
        self.trailer(&mut node)?;
        if node.children.is_empty() && node.label.is_empty() {
            return Err(NewickError::EmptyLabelOnLeaf(start));
        }
        if depth == 0 && self.peek() == Some(b')') {
            return Err(NewickError::UnbalancedParens(self.pos));
        }
        Ok(tree.push(node))
    }

    fn label(&mut self) -> Result<String, NewickError> {
        if self.peek() == Some(b'\'') {
            let open = self.pos;
            self.pos += 1;
            let mut out = String::new();
            loop {
                let rest = &self.src[self.pos..];
                let Some(i) = rest.find('\'') else {
                    return Err(NewickError::Unterminated {
                        what: "quoted label",
                        pos: open,
                    });
                };
                out.push_str(&rest[..i]);
                self.pos += i + 1;
                if self.peek() == Some(b'\'') {
                    out.push('\'');
                    self.pos += 1;
                } else {
                    return Ok(out);
                }
            }
        }
        let start = self.pos;
        while let Some(b) = self.peek() {
            if is_delimiter(b) || b.is_ascii_whitespace() {
                break;
            }
            self.pos += 1;
        }
        Ok(self.src[start..self.pos].to_string())
    }

    /// Branch length and bracketed comments, in either order.
    fn trailer(&mut self, node: &mut RawNode) -> Result<(), NewickError> {
        loop {
            self.skip_ws();
            match self.peek() {
                Some(b':') => {
                    self.pos += 1;
                    self.skip_ws();
                    let start = self.pos;
                    while matches!(self.peek(), Some(b) if !is_delimiter(b) && !b.is_ascii_whitespace())
                    {
                        self.pos += 1;
                    }
                    let len = &self.src[start..self.pos];
                    if len.parse::<f64>().is_err() {
                        return Err(NewickError::UnexpectedChar {
                            ch: len.chars().next().unwrap_or(':'),
                            pos: start,
                        });
                    }
                }
                Some(b'[') => self.comment(node)?,
                _ => return Ok(()),
            }
        }
    }

    fn comment(&mut self, node: &mut RawNode) -> Result<(), NewickError> {
        let open = self.pos;
        let rest = &self.src[self.pos..];
        let Some(close) = rest.find(']') else {
            return Err(NewickError::Unterminated {
                what: "comment",
                pos: open,
            });
        };
        let body = &rest[1..close];
        self.pos += close + 1;
        if let Some(fields) = body.strip_prefix("&&NHX") {
            for field in fields.split(':').filter(|f| !f.is_empty()) {
                let (k, v) = field
                    .split_once('=')
                    .ok_or(NewickError::BadAnnotation(open))?;
                if k.is_empty() {
                    return Err(NewickError::BadAnnotation(open));
                }
                match node.annotations.iter_mut().find(|(key, _)| key == k) {
                    Some(slot) => slot.1 = v.to_string(),
                    None => node.annotations.push((k.to_string(), v.to_string())),
                }
            }
        }
        Ok(())
    }
}

fn is_delimiter(b: u8) -> bool {
    matches!(b, b'(' | b')' | b',' | b':' | b';' | b'[' | b']' | b'\'')
}

/// Parses exactly one Newick statement.
pub fn parse_newick(input: &str) -> Result<RawTree, NewickError> {
    let mut p = Parser::new(input);
    p.skip_ws();
    if p.peek().is_none() {
        return Err(NewickError::Empty);
    }
    let tree = p.statement()?;
    p.skip_ws();
    if p.peek().is_some() {
        return Err(NewickError::TrailingGarbage(p.pos));
    }
    Ok(tree)
}

/// Parses a `;`-separated sequence of statements.
pub fn parse_newick_many(input: &str) -> Result<Vec<RawTree>, NewickError> {
    let mut p = Parser::new(input);
    let mut out = Vec::new();
    loop {
        p.skip_ws();
        if p.peek().is_none() {
            break;
        }
        out.push(p.statement()?);
    }
    if out.is_empty() {
        return Err(NewickError::Empty);
    }
    Ok(out)
}

fn needs_quotes(label: &str) -> bool {
    label
        .bytes()
        .any(|b| is_delimiter(b) || b.is_ascii_whitespace())
}

fn write_label(out: &mut String, label: &str) {
    if needs_quotes(label) {
        out.push('\'');
        out.push_str(&label.replace('\'', "''"));
        out.push('\'');
    } else {
        out.push_str(label);
    }
}

/// Canonical single-line form: no whitespace, no branch lengths.
pub fn serialize_newick(tree: &RawTree) -> String {
    fn rec(tree: &RawTree, v: usize, out: &mut String) {
        let node = &tree.nodes[v];
        if !node.children.is_empty() {
            out.push('(');
            for (i, &c) in node.children.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                stacker::maybe_grow(64 * 1024, 1024 * 1024, || rec(tree, c, out));
            }
            out.push(')');
        }
        write_label(out, &node.label);
        if !node.annotations.is_empty() {
            out.push_str("[&&NHX");
            for (k, v) in &node.annotations {
                let _ = write!(out, ":{k}={v}");
            }
            out.push(']');
        }
    }
    let mut out = String::new();
    rec(tree, tree.root, &mut out);
    out.push(';');
    out
}
