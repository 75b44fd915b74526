//! Bracketed constituency trees and Yngve depth.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseTree {
    Leaf(String),
    Node { label: String, children: Vec<ParseTree> },
}

impl ParseTree {
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            ParseTree::Leaf(w) => out.push(w),
            ParseTree::Node { children, .. } => children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    pub fn internal_nodes(&self) -> usize {
        match self {
            ParseTree::Leaf(_) => 0,
            ParseTree::Node { children, .. } => 1 + children.iter().map(Self::internal_nodes).sum::<usize>(),
        }
    }
}

impl fmt::Display for ParseTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseTree::Leaf(w) => f.write_str(w),
            ParseTree::Node { label, children } => {
                write!(f, "({label}")?;
                for c in children {
                    write!(f, " {c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

enum Token<'a> {
    Open(usize),
    Close(usize),
    Atom(&'a str),
    End,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Token<'a> {
        self.skip_ws();
        match self.src.get(self.pos) {
            None => Token::End,
            Some(b'(') => Token::Open(self.pos),
            Some(b')') => Token::Close(self.pos),
            Some(_) => {
                let start = self.pos;
                let mut end = start;
                while end < self.src.len() && !self.src[end].is_ascii_whitespace() && !matches!(self.src[end], b'(' | b')') {
                    end += 1;
                }
                // Atom boundaries are ASCII bytes, so the slice is valid UTF-8.
                Token::Atom(std::str::from_utf8(&self.src[start..end]).unwrap())
            }
        }
    }

    fn unbalanced(&self, at: usize) -> Error {
        Error::Parse(format!("unbalanced at byte {}", at + 1))
    }

    fn tree(&mut self) -> Result<ParseTree> {
        match self.peek() {
            Token::Atom(w) => {
                self.pos += w.len();
                Ok(ParseTree::Leaf(w.to_string()))
            }
            Token::Open(open) => {
                self.pos += 1;
                let mut label = String::new();
                if let Token::Atom(w) = self.peek() {
                    label = w.to_string();
                    self.pos += w.len();
                }
                let mut children = Vec::new();
                loop {
                    match self.peek() {
                        Token::Close(_) => {
                            self.pos += 1;
                            break;
                        }
                        Token::End => return Err(self.unbalanced(self.src.len())),
                        _ => children.push(self.tree()?),
                    }
                }
                if children.is_empty() {
                    return Err(Error::Parse(format!("empty node at byte {}", open + 1)));
                }
                Ok(ParseTree::Node { label, children })
            }
            Token::Close(at) => Err(self.unbalanced(at)),
            Token::End => Err(Error::Parse("empty input".into())),
        }
    }
}

/// Parses a Penn-style s-expression such as `(S (NP w1) (VP w2 w3))`. The
/// first atom after `(` is the node label; a node may omit its label
/// (`( (S ..))`). Error positions are 1-based byte offsets.
pub fn parse_bracketed(s: &str) -> Result<ParseTree> {
    let mut p = Parser {
        src: s.as_bytes(),
        pos: 0,
    };
    if matches!(p.peek(), Token::Atom(_)) {
        return Err(Error::Parse("expected '(' at byte 1".into()));
    }
    let tree = p.tree()?;
    match p.peek() {
        Token::End => Ok(tree),
        Token::Close(at) => Err(p.unbalanced(at)),
        Token::Open(at) => Err(Error::Parse(format!("trailing input at byte {}", at + 1))),
        Token::Atom(_) => Err(Error::Parse(format!("trailing input at byte {}", p.pos + 1))),
    }
}

fn leaf_depths(t: &ParseTree, acc: usize, out: &mut Vec<usize>) {
    match t {
        ParseTree::Leaf(_) => out.push(acc),
        ParseTree::Node { children, .. } => {
            let n = children.len();
            for (i, c) in children.iter().enumerate() {
                leaf_depths(c, acc + (n - 1 - i), out);
            }
        }
    }
}

/// Per-leaf Yngve depth: right siblings summed along the root-to-leaf path.
pub fn yngve_depths(t: &ParseTree) -> Vec<usize> {
    let mut out = Vec::new();
    leaf_depths(t, 0, &mut out);
    out
}

/// Mean Yngve depth over the leaves.
pub fn yngve_sentence(t: &ParseTree) -> f64 {
    let d = yngve_depths(t);
    d.iter().sum::<usize>() as f64 / d.len() as f64
}

/// `(X w1 (X w2 (X .. (X wn-1 wn))))`; a single token is a bare leaf.
pub fn right_branching_fallback<S: AsRef<str>>(tokens: &[S]) -> ParseTree {
    assert!(!tokens.is_empty(), "fallback tree needs at least one token");
    let mut rev = tokens.iter().rev().map(|t| ParseTree::Leaf(t.as_ref().to_string()));
    let mut tree = rev.next().unwrap();
    for leaf in rev {
        tree = ParseTree::Node {
            label: "X".into(),
            children: vec![leaf, tree],
        };
    }
    tree
}
