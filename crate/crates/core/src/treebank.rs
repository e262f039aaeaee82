//! Penn-Treebank-style constituency trees.
//!
//! Trees are read from and written to the single-line bracketed notation
//! `(S (NP (DT A) (NN man)) (VP (VBZ rides) (NP (DT a) (NN bike))) (. .))`.
//! Functional annotations on nonterminals (`NP-SBJ`, `NP=2`) are stripped to
//! the base label while parsing; the stripped label is the canonical one.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("empty input")]
    EmptyInput,
    #[error("unbalanced brackets at byte {0}")]
    UnbalancedBrackets(usize),
    #[error("node with no children at byte {0}")]
    EmptyNode(usize),
    #[error("preterminal at byte {0} must have exactly one token and no subtrees")]
    MalformedPreterminal(usize),
    #[error("unexpected token outside of a node at byte {0}")]
    StrayToken(usize),
    #[error("trailing input after the root node at byte {0}")]
    TrailingInput(usize),
}

/// A terminal of the tree together with its part-of-speech tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    surface: String,
    pos: String,
    index: usize,
}

impl Token {
    /// Panics if `surface` is empty or contains whitespace, or if `pos` is empty.
    pub fn new(surface: impl Into<String>, pos: impl Into<String>, index: usize) -> Self {
        let surface = surface.into();
        let pos = pos.into();
        assert!(
            !surface.is_empty() && !surface.chars().any(char::is_whitespace),
            "token surface must be non-empty and whitespace-free: {surface:?}"
        );
        assert!(!pos.is_empty(), "token pos must be non-empty");
        Token { surface, pos, index }
    }

    pub fn surface(&self) -> &str {
        &self.surface
    }

    pub fn pos(&self) -> &str {
        &self.pos
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub(crate) fn with_form(&self, surface: String, pos: String) -> Token {
        Token::new(surface, pos, self.index)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.surface, self.pos)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Child {
    Tree(ConstituencyTree),
    Token(Token),
}

/// A labeled ordered tree. Preterminals carry exactly one [`Token`] child.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstituencyTree {
    label: String,
    children: Vec<Child>,
}

/// Child indices from the root down to a node. The empty path is the root.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodePath(pub Vec<usize>);

impl NodePath {
    pub fn root() -> Self {
        NodePath(Vec::new())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn child(&self, i: usize) -> NodePath {
        let mut v = self.0.clone();
        v.push(i);
        NodePath(v)
    }

    pub fn parent(&self) -> Option<NodePath> {
        let (_, rest) = self.0.split_last()?;
        Some(NodePath(rest.to_vec()))
    }
}

impl ConstituencyTree {
    /// Builds an internal node. Token indices are reassigned left to right.
    pub fn new(label: impl Into<String>, children: Vec<Child>) -> Self {
        assert!(!children.is_empty(), "constituency nodes need children");
        let mut tree = ConstituencyTree { label: label.into(), children };
        tree.reindex();
        tree
    }

    /// Builds a preterminal `(pos surface)`.
    pub fn preterminal(pos: impl Into<String>, surface: impl Into<String>) -> Self {
        let pos = pos.into();
        let token = Token::new(surface, pos.clone(), 0);
        ConstituencyTree { label: pos, children: vec![Child::Token(token)] }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn children(&self) -> &[Child] {
        &self.children
    }

    pub(crate) fn children_mut(&mut self) -> &mut Vec<Child> {
        &mut self.children
    }

    /// The token under this node when it is a preterminal.
    pub fn token(&self) -> Option<&Token> {
        match self.children.as_slice() {
            [Child::Token(t)] => Some(t),
            _ => None,
        }
    }

    pub fn is_preterminal(&self) -> bool {
        self.token().is_some()
    }

    /// Subtree children only, paired with their child index.
    pub fn subtrees(&self) -> impl Iterator<Item = (usize, &ConstituencyTree)> {
        self.children.iter().enumerate().filter_map(|(i, c)| match c {
            Child::Tree(t) => Some((i, t)),
            Child::Token(_) => None,
        })
    }

    /// Left-to-right token sequence.
    pub fn tokens(&self) -> Vec<&Token> {
        let mut out = Vec::new();
        self.collect_tokens(&mut out);
        out
    }

    fn collect_tokens<'a>(&'a self, out: &mut Vec<&'a Token>) {
        for child in &self.children {
            match child {
                Child::Tree(t) => t.collect_tokens(out),
                Child::Token(tok) => out.push(tok),
            }
        }
    }

    /// Tokens joined with single spaces.
    pub fn sentence(&self) -> String {
        let toks = self.tokens();
        let mut s = String::new();
        for (i, t) in toks.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            s.push_str(t.surface());
        }
        s
    }

    pub fn len(&self) -> usize {
        self.tokens().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Restores contiguous 0..n-1 token indices after a reordering.
    pub(crate) fn reindex(&mut self) {
        fn walk(node: &mut ConstituencyTree, next: &mut usize) {
            for child in &mut node.children {
                match child {
                    Child::Tree(t) => walk(t, next),
                    Child::Token(tok) => {
                        tok.index = *next;
                        *next += 1;
                    }
                }
            }
        }
        let mut next = 0;
        walk(self, &mut next);
    }

    pub fn get(&self, path: &NodePath) -> Option<&ConstituencyTree> {
        let mut node = self;
        for &i in path.indices() {
            match node.children.get(i)? {
                Child::Tree(t) => node = t,
                Child::Token(_) => return None,
            }
        }
        Some(node)
    }

    pub(crate) fn get_mut(&mut self, path: &NodePath) -> Option<&mut ConstituencyTree> {
        let mut node = self;
        for &i in path.indices() {
            match node.children.get_mut(i)? {
                Child::Tree(t) => node = t,
                Child::Token(_) => return None,
            }
        }
        Some(node)
    }

    pub(crate) fn token_mut(&mut self) -> Option<&mut Token> {
        match self.children.as_mut_slice() {
            [Child::Token(t)] => Some(t),
            _ => None,
        }
    }
}

impl fmt::Display for ConstituencyTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&serialize_bracketed(self))
    }
}

/// Drops functional annotations: `NP-SBJ-1` -> `NP`, `NP=2` -> `NP`.
/// Labels that start with `-` (`-NONE-`, `-LRB-`) are kept verbatim.
pub fn base_label(label: &str) -> &str {
    if label.len() > 1 && label.starts_with('-') && label.ends_with('-') {
        return label;
    }
    match label.char_indices().skip(1).find(|&(_, c)| c == '-' || c == '=') {
        Some((i, _)) => &label[..i],
        None => label,
    }
}

#[derive(Debug, PartialEq)]
enum Lexeme<'a> {
    Open(usize),
    Close(usize),
    Atom(usize, &'a str),
}

fn lex(text: &str) -> Vec<Lexeme<'_>> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c == '(' || c == ')' || c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Lexeme::Atom(s, &text[s..i]));
            }
            match c {
                '(' => out.push(Lexeme::Open(i)),
                ')' => out.push(Lexeme::Close(i)),
                _ => {}
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Lexeme::Atom(s, &text[s..]));
    }
    out
}

pub fn parse_bracketed(text: &str) -> Result<ConstituencyTree, TreeError> {
    let lexemes = lex(text);
    if lexemes.is_empty() {
        return Err(TreeError::EmptyInput);
    }
    let mut pos = 0;
    let tree = parse_node(&lexemes, &mut pos, text.len())?;
    if let Some(extra) = lexemes.get(pos) {
        return Err(match *extra {
            Lexeme::Close(at) => TreeError::UnbalancedBrackets(at),
            Lexeme::Open(at) | Lexeme::Atom(at, _) => TreeError::TrailingInput(at),
        });
    }
    let mut tree = tree;
    tree.reindex();
    Ok(tree)
}

fn parse_node(
    lexemes: &[Lexeme<'_>],
    pos: &mut usize,
    end: usize,
) -> Result<ConstituencyTree, TreeError> {
    let open_at = match lexemes.get(*pos) {
        Some(Lexeme::Open(at)) => *at,
        Some(Lexeme::Close(at)) => return Err(TreeError::UnbalancedBrackets(*at)),
        Some(Lexeme::Atom(at, _)) => return Err(TreeError::StrayToken(*at)),
        None => return Err(TreeError::UnbalancedBrackets(end)),
    };
    *pos += 1;
    // A node opened directly by another bracket has an empty label, as in `( (S ...))`.
    let label = match lexemes.get(*pos) {
        Some(Lexeme::Atom(_, a)) => {
            *pos += 1;
            base_label(a).to_string()
        }
        _ => String::new(),
    };
    let mut subtrees = Vec::new();
    let mut atoms = Vec::new();
    loop {
        match lexemes.get(*pos) {
            None => return Err(TreeError::UnbalancedBrackets(end)),
            Some(Lexeme::Close(_)) => {
                *pos += 1;
                break;
            }
            Some(Lexeme::Open(_)) => subtrees.push(parse_node(lexemes, pos, end)?),
            Some(Lexeme::Atom(_, a)) => {
                atoms.push(*a);
                *pos += 1;
            }
        }
    }
    match (subtrees.is_empty(), atoms.len()) {
        (true, 0) => Err(TreeError::EmptyNode(open_at)),
        (true, 1) if !label.is_empty() => Ok(ConstituencyTree {
            children: vec![Child::Token(Token::new(atoms[0], label.clone(), 0))],
            label,
        }),
        (false, 0) => Ok(ConstituencyTree {
            label,
            children: subtrees.into_iter().map(Child::Tree).collect(),
        }),
        _ => Err(TreeError::MalformedPreterminal(open_at)),
    }
}

/// Single-line canonical form with one space between siblings.
pub fn serialize_bracketed(tree: &ConstituencyTree) -> String {
    fn write(node: &ConstituencyTree, out: &mut String) {
        out.push('(');
        out.push_str(&node.label);
        for child in &node.children {
            out.push(' ');
            match child {
                Child::Tree(t) => write(t, out),
                Child::Token(tok) => out.push_str(tok.surface()),
            }
        }
        out.push(')');
    }
    let mut out = String::new();
    write(tree, &mut out);
    out
}

/// Paths of every node satisfying `predicate`, in pre-order.
pub fn find_nodes<F>(tree: &ConstituencyTree, predicate: F) -> Vec<NodePath>
where
    F: Fn(&ConstituencyTree) -> bool,
{
    fn walk<F: Fn(&ConstituencyTree) -> bool>(
        node: &ConstituencyTree,
        path: &mut Vec<usize>,
        predicate: &F,
        out: &mut Vec<NodePath>,
    ) {
        if predicate(node) {
            out.push(NodePath(path.clone()));
        }
        for (i, sub) in node.subtrees() {
            path.push(i);
            walk(sub, path, predicate, out);
            path.pop();
        }
    }
    let mut out = Vec::new();
    walk(tree, &mut Vec::new(), &predicate, &mut out);
    out
}

/// One line of a corpus file.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusLine {
    pub id: String,
    pub tree: ConstituencyTree,
}

#[derive(Debug, Error)]
#[error("line {line}: {source}")]
pub struct CorpusError {
    pub line: usize,
    #[source]
    pub source: TreeError,
}

/// Reads a corpus: one parse per line, optionally prefixed by `id<TAB>`.
/// Blank lines and lines starting with `#` are skipped. Lines without an
/// explicit id get `L<line number>`.
pub fn read_corpus(text: &str) -> Result<Vec<CorpusLine>, CorpusError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, parse) = match line.split_once('\t') {
            Some((id, parse)) => (id.trim().to_string(), parse),
            None => (format!("L{}", n + 1), line),
        };
        let tree = parse_bracketed(parse).map_err(|source| CorpusError { line: n + 1, source })?;
        out.push(CorpusLine { id, tree });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const RUNNING: &str = "(S (NP (NP (DT A) (NN man)) (VP (VBG wearing) (NP (DT a) (JJ yellow) (NN scarf)))) (VP (VBZ rides) (NP (DT a) (NN bike))) (. .))";

    #[test]
    fn parses_simple_sentence() {
        let t = parse_bracketed(
            "(S (NP (DT A) (NN man)) (VP (VBZ rides) (NP (DT a) (NN bike))) (. .))",
        )
        .unwrap();
        assert_eq!(t.sentence(), "A man rides a bike .");
        let idx: Vec<_> = t.tokens().iter().map(|t| t.index()).collect();
        assert_eq!(idx, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(t.tokens()[2].pos(), "VBZ");
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(parse_bracketed("(S (NP"), Err(TreeError::UnbalancedBrackets(_))));
        assert!(matches!(parse_bracketed("(S (NP (NN a)))))"), Err(TreeError::UnbalancedBrackets(_))));
        assert_eq!(parse_bracketed("   "), Err(TreeError::EmptyInput));
        assert!(matches!(parse_bracketed("(S (NP) (VP (VB go)))"), Err(TreeError::EmptyNode(_))));
        assert!(matches!(parse_bracketed("(NN man dog)"), Err(TreeError::MalformedPreterminal(_))));
        assert!(matches!(parse_bracketed("(NP man (NN dog))"), Err(TreeError::MalformedPreterminal(_))));
        assert!(matches!(parse_bracketed("(NN a) (NN b)"), Err(TreeError::TrailingInput(_))));
        assert!(matches!(parse_bracketed("hello"), Err(TreeError::StrayToken(_))));
    }

    #[test]
    fn preterminal_serializes_to_itself() {
        let t = parse_bracketed("(NN man)").unwrap();
        assert_eq!(serialize_bracketed(&t), "(NN man)");
        assert!(t.is_preterminal());
    }

    #[test]
    fn serialization_normalizes_whitespace() {
        let t = parse_bracketed("(S\n  (NP (DT the)(NN dog))\t(VP (VBZ barks)) )").unwrap();
        assert_eq!(t.to_string(), "(S (NP (DT the) (NN dog)) (VP (VBZ barks)))");
    }

    #[test]
    fn hand_built_running_sentence() {
        let pt = ConstituencyTree::preterminal;
        let tree = ConstituencyTree::new(
            "S",
            vec![
                Child::Tree(ConstituencyTree::new(
                    "NP",
                    vec![Child::Tree(pt("DT", "A")), Child::Tree(pt("NN", "man"))],
                )),
                Child::Tree(ConstituencyTree::new(
                    "VP",
                    vec![
                        Child::Tree(pt("VBZ", "rides")),
                        Child::Tree(ConstituencyTree::new(
                            "NP",
                            vec![Child::Tree(pt("DT", "a")), Child::Tree(pt("NN", "bike"))],
                        )),
                    ],
                )),
                Child::Tree(pt(".", ".")),
            ],
        );
        let s = serialize_bracketed(&tree);
        assert!(s.contains("(VBZ rides)"));
        assert!(!s.contains('\n'));
        assert_eq!(parse_bracketed(&s).unwrap(), tree);
        assert_eq!(tree.tokens()[4].index(), 4);
    }

    #[test]
    fn functional_tags_are_stripped() {
        let t = parse_bracketed("(S (NP-SBJ-1 (PRP He)) (VP (VBD left) (NP=2 (-NONE- *T*))))").unwrap();
        assert_eq!(
            t.to_string(),
            "(S (NP (PRP He)) (VP (VBD left) (NP (-NONE- *T*))))"
        );
        assert_eq!(base_label("-LRB-"), "-LRB-");
        assert_eq!(base_label("PRP$"), "PRP$");
    }

    #[test]
    fn empty_root_label_round_trips() {
        let src = "( (S (NP (PRP It)) (VP (VBZ works))))";
        let t = parse_bracketed(src).unwrap();
        assert_eq!(t.label(), "");
        assert_eq!(t.to_string(), src);
    }

    #[test]
    fn find_nodes_in_preorder() {
        let t = parse_bracketed(RUNNING).unwrap();
        let nps = find_nodes(&t, |n| n.label() == "NP");
        assert_eq!(nps.len(), 4);
        for w in nps.windows(2) {
            assert!(w[0] < w[1]);
        }
        for p in &nps {
            assert_eq!(t.get(p).unwrap().label(), "NP");
        }
        assert!(find_nodes(&t, |n| n.label() == "SBAR").is_empty());
        let s = find_nodes(&t, |n| n.label() == "S");
        assert_eq!(s.first(), Some(&NodePath::root()));
    }

    #[test]
    fn corpus_reader_skips_comments_and_assigns_ids() {
        let text = "# header\n\n(S (NP (PRP It)) (VP (VBZ works)))\nx7\t(NP (NN dog))\n";
        let lines = read_corpus(text).unwrap();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].id, "L3");
        assert_eq!(lines[1].id, "x7");
        let err = read_corpus("(NP (NN a))\n(S (NP\n").unwrap_err();
        assert_eq!(err.line, 2);
    }
}
