//! The four word-content-preserving syntactic perturbations.
//!
//! Every transformation is exhaustive: all qualifying instances of the target
//! structure in a sentence are modified, except for subject/object noun
//! swapping which only touches the clause directly under the root.

mod inflect;
mod records;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::treebank::{find_nodes, Child, ConstituencyTree, NodePath, Token};

pub use inflect::{flip_number, InflectionTable};
pub use records::{read_records_tsv, write_records_tsv, RecordsError, RECORDS_HEADER};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PerturbError {
    #[error("{surface}/{pos} is not a present-tense verb")]
    NotPresentTense { surface: String, pos: String },
    #[error("unknown perturbation kind {0:?}")]
    UnknownKind(String),
}

/// Returned when a sentence contains no instance of the target structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{0} is not applicable to this sentence")]
pub struct Inapplicable(pub PerturbationKind);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PerturbationKind {
    ModNoun,
    VerbOb,
    SubnObn,
    AgreeShift,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 4] = [
        PerturbationKind::ModNoun,
        PerturbationKind::VerbOb,
        PerturbationKind::SubnObn,
        PerturbationKind::AgreeShift,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationKind::ModNoun => "MOD_NOUN",
            PerturbationKind::VerbOb => "VERB_OB",
            PerturbationKind::SubnObn => "SUBN_OBN",
            PerturbationKind::AgreeShift => "AGREE_SHIFT",
        }
    }

    /// Reordering kinds keep the token multiset intact.
    pub fn is_reordering(self) -> bool {
        self != PerturbationKind::AgreeShift
    }

    pub fn apply(self, tree: &ConstituencyTree) -> Result<Perturbed, Inapplicable> {
        match self {
            PerturbationKind::ModNoun => perturb_mod_noun(tree),
            PerturbationKind::VerbOb => perturb_verb_ob(tree),
            PerturbationKind::SubnObn => perturb_subn_obn(tree),
            PerturbationKind::AgreeShift => perturb_agree_shift(tree),
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PerturbationKind {
    type Err = PerturbError;

    /// Accepts `MOD_NOUN`, `mod-noun`, `Mod-Noun`, `modnoun` and similar.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_uppercase())
            .collect();
        match norm.as_str() {
            "MODNOUN" => Ok(PerturbationKind::ModNoun),
            "VERBOB" => Ok(PerturbationKind::VerbOb),
            "SUBNOBN" => Ok(PerturbationKind::SubnObn),
            "AGREESHIFT" => Ok(PerturbationKind::AgreeShift),
            _ => Err(PerturbError::UnknownKind(s.to_string())),
        }
    }
}

/// A perturbed tree and the number of structures that were modified.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbed {
    pub tree: ConstituencyTree,
    pub n_modifications: usize,
}

/// An original/perturbed sentence pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PerturbationRecord {
    pub source_id: String,
    pub kind: PerturbationKind,
    pub n_modifications: usize,
    pub original: String,
    pub perturbed: String,
    /// POS tags aligned with the whitespace tokens of `original`.
    pub original_pos: Vec<String>,
    /// POS tags aligned with the whitespace tokens of `perturbed`.
    pub perturbed_pos: Vec<String>,
}

impl PerturbationRecord {
    pub fn original_tokens(&self) -> Vec<Token> {
        tagged(&self.original, &self.original_pos)
    }

    pub fn perturbed_tokens(&self) -> Vec<Token> {
        tagged(&self.perturbed, &self.perturbed_pos)
    }
}

fn tagged(text: &str, pos: &[String]) -> Vec<Token> {
    text.split(' ')
        .zip(pos)
        .enumerate()
        .map(|(i, (w, p))| Token::new(w, p.clone(), i))
        .collect()
}

fn pos_tags(tree: &ConstituencyTree) -> Vec<String> {
    tree.tokens().iter().map(|t| t.pos().to_string()).collect()
}

/// Applies `kind` to `tree`, producing a record keyed by `source_id`.
/// Perturbations that leave the sentence string unchanged are inapplicable.
pub fn perturb(
    kind: PerturbationKind,
    tree: &ConstituencyTree,
    source_id: &str,
) -> Result<PerturbationRecord, Inapplicable> {
    let out = kind.apply(tree)?;
    let original = tree.sentence();
    let perturbed = out.tree.sentence();
    if original == perturbed {
        return Err(Inapplicable(kind));
    }
    Ok(PerturbationRecord {
        source_id: source_id.to_string(),
        kind,
        n_modifications: out.n_modifications,
        original,
        perturbed,
        original_pos: pos_tags(tree),
        perturbed_pos: pos_tags(&out.tree),
    })
}

const NOMINAL: &[&str] = &["NN", "NNS", "NNP", "NNPS"];

fn is_nominal(label: &str) -> bool {
    NOMINAL.contains(&label)
}

fn child_label(c: &Child) -> Option<&str> {
    match c {
        Child::Tree(t) => Some(t.label()),
        Child::Token(_) => None,
    }
}

fn child_is_preterminal(c: &Child, pred: impl Fn(&str) -> bool) -> bool {
    matches!(c, Child::Tree(t) if t.is_preterminal() && pred(t.label()))
}

fn is_mod_noun_modifier(c: &Child) -> bool {
    match c {
        Child::Tree(t) if t.is_preterminal() => {
            matches!(t.label(), "JJ" | "JJR" | "JJS" | "NN" | "NNS")
        }
        Child::Tree(t) => t.label() == "ADJP",
        Child::Token(_) => false,
    }
}

fn is_modifier_joiner(c: &Child) -> bool {
    child_is_preterminal(c, |l| l == "CC" || l == ",")
}

/// Index of the rightmost nominal preterminal among direct children.
fn direct_head_noun(np: &ConstituencyTree) -> Option<usize> {
    np.children()
        .iter()
        .rposition(|c| child_is_preterminal(c, is_nominal))
}

/// The contiguous modifier block `[start, head)` immediately before the
/// head noun. Coordinators and commas are allowed inside the block but not at
/// its edges.
fn modifier_block(np: &ConstituencyTree, head: usize) -> Option<usize> {
    let kids = np.children();
    let mut start = head;
    let mut i = head;
    while i > 0 {
        let c = &kids[i - 1];
        if is_mod_noun_modifier(c) {
            i -= 1;
            start = i;
        } else if is_modifier_joiner(c) && i >= 2 && is_mod_noun_modifier(&kids[i - 2]) && start < head {
            i -= 1;
        } else {
            break;
        }
    }
    (start < head).then_some(start)
}

/// Moves the pre-head modifier block of every qualifying NP after its head
/// noun. Determiners and possessives stay phrase-initial.
pub fn perturb_mod_noun(tree: &ConstituencyTree) -> Result<Perturbed, Inapplicable> {
    let mut out = tree.clone();
    let mut n = 0;
    // Reverse pre-order: rewriting a node never invalidates a pending path.
    for path in find_nodes(tree, |t| t.label() == "NP").into_iter().rev() {
        let np = out.get_mut(&path).expect("path from find_nodes");
        let Some(head) = direct_head_noun(np) else { continue };
        let Some(start) = modifier_block(np, head) else { continue };
        let kids = np.children_mut();
        let block: Vec<Child> = kids.drain(start..head).collect();
        let insert_at = start + 1;
        for (k, c) in block.into_iter().enumerate() {
            kids.insert(insert_at + k, c);
        }
        n += 1;
    }
    finish(out, n, PerturbationKind::ModNoun)
}

fn finish(mut tree: ConstituencyTree, n: usize, kind: PerturbationKind) -> Result<Perturbed, Inapplicable> {
    if n == 0 {
        return Err(Inapplicable(kind));
    }
    tree.reindex();
    Ok(Perturbed { tree, n_modifications: n })
}

fn is_clause(label: &str) -> bool {
    matches!(label, "S" | "SQ" | "SINV")
}

/// Paths of VPs that act as clause predicates: a VP under a clause with a
/// preceding NP subject, or a VP nested inside such a predicate (auxiliary
/// chains, VP coordination).
fn predicate_vps(tree: &ConstituencyTree) -> Vec<NodePath> {
    fn walk(node: &ConstituencyTree, path: &NodePath, parent_is_predicate: bool, out: &mut Vec<NodePath>) {
        let mut seen_subject = false;
        for (i, c) in node.children().iter().enumerate() {
            let Child::Tree(sub) = c else { continue };
            let p = path.child(i);
            let is_pred = sub.label() == "VP"
                && ((is_clause(node.label()) && seen_subject)
                    || (node.label() == "VP" && parent_is_predicate));
            if is_pred {
                out.push(p.clone());
            }
            if sub.label() == "NP" {
                seen_subject = true;
            }
            walk(sub, &p, is_pred, out);
        }
    }
    let mut out = Vec::new();
    walk(tree, &NodePath::root(), false, &mut out);
    out.sort();
    out
}

/// `(verb_index, object_index)` when a VP has a verb head, an optional
/// particle (bare `RP` or a `PRT` phrase), and then a direct NP object.
fn verb_object(vp: &ConstituencyTree) -> Option<(usize, usize)> {
    let kids = vp.children();
    let verb = kids
        .iter()
        .position(|c| child_is_preterminal(c, |l| l.starts_with("VB")))?;
    let mut next = verb + 1;
    let particle = |c: &Child| child_is_preterminal(c, |l| l == "RP") || child_label(c) == Some("PRT");
    if kids.get(next).is_some_and(particle) {
        next += 1;
    }
    match kids.get(next).and_then(child_label) {
        Some("NP") => Some((verb, next)),
        _ => None,
    }
}

/// Moves the direct NP object in front of the verb (plus particle) in every
/// predicate VP.
pub fn perturb_verb_ob(tree: &ConstituencyTree) -> Result<Perturbed, Inapplicable> {
    let mut out = tree.clone();
    let mut n = 0;
    for path in predicate_vps(tree).into_iter().rev() {
        let vp = out.get_mut(&path).expect("path from predicate_vps");
        let Some((verb, object)) = verb_object(vp) else { continue };
        let kids = vp.children_mut();
        let np = kids.remove(object);
        kids.insert(verb, np);
        n += 1;
    }
    finish(out, n, PerturbationKind::VerbOb)
}

/// Head noun of an NP: the rightmost direct nominal child, otherwise the
/// head of a leading NP child (`(NP (NP a man) (VP wearing ...))`).
fn head_noun_path(tree: &ConstituencyTree, np: &NodePath) -> Option<NodePath> {
    let node = tree.get(np)?;
    if let Some(i) = direct_head_noun(node) {
        return Some(np.child(i));
    }
    match node.children().first() {
        Some(Child::Tree(first)) if first.label() == "NP" => head_noun_path(tree, &np.child(0)),
        _ => None,
    }
}

/// Subject-verb-object clause directly under the root: `(subject NP, object NP)`.
fn root_svo(tree: &ConstituencyTree) -> Option<(NodePath, NodePath)> {
    let mut clause = NodePath::root();
    let root = tree.get(&clause)?;
    if !is_clause(root.label()) {
        let mut subs = root.subtrees();
        match (subs.next(), subs.next()) {
            (Some((i, only)), None) if is_clause(only.label()) => clause = clause.child(i),
            _ => return None,
        }
    }
    let node = tree.get(&clause)?;
    let kids = node.children();
    let vp_idx = kids.iter().position(|c| child_label(c) == Some("VP"))?;
    let subj_idx = kids[..vp_idx].iter().rposition(|c| child_label(c) == Some("NP"))?;
    let mut vp_path = clause.child(vp_idx);
    loop {
        let vp = tree.get(&vp_path)?;
        if let Some((_, obj)) = verb_object(vp) {
            return Some((clause.child(subj_idx), vp_path.child(obj)));
        }
        let (i, _) = vp.subtrees().find(|(_, t)| t.label() == "VP")?;
        vp_path = vp_path.child(i);
    }
}

/// Swaps the head nouns of the root clause's subject and object.
pub fn perturb_subn_obn(tree: &ConstituencyTree) -> Result<Perturbed, Inapplicable> {
    let kind = PerturbationKind::SubnObn;
    let (subj, obj) = root_svo(tree).ok_or(Inapplicable(kind))?;
    let subj_head = head_noun_path(tree, &subj).ok_or(Inapplicable(kind))?;
    let obj_head = head_noun_path(tree, &obj).ok_or(Inapplicable(kind))?;
    let a = tree.get(&subj_head).and_then(|t| t.token()).cloned().ok_or(Inapplicable(kind))?;
    let b = tree.get(&obj_head).and_then(|t| t.token()).cloned().ok_or(Inapplicable(kind))?;
    let mut out = tree.clone();
    replace_preterminal(&mut out, &subj_head, &b);
    replace_preterminal(&mut out, &obj_head, &a);
    finish(out, 1, kind)
}

fn replace_preterminal(tree: &mut ConstituencyTree, path: &NodePath, token: &Token) {
    let node = tree.get_mut(path).expect("resolved head path");
    *node = ConstituencyTree::preterminal(token.pos(), token.surface());
}

/// Flips the number inflection of every VBZ/VBP verb.
pub fn perturb_agree_shift(tree: &ConstituencyTree) -> Result<Perturbed, Inapplicable> {
    let mut out = tree.clone();
    let paths = find_nodes(tree, |t| t.is_preterminal() && matches!(t.label(), "VBZ" | "VBP"));
    for path in &paths {
        let node = out.get_mut(path).expect("path from find_nodes");
        let tok = node.token_mut().expect("preterminal");
        let flipped = flip_number(tok).expect("VBZ/VBP token");
        *node = ConstituencyTree::preterminal(flipped.pos(), flipped.surface());
    }
    finish(out, paths.len(), PerturbationKind::AgreeShift)
}

/// Checks that a record holds word content constant: equal token multisets
/// for reordering kinds; for agreement shifts, equal length with every
/// differing position being a VBZ/VBP number pair of the same verb.
pub fn verify_content_invariant(record: &PerturbationRecord) -> bool {
    let orig: Vec<&str> = record.original.split(' ').collect();
    let pert: Vec<&str> = record.perturbed.split(' ').collect();
    if orig.len() != pert.len() || record.n_modifications == 0 {
        return false;
    }
    if record.kind.is_reordering() {
        let mut a = orig;
        let mut b = pert;
        a.sort_unstable();
        b.sort_unstable();
        return a == b;
    }
    let table = InflectionTable::shared();
    let tags_ok = record.original_pos.len() == orig.len() && record.perturbed_pos.len() == pert.len();
    let mut flipped = 0;
    for (i, (o, p)) in orig.iter().zip(&pert).enumerate() {
        if o == p {
            continue;
        }
        if !table.are_number_pair(o, p) {
            return false;
        }
        if tags_ok {
            let pair = (record.original_pos[i].as_str(), record.perturbed_pos[i].as_str());
            if !matches!(pair, ("VBZ", "VBP") | ("VBP", "VBZ")) {
                return false;
            }
        }
        flipped += 1;
    }
    flipped > 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treebank::parse_bracketed;

    const RUNNING: &str = "(S (NP (NP (DT A) (NN man)) (VP (VBG wearing) (NP (DT a) (JJ yellow) (NN scarf)))) (VP (VBZ rides) (NP (DT a) (NN bike))) (. .))";

    fn sent(kind: PerturbationKind, src: &str) -> Result<(String, usize), Inapplicable> {
        let t = parse_bracketed(src).unwrap();
        perturb(kind, &t, "x").map(|r| (r.perturbed, r.n_modifications))
    }

    #[test]
    fn running_sentence_all_kinds() {
        use PerturbationKind::*;
        assert_eq!(sent(ModNoun, RUNNING).unwrap().0, "A man wearing a scarf yellow rides a bike .");
        assert_eq!(sent(VerbOb, RUNNING).unwrap().0, "A man wearing a yellow scarf a bike rides .");
        assert_eq!(sent(SubnObn, RUNNING).unwrap().0, "A bike wearing a yellow scarf rides a man .");
        assert_eq!(sent(AgreeShift, RUNNING).unwrap().0, "A man wearing a yellow scarf ride a bike .");
    }

    #[test]
    fn mod_noun_keeps_determiner_and_modifier_order() {
        let t = parse_bracketed("(NP (DT the) (JJ big) (JJ red) (NN dog))").unwrap();
        let p = perturb_mod_noun(&t).unwrap();
        assert_eq!(p.tree.sentence(), "the dog big red");
        assert_eq!(p.n_modifications, 1);
        let idx: Vec<_> = p.tree.tokens().iter().map(|t| t.index()).collect();
        assert_eq!(idx, vec![0, 1, 2, 3]);
    }

    #[test]
    fn mod_noun_inapplicable_without_modifier() {
        let src = "(S (NP (DT A) (NN man)) (VP (VBZ rides) (NP (DT a) (NN bike))) (. .))";
        assert_eq!(sent(PerturbationKind::ModNoun, src), Err(Inapplicable(PerturbationKind::ModNoun)));
    }

    #[test]
    fn mod_noun_compounds_adjp_and_possessives() {
        let src = "(S (NP (NP (PRP$ his) (NN car) (NN door)) (CC and) (NP (DT a) (ADJP (RB very) (JJ tall)) (NN tree))) (VP (VBP are) (ADJP (JJ old))) (. .))";
        let (s, n) = sent(PerturbationKind::ModNoun, src).unwrap();
        assert_eq!(s, "his door car and a tree very tall are old .");
        assert_eq!(n, 2);
        let src = "(NP (DT a) (JJ big) (, ,) (JJ red) (NN ball))";
        assert_eq!(sent(PerturbationKind::ModNoun, src).unwrap().0, "a ball big , red");
        let src = "(NP (DT the) (, ,) (JJ red) (NN ball))";
        assert_eq!(sent(PerturbationKind::ModNoun, src).unwrap().0, "the , ball red");
    }

    #[test]
    fn verb_ob_intransitive_is_inapplicable() {
        let src = "(S (NP (DT The) (NN man)) (VP (VBZ sleeps)) (. .))";
        assert!(sent(PerturbationKind::VerbOb, src).is_err());
        assert!(sent(PerturbationKind::SubnObn, src).is_err());
    }

    #[test]
    fn verb_ob_matrix_and_embedded() {
        let src = "(S (NP (PRP She)) (VP (VBZ tells) (NP (DT the) (NN boy)) (SBAR (IN that) (S (NP (DT the) (NN dog)) (VP (VBD ate) (NP (DT the) (NN cake)))))) (. .))";
        let (s, n) = sent(PerturbationKind::VerbOb, src).unwrap();
        assert_eq!(s, "She the boy tells that the dog the cake ate .");
        assert_eq!(n, 2);
    }

    #[test]
    fn verb_ob_particles_and_aux_chains() {
        let src = "(S (NP (PRP They)) (VP (MD will) (VP (VB pick) (PRT (RP up)) (NP (DT the) (NN box)))) (. .))";
        assert_eq!(sent(PerturbationKind::VerbOb, src).unwrap().0, "They will the box pick up .");
        let src = "(S (NP (PRP They)) (VP (MD will) (VP (VB pick) (RP up) (NP (DT the) (NN box)))) (. .))";
        assert_eq!(sent(PerturbationKind::VerbOb, src).unwrap().0, "They will the box pick up .");
    }

    #[test]
    fn subn_obn_root_clause_only() {
        let src = "(S (NP (DT The) (NN teacher)) (VP (VBZ thinks) (SBAR (IN that) (S (NP (DT the) (NN cat)) (VP (VBZ chases) (NP (DT the) (NN mouse)))))) (. .))";
        // root VP has a clausal complement, not an NP object
        assert!(sent(PerturbationKind::SubnObn, src).is_err());
        let src = "(S (NP (DT The) (NN girl)) (VP (VBZ tells) (NP (DT the) (NN boy)) (SBAR (IN that) (S (NP (DT the) (NN cat)) (VP (VBZ chases) (NP (DT the) (NN mouse)))))) (. .))";
        let (s, n) = sent(PerturbationKind::SubnObn, src).unwrap();
        assert_eq!(s, "The boy tells the girl that the cat chases the mouse .");
        assert_eq!(n, 1);
    }

    #[test]
    fn subn_obn_through_auxiliaries_and_pronouns() {
        let src = "(S (NP (DT The) (NNS dogs)) (VP (VBP have) (VP (VBN eaten) (NP (DT the) (NN food)))) (. .))";
        assert_eq!(sent(PerturbationKind::SubnObn, src).unwrap().0, "The food have eaten the dogs .");
        let src = "(S (NP (PRP She)) (VP (VBZ rides) (NP (DT a) (NN bike))) (. .))";
        assert!(sent(PerturbationKind::SubnObn, src).is_err());
        let src = "(ROOT (S (NP (NNP John)) (VP (VBD saw) (NP (NNP Mary)))))";
        assert_eq!(sent(PerturbationKind::SubnObn, src).unwrap().0, "Mary saw John");
    }

    #[test]
    fn identical_heads_are_inapplicable() {
        let src = "(S (NP (DT The) (NN man)) (VP (VBZ sees) (NP (DT the) (NN man))) (. .))";
        assert!(sent(PerturbationKind::SubnObn, src).is_err());
    }

    #[test]
    fn agree_shift_examples() {
        let src = "(S (S (NP (PRP She)) (VP (VBZ goes))) (CC and) (S (NP (PRP they)) (VP (VBP go))) (. .))";
        let (s, n) = sent(PerturbationKind::AgreeShift, src).unwrap();
        assert_eq!(s, "She go and they goes .");
        assert_eq!(n, 2);
        let src = "(S (NP (DT The) (NN man)) (VP (VBD slept)) (. .))";
        assert!(sent(PerturbationKind::AgreeShift, src).is_err());
    }

    #[test]
    fn agree_shift_is_an_involution() {
        let t = parse_bracketed(RUNNING).unwrap();
        let once = perturb_agree_shift(&t).unwrap().tree;
        let twice = perturb_agree_shift(&once).unwrap().tree;
        assert_eq!(twice, t);
    }

    #[test]
    fn content_invariant_checks() {
        let t = parse_bracketed(RUNNING).unwrap();
        for kind in PerturbationKind::ALL {
            let r = perturb(kind, &t, "x").unwrap();
            assert!(verify_content_invariant(&r), "{kind}");
        }
        let mut r = perturb(PerturbationKind::ModNoun, &t, "x").unwrap();
        r.perturbed = "A man wearing a scarf yellow rides a .".into();
        assert!(!verify_content_invariant(&r));
        let mut r = perturb(PerturbationKind::AgreeShift, &t, "x").unwrap();
        r.perturbed = r.perturbed.replace("ride", "rode");
        assert!(!verify_content_invariant(&r));
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("Mod-Noun".parse::<PerturbationKind>().unwrap(), PerturbationKind::ModNoun);
        assert_eq!("agree_shift".parse::<PerturbationKind>().unwrap(), PerturbationKind::AgreeShift);
        assert_eq!("SUBN_OBN".parse::<PerturbationKind>().unwrap(), PerturbationKind::SubnObn);
        assert!("swap".parse::<PerturbationKind>().is_err());
    }
}
