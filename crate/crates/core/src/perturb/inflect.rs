//! Present-tense number inflection: third-person singular (VBZ) versus
//! non-third-person singular (VBP).

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::treebank::Token;

use super::PerturbError;

/// Irregular 3sg <-> base pairs. The map is a bijection.
const IRREGULAR: &[(&str, &str)] = &[
    ("is", "are"),
    ("has", "have"),
    ("does", "do"),
    ("'s", "'re"),
    ("isn't", "aren't"),
    ("hasn't", "haven't"),
    ("doesn't", "don't"),
    ("dies", "die"),
    ("lies", "lie"),
    ("ties", "tie"),
    ("vies", "vie"),
    ("unties", "untie"),
    ("belies", "belie"),
    ("aches", "ache"),
    ("canoes", "canoe"),
    ("tiptoes", "tiptoe"),
    ("hoes", "hoe"),
    ("shoes", "shoe"),
    ("focuses", "focus"),
    ("biases", "bias"),
    ("quizzes", "quiz"),
];

/// Non-3sg forms whose 3sg counterpart already belongs to another pair.
/// Flipping them is one-directional.
const ONE_WAY_TO_3SG: &[(&str, &str)] = &[("am", "is"), ("'m", "'s"), ("'ve", "'s"), ("be", "is")];

/// Bidirectional table of irregular present-tense forms plus the regular
/// orthographic suffix rules used as fallback.
#[derive(Debug, Clone)]
pub struct InflectionTable {
    to_base: HashMap<String, String>,
    to_third: HashMap<String, String>,
}

impl Default for InflectionTable {
    fn default() -> Self {
        let mut to_base = HashMap::new();
        let mut to_third = HashMap::new();
        for &(third, base) in IRREGULAR {
            to_base.insert(third.to_string(), base.to_string());
            to_third.insert(base.to_string(), third.to_string());
        }
        for &(base, third) in ONE_WAY_TO_3SG {
            to_third.insert(base.to_string(), third.to_string());
        }
        InflectionTable { to_base, to_third }
    }
}

impl InflectionTable {
    pub fn shared() -> &'static InflectionTable {
        static TABLE: OnceLock<InflectionTable> = OnceLock::new();
        TABLE.get_or_init(InflectionTable::default)
    }

    /// Iterator over the irregular bijective pairs as `(3sg, base)`.
    pub fn irregular_pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        IRREGULAR.iter().copied()
    }

    /// `rides` -> `ride`.
    pub fn to_base(&self, form: &str) -> String {
        with_casing(form, |lower| {
            if let Some(b) = self.to_base.get(lower) {
                return b.clone();
            }
            regular_to_base(lower)
        })
    }

    /// `ride` -> `rides`.
    pub fn to_third_singular(&self, form: &str) -> String {
        with_casing(form, |lower| {
            if let Some(t) = self.to_third.get(lower) {
                return t.clone();
            }
            regular_to_third(lower)
        })
    }

    /// Whether `a` and `b` are the two number forms of one present-tense verb.
    pub fn are_number_pair(&self, a: &str, b: &str) -> bool {
        a != b
            && (self.to_base(a) == b
                || self.to_third_singular(a) == b
                || self.to_base(b) == a
                || self.to_third_singular(b) == a)
    }
}

fn regular_to_base(w: &str) -> String {
    if let Some(stem) = w.strip_suffix("ies") {
        if stem.chars().count() >= 1 {
            return format!("{stem}y");
        }
    }
    for suf in ["sses", "zzes", "xes", "ches", "shes", "oes"] {
        if w.ends_with(suf) {
            return w[..w.len() - 2].to_string();
        }
    }
    // -ses and -zes from -se / -ze stems (uses, realizes) keep the e.
    match w.strip_suffix('s') {
        Some(stem) if !stem.is_empty() && !stem.ends_with('s') => stem.to_string(),
        _ => w.to_string(),
    }
}

fn regular_to_third(w: &str) -> String {
    let chars: Vec<char> = w.chars().collect();
    if let [.., before, 'y'] = chars.as_slice() {
        if !"aeiou".contains(*before) {
            return format!("{}ies", &w[..w.len() - 1]);
        }
    }
    for suf in ["ss", "zz", "x", "ch", "sh", "o"] {
        if w.ends_with(suf) {
            return format!("{w}es");
        }
    }
    format!("{w}s")
}

/// Applies `f` to the lowercased form and restores the original casing
/// pattern (all caps, leading capital, or as returned).
fn with_casing(form: &str, f: impl FnOnce(&str) -> String) -> String {
    let lower = form.to_lowercase();
    let out = f(&lower);
    let letters: Vec<char> = form.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.len() > 1 && letters.iter().all(|c| c.is_uppercase()) {
        return out.to_uppercase();
    }
    match form.chars().next() {
        Some(c) if c.is_uppercase() => {
            let mut cs = out.chars();
            match cs.next() {
                Some(first) => first.to_uppercase().chain(cs).collect(),
                None => out,
            }
        }
        _ => out,
    }
}

/// Flips a present-tense verb between VBZ and VBP: `(rides, VBZ)` -> `(ride, VBP)`.
pub fn flip_number(token: &Token) -> Result<Token, PerturbError> {
    let table = InflectionTable::shared();
    match token.pos() {
        "VBZ" => Ok(token.with_form(table.to_base(token.surface()), "VBP".into())),
        "VBP" => Ok(token.with_form(table.to_third_singular(token.surface()), "VBZ".into())),
        other => Err(PerturbError::NotPresentTense {
            surface: token.surface().to_string(),
            pos: other.to_string(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-built (3sg, base) oracle used to check the inflection engine.
    pub(crate) const ORACLE: &[(&str, &str)] = &[
        ("rides", "ride"),
        ("goes", "go"),
        ("is", "are"),
        ("has", "have"),
        ("does", "do"),
        ("runs", "run"),
        ("walks", "walk"),
        ("sees", "see"),
        ("agrees", "agree"),
        ("flies", "fly"),
        ("tries", "try"),
        ("carries", "carry"),
        ("studies", "study"),
        ("plays", "play"),
        ("says", "say"),
        ("buys", "buy"),
        ("enjoys", "enjoy"),
        ("passes", "pass"),
        ("misses", "miss"),
        ("kisses", "kiss"),
        ("fixes", "fix"),
        ("mixes", "mix"),
        ("relaxes", "relax"),
        ("buzzes", "buzz"),
        ("watches", "watch"),
        ("reaches", "reach"),
        ("teaches", "teach"),
        ("catches", "catch"),
        ("washes", "wash"),
        ("pushes", "push"),
        ("wishes", "wish"),
        ("echoes", "echo"),
        ("vetoes", "veto"),
        ("uses", "use"),
        ("causes", "cause"),
        ("raises", "raise"),
        ("closes", "close"),
        ("chooses", "choose"),
        ("loses", "lose"),
        ("increases", "increase"),
        ("realizes", "realize"),
        ("freezes", "freeze"),
        ("sizes", "size"),
        ("makes", "make"),
        ("takes", "take"),
        ("wears", "wear"),
        ("helps", "help"),
        ("needs", "need"),
        ("seems", "seem"),
        ("believes", "believe"),
        ("knows", "know"),
        ("thinks", "think"),
        ("dies", "die"),
        ("lies", "lie"),
        ("ties", "tie"),
        ("focuses", "focus"),
        ("aches", "ache"),
        ("canoes", "canoe"),
        ("doesn't", "don't"),
        ("'s", "'re"),
    ];

    #[test]
    fn oracle_dictionary_both_directions() {
        assert!(ORACLE.len() >= 50);
        let t = InflectionTable::default();
        for &(third, base) in ORACLE {
            assert_eq!(t.to_base(third), base, "3sg->base for {third}");
            assert_eq!(t.to_third_singular(base), third, "base->3sg for {base}");
        }
    }

    #[test]
    fn flip_examples() {
        let f = flip_number(&Token::new("rides", "VBZ", 3)).unwrap();
        assert_eq!((f.surface(), f.pos(), f.index()), ("ride", "VBP", 3));
        let f = flip_number(&Token::new("goes", "VBZ", 0)).unwrap();
        assert_eq!((f.surface(), f.pos()), ("go", "VBP"));
        let f = flip_number(&Token::new("is", "VBZ", 0)).unwrap();
        assert_eq!((f.surface(), f.pos()), ("are", "VBP"));
        let f = flip_number(&Token::new("have", "VBP", 0)).unwrap();
        assert_eq!((f.surface(), f.pos()), ("has", "VBZ"));
        assert!(matches!(
            flip_number(&Token::new("ran", "VBD", 0)),
            Err(PerturbError::NotPresentTense { .. })
        ));
    }

    #[test]
    fn irregular_map_is_bijective() {
        let t = InflectionTable::default();
        let mut seen_base = std::collections::HashSet::new();
        for (third, base) in t.irregular_pairs() {
            assert!(seen_base.insert(base), "duplicate base {base}");
            assert_eq!(t.to_third_singular(&t.to_base(third)), third);
            assert_eq!(t.to_base(&t.to_third_singular(base)), base);
        }
    }

    #[test]
    fn casing_is_preserved() {
        let t = InflectionTable::default();
        assert_eq!(t.to_base("Is"), "Are");
        assert_eq!(t.to_base("GOES"), "GO");
        assert_eq!(t.to_third_singular("Have"), "Has");
    }

    #[test]
    fn one_way_forms() {
        let t = InflectionTable::default();
        assert_eq!(t.to_third_singular("am"), "is");
        assert!(t.are_number_pair("am", "is"));
        assert!(t.are_number_pair("rides", "ride"));
        assert!(!t.are_number_pair("rides", "rode"));
        assert!(!t.are_number_pair("ride", "ride"));
    }
}
