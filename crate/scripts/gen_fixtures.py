#!/usr/bin/env python3
"""Seeded toy-grammar generator for the test fixtures.

Writes bracketed parse corpora (one tree per line) plus a clean-text corpus
and a small external two-column dataset into crates/core/tests/fixtures/.
Re-running with the same seeds reproduces the files byte for byte.

    python3 scripts/gen_fixtures.py [--out DIR]
"""

import argparse
import random
import re
from pathlib import Path

LEAF = re.compile(r"\(([^\s()]+)\s+([^\s()]+)\)")

NOUNS = [
    ("dog", "dogs"), ("cat", "cats"), ("man", "men"), ("woman", "women"),
    ("child", "children"), ("bike", "bikes"), ("scarf", "scarves"),
    ("teacher", "teachers"), ("student", "students"), ("farmer", "farmers"),
    ("horse", "horses"), ("bird", "birds"), ("letter", "letters"),
    ("book", "books"), ("car", "cars"), ("box", "boxes"), ("church", "churches"),
    ("dish", "dishes"), ("lawyer", "lawyers"), ("doctor", "doctors"),
    ("painter", "painters"), ("singer", "singers"), ("city", "cities"),
    ("baby", "babies"), ("key", "keys"), ("toy", "toys"), ("apple", "apples"),
    ("river", "rivers"), ("window", "windows"), ("chair", "chairs"),
    ("song", "songs"), ("story", "stories"), ("garden", "gardens"),
    ("kitten", "kittens"), ("pilot", "pilots"), ("nurse", "nurses"),
    ("hat", "hats"), ("coat", "coats"), ("boat", "boats"), ("lamp", "lamps"),
]
PROPER = ["John", "Mary", "Anna", "Peter", "Lucy", "Tom"]
COMPOUND = ["school", "coffee", "kitchen", "music", "garden", "winter"]
ADJECTIVES = [
    "big", "small", "red", "yellow", "old", "young", "happy", "tall", "quiet",
    "angry", "clever", "brown", "green", "heavy", "bright", "lazy", "noisy",
    "shy", "strange", "gentle", "tiny", "famous", "wooden", "blue",
]
# (3rd singular, base, past, progressive)
TRANSITIVE = [
    ("chases", "chase", "chased", "chasing"), ("sees", "see", "saw", "seeing"),
    ("likes", "like", "liked", "liking"), ("watches", "watch", "watched", "watching"),
    ("carries", "carry", "carried", "carrying"), ("fixes", "fix", "fixed", "fixing"),
    ("pushes", "push", "pushed", "pushing"), ("misses", "miss", "missed", "missing"),
    ("has", "have", "had", "having"), ("does", "do", "did", "doing"),
    ("teaches", "teach", "taught", "teaching"), ("washes", "wash", "washed", "washing"),
    ("buys", "buy", "bought", "buying"), ("enjoys", "enjoy", "enjoyed", "enjoying"),
    ("visits", "visit", "visited", "visiting"), ("follows", "follow", "followed", "following"),
    ("helps", "help", "helped", "helping"), ("finds", "find", "found", "finding"),
    ("reads", "read", "read", "reading"), ("paints", "paint", "painted", "painting"),
    ("rides", "ride", "rode", "riding"), ("drives", "drive", "drove", "driving"),
    ("tries", "try", "tried", "trying"), ("catches", "catch", "caught", "catching"),
    ("guesses", "guess", "guessed", "guessing"), ("uses", "use", "used", "using"),
    ("causes", "cause", "caused", "causing"), ("loves", "love", "loved", "loving"),
    ("wears", "wear", "wore", "wearing"), ("holds", "hold", "held", "holding"),
]
PHRASAL = [
    ("picks", "pick", "picked", "up"), ("puts", "put", "put", "down"),
    ("turns", "turn", "turned", "off"), ("gives", "give", "gave", "away"),
]
INTRANSITIVE = [
    ("sleeps", "sleep", "slept"), ("laughs", "laugh", "laughed"),
    ("runs", "run", "ran"), ("sings", "sing", "sang"), ("goes", "go", "went"),
    ("waits", "wait", "waited"), ("cries", "cry", "cried"),
]
PREPS = ["in", "on", "near", "with", "behind", "under"]
SG_DET = ["the", "a", "this", "that", "every", "my", "his", "her"]
PL_DET = ["the", "these", "those", "some", "my", "our"]


class Grammar:
    def __init__(self, rng):
        self.r = rng

    def coin(self, p):
        return self.r.random() < p

    def np(self, plural=None, allow_mods=True, allow_pron=False, allow_proper=True):
        """Returns (bracketed NP, is_plural)."""
        r = self.r
        if plural is None:
            plural = self.coin(0.35)
        if allow_pron and self.coin(0.1):
            word, pl = r.choice([("She", False), ("He", False), ("They", True), ("It", False)])
            return f"(NP (PRP {word}))", pl
        if allow_proper and not plural and self.coin(0.08):
            return f"(NP (NNP {r.choice(PROPER)}))", False
        sg, pl = r.choice(NOUNS)
        det = r.choice(PL_DET if plural else SG_DET)
        parts = [f"(DT {det})"] if det not in ("my", "his", "her", "our") else [f"(PRP$ {det})"]
        if allow_mods:
            n_adj = r.choices([0, 1, 2], weights=[4, 4, 2])[0]
            adjs = r.sample(ADJECTIVES, n_adj)
            if n_adj == 2 and self.coin(0.2):
                parts += [f"(JJ {adjs[0]})", "(CC and)", f"(JJ {adjs[1]})"]
            else:
                parts += [f"(JJ {a})" for a in adjs]
            if self.coin(0.15):
                parts.append(f"(NN {r.choice(COMPOUND)})")
        parts.append(f"(NNS {pl})" if plural else f"(NN {sg})")
        return f"(NP {' '.join(parts)})", plural

    def pp(self):
        obj, _ = self.np(allow_mods=self.coin(0.5), allow_proper=False)
        return f"(PP (IN {self.r.choice(PREPS)}) {obj})"

    def object_np(self):
        np, _ = self.np(allow_pron=False)
        if self.coin(0.1):
            np = f"(NP {np} {self.pp()})"
        return np

    def verb(self, tense, plural, entry):
        third, base, past = entry[0], entry[1], entry[2]
        if tense == "past":
            return f"(VBD {past})"
        return f"(VBP {base})" if plural else f"(VBZ {third})"

    def simple_vp(self, tense, plural):
        r = self.r
        roll = r.random()
        if roll < 0.55:
            v = r.choice(TRANSITIVE)
            extra = f" {self.pp()}" if self.coin(0.2) else ""
            return f"(VP {self.verb(tense, plural, v)} {self.object_np()}{extra})"
        if roll < 0.65:
            v = r.choice(PHRASAL)
            return f"(VP {self.verb(tense, plural, v)} (PRT (RP {v[3]})) {self.object_np()})"
        if roll < 0.8:
            v = r.choice(TRANSITIVE)
            if tense == "past":
                aux = "(VBD were)" if plural else "(VBD was)"
            else:
                aux = "(VBP are)" if plural else "(VBZ is)"
            return f"(VP {aux} (VP (VBG {v[3]}) {self.object_np()}))"
        v = r.choice(INTRANSITIVE)
        extra = f" {self.pp()}" if self.coin(0.5) else ""
        return f"(VP {self.verb(tense, plural, v)}{extra})"

    def vp(self, tense, plural):
        if self.coin(0.18):
            a = self.simple_vp(tense, plural)
            b = self.simple_vp(tense, plural)
            return f"(VP {a} (CC and) {b})"
        return self.simple_vp(tense, plural)

    def subject(self):
        r = self.r
        np, plural = self.np(allow_pron=True)
        roll = r.random()
        if np.startswith("(NP (PRP") or roll < 0.7:
            return np, plural
        if roll < 0.85:
            v = r.choice(TRANSITIVE)
            return f"(NP {np} (VP (VBG {v[3]}) {self.object_np()}))", plural
        v = r.choice(TRANSITIVE)
        rel_verb = self.verb("present", plural, v)
        return f"(NP {np} (SBAR (WHNP (WDT that)) (S (VP {rel_verb} {self.object_np()}))))", plural

    def clause(self, tense):
        subj, plural = self.subject()
        return f"(S {subj} {self.vp(tense, plural)})"

    def sentence(self):
        tense = "past" if self.coin(0.15) else "present"
        if self.coin(0.08):
            a = self.clause(tense)
            b = self.clause("past" if self.coin(0.15) else "present")
            body = f"(S {a} (, ,) (CC and) {b} (. .))"
        else:
            subj, plural = self.subject()
            body = f"(S {subj} {self.vp(tense, plural)} (. .))"
        return capitalize_first(body)


def capitalize_first(tree):
    """Upper-cases the first letter of the first leaf."""
    m = LEAF.search(tree)
    i = m.start(2)
    return tree[:i] + tree[i].upper() + tree[i + 1:]


def root(tree, style):
    return f"(ROOT {tree})" if style == 0 else f"( {tree})"


def corpus(seed, n, prefix):
    rng = random.Random(seed)
    g = Grammar(rng)
    seen = set()
    out = []
    while len(out) < n:
        t = g.sentence()
        if t in seen:
            continue
        seen.add(t)
        out.append(f"{prefix}{len(out) + 1}\t{root(t, rng.randrange(2))}")
    return out


def leaves(tree):
    return [m.group(2) for m in LEAF.finditer(tree)]


ROUND_TRIP_EXTRAS = [
    "( (S (NP-SBJ-1 (DT The) (NN dog)) (VP (VBZ barks)) (. .)))",
    "(ROOT (S (NP-SBJ (-NONE- *)) (VP (VB Go) (ADVP-DIR (RB home))) (. .)))",
    "(ROOT  (S   (NP (NNP Mary))   (VP (VBD said) (SBAR (-NONE- 0) (S (NP (PRP it)) (VP (VBD rained))))) (. .)))",
    "(ROOT (S (NP (DT The) (NN price)) (VP (VBD fell) (NP-EXT (CD 5) (NN %))) (. .)))",
    "(ROOT (FRAG (NP (-LRB- -LRB-) (NN see) (-RRB- -RRB-)) (. .)))",
]


def round_trip_sample(seed):
    rng = random.Random(seed)
    g = Grammar(rng)
    lines = list(ROUND_TRIP_EXTRAS)
    while len(lines) < 50:
        t = g.sentence()
        if rng.random() < 0.3:
            t = t.replace("(NP ", "(NP-SBJ ", 1)
        if rng.random() < 0.3:
            t = t.replace(" (", "  (", 3)
        lines.append(root(t, rng.randrange(2)))
    return lines


def clean_corpus(seed, n):
    rng = random.Random(seed)
    g = Grammar(rng)
    out = []
    seen = set()
    while len(out) < n:
        s = " ".join(leaves(g.sentence()))
        if s not in seen:
            seen.add(s)
            out.append(f"c{len(out) + 1}\t{s}")
    return out


def shuffled_pairs(seed, n):
    """External dataset: original sentences vs. adjacent-word swaps."""
    rng = random.Random(seed)
    g = Grammar(rng)
    rows = ["text\tlabel"]
    for i in range(n):
        words = leaves(g.sentence())
        while len(words) < 4:
            words = leaves(g.sentence())
        if i % 2 == 1:
            j = rng.randrange(len(words) - 2)
            words[j], words[j + 1] = words[j + 1], words[j]
            rows.append(" ".join(words) + "\t1")
        else:
            rows.append(" ".join(words) + "\t0")
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "crates/core/tests/fixtures"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "corpus.parse": corpus(20211, 3000, "s"),
        "pipeline.parse": corpus(7, 200, "p"),
        "roundtrip.parse": round_trip_sample(99),
        "clean.txt": clean_corpus(4242, 120),
        "bshift_toy.tsv": shuffled_pairs(31337, 160),
    }
    for name, lines in files.items():
        (out / name).write_text("\n".join(lines) + "\n", encoding="utf-8")
        print(f"{name}: {len(lines)} lines")


if __name__ == "__main__":
    main()
