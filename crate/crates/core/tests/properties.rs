use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use synprobe::dataset::{
    build_probing_dataset, subsample_for_joint_training, write_dataset_tsv, Label, Split, SplitRatios,
};
use synprobe::embed::{
    bow_embed, filter_content_words, read_embeddings, write_embeddings, ContentWordPolicy, EmbeddingTable,
    WordVectorTable,
};
use synprobe::experiments::{overlap_fractions, LedgerEntry, ResultsLedger, Setting};
use synprobe::perturb::{
    perturb, perturb_agree_shift, InflectionTable, PerturbationKind, PerturbationRecord,
};
use synprobe::probe::{evaluate, read_probe, train_probe, write_probe, LabeledSet, Network, ProbeConfig, ProbeKind, TrainedProbe};
use synprobe::treebank::{
    find_nodes, parse_bracketed, read_corpus, serialize_bracketed, Child, ConstituencyTree, CorpusLine, Token,
};

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{}/tests/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn corpus() -> Vec<CorpusLine> {
    read_corpus(&fixture("corpus.parse")).unwrap()
}

// ---- trees ----

fn arb_tree() -> impl Strategy<Value = ConstituencyTree> {
    let word = prop::sample::select(vec!["the", "dog", "runs", ".", "A", "-LRB-", "5", "%", "it's"]);
    let pos = prop::sample::select(vec!["DT", "NN", "VBZ", ".", "-NONE-", "PRP$", "CD"]);
    let phrase = prop::sample::select(vec!["S", "NP", "VP", "PP", "SBAR", "ADJP", "PRT"]);
    let leaf = (pos, word).prop_map(|(p, w)| ConstituencyTree::preterminal(p, w));
    leaf.prop_recursive(4, 32, 4, move |inner| {
        (phrase.clone(), prop::collection::vec(inner, 1..4))
            .prop_map(|(l, kids)| ConstituencyTree::new(l, kids.into_iter().map(Child::Tree).collect()))
    })
}

/// Independent canonicalizer: single spaces, functional tags stripped.
fn canonical(text: &str) -> String {
    let spaced = text.replace('(', " ( ").replace(')', " ) ");
    let atoms: Vec<&str> = spaced.split_whitespace().collect();
    let mut pieces: Vec<String> = Vec::new();
    let mut i = 0;
    while i < atoms.len() {
        match atoms[i] {
            "(" => {
                let next = atoms.get(i + 1).copied().unwrap_or(")");
                if next == "(" || next == ")" {
                    pieces.push("(".into());
                } else {
                    let label = if next.len() > 1 && next.starts_with('-') && next.ends_with('-') {
                        next
                    } else {
                        let cut = next[1..].find(['-', '=']).map_or(next.len(), |k| k + 1);
                        &next[..cut]
                    };
                    pieces.push(format!("({label}"));
                    i += 1;
                }
            }
            a => pieces.push(a.to_string()),
        }
        i += 1;
    }
    let mut out = String::new();
    for p in pieces {
        if p != ")" && !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&p);
    }
    out
}

#[test]
fn messy_fixture_matches_independent_canonicalizer() {
    for line in fixture("roundtrip.parse").lines() {
        let tree = parse_bracketed(line).unwrap_or_else(|e| panic!("{line}: {e}"));
        let s = serialize_bracketed(&tree);
        assert_eq!(s, canonical(line), "{line}");
        assert_eq!(parse_bracketed(&s).unwrap(), tree);
    }
}

fn preorder_labels(t: &ConstituencyTree, out: &mut Vec<String>) {
    out.push(t.label().to_string());
    for (_, sub) in t.subtrees() {
        preorder_labels(sub, out);
    }
}

proptest! {
    #[test]
    fn parse_inverts_serialize(t in arb_tree()) {
        let s = serialize_bracketed(&t);
        prop_assert_eq!(parse_bracketed(&s).unwrap(), t.clone());
        prop_assert_eq!(canonical(&s), s);
    }

    #[test]
    fn yield_indices_are_contiguous(t in arb_tree()) {
        let t = parse_bracketed(&serialize_bracketed(&t)).unwrap();
        let idx: Vec<usize> = t.tokens().iter().map(|k| k.index()).collect();
        prop_assert_eq!(idx, (0..t.len()).collect::<Vec<_>>());
    }

    #[test]
    fn find_nodes_is_preorder(t in arb_tree()) {
        let all = find_nodes(&t, |_| true);
        let mut labels = Vec::new();
        preorder_labels(&t, &mut labels);
        let got: Vec<String> = all.iter().map(|p| t.get(p).unwrap().label().to_string()).collect();
        prop_assert_eq!(got, labels);
        for w in all.windows(2) {
            prop_assert!(w[0].indices() < w[1].indices());
        }
    }
}

// ---- perturbations ----

#[test]
fn agree_shift_is_an_involution() {
    for line in corpus() {
        let Ok(once) = perturb_agree_shift(&line.tree) else { continue };
        let twice = perturb_agree_shift(&once.tree).expect("flipped sentence still has a verb to flip");
        assert_eq!(twice.tree.sentence(), line.tree.sentence(), "{}", line.id);
    }
}

#[test]
fn perturbation_is_deterministic_and_never_empty() {
    for line in corpus().iter().take(500) {
        for kind in PerturbationKind::ALL {
            let a = perturb(kind, &line.tree, &line.id);
            let b = perturb(kind, &line.tree, &line.id);
            assert_eq!(a, b);
            if let Ok(r) = a {
                assert!(r.n_modifications >= 1);
                assert_ne!(r.original, r.perturbed);
            }
        }
    }
}

fn is_nominal(l: &str) -> bool {
    matches!(l, "NN" | "NNS" | "NNP" | "NNPS")
}

fn is_adjectival(t: &ConstituencyTree) -> bool {
    matches!(t.label(), "JJ" | "JJR" | "JJS" | "ADJP")
}

/// In every NP with exactly one nominal child, no adjective sits right
/// before the noun after MOD_NOUN has run.
#[test]
fn mod_noun_leaves_no_prenominal_adjective() {
    for line in corpus() {
        let Ok(out) = PerturbationKind::ModNoun.apply(&line.tree) else { continue };
        for path in find_nodes(&out.tree, |n| n.label() == "NP") {
            let np = out.tree.get(&path).unwrap();
            let kids: Vec<&ConstituencyTree> = np.subtrees().map(|(_, t)| t).collect();
            let nominal: Vec<usize> =
                (0..kids.len()).filter(|&i| kids[i].is_preterminal() && is_nominal(kids[i].label())).collect();
            if let [head] = nominal[..] {
                assert!(head == 0 || !is_adjectival(kids[head - 1]), "{}: {}", line.id, out.tree);
            }
        }
    }
}

#[test]
fn inflection_table_round_trips() {
    let t = InflectionTable::shared();
    let mut thirds = BTreeSet::new();
    let mut bases = BTreeSet::new();
    for (third, base) in t.irregular_pairs() {
        assert!(thirds.insert(third), "{third} repeated");
        assert!(bases.insert(base) || base == "are", "{base} repeated");
        assert_eq!(t.to_third_singular(&t.to_base(third)), third);
    }
    for v in ["rides", "watches", "carries", "fixes", "goes", "plays", "misses", "does", "has", "is"] {
        assert_eq!(t.to_third_singular(&t.to_base(v)), v, "{v}");
    }
}

// ---- embeddings ----

fn word_vectors(words: &[&str], dim: usize) -> WordVectorTable {
    let entries: HashMap<String, Vec<f32>> = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.to_string(), (0..dim).map(|j| ((i * 7 + j * 3) % 11) as f32 * 0.37 - 1.3).collect()))
        .collect();
    WordVectorTable::from_entries(dim, entries).unwrap()
}

const VOCAB: &[&str] = &["the", "dog", "cat", "runs", "big", "red", "sees", "a", "bike", "."];

proptest! {
    #[test]
    fn bow_is_permutation_invariant(
        words in prop::collection::vec(prop::sample::select(VOCAB.to_vec()), 1..30),
        seed in any::<u64>(),
    ) {
        let wv = word_vectors(VOCAB, 7);
        let mut shuffled = words.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(bow_embed(&words, &wv).vector, bow_embed(&shuffled, &wv).vector);
    }

    #[test]
    fn content_filter_is_a_subsequence(
        tagged in prop::collection::vec(
            (prop::sample::select(vec!["is", "dog", "the", "ran", "has", "quickly", "3"]),
             prop::sample::select(vec!["VBZ", "NN", "DT", "VBD", "RB", "CD", "IN"])),
            1..20),
    ) {
        let tokens: Vec<Token> = tagged.iter().enumerate().map(|(i, (w, p))| Token::new(*w, *p, i)).collect();
        if let Ok(kept) = filter_content_words(&tokens, &ContentWordPolicy::default()) {
            let mut it = tokens.iter();
            for k in &kept {
                prop_assert!(it.any(|t| t == k), "{:?} not a subsequence", kept);
            }
        }
    }

    #[test]
    fn embedding_tables_round_trip(
        dim in 1usize..512,
        rows in 1usize..6,
        seed in any::<u64>(),
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = EmbeddingTable::new(dim);
        for r in 0..rows {
            let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1e3f32..1e3) * 10f32.powi(rng.random_range(-8..3))).collect();
            table.insert(format!("ex{r}#n"), v).unwrap();
        }
        prop_assert_eq!(read_embeddings(&write_embeddings(&table)).unwrap(), table);
    }
}

// ---- datasets ----

fn synthetic_records(n: usize, dup_every: usize) -> Vec<PerturbationRecord> {
    (0..n)
        .map(|i| {
            let j = if dup_every > 1 && i % dup_every == dup_every - 1 { i - 1 } else { i };
            PerturbationRecord {
                source_id: format!("s{i}"),
                kind: PerturbationKind::VerbOb,
                n_modifications: 1,
                original: format!("w{j} rides"),
                perturbed: format!("rides w{j}"),
                original_pos: vec!["NN".into(), "VBZ".into()],
                perturbed_pos: vec!["VBZ".into(), "NN".into()],
            }
        })
        .collect()
}

proptest! {
    #[test]
    fn datasets_are_balanced_colocated_disjoint_and_deterministic(
        n in 1usize..300,
        dup_every in 0usize..7,
        seed in any::<u64>(),
        train in 0.0f64..1.0,
    ) {
        let rest = 1.0 - train;
        let ratios = SplitRatios::new(train, rest / 2.0, rest - rest / 2.0).unwrap();
        let recs = synthetic_records(n, dup_every);
        let ds = build_probing_dataset("VERB_OB", &recs, ratios, seed).unwrap();
        for split in [Split::Train, Split::Dev, Split::Test] {
            let normal = ds.split(split).filter(|e| e.label == Label::Normal).count();
            let perturbed = ds.split(split).filter(|e| e.label == Label::Perturbed).count();
            prop_assert_eq!(normal, perturbed);
        }
        let mut pair: HashMap<&str, Split> = HashMap::new();
        let mut text: HashMap<&str, Split> = HashMap::new();
        for e in &ds.examples {
            prop_assert_eq!(*pair.entry(&e.pair_id).or_insert(e.split), e.split);
            prop_assert_eq!(*text.entry(&e.text).or_insert(e.split), e.split);
        }
        let again = build_probing_dataset("VERB_OB", &recs, ratios, seed).unwrap();
        prop_assert_eq!(write_dataset_tsv(&ds), write_dataset_tsv(&again));
    }

    #[test]
    fn joint_subsample_has_requested_size(
        sizes in prop::collection::vec(1usize..80, 1..5),
        frac in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let sources: Vec<Vec<(usize, Label)>> = sizes
            .iter()
            .enumerate()
            .map(|(s, &n)| (0..2 * n).map(|i| (s * 1000 + i, Label::from_index(i % 2))).collect())
            .collect();
        let k = sources.len();
        let min = sources.iter().map(Vec::len).min().unwrap();
        let total = ((min * k) as f64 * frac) as usize;
        let wrapped: Vec<Vec<Item>> = sources.iter().map(|s| s.iter().map(|&(id, l)| Item(id, l)).collect()).collect();
        let refs: Vec<&[Item]> = wrapped.iter().map(Vec::as_slice).collect();
        let out = subsample_for_joint_training(&refs, total, seed).unwrap();
        prop_assert_eq!(out.len(), total);
        let ids: BTreeSet<usize> = out.iter().map(|i| i.0).collect();
        prop_assert_eq!(ids.len(), total);
        for (s, src) in wrapped.iter().enumerate() {
            let quota = total / k + usize::from(s < total % k);
            let taken: Vec<&Item> = out.iter().filter(|i| i.0 / 1000 == s).collect();
            prop_assert_eq!(taken.len(), quota);
            let normal = taken.iter().filter(|i| i.1 == Label::Normal).count();
            prop_assert!(normal.abs_diff(quota - normal) <= 1);
            prop_assert!(taken.len() <= src.len());
        }
        prop_assert_eq!(&out, &subsample_for_joint_training(&refs, total, seed).unwrap());
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Item(usize, Label);

impl synprobe::dataset::Labeled for Item {
    fn label(&self) -> Label {
        self.1
    }
}

// ---- probes ----

fn random_set(n: usize, dim: usize, seed: u64) -> LabeledSet {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = LabeledSet::new(dim);
    for i in 0..n {
        let x: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let label = Label::from_index(usize::from(x[0] + 0.5 * x[dim - 1] > 0.0));
        set.push(format!("r{i}"), &x, label).unwrap();
    }
    set
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn probes_round_trip_through_text(dim in 1usize..20, hidden in 1usize..12, mlp in any::<bool>(), seed in any::<u64>()) {
        let kind = if mlp { ProbeKind::Mlp } else { ProbeKind::Lr };
        let config = ProbeConfig { kind, hidden_units: hidden, seed, ..ProbeConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let probe = TrainedProbe {
            network: Network::init(kind, dim, hidden, &mut rng),
            config,
            selected_lr: 1e-3,
            dev_accuracy: 0.625,
            train_task: "MOD_NOUN".into(),
        };
        prop_assert_eq!(read_probe(&write_probe(&probe)).unwrap(), probe);
    }

    #[test]
    fn overlap_fractions_are_ordered(
        sets in prop::collection::vec(prop::collection::btree_set(0u8..30, 0..15), 1..5),
    ) {
        let owned: Vec<Vec<String>> = sets.iter().map(|s| s.iter().map(|i| format!("c{i}")).collect()).collect();
        let refs: Vec<&[String]> = owned.iter().map(Vec::as_slice).collect();
        let (union, two, all) = overlap_fractions(&refs);
        let expected: BTreeSet<&u8> = sets.iter().flatten().collect();
        prop_assert_eq!(union, expected.len());
        prop_assert!((0.0..=1.0).contains(&two) && (0.0..=1.0).contains(&all));
        // With a single set every id is in "all" sets but none in two.
        if sets.len() > 1 {
            prop_assert!(all <= two);
        }
    }

    #[test]
    fn ledger_round_trips(accs in prop::collection::vec(0.0f64..=1.0, 1..8), seed in 0u64..4) {
        let mut ledger = ResultsLedger::new();
        for (i, a) in accs.iter().enumerate() {
            ledger.push(LedgerEntry {
                encoder: "bow".into(),
                train_tasks: vec![["VERB_OB", "MOD_NOUN"][i % 2].into()],
                test_task: "SUBN_OBN".into(),
                setting: Setting::Transfer,
                probe_kind: ProbeKind::Lr,
                seed,
                accuracy: *a,
                n: 10 + i,
                selected_lr: 1e-2,
            });
        }
        prop_assert_eq!(ResultsLedger::parse(&ledger.to_tsv()).unwrap(), ledger);
    }
}

#[test]
fn training_is_deterministic_and_restores_best_dev() {
    let (train, dev, test) = (random_set(300, 4, 1), random_set(80, 4, 2), random_set(80, 4, 3));
    let cfg = ProbeConfig { hidden_units: 16, max_epochs: 12, ..ProbeConfig::mlp(9) };
    let a = train_probe(&train, &dev, &cfg, "t").unwrap();
    let b = train_probe(&train, &dev, &cfg, "t").unwrap();
    assert_eq!(a.selected_lr.to_bits(), b.selected_lr.to_bits());
    assert_eq!(a, b);
    assert_eq!(evaluate(&a, &test).unwrap().accuracy, evaluate(&b, &test).unwrap().accuracy);
    assert_eq!(evaluate(&a, &dev).unwrap().accuracy, a.dev_accuracy);
}

#[test]
fn mlp_keeps_up_with_lr_on_linear_data() {
    let (train, dev) = (random_set(600, 3, 4), random_set(200, 3, 5));
    let lr = train_probe(&train, &dev, &ProbeConfig::lr(3), "lin").unwrap();
    let mlp = train_probe(&train, &dev, &ProbeConfig { hidden_units: 32, ..ProbeConfig::mlp(3) }, "lin").unwrap();
    assert!(mlp.dev_accuracy >= lr.dev_accuracy - 0.02, "MLP {} LR {}", mlp.dev_accuracy, lr.dev_accuracy);
}
