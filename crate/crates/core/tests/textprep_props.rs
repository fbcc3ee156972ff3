use proptest::prelude::*;
use sidn_core::corpus::{neutral_word, RISK_WORDS};
use sidn_core::textprep::*;

#[test]
fn porter_matches_reference_vocabulary() {
    let mut r = csv::Reader::from_path(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/porter_golden.csv")).unwrap();
    let mut n = 0;
    let mut wrong = Vec::new();
    for row in r.records() {
        let row = row.unwrap();
        if stem(&row[0]) != row[1] {
            wrong.push(format!("{} -> {} (expected {})", &row[0], stem(&row[0]), &row[1]));
        }
        n += 1;
    }
    assert_eq!(n, 6063);
    assert!(wrong.is_empty(), "{} mismatches, first: {:?}", wrong.len(), &wrong[..wrong.len().min(5)]);
}

#[test]
fn stem_is_idempotent_on_the_acceptance_words() {
    let mut words: Vec<String> = ["running", "run", "sky", "caresses", "hopeless", "lonely", "feeling", "crying"]
        .iter()
        .map(|w| w.to_string())
        .collect();
    words.extend((0..500).map(neutral_word));
    for w in words {
        let s = stem(&w);
        assert_eq!(stem(&s), s, "{w}");
    }
    // A second pass can strip again: goodbye -> goodby -> goodbi, overdose -> overdos -> overdo.
    let moving: Vec<&str> = RISK_WORDS.iter().copied().filter(|w| stem(&stem(w)) != stem(w)).collect();
    assert_eq!(moving, ["goodbye", "overdose"]);
}

#[test]
fn golden_composition() {
    let stop = StopWords::shipped();
    assert_eq!(tokens_of("I was Running!! and crying 24/7...", &stop), vec!["run", "cry"]);
    let vocab = Vocabulary::build(&[vec!["run".to_string()]], 10);
    let doc = RawDocument { text: "Running!!".into(), label: None };
    assert_eq!(preprocess_document(&doc, &vocab, &stop, 3).unwrap().indices, vec![0, 0, 1]);
    let long = RawDocument { text: "run ".repeat(200), label: Some(1) };
    let e = preprocess_document(&long, &vocab, &stop, DEFAULT_MAXLEN).unwrap();
    assert_eq!((e.indices.len(), e.n_real), (100, 100));
}

#[test]
fn vocabulary_csv_round_trips() {
    let corpus: Vec<TokenList> =
        vec![vec!["b".into(), "a".into(), "b".into()], vec!["c".into(), "a".into(), "b".into(), "d".into()]];
    let v = Vocabulary::build(&corpus, 3);
    let mut buf = Vec::new();
    v.write_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf.clone()).unwrap(), "word,index,frequency\nb,1,3\na,2,2\nc,3,1\n");
    let back = Vocabulary::read_csv(&buf[..]).unwrap();
    assert_eq!(back, v);
}

fn word() -> impl Strategy<Value = String> {
    "[a-e]{1,3}"
}

proptest! {
    #[test]
    fn normalize_is_idempotent_and_clean(s in "\\PC{0,40}") {
        let n = normalize(&s);
        prop_assert_eq!(normalize(&n), n.clone());
        prop_assert!(n.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b' '));
        prop_assert!(!n.contains("  ") && !n.starts_with(' ') && !n.ends_with(' '));
    }

    #[test]
    fn tokens_have_no_stopwords_or_numbers(s in "[a-zA-Z0-9 ,.!]{0,60}") {
        let stop = StopWords::shipped();
        for t in remove_stopwords(tokenize(&normalize(&s)), &stop) {
            prop_assert!(!stop.contains(&t));
            prop_assert!(!t.bytes().all(|b| b.is_ascii_digit()));
        }
    }

    #[test]
    fn padded_sequences_have_a_zero_prefix(xs in prop::collection::vec(1u32..50, 0..30), maxlen in 1usize..25) {
        let e = pad_truncate(&xs, maxlen).unwrap();
        prop_assert_eq!(e.indices.len(), maxlen);
        let zeros = e.indices.iter().take_while(|&&i| i == 0).count();
        prop_assert_eq!(zeros, maxlen - e.n_real);
        prop_assert!(e.indices[zeros..].iter().all(|&i| i != 0));
        prop_assert_eq!(&e.indices[zeros..], &xs[xs.len() - e.n_real..]);
    }

    #[test]
    fn vocabulary_is_ranked_and_encode_stays_in_range(
        corpus in prop::collection::vec(prop::collection::vec(word(), 0..8), 0..8),
        max_size in 1usize..10,
    ) {
        let v = Vocabulary::build(&corpus, max_size);
        prop_assert_eq!(&Vocabulary::build(&corpus, max_size), &v);
        prop_assert!(v.len() <= max_size);
        for i in 1..v.len() as u32 {
            prop_assert!(v.frequency(i).unwrap() >= v.frequency(i + 1).unwrap());
        }
        prop_assert!(v.word(0).is_none());
        for doc in &corpus {
            for i in encode(doc, &v) {
                prop_assert!(i >= 1 && i as usize <= v.len());
            }
        }
    }
}
