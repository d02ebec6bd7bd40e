use fincorpus::corpus::{LabeledSentence, Source};
use fincorpus::tokenization::{
    length_histogram, HistogramReport, VocabError, Vocabulary, WordPiece, UNK_TOKEN,
};
use fincorpus::SentimentLabel;
use proptest::prelude::*;
use std::sync::OnceLock;

fn base() -> &'static WordPiece {
    static WP: OnceLock<WordPiece> = OnceLock::new();
    WP.get_or_init(|| WordPiece::new(Vocabulary::bundled_uncased()))
}

#[test]
fn bundled_vocab_shape() {
    let v = base().vocab();
    assert_eq!(v.len(), 30522);
    assert_eq!(v.id("[PAD]"), Some(0));
    assert_eq!(v.id("[UNK]"), Some(100));
    assert_eq!(v.id("[CLS]"), Some(101));
    assert_eq!(v.id("[SEP]"), Some(102));
    assert_eq!(v.id("[MASK]"), Some(103));
    assert_eq!(v.token(1996), Some("the"));
}

#[test]
fn small_vocab_file() {
    let v = Vocabulary::load(b"[PAD]\n[UNK]\n[CLS]\n[SEP]\nprofit\n").unwrap();
    assert_eq!(v.len(), 5);
    assert_eq!(v.id("profit"), Some(4));
    assert!(matches!(
        Vocabulary::load(b"[UNK]\nprofit\nprofit\n"),
        Err(VocabError::DuplicateToken(t)) if t == "profit"
    ));
    assert!(matches!(Vocabulary::load(b"profit\n"), Err(VocabError::MissingUnk)));
}

#[test]
fn real_vocab_examples() {
    let wp = base();
    assert_eq!(wp.tokenize("Profit rose."), ["profit", "rose", "."]);
    assert_eq!(
        wp.tokenize("Operating profit rose to EUR 13.1 mn from EUR 8.7 mn ."),
        ["operating", "profit", "rose", "to", "eu", "##r", "13", ".", "1", "mn", "from", "eu", "##r", "8", ".", "7", "mn", "."]
    );
    assert_eq!(wp.tokenize("Nokia's NÉT sales"), ["nokia", "'", "s", "net", "sales"]);
    assert_eq!(wp.tokenize("unaffable"), ["una", "##ffa", "##ble"]);
    assert_eq!(wp.tokenize(""), Vec::<String>::new());
    assert_eq!(wp.token_count("", false), 0);
    assert_eq!(wp.token_count("", true), 2);
    assert_eq!(wp.token_count("Profit rose.", true), 5);
    let long = "x".repeat(101);
    assert_eq!(wp.tokenize(&long), [UNK_TOKEN]);
}

#[test]
fn histogram_example() {
    let h = HistogramReport::from_counts(&[2, 2, 10], 5).unwrap();
    assert_eq!(h.bin_counts, [2, 0, 1]);
    assert_eq!(h.bin_edges, [0, 5, 10, 15]);
    assert_eq!((h.min_tokens, h.max_tokens, h.n), (2, 10, 3));
    let csv = h.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("bin_start,bin_end,count"));
    assert_eq!(lines.next(), Some("0,5,2"));
    assert!(HistogramReport::from_counts(&[1], 0).is_err());
}

#[test]
fn histogram_counts_exclude_specials() {
    let recs: Vec<LabeledSentence> = ["Profit rose.", "Sales fell sharply in Finland ."]
        .iter()
        .enumerate()
        .map(|(i, t)| LabeledSentence {
            id: i.to_string(),
            text: t.to_string(),
            label: SentimentLabel::Neutral,
            source: Source::Phrasebank,
            n_tokens: None,
        })
        .collect();
    let h = length_histogram(&recs, base(), 1).unwrap();
    assert_eq!((h.min_tokens, h.max_tokens), (3, 6));
}

fn words() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop_oneof![
            "[a-z]{1,12}",
            "[A-Z][a-z]{0,8}",
            "[0-9]{1,4}",
            Just("EUR".to_string()),
            Just("mn".to_string()),
            "[.,;%()$-]",
            "[a-zäöéü]{1,10}",
            "[\u{4e00}-\u{4e10}]{1,3}",
        ],
        0..25,
    )
    .prop_map(|w| w.join(" "))
}

proptest! {
    #[test]
    fn tokens_are_deterministic_and_in_vocab(text in words()) {
        let wp = base();
        let a = wp.tokenize(&text);
        prop_assert_eq!(&a, &wp.tokenize(&text));
        for t in &a {
            prop_assert!(wp.vocab().contains(t) || t == UNK_TOKEN);
        }
        prop_assert_eq!(wp.token_count(&text, true), a.len() + 2);
    }

    #[test]
    fn whitespace_join_is_subadditive(a in words(), b in words()) {
        let wp = base();
        let joined = format!("{a} {b}");
        prop_assert!(wp.token_count(&joined, false) <= wp.token_count(&a, false) + wp.token_count(&b, false));
    }

    #[test]
    fn histogram_counts_sum_to_n(counts in prop::collection::vec(0usize..600, 1..200), w in 1usize..64) {
        let h = HistogramReport::from_counts(&counts, w).unwrap();
        prop_assert_eq!(h.bin_counts.iter().sum::<usize>(), counts.len());
        prop_assert_eq!(h.bin_edges.len(), h.bin_counts.len() + 1);
        prop_assert!(h.bin_edges.windows(2).all(|e| e[1] == e[0] + w));
        prop_assert!(*h.bin_edges.last().unwrap() > h.max_tokens);
        prop_assert!(h.min_tokens as f64 <= h.mean_tokens && h.mean_tokens <= h.max_tokens as f64);
    }
}
