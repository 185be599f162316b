use fusedstyle_core::corpus::{read_conversations, read_style, write_conversations, write_style, RawPair};
use proptest::prelude::*;

fn word() -> impl Strategy<Value = String> {
    "[a-z,.?!']{1,6}"
}

fn sentence() -> impl Strategy<Value = Vec<String>> {
    proptest::collection::vec(word(), 1..8)
}

fn pair() -> impl Strategy<Value = RawPair> {
    (proptest::collection::vec(sentence(), 1..4), sentence())
        .prop_map(|(context, response)| RawPair { context, response })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conversations_survive_write_then_read(pairs in proptest::collection::vec(pair(), 0..20)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.tsv");
        write_conversations(&p, &pairs).unwrap();
        let loaded = read_conversations(&p).unwrap();
        prop_assert_eq!(loaded.rejected, 0);
        prop_assert_eq!(&loaded.items, &pairs);
        write_conversations(&p, &loaded.items).unwrap();
        prop_assert_eq!(read_conversations(&p).unwrap().items, pairs);
    }

    #[test]
    fn style_text_survives_write_then_read(sentences in proptest::collection::vec(sentence(), 0..20)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.txt");
        write_style(&p, &sentences).unwrap();
        let loaded = read_style(&p).unwrap();
        prop_assert_eq!(loaded.rejected, 0);
        prop_assert_eq!(loaded.items, sentences);
    }
}
