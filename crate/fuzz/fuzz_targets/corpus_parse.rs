#![no_main]

use forge_core::corpus::{dedup, parse_corpus, CorpusFormat, Origin};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for format in [CorpusFormat::TsvPair, CorpusFormat::Jsonl] {
        if let Ok(corpus) = parse_corpus("fuzz", text, format, Origin::Other) {
            assert!(!corpus.is_empty());
            let once = dedup(&corpus);
            assert_eq!(dedup(&once), once);
        }
    }
});
