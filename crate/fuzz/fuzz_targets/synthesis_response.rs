#![no_main]

use forge_core::genclient::{chunk_chapter, parse_synthesis_response};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (triples, _) = parse_synthesis_response(text);
    for t in &triples {
        assert!(!t.source.trim().is_empty() && !t.target.trim().is_empty());
    }
    let chunks = chunk_chapter(text);
    if !text.trim().is_empty() {
        assert!(!chunks.is_empty());
    }
});
