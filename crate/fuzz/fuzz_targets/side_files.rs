#![no_main]

use forge_core::genclient::{parse_rejected_jsonl, SidecarEmbeddings};
use forge_core::select::FrequencyMatrix;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_rejected_jsonl(text);
    let _ = SidecarEmbeddings::parse(text);
    if let Ok(m) = FrequencyMatrix::from_json(text) {
        assert!(m.validate().is_ok());
    }
});
