#![no_main]

use forge_core::transliterate::{transliterate, CompiledRules};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let rules = CompiledRules::v1();
    let once = transliterate(text, &rules).output;
    assert_eq!(transliterate(&once, &rules).output, once);
});
