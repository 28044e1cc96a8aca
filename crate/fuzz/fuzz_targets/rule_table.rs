#![no_main]

use forge_core::transliterate::{transliterate, RuleTable};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(table) = RuleTable::from_json(text) else { return };
    if let Ok(rules) = table.compile() {
        let _ = transliterate("kifak ya 7abibi, shu 3am ta3mel?", &rules);
    }
});
