#![no_main]

use forge_core::instruct::{parse, render, Template};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let t = Template::v1();
    if let Ok(rec) = parse(text, &t) {
        // Anything that parses must render and parse back to itself.
        let again = render(&rec, &t).expect("parsed record renders");
        assert_eq!(parse(&again, &t).expect("rendered record parses"), rec);
    }
});
