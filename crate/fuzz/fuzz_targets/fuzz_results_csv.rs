//! Arbitrary text through the results parser: whatever parses must render
//! and reparse to the same canonical form (string comparison, so NaN fields
//! round-trip too), and summarizing must never panic.

#![no_main]

use ilrma_cli::results;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(rows) = results::parse(text, "fuzz") {
            let rendered = results::render(&rows);
            let again = results::parse(&rendered, "fuzz").expect("rendered results reparse");
            assert_eq!(results::render(&again), rendered);
            let _ = results::summarize(&rows);
        }
    }
});
