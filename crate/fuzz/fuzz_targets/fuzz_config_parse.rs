//! Arbitrary text through the config parser and the default-filling
//! resolution step: errors are fine, panics are not.

#![no_main]

use ilrma_cli::config::PartialConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(partial) = PartialConfig::parse_str(text) {
            let _ = partial.resolve();
        }
    }
});
