//! Arbitrary bytes through the WAV decoder: decoding must never panic, and
//! whatever decodes must survive an encode/decode round trip exactly (the
//! decoder rejects non-finite samples, so the encoder cannot refuse).

#![no_main]

use ilrma::wav::{encode_wav, parse_wav};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(wav) = parse_wav(data) {
        let bytes = encode_wav(&wav).expect("decoded audio re-encodes");
        let back = parse_wav(&bytes).expect("re-encoded audio decodes");
        assert_eq!(back.sample_rate, wav.sample_rate);
        assert_eq!(back.samples, wav.samples);
    }
});
