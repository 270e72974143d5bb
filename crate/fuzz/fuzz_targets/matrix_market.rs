#![no_main]

use libfuzzer_sys::fuzz_target;

// The parser must reject arbitrary bytes with an Err, never a panic or an
// unbounded allocation.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = sketchlsr::io::parse_matrix_market(text);
    }
});
