#![no_main]

use libfuzzer_sys::fuzz_target;
use sketchlsr::harness::ExperimentConfig;

// Deserialization plus semantic validation of experiment configs; both
// must be total over arbitrary input.
fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(config) = serde_json::from_str::<ExperimentConfig>(text) {
            let _ = config.validate();
        }
    }
});
