#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use soott::experiments::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // Parsing validates; an accepted config must validate again unchanged.
    if let Ok(cfg) = ExperimentConfig::from_json(text, Path::new("/nonexistent")) {
        cfg.validate().unwrap();
    }
});
