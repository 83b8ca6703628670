#![no_main]
use std::path::Path;

use becsim_core::config::parse_config;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(src) = std::str::from_utf8(data) {
        // Table paths never resolve, so only the TOML layer is exercised.
        let _ = parse_config(src, Path::new("/nonexistent"));
    }
});
