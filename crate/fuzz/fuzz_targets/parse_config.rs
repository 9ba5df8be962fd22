#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = arpam::config::RunConfig::parse(text) {
            // anything accepted must survive its own serialization
            let again = arpam::config::RunConfig::parse(&cfg.to_toml()).expect("round trip");
            assert_eq!(again, cfg);
        }
    }
});
