//! Replays the checked-in fuzz corpus through the same properties the fuzz
//! targets assert.

use std::fs;
use std::path::PathBuf;

use arpam::config::RunConfig;
use arpam::io::parse_trace_csv;

fn seeds(target: &str) -> Vec<(PathBuf, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p| {
            let text = fs::read_to_string(&p).unwrap();
            (p, text)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "empty corpus {}", dir.display());
    out
}

#[test]
fn config_corpus() {
    let mut accepted = 0;
    for (path, text) in seeds("parse_config") {
        if let Ok(cfg) = RunConfig::parse(&text) {
            let again = RunConfig::parse(&cfg.to_toml()).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(again, cfg, "{}", path.display());
            accepted += 1;
        }
    }
    assert!(accepted >= 3);
}

#[test]
fn trace_corpus() {
    let mut accepted = 0;
    for (_, text) in seeds("parse_trace_csv") {
        if let Ok(t) = parse_trace_csv(&text) {
            assert!(t.samples.len() >= 2 && t.sampling_frequency.is_finite() && t.sampling_frequency > 0.0);
            accepted += 1;
        }
    }
    assert_eq!(accepted, 2);
}
