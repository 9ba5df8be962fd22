#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(trace) = arpam::io::parse_trace_csv(text) {
            assert!(trace.samples.len() >= 2);
            assert!(trace.sampling_frequency > 0.0 && trace.sampling_frequency.is_finite());
        }
    }
});
