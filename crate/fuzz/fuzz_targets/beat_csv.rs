#![no_main]

use beatbench_core::data::{parse_csv, to_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ds) = parse_csv(text) {
        // anything accepted must survive a write/read cycle unchanged
        let again = parse_csv(&to_csv(&ds)).expect("re-parse of written CSV");
        assert_eq!(again, ds);
    }
});
