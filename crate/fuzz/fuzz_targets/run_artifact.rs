#![no_main]

use beatbench::artifact::{artifacts_from_json, artifacts_to_json};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(all) = artifacts_from_json(text) {
        let once = artifacts_to_json(&all);
        let again = artifacts_from_json(&once).expect("re-parse of written artifacts");
        assert_eq!(artifacts_to_json(&again), once);
        for a in &all {
            let _ = a.row();
            let _ = a.to_json();
        }
    }
});
