#![no_main]

use beatbench_core::cost::CountMode;
use beatbench_core::dsl::ModelSpec;
use beatbench_core::RngStream;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(spec) = text.parse::<ModelSpec>() else { return };
    let canonical = spec.to_string();
    assert_eq!(canonical.parse::<ModelSpec>().expect("canonical form parses"), spec);
    if let Ok(model) = spec.build(&mut RngStream::new(0)) {
        let _ = model.total_macs(CountMode::Exact);
        let _ = model.total_macs(CountMode::Formula);
    }
});
