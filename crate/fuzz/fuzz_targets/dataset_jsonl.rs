#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = inspo::data::parse_dataset(data, None);
    let xor = inspo::envs::build_xor();
    if let Ok(d) = inspo::data::parse_dataset(data, Some(&xor)) {
        let _ = inspo::data::estimate_behavior(&xor, &d);
    }
});
