#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(policy) = inspo::FactoredPolicy::from_json(text) {
            let xor = inspo::envs::build_xor();
            if policy.check_shape(&xor).is_ok() {
                let _ = inspo::analysis::exact_return(&xor, &policy);
            }
        }
    }
});
