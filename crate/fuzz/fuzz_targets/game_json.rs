#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(game) = inspo::TabularGame::from_json(text) {
            let again = inspo::TabularGame::from_json(&game.to_json()).expect("round trip");
            assert_eq!(again.fingerprint(), game.fingerprint());
        }
    }
});
