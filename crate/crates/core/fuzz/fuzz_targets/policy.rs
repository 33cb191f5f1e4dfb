#![no_main]

use intervene_core::pilots::{parse_policy, render_policy};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(policy) = parse_policy(text) {
        let again = parse_policy(&render_policy(&policy)).expect("rendered policy reparses");
        assert_eq!(again, policy);
    }
});
