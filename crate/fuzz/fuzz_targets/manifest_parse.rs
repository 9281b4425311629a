#![no_main]

use cit_filter::io::parse_manifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(m) = parse_manifest(text) {
            let again = serde_json::to_string(&m).expect("manifest serializes");
            assert_eq!(parse_manifest(&again).expect("round trip").outputs, m.outputs);
        }
    }
});
