#![no_main]

use cit_filter::config::ScenarioConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = ScenarioConfig::parse(text) {
            let _ = cfg.natural();
            let _ = cfg.grid.points();
        }
    }
});
