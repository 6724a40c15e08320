#![no_main]

use libfuzzer_sys::fuzz_target;
use owc_hrs::config::ScenarioConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = ScenarioConfig::from_toml_str(text) {
        // a config that validates must survive a serialise/parse cycle
        let again = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).expect("round trip");
        assert_eq!(again, cfg);
    }
});
