#![no_main]

use declab_cli::ScenarioConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (body, overrides) = match text.split_once("\n--\n") {
        Some((b, o)) => (b, o.lines().map(String::from).collect::<Vec<_>>()),
        None => (text, Vec::new()),
    };
    if let Ok(cfg) = ScenarioConfig::parse(body, &overrides) {
        let _ = cfg.validate();
    }
});
