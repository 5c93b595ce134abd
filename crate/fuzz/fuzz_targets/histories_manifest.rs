#![no_main]

use declab_core::histories::HistoriesManifest;
use libfuzzer_sys::fuzz_target;

const STATE: &str = "layout: q:2\n1,0\n0,0\n";
const PROJECTOR: &str = "layout: q:2\n1,0\n0,0\n0,0\n0,0\n";

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = HistoriesManifest::parse(text) {
        let pure = m.initial_pure.clone();
        let _ = m.resolve(|name| Ok(if Some(name) == pure.as_deref() { STATE } else { PROJECTOR }.to_string()));
    }
});
