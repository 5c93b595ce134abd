#![no_main]

use declab_core::measurement::SetupManifest;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = SetupManifest::parse(text) {
        // every referenced file reads as a qubit basis state
        let _ = m.resolve(|_| Ok("layout: q:2\n1,0\n0,0\n".to_string()));
    }
});
