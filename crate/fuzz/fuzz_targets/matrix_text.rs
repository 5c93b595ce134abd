#![no_main]

use declab_core::hilbert::{self, DensityOperator, Observable, PureState};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if hilbert::text::parse(text).is_err() {
        return;
    }
    if let Ok(psi) = PureState::from_text(text) {
        // accepted states survive a round trip
        let back = PureState::from_text(&psi.to_text()).expect("round trip");
        assert!((back.amplitudes() - psi.amplitudes()).norm() < 1e-9);
    }
    let _ = DensityOperator::from_text(text);
    let _ = Observable::from_text(text);
});
