#![no_main]

use declab_core::envariance;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let items: Vec<&str> = text.split(',').collect();
    let Ok(w) = envariance::parse_weights(&items) else { return };
    let sum = envariance::weight_sum(&w);
    // keeps each input cheap; large denominators are covered by unit tests
    if w.len() > 6 || w.iter().any(|x| *x.denom() > 1000) {
        return;
    }
    if let Ok(fg) = envariance::fine_grain(&w) {
        assert_eq!(sum, Some(envariance::Weight::from_integer(1)));
        assert_eq!(fg.probabilities, w);
        assert_eq!(fg.multiplicities.iter().sum::<u64>(), fg.denominator);
    }
});
