#![no_main]

use libfuzzer_sys::fuzz_target;
use owc_hrs::dnn::NetworkWeights;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(w) = NetworkWeights::parse(text) {
        let again = NetworkWeights::parse(&w.to_text()).expect("round trip");
        assert_eq!(again, w);
        let _ = w.forward(&vec![0.5; w.spec.input_dim()]);
    }
});
