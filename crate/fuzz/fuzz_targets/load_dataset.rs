#![no_main]

use libfuzzer_sys::fuzz_target;
use owc_hrs::dataset::DatasetFile;

// Input layout: CSV bytes, a NUL byte, then the sidecar JSON.
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let (csv, sidecar) = text.split_once('\0').unwrap_or((text, ""));
    if let Ok(ds) = DatasetFile::parse(csv, sidecar) {
        let again = DatasetFile::parse(&ds.to_csv(), &ds.sidecar_json()).expect("round trip");
        assert_eq!(again.samples, ds.samples);
    }
});
