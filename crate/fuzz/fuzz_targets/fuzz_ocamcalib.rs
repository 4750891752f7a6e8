//! Fuzzes the calibration text parser: it must never panic, and any model it
//! accepts must serialize and reparse to an equally valid model.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(intr) = cubevo::load_ocamcalib(text) {
        let round = cubevo::load_ocamcalib(&intr.to_ocamcalib_string())
            .expect("serialized calibration must reparse");
        assert_eq!(round.to_ocamcalib_string(), intr.to_ocamcalib_string());
    }
});
