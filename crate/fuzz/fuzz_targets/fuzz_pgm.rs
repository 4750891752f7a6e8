//! Fuzzes the binary PGM decoder: it must never panic or over-allocate, and
//! any image it accepts must survive an encode/decode round trip.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = cubevo::GrayImage::decode_pgm(data) {
        let again = cubevo::GrayImage::decode_pgm(&img.encode_pgm())
            .expect("encoded image must decode");
        assert_eq!(again.width(), img.width());
        assert_eq!(again.height(), img.height());
    }
});
