#![no_main]

use libfuzzer_sys::fuzz_target;
use stereokit::io::pnm::{decode_image, encode_image};

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_image(data) {
        assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let again = decode_image(&encode_image(&img).unwrap()).unwrap();
        assert_eq!(again.shape(), img.shape());
    }
});
