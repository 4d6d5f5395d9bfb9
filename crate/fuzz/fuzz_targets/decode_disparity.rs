#![no_main]

use libfuzzer_sys::fuzz_target;
use stereokit::io::pnm::{decode_disparity, encode_disparity};

fuzz_target!(|data: &[u8]| {
    if let Ok(map) = decode_disparity(data) {
        let bytes = encode_disparity(&map);
        let again = decode_disparity(&bytes).unwrap();
        assert_eq!(again.valid(), map.valid());
        assert_eq!(encode_disparity(&again), bytes);
    }
});
