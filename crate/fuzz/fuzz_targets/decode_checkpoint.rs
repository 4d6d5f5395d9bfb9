#![no_main]

use libfuzzer_sys::fuzz_target;
use stereokit::train::checkpoint::{decode_checkpoint, encode_checkpoint};

fuzz_target!(|data: &[u8]| {
    if let Ok(c) = decode_checkpoint(data) {
        let bytes = encode_checkpoint(&c).unwrap();
        assert!(decode_checkpoint(&bytes).is_ok());
    }
});
