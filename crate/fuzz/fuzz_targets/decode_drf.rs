#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(feature) = facerep::deform::decode_drf(data) {
        let bytes = facerep::deform::encode_drf(&feature);
        assert_eq!(facerep::deform::decode_drf(&bytes).unwrap(), feature);
    }
});
