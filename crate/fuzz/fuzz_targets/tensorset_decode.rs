#![no_main]

use facerep::tensorfile::TensorSet;
use libfuzzer_sys::fuzz_target;

// first two bytes: manifest length (little endian); the rest is the blob
fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let len = u16::from_le_bytes([data[0], data[1]]) as usize;
    let rest = &data[2..];
    let (manifest, blob) = rest.split_at(len.min(rest.len()));
    if let Ok(set) = TensorSet::decode(manifest, blob) {
        let (manifest, blob) = set.encode().unwrap();
        TensorSet::decode(manifest.as_bytes(), &blob).unwrap();
    }
});
