#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(mesh) = facerep::mesh::parse_obj(text) {
            let mut out = Vec::new();
            facerep::mesh::write_obj(&mesh, &mut out).unwrap();
            let again = facerep::mesh::parse_obj(std::str::from_utf8(&out).unwrap()).unwrap();
            assert_eq!(again.vertex_count(), mesh.vertex_count());
            assert_eq!(again.faces(), mesh.faces());
        }
    }
});
