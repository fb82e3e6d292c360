#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(mesh) = cadsdf::io::parse_obj(data, "fuzz.obj") {
        let _ = mesh.euler_characteristic();
    }
});
