#![no_main]

use cadsdf::io;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(mesh) = io::parse_ply_mesh(data, "fuzz.ply") {
        let _ = mesh.is_watertight();
        let _ = mesh.signed_volume();
    }
});
