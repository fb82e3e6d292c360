#![no_main]

use cadsdf::io::{self, PlyFormat};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cloud) = io::parse_ply_cloud(data, "fuzz.ply") {
        let bytes = io::cloud_to_ply(&cloud, PlyFormat::BinaryLittleEndian);
        assert_eq!(io::parse_ply_cloud(&bytes, "again.ply").unwrap(), cloud);
    }
});
