#![no_main]

use cadsdf::io;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cloud) = io::parse_xyz(data, "fuzz.xyz") {
        // whatever parses must survive its own writer
        let again = io::parse_xyz(io::cloud_to_xyz(&cloud).as_bytes(), "again.xyz").unwrap();
        assert_eq!(again, cloud);
    }
});
