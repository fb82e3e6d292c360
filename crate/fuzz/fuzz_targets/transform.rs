#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = cadsdf::io::Normalization::parse(data, "fuzz.txt");
});
