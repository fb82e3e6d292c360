#![no_main]

use cadsdf::io::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = RunConfig::parse(data, "fuzz.cfg", None) {
        let again = RunConfig::parse(&cfg.to_text(), "again.cfg", None).unwrap();
        assert_eq!(again, cfg);
    }
});
