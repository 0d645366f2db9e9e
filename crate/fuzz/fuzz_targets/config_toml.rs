#![no_main]

use libfuzzer_sys::fuzz_target;
use taperprobe::config::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::from_toml_str(text) {
        let echo = cfg.to_toml_string().expect("valid config serializes");
        let again = RunConfig::from_toml_str(&echo).expect("echo parses");
        assert_eq!(again.to_toml_string().expect("echo serializes"), echo);
    }
});
