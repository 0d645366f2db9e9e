#![no_main]

use libfuzzer_sys::fuzz_target;
use taperprobe::pipeline::MapMetadata;

fuzz_target!(|data: &[u8]| {
    if let Ok(meta) = serde_json::from_slice::<MapMetadata>(data) {
        let text = serde_json::to_string(&meta).expect("metadata serializes");
        let _: MapMetadata = serde_json::from_str(&text).expect("own output parses");
    }
});
