#![no_main]

use libfuzzer_sys::fuzz_target;
use taperprobe::pipeline::{extract_resonances, ExtractOptions, MapMetadata, TransmissionMap};

fuzz_target!(|data: &[u8]| {
    if let Ok(map) = TransmissionMap::from_csv(data, MapMetadata::external("fuzz")) {
        let again = TransmissionMap::from_csv(map.to_csv().as_bytes(), MapMetadata::external("fuzz")).expect("own output parses");
        assert_eq!(again.spectra.len(), map.spectra.len());
        let points = extract_resonances(&map, &ExtractOptions::default());
        assert!(points.iter().all(|p| p.lambda_min_nm.is_finite()));
    }
});
