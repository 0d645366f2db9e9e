#![no_main]

use libfuzzer_sys::fuzz_target;
use taperprobe::taper::TaperProfile;

fuzz_target!(|data: &[u8]| {
    if let Ok(taper) = TaperProfile::from_csv(data) {
        let (lo, hi) = taper.range_mm();
        for x in [lo, 0.5 * (lo + hi), hi] {
            let d = taper.diameter_at(x).expect("in-range lookup");
            assert!(d > 0.0);
        }
        let back = TaperProfile::from_csv(taper.to_csv().as_bytes()).expect("own output parses");
        assert_eq!(back.positions_mm().len(), taper.positions_mm().len());
    }
});
