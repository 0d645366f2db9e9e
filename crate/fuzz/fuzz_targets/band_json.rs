#![no_main]

use libfuzzer_sys::fuzz_target;
use taperprobe::bands::BandCurve;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(curves) = BandCurve::from_json(text) {
        for c in &curves {
            if let Some((lo, hi)) = c.lambda_range_nm() {
                let _ = c.beta_at_lambda(0.5 * (lo + hi));
            }
        }
        let _ = BandCurve::to_json(&curves);
    }
});
