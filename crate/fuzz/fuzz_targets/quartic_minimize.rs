//! Fuzz the closed-form quartic minimizer: for any finite coefficients and a
//! valid interval, the returned point must lie in the interval and not be
//! worse than either endpoint.

#![no_main]

use cfad::solver::{minimize_quartic, QuarticCoeffs};
use libfuzzer_sys::fuzz_target;

fn take_f64(data: &mut &[u8]) -> Option<f64> {
    let (head, rest) = data.split_first_chunk::<8>()?;
    *data = rest;
    let v = f64::from_le_bytes(*head);
    v.is_finite().then_some(v)
}

fuzz_target!(|data: &[u8]| {
    let mut data = data;
    let Some(vals) = (0..7)
        .map(|_| take_f64(&mut data))
        .collect::<Option<Vec<f64>>>()
    else {
        return;
    };
    let coeffs = QuarticCoeffs {
        rho1: vals[0],
        rho2: vals[1],
        rho3: vals[2],
        rho4: vals[3],
    };
    let omega = vals[4].abs();
    let (lo, hi) = if vals[5] <= vals[6] {
        (vals[5], vals[6])
    } else {
        (vals[6], vals[5])
    };
    if let Ok(d) = minimize_quartic(&coeffs, omega, lo, hi) {
        assert!(d >= lo && d <= hi, "minimizer outside [{lo}, {hi}]: {d}");
        let q = coeffs.eval(d, omega);
        let slack = 1e-9 * (1.0 + q.abs().max(coeffs.eval(lo, omega).abs()));
        assert!(q <= coeffs.eval(lo, omega) + slack);
        assert!(q <= coeffs.eval(hi, omega) + slack);
    }
});
