//! Human-readable numbers: six significant digits, trailing zeros dropped.

pub fn sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    // round first so that e.g. 999999.7 moves to the next decade
    let rounded: f64 = format!("{x:.5e}").parse().unwrap_or(x);
    let exp = rounded.abs().log10().floor() as i32;
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{rounded:.decimals$}"))
    } else {
        let s = format!("{rounded:.5e}");
        let (mantissa, e) = s.split_once('e').unwrap_or((&s, "0"));
        format!("{}e{e}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// `10·log10(η)` with the `-inf` sentinel for a zero SNR.
pub fn db(eta: f64) -> String {
    if eta == 0.0 {
        "-inf".into()
    } else {
        sig6(10.0 * eta.log10())
    }
}
