use std::fmt::Write;

use super::{QSurface, QTrajectory, SweepMode};
use crate::scalar::Real;

/// Decimal text with 12 significant digits, in the style of C's `%.12g`.
pub fn fmt_num<T: Real>(x: T) -> String {
    let v = x.to_f64().unwrap_or(f64::NAN);
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.11e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..12).contains(&exp) {
        trim(&format!("{:.*}", (11 - exp) as usize, v))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mant), exp.abs())
    }
}

/// Trajectory table. Angle sweeps report the offset from the mode in µrad.
pub fn trajectory_csv<T: Real>(t: &QTrajectory<T>) -> String {
    let mut out = String::from("control,Re_q,Im_q,Pi,source,ok\n");
    let micro = T::from_f64(1e6).unwrap();
    for p in &t.points {
        let control = match t.mode {
            SweepMode::Abundance => p.control,
            SweepMode::Angle => (p.control - t.theta_mode) * micro,
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_num(control),
            fmt_num(p.q.re),
            fmt_num(p.q.im),
            fmt_num(p.pi_strength),
            t.source,
            p.ok as u8
        );
    }
    out
}

/// Long-form surface table, angle offsets in µrad.
pub fn surface_csv<T: Real>(s: &QSurface<T>) -> String {
    let mut out = String::from("offset_urad,abundance,Re_q,Im_q,Pi,source,ok\n");
    let micro = T::from_f64(1e6).unwrap();
    for c in &s.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_num((c.theta - s.theta_mode) * micro),
            fmt_num(c.abundance),
            fmt_num(c.q.re),
            fmt_num(c.q.im),
            fmt_num(c.pi_strength),
            s.source,
            c.ok as u8
        );
    }
    out
}
