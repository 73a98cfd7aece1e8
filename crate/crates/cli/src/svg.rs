//! Boundary families as a single SVG: one polyline per snapshot, later
//! snapshots drawn more opaque.

use std::fmt::Write;

use lemlab_core::Complex64;

const SIZE: f64 = 600.0;

pub fn render(snapshots: &[(f64, Vec<Complex64>)]) -> String {
    let points = snapshots.iter().flat_map(|(_, c)| c.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for z in points {
        x0 = x0.min(z.re);
        x1 = x1.max(z.re);
        y0 = y0.min(z.im);
        y1 = y1.max(z.im);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
    }
    let span = (x1 - x0).max(y1 - y0).max(1e-12) * 1.1;
    let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
    let scale = SIZE / span;
    let to_px = |z: &Complex64| {
        (
            (z.re - cx) * scale + SIZE / 2.0,
            SIZE / 2.0 - (z.im - cy) * scale,
        )
    };

    let (t0, t1) = snapshots
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (t, _)| {
            (a.min(*t), b.max(*t))
        });
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (t, curve) in snapshots {
        let frac = if t1 > t0 { (t - t0) / (t1 - t0) } else { 1.0 };
        let opacity = 0.2 + 0.8 * frac;
        let mut pts = String::new();
        for z in curve.iter().chain(curve.first()) {
            let (x, y) = to_px(z);
            let _ = write!(pts, "{x:.3},{y:.3} ");
        }
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="navy" stroke-width="1" stroke-opacity="{opacity:.3}" data-t="{t}" points="{}"/>"#,
            pts.trim_end()
        );
    }
    out.push_str("</svg>\n");
    out
}
