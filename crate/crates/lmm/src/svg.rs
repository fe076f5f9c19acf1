//! Minimal SVG charts: grouped bars with error whiskers and line plots.
//! Output depends only on the inputs; coordinates are printed with two
//! decimals.

use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// About five round tick values covering `[lo, hi]`.
pub fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0).max(1e-300) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y0) / (self.y1 - self.y0).max(1e-300) * (H - TOP - BOTTOM)
    }
}

fn open(out: &mut String, title: &str, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="15">{}</text>"#, (W - RIGHT + LEFT) / 2.0, escape(title));
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, (W - RIGHT + LEFT) / 2.0, H - 12.0, escape(xlabel));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (H - BOTTOM + TOP) / 2.0,
        (H - BOTTOM + TOP) / 2.0,
        escape(ylabel)
    );
}

fn y_axis(out: &mut String, f: &Frame) {
    for t in nice_ticks(f.y0, f.y1) {
        let y = f.py(t);
        let _ = writeln!(out, r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##, W - RIGHT);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, tick_label(t));
    }
    let _ = writeln!(out, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.2}" stroke="black"/>"#, H - BOTTOM);
    let _ = writeln!(out, r#"<line x1="{LEFT}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#, H - BOTTOM, W - RIGHT, H - BOTTOM);
}

fn tick_label(t: f64) -> String {
    let r = (t * 1e6).round() / 1e6;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

fn legend(out: &mut String, names: &[String]) {
    for (k, name) in names.iter().enumerate() {
        let y = TOP + 10.0 + 18.0 * k as f64;
        let c = PALETTE[k % PALETTE.len()];
        let _ = writeln!(out, r#"<rect x="{:.2}" y="{:.2}" width="12" height="12" fill="{c}"/>"#, W - RIGHT + 12.0, y - 10.0);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{y:.2}">{}</text>"#, W - RIGHT + 30.0, escape(name));
    }
}

/// `values[g][s]` is the `(mean, error)` of series `s` in group `g`.
pub fn grouped_bars(title: &str, ylabel: &str, groups: &[String], series: &[String], values: &[Vec<(f64, f64)>]) -> String {
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    for row in values {
        for &(m, e) in row {
            lo = lo.min(m - e);
            hi = hi.max(m + e);
        }
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let f = Frame { x0: 0.0, x1: groups.len().max(1) as f64, y0: if lo < 0.0 { lo - pad } else { 0.0 }, y1: hi + pad };
    let mut out = String::new();
    open(&mut out, title, "", ylabel);
    y_axis(&mut out, &f);
    let slot = (f.px(1.0) - f.px(0.0)) * 0.8 / series.len().max(1) as f64;
    for (g, row) in values.iter().enumerate() {
        let left = f.px(g as f64) + (f.px(1.0) - f.px(0.0)) * 0.1;
        for (s, &(m, e)) in row.iter().enumerate() {
            let c = PALETTE[s % PALETTE.len()];
            let x = left + slot * s as f64;
            let (ya, yb) = (f.py(m.max(0.0).max(f.y0)), f.py(m.min(0.0).max(f.y0)));
            let _ = writeln!(out, r#"<rect x="{x:.2}" y="{ya:.2}" width="{:.2}" height="{:.2}" fill="{c}"/>"#, slot * 0.9, (yb - ya).max(0.0));
            let cx = x + slot * 0.45;
            let _ = writeln!(out, r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#, f.py(m - e), f.py(m + e));
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            f.px(g as f64 + 0.5),
            H - BOTTOM + 18.0,
            escape(&groups[g])
        );
    }
    legend(&mut out, series);
    out.push_str("</svg>\n");
    out
}

/// One polyline per named series of `(x, y)` points.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    let f = Frame { x0, x1, y0: if y0 >= 0.0 && y0 - pad < 0.0 { 0.0 } else { y0 - pad }, y1: y1 + pad };
    let mut out = String::new();
    open(&mut out, title, xlabel, ylabel);
    y_axis(&mut out, &f);
    for t in nice_ticks(f.x0, f.x1) {
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, f.px(t), H - BOTTOM + 18.0, tick_label(t));
    }
    for (k, (_, p)) in series.iter().enumerate() {
        let c = PALETTE[k % PALETTE.len()];
        let mut d = String::new();
        for &(x, y) in p {
            let _ = write!(d, "{:.2},{:.2} ", f.px(x), f.py(y));
        }
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{c}" stroke-width="2" points="{}"/>"#, d.trim_end());
    }
    let names: Vec<String> = series.iter().map(|(n, _)| n.clone()).collect();
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round() {
        assert_eq!(nice_ticks(0.0, 10.0), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(nice_ticks(3.0, 3.0), vec![3.0]);
    }

    #[test]
    fn bars_deterministic_and_escaped() {
        let g = vec!["a<b".to_string(), "c".to_string()];
        let s = vec!["x".to_string(), "y".to_string()];
        let v = vec![vec![(1.0, 0.1), (2.0, 0.2)], vec![(-1.0, 0.5), (3.0, 0.0)]];
        let a = grouped_bars("t", "profit", &g, &s, &v);
        assert_eq!(a, grouped_bars("t", "profit", &g, &s, &v));
        assert!(a.contains("a&lt;b"));
        assert_eq!(a.matches("<rect").count(), 1 + 4 + 2);
    }

    #[test]
    fn line_chart_has_one_polyline_per_series() {
        let s = vec![("one".to_string(), vec![(0.0, 1.0), (1.0, 2.0)]), ("two".to_string(), vec![])];
        let svg = line_chart("t", "x", "y", &s);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.ends_with("</svg>\n"));
    }
}
