//! Minimal static SVG line/point plots of a result table.
//!
//! Every plotted value is the CSV text of its cell parsed back, and each
//! marker carries that text in `data-x`/`data-y`, so the figure and the
//! table agree exactly.

use std::fmt::Write;

use tea_core::protocol::Table;

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f",
];

fn is_overlay(name: &str) -> bool {
    ["model_", "ideal_", "full_", "state_"]
        .iter()
        .any(|p| name.starts_with(p))
}

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return Self {
                lo: if log { 1.0 } else { 0.0 },
                hi: if log { 10.0 } else { 1.0 },
                log,
            };
        }
        if log {
            let (a, b) = (lo.log10(), hi.log10());
            let pad = ((b - a) * 0.05).max(0.02);
            Self {
                lo: 10f64.powf(a - pad),
                hi: 10f64.powf(b + pad),
                log,
            }
        } else {
            let pad = ((hi - lo) * 0.05).max(1e-3 * hi.abs().max(1.0));
            Self {
                lo: lo - pad,
                hi: hi + pad,
                log,
            }
        }
    }

    fn frac(&self, v: f64) -> f64 {
        if self.log {
            (v.log10() - self.lo.log10()) / (self.hi.log10() - self.lo.log10())
        } else {
            (v - self.lo) / (self.hi - self.lo)
        }
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log {
            let mut t = Vec::new();
            for e in self.lo.log10().floor() as i32..=self.hi.log10().ceil() as i32 {
                for m in [1.0, 2.0, 3.0, 5.0] {
                    let v = m * 10f64.powi(e);
                    if v >= self.lo && v <= self.hi {
                        t.push(v);
                    }
                }
            }
            return t;
        }
        let raw = (self.hi - self.lo) / 6.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|s| *s >= raw)
            .unwrap_or(10.0 * mag);
        let mut v = (self.lo / step).ceil() * step;
        let mut t = Vec::new();
        while v <= self.hi + 1e-9 * step {
            t.push(if v.abs() < 1e-12 * step { 0.0 } else { v });
            v += step;
        }
        t
    }
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Renders `table` with its first column on the abscissa. Measured columns
/// are drawn as markers (with `ci_low`/`ci_high` error bars on the first),
/// analytic columns as lines; with `analytic_only` everything is a line.
pub fn render(table: &Table, title: &str, analytic_only: bool) -> String {
    let names: Vec<&str> = table.columns.iter().map(|c| c.name.as_str()).collect();
    let x_name = names[0];
    let xs = table.printed(x_name).unwrap_or_default();
    let log_x = x_name == "ratio";
    let mut points = Vec::new();
    let mut lines = Vec::new();
    for &n in &names[1..] {
        if n.starts_with("ci_") {
            continue;
        }
        if analytic_only || is_overlay(n) {
            lines.push(n);
        } else {
            points.push(n);
        }
    }
    let col = |n: &str| table.printed(n).unwrap_or_default();
    let ci = match (col("ci_low"), col("ci_high")) {
        (lo, hi) if !lo.is_empty() && !points.is_empty() => Some((lo, hi)),
        _ => None,
    };

    let series: Vec<&str> = points.iter().chain(lines.iter()).copied().collect();
    let mut ys: Vec<f64> = series.iter().flat_map(|n| col(n)).flatten().collect();
    if let Some((lo, hi)) = &ci {
        ys.extend(lo.iter().chain(hi).flatten());
    }
    let xa = Axis::fit(xs.iter().flatten().copied(), log_x);
    let ya = Axis::fit(ys.into_iter(), false);
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let px = |x: f64| LEFT + xa.frac(x) * pw;
    let py = |y: f64| TOP + (1.0 - ya.frac(y)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for t in xa.ticks() {
        let x = px(t);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/>"#,
            TOP + ph,
            TOP + ph + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
            TOP + ph + 18.0,
            tick_label(t)
        );
    }
    for t in ya.ticks() {
        let y = py(t);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/>"#,
            LEFT - 5.0
        );
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#dddddd"/>"##,
            LEFT + pw
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            y + 4.0,
            tick_label(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 12.0,
        escape(x_name)
    );
    let y_label = if series.iter().all(|n| n.ends_with("_db")) {
        "dB rel. zero-point"
    } else {
        "value"
    };
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        y_label
    );

    let x_text: Vec<String> = (0..table.rows.len()).map(|r| table.cell(r, 0)).collect();
    for (k, name) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let c = table.index(name).expect("series from table");
        let ys = col(name);
        let _ = writeln!(s, r#"<g class="series" data-column="{}">"#, escape(name));
        if k < points.len() {
            if k == 0 {
                if let Some((lo, hi)) = &ci {
                    for r in 0..xs.len() {
                        if let (Some(x), Some(l), Some(h)) = (xs[r], lo[r], hi[r]) {
                            let _ = writeln!(
                                s,
                                r#"<line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="{color}"/>"#,
                                px(x),
                                py(l),
                                py(h)
                            );
                        }
                    }
                }
            }
            for r in 0..xs.len() {
                if let (Some(x), Some(y)) = (xs[r], ys[r]) {
                    if log_x && x <= 0.0 {
                        continue;
                    }
                    let _ = writeln!(
                        s,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="{color}" data-x="{}" data-y="{}"/>"#,
                        px(x),
                        py(y),
                        x_text[r],
                        table.cell(r, c)
                    );
                }
            }
        } else {
            // break the polyline at missing values
            let mut run: Vec<String> = Vec::new();
            let flush = |run: &mut Vec<String>, s: &mut String| {
                if run.len() > 1 {
                    let _ = writeln!(
                        s,
                        r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                        run.join(" ")
                    );
                }
                run.clear();
            };
            for r in 0..xs.len() {
                match (xs[r], ys[r]) {
                    (Some(x), Some(y)) if !(log_x && x <= 0.0) => {
                        run.push(format!("{:.2},{:.2}", px(x), py(y)))
                    }
                    _ => flush(&mut run, &mut s),
                }
            }
            flush(&mut run, &mut s);
        }
        let ly = TOP + 14.0 + 18.0 * k as f64;
        let lx = LEFT + pw + 14.0;
        if k < points.len() {
            let _ = writeln!(
                s,
                r#"<circle cx="{}" cy="{ly}" r="3.5" fill="{color}"/>"#,
                lx + 10.0
            );
        } else {
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="1.5"/>"#,
                lx + 20.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">{}</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(name)
        );
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
