//! Minimal SVG charts drawn from a figure's data table. Every plotted mark
//! carries its values as `data-*` attributes, copied verbatim from the
//! table cells.

use std::fmt::Write;

use crate::table::Table;

const W: f64 = 720.0;
const H: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1b6ca8", "#d1495b", "#edae49", "#00798c", "#66a182", "#8d6a9f"];

pub enum Chart<'a> {
    /// One polyline per y column against a numeric x column.
    Lines { x: &'a str, ys: &'a [&'a str] },
    /// Bars per x category; stacked when there are several y columns.
    Bars { x: &'a str, ys: &'a [&'a str] },
    /// One box per row.
    Boxes { label: &'a str },
}

pub const BOX_COLUMNS: [&str; 5] = ["whisker_low", "q1", "median", "q3", "whisker_high"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn num(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

struct Scale {
    lo: f64,
    hi: f64,
    a: f64,
    b: f64,
}

impl Scale {
    fn new(lo: f64, hi: f64, a: f64, b: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
        Self { lo, hi, a, b }
    }

    fn at(&self, v: f64) -> f64 {
        self.a + (v - self.lo) / (self.hi - self.lo) * (self.b - self.a)
    }
}

fn col(t: &Table, name: &str) -> usize {
    t.column(name).unwrap_or_else(|| panic!("figure {} has no column {name}", t.name))
}

fn frame(out: &mut String, title: &str, y: &Scale) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = write!(out, r#"<text x="{LEFT}" y="22" font-size="14">{}</text>"#, esc(title));
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    let _ = write!(out, r#"<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/>"#);
    let _ = write!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for k in 0..=4 {
        let v = y.lo + (y.hi - y.lo) * k as f64 / 4.0;
        let py = y.at(v);
        let _ = write!(
            out,
            r#"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{v:.3}</text>"#,
            x0 - 4.0,
            x0 - 6.0,
            py + 4.0
        );
    }
}

fn legend(out: &mut String, names: &[&str]) {
    for (i, n) in names.iter().enumerate() {
        let y = TOP + 16.0 * i as f64;
        let x = W - RIGHT + 12.0;
        let _ = write!(
            out,
            r#"<rect x="{x}" y="{y}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            PALETTE[i % PALETTE.len()],
            x + 14.0,
            y + 9.0,
            esc(n)
        );
    }
}

fn bounds(values: impl Iterator<Item = f64>, floor_zero: bool) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if floor_zero {
        lo = lo.min(0.0);
    }
    (lo, hi)
}

pub fn render(t: &Table, title: &str, chart: &Chart) -> String {
    let mut out = String::new();
    let (x0, x1, y0, y1) = (LEFT, W - RIGHT, TOP, H - BOTTOM);
    match chart {
        Chart::Lines { x, ys } => {
            let xi = col(t, x);
            let yi: Vec<usize> = ys.iter().map(|y| col(t, y)).collect();
            let (lo, hi) = bounds(t.rows.iter().flat_map(|r| yi.iter().filter_map(|&i| num(&r[i]))), false);
            let ys_scale = Scale::new(lo, hi, y1, y0);
            let (xlo, xhi) = bounds(t.rows.iter().filter_map(|r| num(&r[xi])), false);
            let xs = Scale::new(xlo, xhi, x0 + 10.0, x1 - 10.0);
            frame(&mut out, title, &ys_scale);
            for (s, (&i, name)) in yi.iter().zip(ys.iter()).enumerate() {
                let colour = PALETTE[s % PALETTE.len()];
                let pts: Vec<String> = t
                    .rows
                    .iter()
                    .filter_map(|r| Some(format!("{:.2},{:.2}", xs.at(num(&r[xi])?), ys_scale.at(num(&r[i])?))))
                    .collect();
                let _ = write!(
                    out,
                    r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
                    pts.join(" ")
                );
                for r in &t.rows {
                    let (Some(xv), Some(yv)) = (num(&r[xi]), num(&r[i])) else { continue };
                    let _ = write!(
                        out,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{colour}" data-series="{}" data-x="{}" data-y="{}"/>"#,
                        xs.at(xv),
                        ys_scale.at(yv),
                        esc(name),
                        esc(&r[xi]),
                        esc(&r[i])
                    );
                }
            }
            for r in t.rows.iter().step_by((t.rows.len() / 10).max(1)) {
                if let Some(xv) = num(&r[xi]) {
                    let _ = write!(out, r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#, xs.at(xv), y1 + 16.0, esc(&r[xi]));
                }
            }
            legend(&mut out, ys);
        }
        Chart::Bars { x, ys } => {
            let xi = col(t, x);
            let yi: Vec<usize> = ys.iter().map(|y| col(t, y)).collect();
            let totals = t.rows.iter().map(|r| yi.iter().filter_map(|&i| num(&r[i])).sum::<f64>());
            let (lo, hi) = bounds(totals, true);
            let ys_scale = Scale::new(lo, hi, y1, y0);
            frame(&mut out, title, &ys_scale);
            let slot = (x1 - x0) / t.rows.len().max(1) as f64;
            for (k, r) in t.rows.iter().enumerate() {
                let left = x0 + slot * k as f64 + slot * 0.1;
                let mut base = 0.0;
                for (s, (&i, name)) in yi.iter().zip(ys.iter()).enumerate() {
                    let Some(v) = num(&r[i]) else { continue };
                    let (top, bottom) = (ys_scale.at(base + v), ys_scale.at(base));
                    let _ = write!(
                        out,
                        r#"<rect x="{left:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}" data-series="{}" data-x="{}" data-y="{}"/>"#,
                        top.min(bottom),
                        slot * 0.8,
                        (bottom - top).abs(),
                        PALETTE[s % PALETTE.len()],
                        esc(name),
                        esc(&r[xi]),
                        esc(&r[i])
                    );
                    base += v;
                }
                if k % (t.rows.len() / 12).max(1) == 0 {
                    let _ = write!(
                        out,
                        r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
                        left + slot * 0.4,
                        y1 + 16.0,
                        esc(&r[xi])
                    );
                }
            }
            legend(&mut out, ys);
        }
        Chart::Boxes { label } => {
            let li = col(t, label);
            let bi: Vec<usize> = BOX_COLUMNS.iter().map(|c| col(t, c)).collect();
            let (lo, hi) = bounds(t.rows.iter().flat_map(|r| bi.iter().filter_map(|&i| num(&r[i]))), false);
            let ys_scale = Scale::new(lo, hi, y1, y0);
            frame(&mut out, title, &ys_scale);
            let slot = (x1 - x0) / t.rows.len().max(1) as f64;
            for (k, r) in t.rows.iter().enumerate() {
                let v: Vec<Option<f64>> = bi.iter().map(|&i| num(&r[i])).collect();
                let [Some(wl), Some(q1), Some(md), Some(q3), Some(wh)] = v[..] else { continue };
                let cx = x0 + slot * (k as f64 + 0.5);
                let half = slot * 0.3;
                let _ = write!(
                    out,
                    r#"<g data-label="{}" data-whisker_low="{}" data-q1="{}" data-median="{}" data-q3="{}" data-whisker_high="{}">"#,
                    esc(&r[li]),
                    esc(&r[bi[0]]),
                    esc(&r[bi[1]]),
                    esc(&r[bi[2]]),
                    esc(&r[bi[3]]),
                    esc(&r[bi[4]])
                );
                let _ = write!(
                    out,
                    r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
                    ys_scale.at(wl),
                    ys_scale.at(wh)
                );
                let _ = write!(
                    out,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}" stroke="black"/>"#,
                    cx - half,
                    ys_scale.at(q3),
                    2.0 * half,
                    (ys_scale.at(q1) - ys_scale.at(q3)).abs(),
                    PALETTE[0]
                );
                let _ = write!(
                    out,
                    r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
                    cx - half,
                    ys_scale.at(md),
                    cx + half,
                    ys_scale.at(md)
                );
                let _ = write!(
                    out,
                    r#"<text transform="translate({cx:.2},{:.2}) rotate(40)" font-size="9">{}</text></g>"#,
                    y1 + 10.0,
                    esc(&r[li])
                );
            }
        }
    }
    out.push_str("</svg>\n");
    out
}
