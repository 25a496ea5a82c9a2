//! Minimal self-contained SVG charts.

use std::fmt::Write;

pub const PALETTE5: [&str; 5] = ["#440154", "#3b528b", "#21918c", "#5ec962", "#fde725"];

pub fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Rounded tick positions covering `[lo, hi]`.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return vec![lo];
    }
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 2.5, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Finite (min, max) padded by 5%; a zero-width range is widened by 1.
pub fn padded_range(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .into_iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi <= lo {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

pub struct Chart {
    width: f64,
    height: f64,
    left: f64,
    right: f64,
    top: f64,
    bottom: f64,
    x: (f64, f64),
    y: (f64, f64),
    title: String,
    x_label: String,
    y_label: String,
    body: String,
    legend: Vec<(String, String)>,
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str, x: (f64, f64), y: (f64, f64)) -> Self {
        Self {
            width: 720.0,
            height: 480.0,
            left: 70.0,
            right: 150.0,
            top: 40.0,
            bottom: 55.0,
            x,
            y,
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            body: String::new(),
            legend: Vec::new(),
        }
    }

    pub fn sx(&self, v: f64) -> f64 {
        let w = self.width - self.left - self.right;
        self.left + (v - self.x.0) / (self.x.1 - self.x.0) * w
    }

    pub fn sy(&self, v: f64) -> f64 {
        let h = self.height - self.top - self.bottom;
        self.height - self.bottom - (v - self.y.0) / (self.y.1 - self.y.0) * h
    }

    /// Data point; counted by tests through the `pt` class.
    pub fn point(&mut self, x: f64, y: f64, r: f64, color: &str) {
        if !(x.is_finite() && y.is_finite()) {
            return;
        }
        let _ = writeln!(
            self.body,
            r#"<circle class="pt" cx="{:.2}" cy="{:.2}" r="{r}" fill="{color}"/>"#,
            self.sx(x),
            self.sy(y)
        );
    }

    pub fn line(&mut self, pts: &[(f64, f64)], color: &str, width: f64) {
        let d = self.path(pts);
        if d.is_empty() {
            return;
        }
        let _ = writeln!(
            self.body,
            r#"<polyline fill="none" stroke="{color}" stroke-width="{width}" points="{d}"/>"#
        );
    }

    /// Filled band between `lower` and `upper` over shared x values.
    pub fn band(&mut self, xs: &[f64], lower: &[f64], upper: &[f64], color: &str, opacity: f64) {
        let mut pts: Vec<(f64, f64)> = xs.iter().zip(upper).map(|(&x, &u)| (x, u)).collect();
        pts.extend(xs.iter().zip(lower).rev().map(|(&x, &l)| (x, l)));
        let d = self.path(&pts);
        if d.is_empty() {
            return;
        }
        let _ = writeln!(
            self.body,
            r#"<polygon fill="{color}" fill-opacity="{opacity}" stroke="none" points="{d}"/>"#
        );
    }

    pub fn hline(&mut self, y: f64, color: &str) {
        let (x0, x1) = (self.sx(self.x.0), self.sx(self.x.1));
        let yy = self.sy(y);
        let _ = writeln!(
            self.body,
            r#"<line x1="{x0:.2}" y1="{yy:.2}" x2="{x1:.2}" y2="{yy:.2}" stroke="{color}" stroke-dasharray="4 3"/>"#
        );
    }

    pub fn legend(&mut self, label: &str, color: &str) {
        self.legend.push((label.into(), color.into()));
    }

    fn path(&self, pts: &[(f64, f64)]) -> String {
        pts.iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", self.sx(x), self.sy(y)))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn axes(&self) -> String {
        let mut s = String::new();
        let (x0, x1) = (self.left, self.width - self.right);
        let (y0, y1) = (self.height - self.bottom, self.top);
        let _ = writeln!(
            s,
            r##"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="#333"/>"##,
            x1 - x0,
            y0 - y1
        );
        for t in nice_ticks(self.x.0, self.x.1, 6) {
            let px = self.sx(t);
            let _ = writeln!(
                s,
                r##"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{}" stroke="#333"/><text class="tick" x="{px:.2}" y="{}" text-anchor="middle">{}</text>"##,
                y0 + 5.0,
                y0 + 18.0,
                fmt_tick(t)
            );
        }
        for t in nice_ticks(self.y.0, self.y.1, 6) {
            let py = self.sy(t);
            let _ = writeln!(
                s,
                r##"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="#333"/><text class="tick" x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
                x0 - 5.0,
                x0 - 8.0,
                py + 4.0,
                fmt_tick(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text class="label" x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            self.height - 12.0,
            esc(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text class="label" transform="translate(18 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
            (y0 + y1) / 2.0,
            esc(&self.y_label)
        );
        s
    }

    pub fn finish(self) -> String {
        let mut legend = String::new();
        let lx = self.width - self.right + 15.0;
        for (i, (label, color)) in self.legend.iter().enumerate() {
            let ly = self.top + 10.0 + 20.0 * i as f64;
            let _ = writeln!(
                legend,
                r#"<rect x="{lx}" y="{}" width="12" height="12" fill="{color}"/><text class="tick" x="{}" y="{}">{}</text>"#,
                ly - 10.0,
                lx + 18.0,
                ly,
                esc(label)
            );
        }
        document(
            self.width,
            self.height,
            &self.title,
            &format!(
                "{}<g clip-path=\"url(#plot)\">\n{}</g>\n{}",
                self.axes(),
                self.body,
                legend
            ),
            (self.left, self.top, self.width - self.left - self.right, self.height - self.top - self.bottom),
        )
    }
}

fn document(width: f64, height: f64, title: &str, inner: &str, clip: (f64, f64, f64, f64)) -> String {
    format!(
        r##"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">
<style>
text {{ font-family: Helvetica, Arial, sans-serif; fill: #222; }}
.title {{ font-size: 16px; font-weight: bold; }}
.label {{ font-size: 13px; }}
.tick {{ font-size: 11px; }}
</style>
<defs><clipPath id="plot"><rect x="{}" y="{}" width="{}" height="{}"/></clipPath></defs>
<rect width="100%" height="100%" fill="white"/>
<text class="title" x="{:.1}" y="24" text-anchor="middle">{}</text>
{inner}</svg>
"##,
        clip.0,
        clip.1,
        clip.2,
        clip.3,
        width / 2.0,
        esc(title)
    )
}

/// Horizontal bar chart, first item on top.
pub fn bar_chart(title: &str, x_label: &str, items: &[(String, f64)]) -> String {
    let bar_h = 22.0;
    let left = 230.0;
    let plot_w = 420.0;
    let top = 45.0;
    let height = top + bar_h * items.len() as f64 + 55.0;
    let width = left + plot_w + 40.0;
    let max = items.iter().map(|i| i.1.abs()).fold(0.0, f64::max);
    let scale = if max > 0.0 { plot_w / max } else { 0.0 };
    let mut s = String::new();
    for (k, (name, v)) in items.iter().enumerate() {
        let y = top + bar_h * k as f64;
        let w = (v.max(0.0) * scale).max(0.0);
        let _ = writeln!(
            s,
            r##"<rect class="bar" x="{left}" y="{:.1}" width="{w:.2}" height="{:.1}" fill="#3b528b"/><text class="tick" x="{}" y="{:.1}" text-anchor="end">{}</text><text class="tick" x="{:.2}" y="{:.1}">{}</text>"##,
            y + 2.0,
            bar_h - 4.0,
            left - 6.0,
            y + bar_h / 2.0 + 4.0,
            esc(name),
            left + w + 4.0,
            y + bar_h / 2.0 + 4.0,
            fmt_tick(*v)
        );
    }
    let base = top + bar_h * items.len() as f64;
    let _ = writeln!(
        s,
        r##"<line x1="{left}" y1="{top}" x2="{left}" y2="{base}" stroke="#333"/><text class="label" x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
        left + plot_w / 2.0,
        base + 35.0,
        esc(x_label)
    );
    document(width, height, title, &s, (0.0, 0.0, width, height))
}

/// Gaussian kernel density on an even grid, Silverman bandwidth.
pub fn kde(values: &[f64], grid_points: usize) -> Vec<(f64, f64)> {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    let n = v.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let h = if sd > 0.0 {
        1.06 * sd * (n as f64).powf(-0.2)
    } else {
        1.0
    };
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let g = grid_points.max(2);
    let norm = 1.0 / (n as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    (0..g)
        .map(|k| {
            let x = lo + (hi - lo) * k as f64 / (g - 1) as f64;
            let d: f64 = v.iter().map(|xi| (-0.5 * ((x - xi) / h).powi(2)).exp()).sum();
            (x, d * norm)
        })
        .collect()
}

/// Class 0..k−1 of each value by rank, so every class holds `n/k` or
/// `n/k + 1` items; ties broken by position.
pub fn rank_classes(values: &[f64], k: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut class = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        class[i] = rank * k / n.max(1);
    }
    class
}
