//! Minimal self-contained SVG charts. Output depends only on the inputs.

use std::fmt::Write;

const W: f64 = 800.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        W / 2.0,
        escape(title)
    )
}

fn span(values: impl Iterator<Item = f64>, include_zero: bool) -> (f64, f64) {
    let (mut lo, mut hi) =
        values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if include_zero {
        lo = lo.min(0.0);
        hi = hi.max(0.0);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi <= lo {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = (hi - lo) * 0.05;
    (if include_zero && lo == 0.0 { 0.0 } else { lo - pad }, hi + pad)
}

fn y_axis(svg: &mut String, lo: f64, hi: f64) {
    let plot_h = H - TOP - BOTTOM;
    for i in 0..=4 {
        let v = lo + (hi - lo) * i as f64 / 4.0;
        let y = TOP + plot_h * (1.0 - i as f64 / 4.0);
        let _ = writeln!(
            svg,
            "<line x1=\"{LEFT}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#ddd\"/>\
             <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>",
            W - RIGHT,
            LEFT - 6.0,
            y + 4.0,
            fmt_tick(v)
        );
    }
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn legend(svg: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let x = LEFT + 10.0 + 160.0 * i as f64;
        let _ = writeln!(
            svg,
            "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"12\" height=\"12\" fill=\"{}\"/>\
             <text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
            H - 22.0,
            PALETTE[i % PALETTE.len()],
            x + 16.0,
            H - 12.0,
            escape(name)
        );
    }
}

/// Lines over a shared x axis labelled by `x_labels` (first and last shown).
pub fn line_chart(title: &str, x_labels: &[String], series: &[(&str, &[f64])]) -> String {
    let mut svg = header(title);
    let (lo, hi) = span(series.iter().flat_map(|(_, s)| s.iter().copied()), false);
    y_axis(&mut svg, lo, hi);
    let n = series.iter().map(|(_, s)| s.len()).max().unwrap_or(0);
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;
    let x = |i: usize| LEFT + if n > 1 { plot_w * i as f64 / (n - 1) as f64 } else { 0.0 };
    let y = |v: f64| TOP + plot_h * (1.0 - (v - lo) / (hi - lo));
    for (k, (_, values)) in series.iter().enumerate() {
        let mut path = String::new();
        for (i, v) in values.iter().enumerate() {
            let _ = write!(path, "{}{:.2},{:.2}", if i == 0 { "M" } else { " L" }, x(i), y(*v));
        }
        let _ = writeln!(
            svg,
            "<path d=\"{path}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>",
            PALETTE[k % PALETTE.len()]
        );
    }
    if let (Some(first), Some(last)) = (x_labels.first(), x_labels.last()) {
        let base = H - BOTTOM + 16.0;
        let _ = writeln!(svg, "<text x=\"{LEFT}\" y=\"{base:.2}\">{}</text>", escape(first));
        let _ =
            writeln!(svg, "<text x=\"{:.2}\" y=\"{base:.2}\" text-anchor=\"end\">{}</text>", W - RIGHT, escape(last));
    }
    legend(&mut svg, &series.iter().map(|(n, _)| *n).collect::<Vec<_>>());
    svg.push_str("</svg>\n");
    svg
}

/// Grouped bars: one group per category, one bar per series. NaN bars are omitted.
pub fn bar_chart(title: &str, categories: &[String], series: &[(&str, Vec<f64>)]) -> String {
    let mut svg = header(title);
    let (lo, hi) = span(series.iter().flat_map(|(_, s)| s.iter().copied()), true);
    y_axis(&mut svg, lo, hi);
    let plot_w = W - LEFT - RIGHT;
    let plot_h = H - TOP - BOTTOM;
    let y = |v: f64| TOP + plot_h * (1.0 - (v - lo) / (hi - lo));
    let group = plot_w / categories.len().max(1) as f64;
    let bar = group * 0.8 / series.len().max(1) as f64;
    for (c, label) in categories.iter().enumerate() {
        let gx = LEFT + group * c as f64 + group * 0.1;
        for (k, (_, values)) in series.iter().enumerate() {
            let Some(v) = values.get(c).copied().filter(|v| v.is_finite()) else {
                continue;
            };
            let (top, bottom) = if v >= 0.0 { (y(v), y(0.0)) } else { (y(0.0), y(v)) };
            let _ = writeln!(
                svg,
                "<rect x=\"{:.2}\" y=\"{top:.2}\" width=\"{bar:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                gx + bar * k as f64,
                bottom - top,
                PALETTE[k % PALETTE.len()]
            );
        }
        if categories.len() <= 24 {
            let _ = writeln!(
                svg,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
                gx + group * 0.4,
                H - BOTTOM + 16.0,
                escape(label)
            );
        }
    }
    if series.len() > 1 {
        legend(&mut svg, &series.iter().map(|(n, _)| *n).collect::<Vec<_>>());
    }
    svg.push_str("</svg>\n");
    svg
}
