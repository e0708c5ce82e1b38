// SPDX-License-Identifier: Apache-2.0

//! Minimal SVG charts: ROC curves and per-metric bar charts.

use std::fmt::Write as _;

use super::metrics::RocPoint;
use super::report::RiskReport;

const W: f64 = 480.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(out: &mut String, y_max: f64) {
    let (x0, y0, x1, y1) = (PAD, H - PAD, W - PAD / 2.0, PAD);
    let _ = writeln!(
        out,
        "<path d=\"M{x0} {y1} L{x0} {y0} L{x1} {y0}\" stroke=\"black\" fill=\"none\"/>"
    );
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let y = y0 - (y0 - y1) * k as f64 / 4.0;
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{:.2}</text>",
            x0 - 4.0,
            y + 3.0,
            v
        );
    }
}

/// ROC curves, one polyline per labelled series, with the chance diagonal.
pub fn roc_svg(title: &str, series: &[(String, Vec<RocPoint>)]) -> String {
    let mut out = header(title);
    axes(&mut out, 1.0);
    let sx = |v: f64| PAD + v * (W - 1.5 * PAD);
    let sy = |v: f64| (H - PAD) - v * (H - 2.0 * PAD);
    let _ = writeln!(
        out,
        "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>",
        sx(0.0),
        sy(0.0),
        sx(1.0),
        sy(1.0)
    );
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.fpr), sy(p.tpr)))
            .collect();
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            path.join(" ")
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\" fill=\"{color}\">{}</text>",
            sx(0.55),
            sy(0.3) + 12.0 * i as f64,
            escape(label)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">false positive rate</text>",
        W / 2.0,
        H - 12.0
    );
    out.push_str("</svg>\n");
    out
}

/// Bar chart of `(label, mean, std)` with whiskers at mean ± std.
pub fn bar_svg(title: &str, bars: &[(String, f64, f64)]) -> String {
    let mut out = header(title);
    let top = bars
        .iter()
        .map(|(_, m, s)| m + s)
        .filter(|v| v.is_finite())
        .fold(1.0f64, f64::max);
    axes(&mut out, top);
    let span = W - 1.5 * PAD;
    let slot = span / bars.len().max(1) as f64;
    let sy = |v: f64| (H - PAD) - v / top * (H - 2.0 * PAD);
    for (i, (label, mean, std)) in bars.iter().enumerate() {
        if !mean.is_finite() {
            continue;
        }
        let x = PAD + slot * i as f64 + slot * 0.15;
        let w = slot * 0.7;
        let _ = writeln!(
            out,
            "<rect x=\"{x:.1}\" y=\"{:.1}\" width=\"{w:.1}\" height=\"{:.1}\" fill=\"{}\"/>",
            sy(*mean),
            sy(0.0) - sy(*mean),
            COLORS[i % COLORS.len()]
        );
        if std.is_finite() && *std > 0.0 {
            let cx = x + w / 2.0;
            let _ = writeln!(
                out,
                "<line x1=\"{cx:.1}\" y1=\"{:.1}\" x2=\"{cx:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
                sy(mean - std),
                sy(mean + std)
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"9\">{}</text>",
            x + w / 2.0,
            H - PAD + 14.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// One bar chart per metric name across all (attack, threat model) results.
pub fn report_bar_charts(report: &RiskReport) -> Vec<(String, String)> {
    let mut by_metric: std::collections::BTreeMap<&str, Vec<(String, f64, f64)>> = Default::default();
    for r in &report.results {
        for (name, m) in &r.metrics {
            by_metric.entry(name).or_default().push((
                format!("{}@{}", r.attack.id(), r.threat_model.id()),
                m.mean.0,
                m.std.0,
            ));
        }
    }
    by_metric
        .into_iter()
        .map(|(name, bars)| (format!("metric_{name}.svg"), bar_svg(name, &bars)))
        .collect()
}

/// Parses the `fpr,tpr` CSV written next to membership results.
pub fn parse_roc_csv(text: &str) -> Vec<RocPoint> {
    text.lines()
        .skip(1)
        .filter_map(|l| {
            let mut it = l.split(',');
            let threshold = it.next()?.parse().ok()?;
            let fpr = it.next()?.parse().ok()?;
            let tpr = it.next()?.parse().ok()?;
            Some(RocPoint { threshold, fpr, tpr })
        })
        .collect()
}

pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in points {
        let _ = writeln!(out, "{:.6},{:.6},{:.6}", p.threshold, p.fpr, p.tpr);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roc_csv_round_trip() {
        let pts = vec![
            RocPoint { threshold: 0.9, fpr: 0.0, tpr: 0.5 },
            RocPoint { threshold: 0.1, fpr: 1.0, tpr: 1.0 },
        ];
        assert_eq!(parse_roc_csv(&roc_csv(&pts)), pts);
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let s = bar_svg("a<b", &[("x".into(), 0.5, 0.1), ("y".into(), f64::NAN, 0.0)]);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("a&lt;b"));
    }
}
