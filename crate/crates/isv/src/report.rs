//! Evaluation tables, histogram data and SVG plots, metric files.

use std::fmt::Write as _;

use isv_core::eer::{EerPoint, EvalReport, ScoreSet};
use isv_core::histogram::Histogram;
use isv_core::trials::TrialType;

pub const REPORT_HEADER: &str = "scorer ZE-EER PAD-EER ISV-EER";

fn cell(p: &Option<EerPoint>) -> String {
    p.map_or_else(|| "-".to_string(), |p| format!("{:.4}", p.eer))
}

/// One row per scorer under the `ZE-EER PAD-EER ISV-EER` columns, EERs in percent.
pub fn format_report(rows: &[(String, EvalReport)]) -> String {
    let mut s = String::from(REPORT_HEADER);
    s.push('\n');
    for (name, r) in rows {
        let _ = writeln!(s, "{name} {} {} {}", cell(&r.ze), cell(&r.pad), cell(&r.isv));
    }
    s
}

/// Parses a report back into `(scorer, [ze, pad, isv])`; `-` becomes `None`.
pub fn parse_report(text: &str) -> Option<Vec<(String, [Option<f64>; 3])>> {
    let mut lines = text.lines();
    if lines.next()? != REPORT_HEADER {
        return None;
    }
    lines
        .map(|l| {
            let t: Vec<&str> = l.split_whitespace().collect();
            let [name, a, b, c] = t[..] else { return None };
            let v = |x: &str| if x == "-" { Some(None) } else { x.parse().ok().map(Some) };
            Some((name.to_string(), [v(a)?, v(b)?, v(c)?]))
        })
        .collect()
}

/// Key=value lines for a scorer's EERs, thresholds, counts and per-type means.
pub fn report_metrics(prefix: &str, r: &EvalReport, scores: &ScoreSet) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for (name, p) in [("ze_eer", r.ze), ("pad_eer", r.pad), ("isv_eer", r.isv)] {
        if let Some(p) = p {
            out.push((format!("{prefix}.{name}"), p.eer.to_string()));
            out.push((format!("{prefix}.{name}_threshold"), p.threshold.to_string()));
        }
    }
    let means = scores.means();
    for kind in TrialType::ALL {
        out.push((format!("{prefix}.count.{kind}"), r.counts[kind.index()].to_string()));
        if let Some(m) = means[kind.index()] {
            out.push((format!("{prefix}.mean.{kind}"), m.to_string()));
        }
    }
    out
}

pub fn format_kv(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

/// Tabular histogram: bin bounds then one count column per trial type.
pub fn format_histogram(h: &Histogram) -> String {
    let mut s = String::from("# lo hi target zero_effort replay\n");
    let w = h.bin_width();
    for b in 0..h.bins() {
        let lo = h.lo + b as f64 * w;
        let _ = writeln!(
            s,
            "{lo} {} {} {} {}",
            lo + w,
            h.counts[0][b],
            h.counts[1][b],
            h.counts[2][b]
        );
    }
    s
}

const COLORS: [&str; 3] = ["#1b9e77", "#7570b3", "#d95f02"];

/// Step-line plot of per-type bin fractions, one series per trial type.
pub fn histogram_svg(h: &Histogram, title: &str) -> String {
    let (w, ht, pad) = (640.0, 360.0, 40.0);
    let plot_w = w - 2.0 * pad;
    let plot_h = ht - 2.0 * pad;
    let fractions: Vec<Vec<f64>> = h
        .counts
        .iter()
        .map(|c| {
            let total: usize = c.iter().sum();
            c.iter().map(|&n| if total == 0 { 0.0 } else { n as f64 / total as f64 }).collect()
        })
        .collect();
    let peak = fractions.iter().flatten().copied().fold(0.0, f64::max).max(1e-12);
    let bins = h.bins() as f64;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{ht}" viewBox="0 0 {w} {ht}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{ht}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{pad}" y="24" font-family="sans-serif" font-size="14">{title}</text>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{y}" x2="{x2}" y2="{y}" stroke="black"/>"#,
        y = ht - pad,
        x2 = w - pad
    );
    let _ = writeln!(
        s,
        r#"<text x="{pad}" y="{y}" font-family="sans-serif" font-size="11">{:.3}</text>"#,
        h.lo,
        y = ht - pad + 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{x}" y="{y}" font-family="sans-serif" font-size="11" text-anchor="end">{:.3}</text>"#,
        h.hi,
        x = w - pad,
        y = ht - pad + 16.0
    );
    for kind in TrialType::ALL {
        let f = &fractions[kind.index()];
        let mut pts = String::new();
        for (b, v) in f.iter().enumerate() {
            let x0 = pad + plot_w * b as f64 / bins;
            let x1 = pad + plot_w * (b + 1) as f64 / bins;
            let y = ht - pad - plot_h * v / peak;
            let _ = write!(pts, "{x0:.2},{y:.2} {x1:.2},{y:.2} ");
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
            COLORS[kind.index()],
            pts.trim_end()
        );
        let ly = 24.0 + 16.0 * (kind.index() + 1) as f64;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{ly}" font-family="sans-serif" font-size="12" fill="{}" text-anchor="end">{kind}</text>"#,
            COLORS[kind.index()],
            x = w - pad
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use isv_core::eer::compute_three_eers;
    use isv_core::histogram::histogram;

    fn scores() -> ScoreSet {
        let mut s = ScoreSet::new();
        for (v, k) in [(0.9, TrialType::Target), (0.4, TrialType::ZeroEffort), (0.1, TrialType::Replay), (0.8, TrialType::Target)] {
            s.push(v, k).unwrap();
        }
        s
    }

    #[test]
    fn report_columns() {
        let r = compute_three_eers(&scores()).unwrap();
        let text = format_report(&[("cosine".into(), r)]);
        assert_eq!(text.lines().next().unwrap(), "scorer ZE-EER PAD-EER ISV-EER");
        let parsed = parse_report(&text).unwrap();
        assert_eq!(parsed[0].1, [Some(0.0), Some(0.0), Some(0.0)]);
    }

    #[test]
    fn histogram_table_conserves_counts() {
        let h = histogram(&scores(), 4, Some((0.0, 1.0))).unwrap();
        let text = format_histogram(&h);
        let mut totals = [0usize; 3];
        for line in text.lines().skip(1) {
            let t: Vec<usize> = line.split_whitespace().skip(2).map(|x| x.parse().unwrap()).collect();
            (0..3).for_each(|i| totals[i] += t[i]);
        }
        assert_eq!(totals, [2, 1, 1]);
        let svg = histogram_svg(&h, "cosine");
        assert!(svg.starts_with("<svg") && svg.matches("<polyline").count() == 3);
    }
}
