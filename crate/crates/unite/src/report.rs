//! Render a loop trace as an SVG chart and a plain-text summary.

use std::fmt::Write as _;

use unite_core::control::TraceRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;

/// Round with the lowest EMA, earliest on ties.
fn best_row(rows: &[TraceRow]) -> Option<&TraceRow> {
    rows.iter()
        .min_by(|a, b| a.ema_eu.total_cmp(&b.ema_eu).then(a.iteration.cmp(&b.iteration)))
}

pub fn render_svg(rows: &[TraceRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">Domain-mean EU per round</text>"#,
        WIDTH / 2.0
    );
    if rows.is_empty() {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">empty trace</text>"#,
            WIDTH / 2.0,
            HEIGHT / 2.0
        );
        out.push_str("</svg>\n");
        return out;
    }

    let values = rows.iter().flat_map(|r| [r.raw_mean_eu, r.ema_eu]);
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = (hi - lo) * 0.05;
    let (lo, hi) = (lo - pad, hi + pad);
    let first = rows[0].iteration as f64;
    let last = rows[rows.len() - 1].iteration as f64;
    let span = (last - first).max(1.0);
    let x = |it: usize| MARGIN + (it as f64 - first) / span * (WIDTH - 2.0 * MARGIN);
    let y = |v: f64| HEIGHT - MARGIN - (v - lo) / (hi - lo) * (HEIGHT - 2.0 * MARGIN);

    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(out, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for r in rows {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            x(r.iteration),
            y0 + 16.0,
            r.iteration
        );
    }
    for v in [lo + pad, hi - pad] {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.4}</text>"#,
            x0 - 4.0,
            y(v) + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">iteration</text>"#,
        WIDTH / 2.0,
        HEIGHT - 8.0
    );

    let polyline = |get: fn(&TraceRow) -> f64| {
        rows.iter()
            .map(|r| format!("{:.1},{:.1}", x(r.iteration), y(get(r))))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let _ = writeln!(
        out,
        r##"<polyline points="{}" fill="none" stroke="#999999" stroke-dasharray="4 3"/>"##,
        polyline(|r| r.raw_mean_eu)
    );
    let _ = writeln!(
        out,
        r##"<polyline points="{}" fill="none" stroke="#1f5fbf" stroke-width="2"/>"##,
        polyline(|r| r.ema_eu)
    );
    if let Some(best) = best_row(rows) {
        let _ = writeln!(
            out,
            r##"<circle cx="{:.1}" cy="{:.1}" r="5" fill="#1f5fbf"><title>best iteration {}</title></circle>"##,
            x(best.iteration),
            y(best.ema_eu),
            best.iteration
        );
    }
    if let Some(stop) = rows.iter().find(|r| r.stopped) {
        let sx = x(stop.iteration);
        let _ = writeln!(
            out,
            r##"<line x1="{sx:.1}" y1="{y0}" x2="{sx:.1}" y2="{y1}" stroke="#c0392b" stroke-dasharray="2 2"/>"##
        );
        let _ = writeln!(
            out,
            r##"<text x="{:.1}" y="{:.1}" fill="#c0392b">stop: {}</text>"##,
            sx - 4.0,
            y1 - 4.0,
            stop.reason.map(|r| r.as_str()).unwrap_or("")
        );
    }
    let _ = writeln!(
        out,
        r##"<text x="{}" y="36" fill="#999999">raw mean</text><text x="{}" y="36" fill="#1f5fbf">EMA</text>"##,
        WIDTH - MARGIN - 110.0,
        WIDTH - MARGIN - 40.0
    );
    out.push_str("</svg>\n");
    out
}

pub fn render_summary(rows: &[TraceRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "rounds: {}", rows.len());
    match rows.iter().find(|r| r.stopped) {
        Some(r) => {
            let _ = writeln!(
                out,
                "stopped: round {} ({})",
                r.iteration,
                r.reason.map(|r| r.as_str()).unwrap_or("unspecified")
            );
        }
        None => {
            let _ = writeln!(out, "stopped: no");
        }
    }
    if let Some(best) = best_row(rows) {
        let _ = writeln!(out, "best iteration: {} (ema {})", best.iteration, best.ema_eu);
    }
    if let Some(last) = rows.last() {
        let _ = writeln!(out, "documents sampled: {}", last.cum_budget);
    }
    if let (Some(a), Some(b)) = (rows.first(), rows.last()) {
        let _ = writeln!(out, "raw mean EU: {} -> {}", a.raw_mean_eu, b.raw_mean_eu);
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{:>4}  {:>14}  {:>14}  {:>9}  {:>10}  reason", "iter", "raw_mean_eu", "ema_eu", "n_sampled", "cum_budget");
    for r in rows {
        let _ = writeln!(
            out,
            "{:>4}  {:>14.6}  {:>14.6}  {:>9}  {:>10}  {}",
            r.iteration,
            r.raw_mean_eu,
            r.ema_eu,
            r.n_sampled,
            r.cum_budget,
            r.reason.map(|r| r.as_str()).unwrap_or("")
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use unite_core::control::{EuTrace, StopReason};

    fn hand_trace() -> Vec<TraceRow> {
        let mut t = EuTrace::from_raw(&[10.0, 8.0, 8.5, 9.0], 0.4).unwrap();
        let last = t.rows.last_mut().unwrap();
        last.stopped = true;
        last.reason = Some(StopReason::Plateau);
        t.rows
    }

    #[test]
    fn summary_names_stop_and_best() {
        let s = render_summary(&hand_trace());
        assert!(s.contains("stopped: round 4 (plateau)"), "{s}");
        assert!(s.contains("best iteration: 3"), "{s}");
    }

    #[test]
    fn svg_is_well_formed_enough() {
        let svg = render_svg(&hand_trace());
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("stop: plateau"));
        assert!(render_svg(&[]).contains("empty trace"));
    }
}
