//! Self-contained SVG reports: per-producer rate charts and interwell
//! connectivity heatmaps.
//!
//! Charts draw the observed series in red, one colored line per forecasting
//! method, and a dashed vertical divider where the held-out window begins.
//! Heatmaps shade each injector→producer cell in grayscale, darker for
//! stronger connectivity, so printed reports survive monochrome rendering.

use std::fmt::Write as _;
use std::path::Path;

use crate::conn::ConnectivityMatrix;
use crate::error::{Error, Result};

/// Stroke used for the observed series.
pub const OBSERVED_COLOR: &str = "#c62828";

/// Strokes assigned to forecast series, cycled in order.
pub const SERIES_PALETTE: [&str; 6] = [
    "#1565c0", "#2e7d32", "#6a1b9a", "#ef6c00", "#00838f", "#5d4037",
];

/// One forecast line on a rate chart.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartSeries {
    pub label: String,
    pub values: Vec<f64>,
}

const CHART_W: f64 = 860.0;
const CHART_H: f64 = 500.0;
const MARGIN_L: f64 = 78.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 54.0;
const MARGIN_B: f64 = 64.0;

fn escape_xml(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Tick positions at a round step, covering `[lo, hi]`.
fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let step = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    } * mag;
    let mut ticks = Vec::new();
    let mut t = (lo / step).ceil() * step;
    while t <= hi + 1e-9 * span {
        // Snap near-zero ticks so labels read "0", not "-0".
        ticks.push(if t.abs() < 1e-9 * span { 0.0 } else { t });
        t += step;
    }
    ticks
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if a >= 10000.0 {
        format!("{v:.0}")
    } else if a >= 1.0 {
        let s = format!("{v:.1}");
        s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
    } else {
        format!("{v:.3}")
    }
}

/// Render one producer's rate history: observed in red, one line per
/// forecast, axes in days and bbl/day, and (when inside the time range) a
/// dashed divider marking `test_start_day`.
pub fn rate_chart(
    title: &str,
    times: &[f64],
    observed: &[f64],
    forecasts: &[ChartSeries],
    test_start_day: Option<f64>,
) -> Result<String> {
    if times.len() < 2 {
        return Err(Error::invalid(format!(
            "a rate chart needs at least 2 samples, got {}",
            times.len()
        )));
    }
    if observed.len() != times.len() {
        return Err(Error::invalid(format!(
            "observed series has {} values for {} times",
            observed.len(),
            times.len()
        )));
    }
    for s in forecasts {
        if s.values.len() != times.len() {
            return Err(Error::invalid(format!(
                "series `{}` has {} values for {} times",
                s.label,
                s.values.len(),
                times.len()
            )));
        }
    }
    let all_finite = times
        .iter()
        .chain(observed.iter())
        .chain(forecasts.iter().flat_map(|s| s.values.iter()))
        .all(|v| v.is_finite());
    if !all_finite {
        return Err(Error::invalid("chart data must be finite"));
    }

    let x0 = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let x1 = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(x1 > x0) {
        return Err(Error::invalid("chart needs a nonzero time span"));
    }
    let values = observed
        .iter()
        .chain(forecasts.iter().flat_map(|s| s.values.iter()));
    let mut vmin = f64::INFINITY;
    let mut vmax = f64::NEG_INFINITY;
    for &v in values {
        vmin = vmin.min(v);
        vmax = vmax.max(v);
    }
    // Rates live near or above zero; anchor the axis there unless the data
    // dips below.
    let mut y0 = vmin.min(0.0);
    let mut y1 = vmax;
    if y1 - y0 < 1e-12 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    y1 += pad;
    if y0 < 0.0 {
        y0 -= pad;
    }

    let plot_w = CHART_W - MARGIN_L - MARGIN_R;
    let plot_h = CHART_H - MARGIN_T - MARGIN_B;
    let px = |t: f64| MARGIN_L + (t - x0) / (x1 - x0) * plot_w;
    let py = |v: f64| MARGIN_T + plot_h - (v - y0) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CHART_W}" height="{CHART_H}" viewBox="0 0 {CHART_W} {CHART_H}" font-family="Helvetica, Arial, sans-serif">"#
    );
    let _ = write!(
        svg,
        r##"<rect x="0" y="0" width="{CHART_W}" height="{CHART_H}" fill="#ffffff"/>"##
    );
    let _ = write!(
        svg,
        r##"<text x="{}" y="30" font-size="17" fill="#111111">{}</text>"##,
        MARGIN_L,
        escape_xml(title)
    );

    // Gridlines and tick labels.
    for t in nice_ticks(x0, x1, 6) {
        let x = px(t);
        let _ = write!(
            svg,
            r##"<line x1="{x:.2}" y1="{MARGIN_T}" x2="{x:.2}" y2="{:.2}" stroke="#e0e0e0" stroke-width="1"/>"##,
            MARGIN_T + plot_h
        );
        let _ = write!(
            svg,
            r##"<text x="{x:.2}" y="{:.2}" font-size="12" fill="#444444" text-anchor="middle">{}</text>"##,
            MARGIN_T + plot_h + 18.0,
            format_tick(t)
        );
    }
    for v in nice_ticks(y0, y1, 6) {
        let y = py(v);
        let _ = write!(
            svg,
            r##"<line x1="{MARGIN_L}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0" stroke-width="1"/>"##,
            MARGIN_L + plot_w
        );
        let _ = write!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" font-size="12" fill="#444444" text-anchor="end">{}</text>"##,
            MARGIN_L - 8.0,
            y + 4.0,
            format_tick(v)
        );
    }

    // Axes frame and labels.
    let _ = write!(
        svg,
        r##"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="#555555" stroke-width="1"/>"##
    );
    let _ = write!(
        svg,
        r##"<text x="{:.2}" y="{:.2}" font-size="13" fill="#333333" text-anchor="middle">time (days)</text>"##,
        MARGIN_L + plot_w / 2.0,
        CHART_H - 18.0
    );
    let _ = write!(
        svg,
        r##"<text x="20" y="{:.2}" font-size="13" fill="#333333" text-anchor="middle" transform="rotate(-90 20 {:.2})">rate (bbl/day)</text>"##,
        MARGIN_T + plot_h / 2.0,
        MARGIN_T + plot_h / 2.0
    );

    // Held-out window divider.
    if let Some(day) = test_start_day {
        if !day.is_finite() {
            return Err(Error::invalid("divider day must be finite"));
        }
        if day >= x0 && day <= x1 {
            let x = px(day);
            let _ = write!(
                svg,
                r##"<line x1="{x:.2}" y1="{MARGIN_T}" x2="{x:.2}" y2="{:.2}" stroke="#777777" stroke-width="1.5" stroke-dasharray="7,5"/>"##,
                MARGIN_T + plot_h
            );
            let _ = write!(
                svg,
                r##"<text x="{:.2}" y="{:.2}" font-size="12" fill="#555555">test</text>"##,
                x + 6.0,
                MARGIN_T + 14.0
            );
        }
    }

    // Series: observed first, forecasts above it in palette order.
    let polyline = |svg: &mut String, values: &[f64], color: &str, width: f64, dash: &str| {
        let mut points = String::new();
        for (t, v) in times.iter().zip(values) {
            let _ = write!(points, "{:.2},{:.2} ", px(*t), py(*v));
        }
        let dash_attr = if dash.is_empty() {
            String::new()
        } else {
            format!(r#" stroke-dasharray="{dash}""#)
        };
        let _ = write!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="{width}"{dash_attr} points="{}"/>"#,
            points.trim_end()
        );
    };
    polyline(&mut svg, observed, OBSERVED_COLOR, 2.0, "");
    for (i, s) in forecasts.iter().enumerate() {
        let color = SERIES_PALETTE[i % SERIES_PALETTE.len()];
        polyline(&mut svg, &s.values, color, 1.6, "");
    }

    // Legend.
    let mut entries: Vec<(&str, &str)> = vec![("observed", OBSERVED_COLOR)];
    for (i, s) in forecasts.iter().enumerate() {
        entries.push((&s.label, SERIES_PALETTE[i % SERIES_PALETTE.len()]));
    }
    let legend_h = 18.0 * entries.len() as f64 + 10.0;
    let legend_w = 10.0
        + 34.0
        + 7.2 * entries.iter().map(|(l, _)| l.len()).max().unwrap_or(0) as f64;
    let lx = MARGIN_L + plot_w - legend_w - 10.0;
    let ly = MARGIN_T + 10.0;
    let _ = write!(
        svg,
        r##"<rect x="{lx:.2}" y="{ly:.2}" width="{legend_w:.2}" height="{legend_h:.2}" fill="#ffffff" fill-opacity="0.85" stroke="#bbbbbb" stroke-width="1"/>"##
    );
    for (i, (label, color)) in entries.iter().enumerate() {
        let y = ly + 18.0 * (i as f64 + 1.0) - 4.0;
        let _ = write!(
            svg,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2.5"/>"#,
            lx + 8.0,
            y - 4.0,
            lx + 34.0,
            y - 4.0
        );
        let _ = write!(
            svg,
            r##"<text x="{:.2}" y="{y:.2}" font-size="12" fill="#222222">{}</text>"##,
            lx + 40.0,
            escape_xml(label)
        );
    }

    svg.push_str("</svg>");
    Ok(svg)
}

const CELL: f64 = 66.0;
const HEAT_LEFT: f64 = 96.0;
const HEAT_TOP: f64 = 84.0;

/// Grayscale fill for a connectivity value in `[0, 1]`: light at 0, dark at
/// 1, strictly monotone in between.
fn heat_fill(v: f64) -> (u8, String) {
    let level = (235.0 - 215.0 * v).round() as u8;
    (level, format!("rgb({level},{level},{level})"))
}

/// Render a connectivity matrix as a labeled grayscale grid, one row per
/// injector and one column per producer, darker cells meaning stronger
/// allocation. Cell values are printed to two decimals.
pub fn connectivity_heatmap(title: &str, conn: &ConnectivityMatrix) -> Result<String> {
    let n_i = conn.n_injectors();
    let n_p = conn.n_producers();
    if n_i == 0 || n_p == 0 {
        return Err(Error::invalid("heatmap needs at least one well per side"));
    }
    let width = HEAT_LEFT + CELL * n_p as f64 + 30.0;
    let height = HEAT_TOP + CELL * n_i as f64 + 76.0;

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="Helvetica, Arial, sans-serif">"#
    );
    let _ = write!(
        svg,
        r##"<rect x="0" y="0" width="{width:.0}" height="{height:.0}" fill="#ffffff"/>"##
    );
    let _ = write!(
        svg,
        r##"<text x="24" y="34" font-size="17" fill="#111111">{}</text>"##,
        escape_xml(title)
    );

    for (j, id) in conn.producer_ids().iter().enumerate() {
        let _ = write!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" font-size="13" fill="#333333" text-anchor="middle">{}</text>"##,
            HEAT_LEFT + CELL * (j as f64 + 0.5),
            HEAT_TOP - 12.0,
            escape_xml(id)
        );
    }
    for (i, id) in conn.injector_ids().iter().enumerate() {
        let _ = write!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" font-size="13" fill="#333333" text-anchor="end">{}</text>"##,
            HEAT_LEFT - 10.0,
            HEAT_TOP + CELL * (i as f64 + 0.5) + 4.0,
            escape_xml(id)
        );
    }

    for i in 0..n_i {
        for j in 0..n_p {
            let v = conn.values()[[i, j]];
            let (level, fill) = heat_fill(v);
            let x = HEAT_LEFT + CELL * j as f64;
            let y = HEAT_TOP + CELL * i as f64;
            let _ = write!(
                svg,
                r##"<rect x="{x:.2}" y="{y:.2}" width="{CELL}" height="{CELL}" fill="{fill}" stroke="#888888" stroke-width="0.5"/>"##
            );
            let text_fill = if level < 128 { "#ffffff" } else { "#111111" };
            let _ = write!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" font-size="13" fill="{text_fill}" text-anchor="middle">{v:.2}</text>"#,
                x + CELL / 2.0,
                y + CELL / 2.0 + 4.0
            );
        }
    }

    // Value scale strip under the grid.
    let strip_y = HEAT_TOP + CELL * n_i as f64 + 26.0;
    let strip_w = CELL * n_p as f64;
    let n_swatches = 24;
    for k in 0..n_swatches {
        let v = k as f64 / (n_swatches - 1) as f64;
        let (_, fill) = heat_fill(v);
        let _ = write!(
            svg,
            r##"<rect x="{:.2}" y="{strip_y:.2}" width="{:.2}" height="12" fill="{fill}"/>"##,
            HEAT_LEFT + strip_w * k as f64 / n_swatches as f64,
            strip_w / n_swatches as f64 + 0.5
        );
    }
    let _ = write!(
        svg,
        r##"<text x="{HEAT_LEFT:.2}" y="{:.2}" font-size="11" fill="#444444">0</text>"##,
        strip_y + 26.0
    );
    let _ = write!(
        svg,
        r##"<text x="{:.2}" y="{:.2}" font-size="11" fill="#444444" text-anchor="end">1</text>"##,
        HEAT_LEFT + strip_w,
        strip_y + 26.0
    );

    svg.push_str("</svg>");
    Ok(svg)
}

/// Write an SVG document to disk.
pub fn write_svg(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Minimal well-formedness scan: every opened tag is closed in order.
    fn assert_balanced(svg: &str) {
        let mut stack: Vec<String> = Vec::new();
        let bytes = svg.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i] == b'<' {
                let end = svg[i..].find('>').map(|e| i + e).expect("unclosed tag");
                let inner = &svg[i + 1..end];
                if let Some(name) = inner.strip_prefix('/') {
                    let open = stack.pop().unwrap_or_else(|| {
                        panic!("closing </{name}> with nothing open")
                    });
                    assert_eq!(open, name, "mismatched close at byte {i}");
                } else if !inner.ends_with('/') {
                    let name: String = inner
                        .chars()
                        .take_while(|c| c.is_ascii_alphanumeric())
                        .collect();
                    stack.push(name);
                }
                i = end + 1;
            } else {
                i += 1;
            }
        }
        assert!(stack.is_empty(), "unclosed tags: {stack:?}");
    }

    fn sample_chart() -> String {
        let times: Vec<f64> = (0..40).map(|k| 5.0 * k as f64).collect();
        let observed: Vec<f64> = times.iter().map(|t| 200.0 + 40.0 * (t / 50.0).sin()).collect();
        let forecasts = vec![
            ChartSeries {
                label: "crm".into(),
                values: times.iter().map(|t| 198.0 + 39.0 * (t / 50.0).sin()).collect(),
            },
            ChartSeries {
                label: "pignn expert".into(),
                values: times.iter().map(|t| 201.0 + 41.0 * (t / 50.0).sin()).collect(),
            },
        ];
        rate_chart("P1 liquid rate", &times, &observed, &forecasts, Some(140.0)).unwrap()
    }

    #[test]
    fn rate_chart_is_well_formed_and_complete() {
        let svg = sample_chart();
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>"));
        assert_balanced(&svg);
        // One polyline per series, observed included.
        assert_eq!(svg.matches("<polyline").count(), 3);
        assert!(svg.contains(OBSERVED_COLOR));
        // The divider is dashed; the legend names every series.
        assert!(svg.contains("stroke-dasharray=\"7,5\""));
        for label in ["observed", "crm", "pignn expert"] {
            assert!(svg.contains(label), "legend misses {label}");
        }
        assert!(svg.contains("time (days)") && svg.contains("rate (bbl/day)"));
    }

    #[test]
    fn divider_outside_the_time_range_is_omitted() {
        let times: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let observed = vec![1.0; 10];
        let svg = rate_chart("x", &times, &observed, &[], Some(99.0)).unwrap();
        assert!(!svg.contains("stroke-dasharray=\"7,5\""));
    }

    #[test]
    fn chart_rejects_bad_series() {
        let times = vec![0.0, 1.0, 2.0];
        assert!(rate_chart("x", &times, &[1.0, 2.0], &[], None).is_err());
        assert!(rate_chart("x", &[0.0], &[1.0], &[], None).is_err());
        assert!(rate_chart("x", &times, &[1.0, f64::NAN, 3.0], &[], None).is_err());
        let bad = vec![ChartSeries { label: "s".into(), values: vec![1.0] }];
        assert!(rate_chart("x", &times, &[1.0, 2.0, 3.0], &bad, None).is_err());
        // Constant zero time axis has no span to draw.
        assert!(rate_chart("x", &[2.0, 2.0], &[1.0, 1.0], &[], None).is_err());
    }

    #[test]
    fn heatmap_shades_monotonically_in_connectivity() {
        let conn = ConnectivityMatrix::new(
            vec!["I1".into(), "I2".into()],
            vec!["P1".into(), "P2".into(), "P3".into()],
            array![[0.0, 0.25, 0.5], [0.75, 1.0, 0.1]],
        )
        .unwrap();
        let svg = connectivity_heatmap("learned connectivity", &conn).unwrap();
        assert_balanced(&svg);
        for id in ["I1", "I2", "P1", "P2", "P3"] {
            assert!(svg.contains(id));
        }
        // Shade levels must strictly decrease (darken) as values increase.
        let mut pairs: Vec<(f64, u8)> = conn
            .values()
            .iter()
            .map(|&v| (v, heat_fill(v).0))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in pairs.windows(2) {
            assert!(
                w[1].1 < w[0].1,
                "values {} < {} but shades {} !> {}",
                w[0].0,
                w[1].0,
                w[0].1,
                w[1].1
            );
        }
        // Every cell's fill really appears in the document.
        for &v in conn.values() {
            assert!(svg.contains(&heat_fill(v).1));
        }
    }

    #[test]
    fn heatmap_escapes_markup_in_ids() {
        let conn = ConnectivityMatrix::new(
            vec!["I<1>".into()],
            vec!["P&1".into()],
            array![[0.4]],
        )
        .unwrap();
        let svg = connectivity_heatmap("t", &conn).unwrap();
        assert!(svg.contains("I&lt;1&gt;") && svg.contains("P&amp;1"));
        assert_balanced(&svg);
    }

    #[test]
    fn svg_files_round_trip_to_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chart.svg");
        let svg = sample_chart();
        write_svg(&path, &svg).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), svg);
    }
}
