//! Minimal SVG line plots for the metrics and averaging CSVs.

use std::fmt::Write;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn nice_num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1000.0 || v.abs() < 0.01 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Renders one SVG line chart. `log_x` plots x on a log10 scale (for the
/// sample-count axis of the averaging analysis).
pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series], log_x: bool) -> String {
    let xmap = |x: f64| if log_x { x.max(1e-12).log10() } else { x };
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            xmin = xmin.min(xmap(x));
            xmax = xmax.max(xmap(x));
            ymin = ymin.min(y);
            ymax = ymax.max(y);
        }
    }
    if !xmin.is_finite() {
        xmin = 0.0;
        xmax = 1.0;
        ymin = 0.0;
        ymax = 1.0;
    }
    if (xmax - xmin).abs() < 1e-12 {
        xmax = xmin + 1.0;
    }
    if (ymax - ymin).abs() < 1e-12 {
        ymax = ymin + 1.0;
    }
    let pad = 0.05 * (ymax - ymin);
    let (ymin, ymax) = (ymin - pad, ymax + pad);

    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (xmap(x) - xmin) / (xmax - xmin) * pw;
    let sy = |y: f64| MARGIN_T + (1.0 - (y - ymin) / (ymax - ymin)) * ph;

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">
<rect width="100%" height="100%" fill="white"/>
<text x="{:.1}" y="22" font-family="sans-serif" font-size="16" text-anchor="middle">{title}</text>
"#,
        MARGIN_L + pw / 2.0
    );

    // Axes and ticks.
    let _ = write!(
        svg,
        r#"<line x1="{l}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/>
<line x1="{l}" y1="{t}" x2="{l}" y2="{b}" stroke="black"/>
"#,
        l = MARGIN_L,
        r = MARGIN_L + pw,
        t = MARGIN_T,
        b = MARGIN_T + ph
    );
    for i in 0..=4 {
        let fx = i as f64 / 4.0;
        let xv = xmin + fx * (xmax - xmin);
        let x = MARGIN_L + fx * pw;
        let label = if log_x { nice_num(10f64.powf(xv)) } else { nice_num(xv) };
        let _ = write!(
            svg,
            r#"<line x1="{x:.1}" y1="{b}" x2="{x:.1}" y2="{b2}" stroke="black"/>
<text x="{x:.1}" y="{ty}" font-family="sans-serif" font-size="11" text-anchor="middle">{label}</text>
"#,
            b = MARGIN_T + ph,
            b2 = MARGIN_T + ph + 5.0,
            ty = MARGIN_T + ph + 18.0
        );
        let yv = ymin + fx * (ymax - ymin);
        let y = sy(yv);
        let _ = write!(
            svg,
            r#"<line x1="{l}" y1="{y:.1}" x2="{l2}" y2="{y:.1}" stroke="black"/>
<text x="{tx}" y="{y:.1}" font-family="sans-serif" font-size="11" text-anchor="end" dominant-baseline="middle">{}</text>
"#,
            nice_num(yv),
            l = MARGIN_L,
            l2 = MARGIN_L - 5.0,
            tx = MARGIN_L - 8.0
        );
    }
    let _ = write!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle">{x_label}</text>
<text x="18" y="{:.1}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {:.1})">{y_label}</text>
"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 12.0,
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut path = String::new();
        for (j, &(x, y)) in s.points.iter().enumerate() {
            let _ = write!(path, "{}{:.2},{:.2} ", if j == 0 { "M" } else { "L" }, sx(x), sy(y));
        }
        let _ = writeln!(
            svg,
            r#"<path d="{path}" fill="none" stroke="{color}" stroke-width="1.8"/>"#
        );
        let ly = MARGIN_T + 14.0 + 18.0 * i as f64;
        let _ = write!(
            svg,
            r#"<line x1="{lx}" y1="{ly:.1}" x2="{lx2}" y2="{ly:.1}" stroke="{color}" stroke-width="3"/>
<text x="{tx}" y="{ly:.1}" font-family="sans-serif" font-size="12" dominant-baseline="middle">{}</text>
"#,
            s.name,
            lx = MARGIN_L + pw + 10.0,
            lx2 = MARGIN_L + pw + 34.0,
            tx = MARGIN_L + pw + 40.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Pulls `(x_col, y_col)` pairs out of parsed CSV rows.
pub fn column_series(
    header: &[String],
    rows: &[Vec<f64>],
    x_col: &str,
    y_col: &str,
) -> Option<Series> {
    let xi = header.iter().position(|h| h == x_col)?;
    let yi = header.iter().position(|h| h == y_col)?;
    Some(Series {
        name: y_col.to_string(),
        points: rows.iter().map(|r| (r[xi], r[yi])).collect(),
    })
}
