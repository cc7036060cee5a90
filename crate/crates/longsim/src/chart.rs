//! Minimal static SVG charts. No display server, no plotting runtime;
//! output bytes depend only on the input data.

use std::fmt::Write;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f",
];

pub struct SvgCanvas {
    width: f64,
    height: f64,
    body: String,
}

impl SvgCanvas {
    pub fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#
        );
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{stroke}" stroke-width="{width}"/>"#
        );
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], stroke: &str, width: f64) {
        let mut path = String::new();
        for (x, y) in points {
            let _ = write!(path, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}"/>"#,
            path.trim_end()
        );
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        let escaped = content
            .replace('&', "&amp;")
            .replace('<', "&lt;")
            .replace('>', "&gt;");
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size}" font-family="sans-serif" text-anchor="{anchor}">{escaped}</text>"#
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n{body}</svg>\n",
            w = self.width,
            h = self.height,
            body = self.body
        )
    }
}

/// Grouped bar chart: one group per x label, one bar per series.
pub fn grouped_bars(
    title: &str,
    y_label: &str,
    groups: &[(String, Vec<f64>)],
    series: &[String],
) -> String {
    let width = 180.0 + 90.0 * groups.len().max(4) as f64;
    let height = 360.0;
    let (left, right, top, bottom) = (70.0, 20.0, 50.0, 70.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;

    let y_max = groups
        .iter()
        .flat_map(|(_, vs)| vs.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-9)
        * 1.15;

    let mut svg = SvgCanvas::new(width, height);
    svg.text(width / 2.0, 24.0, 15.0, "middle", title);
    svg.line(left, top, left, top + plot_h, "#333", 1.0);
    svg.line(left, top + plot_h, left + plot_w, top + plot_h, "#333", 1.0);
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let y = top + plot_h * (1.0 - frac);
        svg.line(left - 4.0, y, left, y, "#333", 1.0);
        svg.text(
            left - 8.0,
            y + 4.0,
            11.0,
            "end",
            &format!("{:.3}", y_max * frac),
        );
        if i > 0 {
            svg.line(left, y, left + plot_w, y, "#ddd", 0.5);
        }
    }
    svg.text(16.0, top + plot_h / 2.0, 12.0, "middle", y_label);

    let group_w = plot_w / groups.len().max(1) as f64;
    let bar_w = (group_w * 0.8) / series.len().max(1) as f64;
    for (gi, (label, values)) in groups.iter().enumerate() {
        let gx = left + gi as f64 * group_w;
        for (si, v) in values.iter().enumerate() {
            let h = plot_h * (v / y_max).clamp(0.0, 1.0);
            let x = gx + group_w * 0.1 + si as f64 * bar_w;
            svg.rect(
                x,
                top + plot_h - h,
                bar_w * 0.92,
                h,
                PALETTE[si % PALETTE.len()],
            );
        }
        svg.text(
            gx + group_w / 2.0,
            top + plot_h + 16.0,
            11.0,
            "middle",
            label,
        );
    }
    for (si, name) in series.iter().enumerate() {
        let x = left + 10.0 + si as f64 * 150.0;
        let y = height - 22.0;
        svg.rect(x, y - 10.0, 12.0, 12.0, PALETTE[si % PALETTE.len()]);
        svg.text(x + 18.0, y, 12.0, "start", name);
    }
    svg.finish()
}

fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut counts = vec![0.0; bins];
    if values.is_empty() || hi <= lo {
        return counts;
    }
    for &v in values {
        let frac = ((v - lo) / (hi - lo)).clamp(0.0, 1.0 - 1e-12);
        counts[(frac * bins as f64) as usize] += 1.0;
    }
    let total: f64 = counts.iter().sum();
    for c in &mut counts {
        *c /= total.max(1.0);
    }
    counts
}

/// Named series of raw values: one entry per condition.
pub type ValueSeries = Vec<(String, Vec<f64>)>;

/// Step-line distribution panels: one panel per metric, one line per series.
pub fn distribution_panels(title: &str, panels: &[(String, ValueSeries)], bins: usize) -> String {
    let panel_h = 260.0;
    let width = 640.0;
    let height = 60.0 + panel_h * panels.len() as f64 + 30.0;
    let (left, right) = (70.0, 25.0);
    let plot_w = width - left - right;

    let mut svg = SvgCanvas::new(width, height);
    svg.text(width / 2.0, 24.0, 15.0, "middle", title);
    for (pi, (metric, series)) in panels.iter().enumerate() {
        let top = 50.0 + pi as f64 * panel_h;
        let plot_h = panel_h - 70.0;
        let lo = 0.0f64;
        let hi = series
            .iter()
            .flat_map(|(_, vs)| vs.iter().copied())
            .fold(0.0f64, f64::max)
            .max(1e-9)
            * 1.05;
        let y_max = series
            .iter()
            .map(|(_, vs)| {
                histogram(vs, lo, hi, bins)
                    .into_iter()
                    .fold(0.0f64, f64::max)
            })
            .fold(0.0f64, f64::max)
            .max(1e-9);

        svg.line(left, top, left, top + plot_h, "#333", 1.0);
        svg.line(left, top + plot_h, left + plot_w, top + plot_h, "#333", 1.0);
        svg.text(
            left + plot_w / 2.0,
            top + plot_h + 32.0,
            12.0,
            "middle",
            metric,
        );
        for i in 0..=4 {
            let frac = i as f64 / 4.0;
            let x = left + plot_w * frac;
            svg.line(x, top + plot_h, x, top + plot_h + 4.0, "#333", 1.0);
            svg.text(
                x,
                top + plot_h + 16.0,
                10.0,
                "middle",
                &format!("{:.1}", lo + (hi - lo) * frac),
            );
        }
        svg.text(24.0, top + plot_h / 2.0, 11.0, "middle", "fraction");

        for (si, (name, values)) in series.iter().enumerate() {
            let counts = histogram(values, lo, hi, bins);
            let mut points = Vec::with_capacity(2 * bins);
            for (bi, c) in counts.iter().enumerate() {
                let x0 = left + plot_w * bi as f64 / bins as f64;
                let x1 = left + plot_w * (bi + 1) as f64 / bins as f64;
                let y = top + plot_h * (1.0 - c / y_max);
                points.push((x0, y));
                points.push((x1, y));
            }
            svg.polyline(&points, PALETTE[si % PALETTE.len()], 1.6);
            if pi == 0 {
                let lx = left + 10.0 + (si % 4) as f64 * 140.0;
                let ly = top + 14.0 + (si / 4) as f64 * 16.0;
                svg.line(
                    lx,
                    ly - 4.0,
                    lx + 14.0,
                    ly - 4.0,
                    PALETTE[si % PALETTE.len()],
                    2.0,
                );
                svg.text(lx + 20.0, ly, 11.0, "start", name);
            }
        }
    }
    svg.finish()
}

/// Time-series panel for one run trace: speed, realized and commanded
/// acceleration, and ground-truth gap against time.
pub fn run_timeseries(title: &str, rows: &[crate::trace::TraceRow]) -> String {
    let width = 760.0;
    let height = 560.0;
    let (left, right) = (60.0, 20.0);
    let plot_w = width - left - right;
    let t0 = rows.first().map_or(0.0, |r| r.t);
    let t1 = rows.last().map_or(1.0, |r| r.t).max(t0 + 1e-9);

    let mut svg = SvgCanvas::new(width, height);
    svg.text(width / 2.0, 22.0, 14.0, "middle", title);
    type RowField = Box<dyn Fn(&crate::trace::TraceRow) -> Option<f64>>;
    let panels: [(&str, RowField); 3] = [
        ("speed [m/s]", Box::new(|r| Some(r.v))),
        ("accel [m/s^2]", Box::new(|r| Some(r.a_realized))),
        ("truth gap [m]", Box::new(|r| r.truth_gap)),
    ];
    let panel_h = 160.0;
    for (pi, (label, f)) in panels.iter().enumerate() {
        let top = 40.0 + pi as f64 * (panel_h + 10.0);
        let values: Vec<(f64, f64)> = rows.iter().filter_map(|r| f(r).map(|v| (r.t, v))).collect();
        let (mut lo, mut hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, v)| {
                (lo.min(*v), hi.max(*v))
            });
        if !lo.is_finite() || !hi.is_finite() {
            lo = 0.0;
            hi = 1.0;
        }
        if (hi - lo).abs() < 1e-9 {
            hi = lo + 1.0;
        }
        let pad = (hi - lo) * 0.08;
        let (lo, hi) = (lo - pad, hi + pad);
        svg.line(left, top, left, top + panel_h, "#333", 1.0);
        svg.line(
            left,
            top + panel_h,
            left + plot_w,
            top + panel_h,
            "#333",
            1.0,
        );
        svg.text(left + 4.0, top + 12.0, 11.0, "start", label);
        svg.text(left - 6.0, top + 12.0, 9.0, "end", &format!("{hi:.1}"));
        svg.text(left - 6.0, top + panel_h, 9.0, "end", &format!("{lo:.1}"));
        let to_xy = |(t, v): (f64, f64)| {
            (
                left + plot_w * (t - t0) / (t1 - t0),
                top + panel_h * (1.0 - (v - lo) / (hi - lo)),
            )
        };
        let pts: Vec<(f64, f64)> = values.into_iter().map(to_xy).collect();
        if pts.len() > 1 {
            svg.polyline(&pts, PALETTE[pi % PALETTE.len()], 1.2);
        }
        if pi == 1 {
            // overlay the commanded acceleration on the realized panel
            let cmd: Vec<(f64, f64)> = rows
                .iter()
                .map(|r| to_xy((r.t, r.a_cmd.clamp(lo, hi))))
                .collect();
            if cmd.len() > 1 {
                svg.polyline(&cmd, "#999999", 0.8);
            }
        }
    }
    for i in 0..=4 {
        let frac = i as f64 / 4.0;
        let x = left + plot_w * frac;
        svg.text(
            x,
            height - 12.0,
            10.0,
            "middle",
            &format!("{:.1}s", t0 + (t1 - t0) * frac),
        );
    }
    svg.finish()
}
