//! Minimal static SVG charts: line, point and bar series on linear axes.
//!
//! Output is deterministic: coordinates are printed with two decimals and
//! elements are emitted in series order.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const PANEL_HEIGHT: f64 = 360.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 120.0;
const MARGIN_TOP: f64 = 32.0;
const MARGIN_BOTTOM: f64 = 44.0;

pub const RED: &str = "#d62728";
pub const GREEN: &str = "#2ca02c";
pub const BLUE: &str = "#1f77b4";
pub const ORANGE: &str = "#ff7f0e";
pub const PALETTE: [&str; 6] = [BLUE, ORANGE, GREEN, RED, "#9467bd", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mark {
    Line,
    Points,
    /// Vertical bars of the given width in data units, centred on x.
    Bars(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub color: String,
    pub mark: Mark,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, color: &str, mark: Mark, points: Vec<(f64, f64)>) -> Self {
        Series {
            name: name.into(),
            color: color.to_string(),
            mark,
            points,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Points drawn as red rings on top of everything else.
    pub highlights: Vec<(f64, f64)>,
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
}

impl Plot {
    pub fn new(
        title: impl Into<String>,
        x_label: impl Into<String>,
        y_label: impl Into<String>,
    ) -> Self {
        Plot {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            ..Plot::default()
        }
    }

    pub fn with(mut self, series: Series) -> Self {
        self.series.push(series);
        self
    }

    pub fn to_svg(&self) -> String {
        stack(std::slice::from_ref(self))
    }

    fn ranges(&self) -> ((f64, f64), (f64, f64)) {
        let finite = |v: f64| v.is_finite();
        let xs = self.series.iter().flat_map(|s| {
            let half = if let Mark::Bars(w) = s.mark {
                w / 2.0
            } else {
                0.0
            };
            s.points.iter().flat_map(move |p| [p.0 - half, p.0 + half])
        });
        let ys = self.series.iter().flat_map(|s| {
            let base = matches!(s.mark, Mark::Bars(_)).then_some(0.0);
            s.points.iter().map(|p| p.1).chain(base)
        });
        let x = self
            .x_range
            .unwrap_or_else(|| span(xs.filter(|v| finite(*v))));
        let y = self
            .y_range
            .unwrap_or_else(|| span(ys.filter(|v| finite(*v))));
        (x, y)
    }

    fn render(&self, out: &mut String, top: f64) {
        let ((x0, x1), (y0, y1)) = self.ranges();
        let (left, right) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
        let (upper, lower) = (top + MARGIN_TOP, top + PANEL_HEIGHT - MARGIN_BOTTOM);
        let sx = |x: f64| left + (x - x0) / (x1 - x0) * (right - left);
        let sy = |y: f64| lower - (y - y0) / (y1 - y0) * (lower - upper);

        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">{}</text>"#,
            (left + right) / 2.0,
            top + 20.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r##"<rect x="{left:.2}" y="{upper:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#333"/>"##,
            right - left,
            lower - upper
        );
        for i in 0..=4 {
            let fx = x0 + (x1 - x0) * i as f64 / 4.0;
            let fy = y0 + (y1 - y0) * i as f64 / 4.0;
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="10">{}</text>"#,
                sx(fx),
                lower + 14.0,
                tick(fx)
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="10">{}</text>"#,
                left - 4.0,
                sy(fy) + 3.0,
                tick(fy)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text>"#,
            (left + right) / 2.0,
            lower + 32.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="14" y="{:.2}" text-anchor="middle" font-size="11" transform="rotate(-90 14 {:.2})">{}</text>"#,
            (upper + lower) / 2.0,
            (upper + lower) / 2.0,
            escape(&self.y_label)
        );

        for (i, s) in self.series.iter().enumerate() {
            let pts = s
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite());
            match s.mark {
                Mark::Line => {
                    let path: Vec<String> = pts
                        .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                        .collect();
                    let _ = writeln!(
                        out,
                        r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
                        path.join(" "),
                        s.color
                    );
                }
                Mark::Points => {
                    for &(x, y) in pts {
                        let _ = writeln!(
                            out,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}" fill-opacity="0.7"/>"#,
                            sx(x),
                            sy(y),
                            s.color
                        );
                    }
                }
                Mark::Bars(w) => {
                    for &(x, y) in pts {
                        let (a, b) = (sx(x - w / 2.0), sx(x + w / 2.0));
                        let (t, base) = (sy(y.max(0.0)), sy(0.0_f64.max(y0)));
                        let _ = writeln!(
                            out,
                            r#"<rect x="{a:.2}" y="{t:.2}" width="{:.2}" height="{:.2}" fill="{}" fill-opacity="0.5"/>"#,
                            b - a,
                            (base - t).max(0.0),
                            s.color
                        );
                    }
                }
            }
            let ly = upper + 14.0 * i as f64 + 8.0;
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{}"/><text x="{:.2}" y="{:.2}" font-size="10">{}</text>"#,
                right + 8.0,
                ly - 8.0,
                s.color,
                right + 22.0,
                ly + 1.0,
                escape(&s.name)
            );
        }
        for &(x, y) in &self.highlights {
            if x.is_finite() && y.is_finite() {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="5" fill="none" stroke="{RED}" stroke-width="2"/>"#,
                    sx(x),
                    sy(y)
                );
            }
        }
    }
}

/// Renders plots as vertically stacked panels in one document.
pub fn stack(plots: &[Plot]) -> String {
    let height = PANEL_HEIGHT * plots.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, plot) in plots.iter().enumerate() {
        plot.render(&mut out, PANEL_HEIGHT * i as f64);
    }
    out.push_str("</svg>\n");
    out
}

/// Min and max of the values, padded to a non-empty interval.
fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
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

#[cfg(test)]
pub(crate) fn assert_well_formed(svg: &str) {
    use quick_xml::events::Event;
    let mut reader = quick_xml::Reader::from_str(svg);
    let mut depth = 0i32;
    let mut saw_root = false;
    loop {
        match reader.read_event().expect("well-formed xml") {
            Event::Start(e) => {
                saw_root |= e.name().as_ref() == b"svg";
                depth += 1;
            }
            Event::End(_) => depth -= 1,
            Event::Eof => break,
            _ => {}
        }
    }
    assert!(saw_root && depth == 0);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_every_mark_and_escapes_text() {
        let plot = Plot::new("a < b & c", "x", "y \"q\"")
            .with(Series::new(
                "line",
                BLUE,
                Mark::Line,
                vec![(0.0, 0.0), (1.0, 2.0), (2.0, f64::NAN)],
            ))
            .with(Series::new("pts", GREEN, Mark::Points, vec![(0.5, 1.0)]))
            .with(Series::new(
                "bars",
                RED,
                Mark::Bars(0.5),
                vec![(0.25, 3.0), (0.75, 1.0)],
            ));
        let svg = plot.to_svg();
        assert_well_formed(&svg);
        assert!(svg.contains("a &lt; b &amp; c"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg, plot.clone().to_svg());
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn stacks_panels_and_handles_empty_plots() {
        let a = Plot::new("a", "x", "y");
        let mut b =
            Plot::new("b", "x", "y").with(Series::new("s", BLUE, Mark::Line, vec![(1.0, 1.0)]));
        b.highlights.push((1.0, 1.0));
        let svg = stack(&[a, b]);
        assert_well_formed(&svg);
        assert!(svg.contains(r#"height="720""#));
        assert!(svg.contains(RED));
    }

    #[test]
    fn ticks_are_compact() {
        assert_eq!(tick(0.5), "0.5");
        assert_eq!(tick(2.0), "2");
        assert_eq!(tick(-0.0001), "0");
    }
}
