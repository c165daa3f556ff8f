//! Minimal SVG line plots with optional logarithmic axes.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fit::PowerFit;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Series {
        Series { label: label.into(), points, dashed: false }
    }

    /// The fitted power law over its window, dashed and labelled with the exponent.
    pub fn from_fit(fit: &PowerFit) -> Series {
        let (a, b) = fit.window;
        let points = (0..=32).map(|i| a * (b / a).powf(i as f64 / 32.0)).map(|x| (x, fit.eval(x))).collect();
        Series { label: format!("slope {:.4} ± {:.1e}", fit.exponent, fit.stderr), points, dashed: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

impl Plot {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Plot {
        Plot { title: title.into(), x_label: x_label.into(), y_label: y_label.into(), log_x: false, log_y: false, series: Vec::new() }
    }

    pub fn log_log(mut self) -> Plot {
        self.log_x = true;
        self.log_y = true;
        self
    }

    pub fn with(mut self, s: Series) -> Plot {
        self.series.push(s);
        self
    }

    fn usable(&self, (x, y): (f64, f64)) -> bool {
        x.is_finite() && y.is_finite() && (!self.log_x || x > 0.0) && (!self.log_y || y > 0.0)
    }

    fn map(&self, log: bool, v: f64) -> f64 {
        if log {
            v.log10()
        } else {
            v
        }
    }

    pub fn to_svg(&self) -> Result<String> {
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().copied())
            .filter(|&p| self.usable(p))
            .map(|(x, y)| (self.map(self.log_x, x), self.map(self.log_y, y)))
            .collect();
        if pts.is_empty() {
            return Err(Error::Input(format!("plot '{}' has no drawable points", self.title)));
        }
        let span = |v: Vec<f64>| {
            let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        };
        let (x0, x1) = span(pts.iter().map(|p| p.0).collect());
        let (y0, y1) = span(pts.iter().map(|p| p.1).collect());
        let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
        let py = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - TOP - BOTTOM);

        let mut svg = String::new();
        let _ =
            writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
        let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(&self.title));
        let _ = writeln!(
            svg,
            r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - LEFT - RIGHT,
            H - TOP - BOTTOM
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let _ =
                writeln!(svg, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, px(xv), H - BOTTOM + 16.0, tick(xv, self.log_x));
            let _ = writeln!(svg, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 6.0, py(yv) + 4.0, tick(yv, self.log_y));
        }
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, escape(&self.x_label));
        let _ = writeln!(
            svg,
            r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(&self.y_label)
        );
        for (k, s) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let path: Vec<String> = s
                .points
                .iter()
                .copied()
                .filter(|&p| self.usable(p))
                .map(|(x, y)| format!("{:.2},{:.2}", px(self.map(self.log_x, x)), py(self.map(self.log_y, y))))
                .collect();
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#, path.join(" "));
            let ly = TOP + 16.0 + 16.0 * k as f64;
            let _ = writeln!(svg, r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#, LEFT + 10.0, escape(&s.label));
        }
        svg.push_str("</svg>\n");
        Ok(svg)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_svg()?)?;
        Ok(())
    }
}

fn tick(v: f64, log: bool) -> String {
    if log {
        format!("1e{v:.1}")
    } else {
        format!("{v:.3e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_log_plot_has_one_polyline_per_series() {
        let pts: Vec<(f64, f64)> = (1..50).map(|i| (i as f64, (i as f64).powf(-0.5))).collect();
        let fit = crate::fit::power_law_fit(
            &pts.iter().map(|p| p.0).collect::<Vec<_>>(),
            &pts.iter().map(|p| p.1).collect::<Vec<_>>(),
            (1.0, 49.0),
        )
        .unwrap();
        let svg = Plot::new("a < b", "x", "y").log_log().with(Series::new("data", pts)).with(Series::from_fit(&fit)).to_svg().unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a &lt; b"));
        assert!(svg.contains("slope -0.5000"));
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn non_positive_points_are_dropped_on_log_axes() {
        let p = Plot::new("t", "x", "y").log_log().with(Series::new("s", vec![(0.0, 1.0), (-1.0, 2.0)]));
        assert!(p.to_svg().is_err());
        let lin = Plot { log_x: false, log_y: false, ..p };
        assert!(lin.to_svg().is_ok());
    }
}
