//! Number formatting, JSON documents and a small SVG plot writer.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::Result;

/// A float with 17 significant digits, which round-trips exactly.
pub fn sig17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Pretty JSON whose floats carry 17 significant digits; non-finite floats
/// become null as usual.
struct Sig17Formatter(PrettyFormatter<'static>);

macro_rules! delegate {
    ($($name:ident($($arg:ident: $ty:ty),*)),* $(,)?) => {
        $(
            fn $name<W: ?Sized + io::Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> io::Result<()> {
                self.0.$name(w $(, $arg)*)
            }
        )*
    };
}

impl Formatter for Sig17Formatter {
    delegate!(
        begin_array(),
        end_array(),
        begin_array_value(first: bool),
        end_array_value(),
        begin_object(),
        end_object(),
        begin_object_key(first: bool),
        begin_object_value(),
        end_object_value(),
    );

    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(sig17(value).as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(value))
    }
}

/// Pretty-printed JSON (17-digit floats) with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17Formatter(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)?)?;
    Ok(())
}

/// A line chart or band chart on fixed axes.
pub struct SvgPlot {
    width: f64,
    height: f64,
    margin: f64,
    x_range: (f64, f64),
    y_range: (f64, f64),
    title: String,
    x_label: String,
    y_label: String,
    body: String,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl SvgPlot {
    pub fn new(title: &str, x_label: &str, y_label: &str, x_range: (f64, f64), y_range: (f64, f64)) -> Self {
        let widen = |(a, b): (f64, f64)| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
        SvgPlot {
            width: 720.0,
            height: 420.0,
            margin: 56.0,
            x_range: widen(x_range),
            y_range: widen(y_range),
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            body: String::new(),
        }
    }

    fn px(&self, x: f64) -> f64 {
        let (a, b) = self.x_range;
        self.margin + (x - a) / (b - a) * (self.width - 2.0 * self.margin)
    }

    fn py(&self, y: f64) -> f64 {
        let (a, b) = self.y_range;
        self.height - self.margin - (y - a) / (b - a) * (self.height - 2.0 * self.margin)
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], color: &str) {
        let mut path = String::new();
        for &(x, y) in points.iter().filter(|p| p.0.is_finite() && p.1.is_finite()) {
            let _ = write!(path, "{:.2},{:.2} ", self.px(x), self.py(y));
        }
        let _ = writeln!(
            self.body,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            path.trim_end()
        );
    }

    /// A vertical band over [x0, x1] spanning the plot height.
    pub fn band(&mut self, x0: f64, x1: f64, color: &str) {
        let (a, b) = (self.px(x0), self.px(x1));
        let _ = writeln!(
            self.body,
            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.35"/>"#,
            a.min(b),
            self.margin,
            (b - a).abs().max(0.5),
            self.height - 2.0 * self.margin
        );
    }

    pub fn render(&self) -> String {
        let (w, h, m) = (self.width, self.height, self.margin);
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        out.push_str(&self.body);
        let _ = writeln!(
            out,
            r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            w - 2.0 * m,
            h - 2.0 * m
        );
        for (k, v) in [self.x_range.0, self.x_range.1].iter().enumerate() {
            let anchor = if k == 0 { "start" } else { "end" };
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="{anchor}">{v:.4}</text>"#,
                self.px(*v),
                h - m + 16.0
            );
        }
        for v in [self.y_range.0, self.y_range.1] {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.4}</text>"#,
                m - 4.0,
                self.py(v) + 4.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">{}</text>"#,
            w / 2.0,
            m / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            w / 2.0,
            h - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
            h / 2.0,
            h / 2.0,
            escape(&self.y_label)
        );
        out.push_str("</svg>\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23] {
            let s = sig17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-').replace('.', "");
            assert_eq!(mantissa.len(), 17);
        }
    }

    #[test]
    fn json_floats_round_trip() {
        let v = vec![0.1, -1.0 / 3.0, 1e-300, f64::NAN];
        let text = to_json(&v).unwrap();
        assert!(text.contains("1.0000000000000001e-1"), "{text}");
        assert!(text.contains("null"));
        let back: Vec<Option<f64>> = serde_json::from_str(&text).unwrap();
        assert_eq!(&back[..3], &[Some(0.1), Some(-1.0 / 3.0), Some(1e-300)]);
        assert_eq!(back[3], None);
    }

    #[test]
    fn svg_is_well_formed() {
        let mut p = SvgPlot::new("a < b", "E", "y", (0.0, 1.0), (0.0, 1.0));
        p.polyline(&[(0.0, 0.0), (1.0, 1.0)], "black");
        p.band(0.2, 0.3, "red");
        let s = p.render();
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("a &lt; b"));
    }
}
