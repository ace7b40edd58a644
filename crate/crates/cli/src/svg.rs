//! Plain-text SVG of the `(H, d)` regime map.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

pub struct Bounds {
    pub h_min: f64,
    pub h_max: f64,
    pub d_min: f64,
    pub d_max: f64,
}

impl Bounds {
    fn x(&self, h: f64) -> f64 {
        MARGIN + (h - self.h_min) / (self.h_max - self.h_min) * (WIDTH - 2.0 * MARGIN)
    }

    fn y(&self, d: f64) -> f64 {
        HEIGHT - MARGIN - (d - self.d_min) / (self.d_max - self.d_min) * (HEIGHT - 2.0 * MARGIN)
    }

    fn curve(&self, d_of_h: impl Fn(f64) -> f64) -> String {
        let mut pts = String::new();
        let n = 200;
        for i in 0..=n {
            let h = self.h_min + (self.h_max - self.h_min) * i as f64 / n as f64;
            let d = d_of_h(h);
            if d >= self.d_min && d <= self.d_max {
                write!(pts, "{:.2},{:.2} ", self.x(h), self.y(d)).unwrap();
            }
        }
        pts.trim_end().to_string()
    }
}

/// Boundary curves `d = 2H` (nu = 1), `d = 2/H` (critical dimension) and
/// `d = 1/H` (existence boundary).
pub fn regime_map_svg(b: &Bounds) -> String {
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#).unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    let (x0, x1, y0, y1) = (b.x(b.h_min), b.x(b.h_max), b.y(b.d_min), b.y(b.d_max));
    writeln!(s, r#"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#, x1 - x0, y0 - y1).unwrap();
    writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">H</text>"#, (x0 + x1) / 2.0, HEIGHT - 15.0).unwrap();
    writeln!(s, r#"<text x="20" y="{:.2}" text-anchor="middle" font-size="14">d</text>"#, (y0 + y1) / 2.0).unwrap();
    for (v, anchor_x) in [(b.h_min, x0), (b.h_max, x1)] {
        writeln!(s, r#"<text x="{anchor_x:.2}" y="{:.2}" text-anchor="middle" font-size="11">{v}</text>"#, y0 + 16.0).unwrap();
    }
    for (v, anchor_y) in [(b.d_min, y0), (b.d_max, y1)] {
        writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{v}</text>"#, x0 - 6.0, anchor_y + 4.0).unwrap();
    }
    let curves: [(&str, &str, &str, Box<dyn Fn(f64) -> f64>); 3] = [
        ("nu-equals-one", "red", "", Box::new(|h| 2.0 * h)),
        ("critical-dimension", "red", "", Box::new(|h| 2.0 / h)),
        ("existence-boundary", "black", r#" stroke-dasharray="6 4""#, Box::new(|h| 1.0 / h)),
    ];
    for (id, color, dash, f) in curves {
        let pts = b.curve(f);
        if !pts.is_empty() {
            writeln!(s, r#"<polyline id="{id}" points="{pts}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#).unwrap();
        }
    }
    s.push_str("</svg>\n");
    s
}
