//! Self-contained SVG output. Coordinates are integers or fixed two-decimal
//! numbers so identical input gives identical bytes.

use super::render::CrossCell;
use crate::dataset::Modality;
use crate::metrics::{Fraction, Rgi};

/// Absolute RGI at which the ramp saturates.
pub const RAMP_LIMIT: f64 = 0.5;
const NEUTRAL: (u8, u8, u8) = (247, 247, 247);
const WARM: (u8, u8, u8) = (178, 24, 43);
const COLD: (u8, u8, u8) = (33, 102, 172);
const MISSING: &str = "#bdbdbd";

fn mix(from: (u8, u8, u8), to: (u8, u8, u8), t: f64) -> String {
    let lerp = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(from.0, to.0), lerp(from.1, to.1), lerp(from.2, to.2))
}

/// Diverging ramp: neutral grey-white at 0, red for positive RGI, blue for
/// negative, saturating at +-[`RAMP_LIMIT`]. Undefined RGI is mid grey.
pub fn heatmap_color(rgi: &Rgi) -> String {
    let v = match rgi {
        Rgi::Undefined => return MISSING.to_string(),
        Rgi::PosInfinite => RAMP_LIMIT,
        Rgi::NegInfinite => -RAMP_LIMIT,
        Rgi::Finite(v) => v.clamp(-RAMP_LIMIT, RAMP_LIMIT),
    };
    let t = v.abs() / RAMP_LIMIT;
    if v >= 0.0 {
        mix(NEUTRAL, WARM, t)
    } else {
        mix(NEUTRAL, COLD, t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatCell {
    pub train: Modality,
    pub test: Modality,
    pub rgi: Option<Rgi>,
}

impl From<&CrossCell> for HeatCell {
    fn from(c: &CrossCell) -> Self {
        HeatCell {
            train: c.train,
            test: c.test,
            rgi: Some(c.report.rgi),
        }
    }
}

const CELL_W: u32 = 110;
const CELL_H: u32 = 70;
const LEFT: u32 = 110;
const TOP: u32 = 60;

/// Train modalities down the side, test modalities across the top.
pub fn heatmap_svg(cells: &[HeatCell], digest: &str) -> String {
    let width = LEFT + CELL_W * 3 + 20;
    let height = TOP + CELL_H * 3 + 40;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\">\n"
    );
    s.push_str(&format!("<!-- manifest: {digest} -->\n"));
    s.push_str(&format!("<rect width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>\n"));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">RGI (train \u{2192} test)</text>\n",
        LEFT + CELL_W * 3 / 2
    ));
    for (j, test) in Modality::ALL.iter().enumerate() {
        let x = LEFT + CELL_W * j as u32 + CELL_W / 2;
        s.push_str(&format!(
            "<text x=\"{x}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
            TOP - 10,
            test.title()
        ));
    }
    for (i, train) in Modality::ALL.iter().enumerate() {
        let y = TOP + CELL_H * i as u32;
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"end\">{}</text>\n",
            LEFT - 10,
            y + CELL_H / 2 + 5,
            train.title()
        ));
        for (j, test) in Modality::ALL.iter().enumerate() {
            let x = LEFT + CELL_W * j as u32;
            let rgi = cells.iter().find(|c| c.train == *train && c.test == *test).and_then(|c| c.rgi);
            let (fill, label) = match rgi {
                Some(r) => (heatmap_color(&r), r.render()),
                None => (MISSING.to_string(), "n/a".to_string()),
            };
            s.push_str(&format!(
                "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL_W}\" height=\"{CELL_H}\" fill=\"{fill}\" stroke=\"#ffffff\" stroke-width=\"2\"/>\n"
            ));
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"15\" text-anchor=\"middle\">{label}</text>\n",
                x + CELL_W / 2,
                y + CELL_H / 2 + 5
            ));
        }
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\" fill=\"#555555\">ramp saturates at \u{00b1}{RAMP_LIMIT:.2}</text>\n",
        LEFT + CELL_W * 3 / 2,
        TOP + CELL_H * 3 + 25
    ));
    s.push_str("</svg>\n");
    s
}

/// Line plot of IDK percentage against k.
pub fn curve_svg(curve: &[(usize, Fraction)], digest: &str) -> String {
    let (w, h, left, top, plot_w, plot_h) = (480u32, 320u32, 60u32, 30u32, 380u32, 230u32);
    let n = curve.last().map_or(1, |(k, _)| (*k).max(1));
    let px = |k: usize| left as f64 + plot_w as f64 * k as f64 / n as f64;
    let py = |f: &Fraction| top as f64 + plot_h as f64 * (1.0 - f.to_f64());
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n"
    );
    s.push_str(&format!("<!-- manifest: {digest} -->\n"));
    s.push_str(&format!("<rect width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>\n"));
    s.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#000000\"/>\n",
        top + plot_h,
        left + plot_w,
        top + plot_h
    ));
    s.push_str(&format!(
        "<line x1=\"{left}\" y1=\"{top}\" x2=\"{left}\" y2=\"{}\" stroke=\"#000000\"/>\n",
        top + plot_h
    ));
    for pct in [0u32, 25, 50, 75, 100] {
        let y = top + plot_h - plot_h * pct / 100;
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{pct}%</text>\n",
            left - 6,
            y + 4
        ));
    }
    for (k, _) in curve {
        s.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{k}</text>\n",
            px(*k),
            top + plot_h + 16
        ));
    }
    let points: Vec<String> = curve.iter().map(|(k, f)| format!("{:.2},{:.2}", px(*k), py(f))).collect();
    s.push_str(&format!(
        "<polyline points=\"{}\" fill=\"none\" stroke=\"#b2182b\" stroke-width=\"2\"/>\n",
        points.join(" ")
    ));
    for (k, f) in curve {
        s.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#b2182b\"><title>{}%</title></circle>\n",
            px(*k),
            py(f),
            f.percent()
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">k (correct rounds required)</text>\n",
        left + plot_w / 2,
        h - 8
    ));
    s.push_str("</svg>\n");
    s
}
