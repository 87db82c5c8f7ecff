//! Static SVG rendering of tilings, bracings and ribbons.

use std::collections::BTreeSet;
use std::fmt::Write;

use crate::rigidity::brace_diagonal;
use crate::tiling::{RibbonSet, Tiling};

const PALETTE: [&str; 8] = [
    "#8fb8de", "#f2c57c", "#a8d5a2", "#e59a9a", "#c6a7e0", "#9ad3cf", "#e8b4d0", "#cfcf8f",
];

#[derive(Clone, Debug, Default)]
pub struct SvgOptions {
    pub braced: BTreeSet<usize>,
    pub highlight_ribbons: Vec<usize>,
    /// Pixels per unit edge length; 20 when zero.
    pub scale: f64,
}

/// Tiles coloured by acute angle (congruence class), braces as diagonals,
/// highlighted ribbons outlined in red.
pub fn render(tiling: &Tiling, ribbons: Option<&RibbonSet>, options: &SvgOptions) -> String {
    let scale = if options.scale > 0.0 { options.scale } else { 20.0 };
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for j in tiling.joints() {
        for k in 0..2 {
            lo[k] = lo[k].min(j.pos[k]);
            hi[k] = hi[k].max(j.pos[k]);
        }
    }
    if tiling.joints().is_empty() {
        (lo, hi) = ([0.0; 2], [0.0; 2]);
    }
    let margin = 1.0;
    let (w, h) = ((hi[0] - lo[0] + 2.0 * margin) * scale, (hi[1] - lo[1] + 2.0 * margin) * scale);
    // SVG's y axis points down.
    let px = |p: crate::Vec2| ((p.x - lo[0] + margin) * scale, (hi[1] - p.y + margin) * scale);

    let mut classes: Vec<f64> = Vec::new();
    let mut class_of = |angle: f64| match classes.iter().position(|&a| (a - angle).abs() < 1e-6) {
        Some(k) => k,
        None => {
            classes.push(angle);
            classes.len() - 1
        }
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1}" height="{h:.1}" viewBox="0 0 {w:.1} {h:.1}">"#
    );
    let _ = writeln!(out, r##"<g stroke="#333" stroke-width="0.6" stroke-linejoin="round">"##);
    for (t, tile) in tiling.tiles().iter().enumerate() {
        let colour = PALETTE[class_of(tiling.acute_angle(t)) % PALETTE.len()];
        let points: Vec<String> = tile
            .joints
            .iter()
            .map(|&j| {
                let (x, y) = px(tiling.pos(j));
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(out, r#"<polygon points="{}" fill="{colour}"/>"#, points.join(" "));
    }
    let _ = writeln!(out, "</g>");

    if let Some(ribbons) = ribbons {
        let _ = writeln!(out, r##"<g fill="none" stroke="#c0392b" stroke-width="2">"##);
        for &r in &options.highlight_ribbons {
            if r >= ribbons.len() {
                continue;
            }
            for &t in &ribbons[r].tiles {
                let points: Vec<String> = tiling
                    .tile(t)
                    .joints
                    .iter()
                    .map(|&j| {
                        let (x, y) = px(tiling.pos(j));
                        format!("{x:.2},{y:.2}")
                    })
                    .collect();
                let _ = writeln!(out, r#"<polygon points="{}"/>"#, points.join(" "));
            }
        }
        let _ = writeln!(out, "</g>");
    }

    let _ = writeln!(out, r##"<g stroke="#111" stroke-width="1.4">"##);
    for &t in &options.braced {
        if t >= tiling.tiles().len() {
            continue;
        }
        let [a, b] = brace_diagonal(tiling, t);
        let ((x1, y1), (x2, y2)) = (px(tiling.pos(a)), px(tiling.pos(b)));
        let _ = writeln!(out, r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}"/>"#);
    }
    let _ = writeln!(out, "</g>\n</svg>");
    out
}
