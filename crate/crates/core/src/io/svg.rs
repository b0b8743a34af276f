//! Static SVG drawing of a placement. Output depends only on the inputs, so
//! repeated renders are byte-identical.

use std::fmt::Write;

use crate::cog_region::RegionGrid;
use crate::geometry::Shape;
use crate::model::{BuildOptions, ElementKind, Topology};
use crate::verifier::{objective_of, placed_bodies, Placement, VerifyError};

/// Pixels per metre.
const SCALE: f64 = 400.0;
/// Margin around the drawing (px).
const MARGIN: f64 = 30.0;

/// Inactive CoG region and the offset of its `b` axis in design coordinates.
pub struct RegionOverlay<'a> {
    pub grid: &'a RegionGrid<f64>,
    pub x_offset: f64,
}

struct View {
    x0: f64,
    y1: f64,
}

impl View {
    fn x(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) * SCALE
    }

    fn y(&self, y: f64) -> f64 {
        MARGIN + (self.y1 - y) * SCALE
    }
}

fn fill(kind: ElementKind) -> &'static str {
    match kind {
        ElementKind::Mm => "#e6550d",
        ElementKind::Hm => "#fd8d3c",
        ElementKind::Inv => "#31a354",
        ElementKind::Bp => "#3182bd",
        ElementKind::Gt => "#756bb1",
        ElementKind::Wl => "#bdbdbd",
    }
}

/// Five-pointed star centred on `(cx, cy)` in pixels.
fn star(cx: f64, cy: f64, r: f64) -> String {
    (0..10)
        .map(|k| {
            let rad = if k % 2 == 0 { r } else { 0.45 * r };
            let a = std::f64::consts::PI * (k as f64 / 5.0 - 0.5);
            format!("{:.2},{:.2}", cx + rad * a.cos(), cy + rad * a.sin())
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Draws the design space, motor box, optional region, every placed shape
/// and the CoG markers. Without a placement only the boundaries are drawn.
pub fn render_svg(
    topo: &Topology,
    opts: &BuildOptions,
    placement: Option<&Placement>,
    region: Option<RegionOverlay<'_>>,
) -> Result<String, VerifyError> {
    let bodies = match placement {
        Some(p) => placed_bodies(topo, p)?,
        None => Vec::new(),
    };
    let s = &opts.space;
    let (mut x0, mut x1, mut y0, mut y1) = (s.x_min, s.x_max, s.y_min, s.y_max);
    for b in &bodies {
        let c = b.shape.center();
        let (ex, ey) = b.shape.half_bbox();
        x0 = x0.min(c.x - ex);
        x1 = x1.max(c.x + ex);
        y0 = y0.min(c.y - ey);
        y1 = y1.max(c.y + ey);
    }
    let view = View { x0, y1 };
    let (w, h) = ((x1 - x0) * SCALE + 2.0 * MARGIN, (y1 - y0) * SCALE + 2.0 * MARGIN);
    let mut out = String::new();
    let o = &mut out;
    let _ = writeln!(o, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(o, r#"<!-- format_version: 1 -->"#);
    let _ = writeln!(o, r#"<rect width="100%" height="100%" fill="white"/>"#);

    if let Some(r) = region {
        let g = r.grid;
        let half = |v: &[f64]| if v.len() > 1 { 0.5 * (v[1] - v[0]) } else { 0.01 };
        let (hb, hh) = (half(&g.b), half(&g.h));
        let _ = writeln!(o, r##"<g class="region" fill="#9ecae1" fill-opacity="0.35" stroke="none">"##);
        for (ih, &hv) in g.h.iter().enumerate() {
            for (ib, &bv) in g.b.iter().enumerate() {
                if g.is_inactive(ib, ih) {
                    let x = r.x_offset + bv;
                    let _ = writeln!(
                        o,
                        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}"/>"#,
                        view.x(x - hb),
                        view.y(hv + hh),
                        2.0 * hb * SCALE,
                        2.0 * hh * SCALE
                    );
                }
            }
        }
        let _ = writeln!(o, "</g>");
    }

    let _ = writeln!(
        o,
        r#"<rect class="design-space" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black" stroke-dasharray="8,4"/>"#,
        view.x(s.x_min),
        view.y(s.y_max),
        s.width() * SCALE,
        s.height() * SCALE
    );
    if let Some(bx) = &opts.objective.mm_box {
        let _ = writeln!(
            o,
            r##"<rect class="mm-box" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#636363" stroke-dasharray="4,3"/>"##,
            view.x(bx.x[0]),
            view.y(bx.y[1]),
            (bx.x[1] - bx.x[0]) * SCALE,
            (bx.y[1] - bx.y[0]) * SCALE
        );
    }

    // one group per element, clusters inside their subsystem's group
    let mut names: Vec<&str> = bodies.iter().map(|b| b.element.as_str()).collect();
    names.dedup();
    for name in names {
        let group: Vec<_> = bodies.iter().filter(|b| b.element == name).collect();
        let _ = writeln!(o, r#"<g class="element" data-name="{name}">"#);
        for b in &group {
            let colour = fill(b.kind);
            match &b.shape {
                Shape::Rect(r) => {
                    let pts: Vec<String> = r.corners().iter().map(|p| format!("{:.2},{:.2}", view.x(p.x), view.y(p.y))).collect();
                    let _ = writeln!(o, r##"<polygon class="body" points="{}" fill="{colour}" fill-opacity="0.6" stroke="#252525"/>"##, pts.join(" "));
                }
                Shape::Circle(c) => {
                    let _ = writeln!(
                        o,
                        r##"<circle class="body" cx="{:.2}" cy="{:.2}" r="{:.2}" fill="{colour}" fill-opacity="0.6" stroke="#252525"/>"##,
                        view.x(c.center.x),
                        view.y(c.center.y),
                        c.radius * SCALE
                    );
                }
            }
        }
        // module centres for subsystems, body centres otherwise
        let spec = topo.element(name);
        let module = spec.and_then(|e| e.modules());
        for b in &group {
            match (module, &b.shape) {
                (Some(m), Shape::Rect(r)) => {
                    let (u1, u2) = r.axes();
                    let (nw, nh) = ((r.width / m.width).round() as usize, (r.height / m.height).round() as usize);
                    for i in 0..nw {
                        for j in 0..nh {
                            let du = (i as f64 + 0.5) * m.width - 0.5 * r.width;
                            let dv = (j as f64 + 0.5) * m.height - 0.5 * r.height;
                            let p = r.center.add(u1.scale(du)).add(u2.scale(dv));
                            let _ = writeln!(o, r##"<circle class="dot" cx="{:.2}" cy="{:.2}" r="2" fill="#252525"/>"##, view.x(p.x), view.y(p.y));
                        }
                    }
                }
                _ => {
                    let c = b.shape.center();
                    let _ = writeln!(o, r##"<circle class="dot" cx="{:.2}" cy="{:.2}" r="2" fill="#252525"/>"##, view.x(c.x), view.y(c.y));
                }
            }
        }
        let c = group[0].shape.center();
        let _ = writeln!(o, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{name}</text>"#, view.x(c.x), view.y(c.y) - 6.0);
        let _ = writeln!(o, "</g>");
    }

    let ob = &opts.objective;
    for (label, pm) in [("chassis", &ob.chassis), ("rider", &ob.rider)] {
        if pm.mass > 0.0 {
            let _ = writeln!(
                o,
                r##"<polygon class="star" data-name="{label}" points="{}" fill="#636363"/>"##,
                star(view.x(pm.at[0]), view.y(pm.at[1]), 7.0)
            );
        }
    }
    let (ix, iy) = (view.x(ob.ideal[0]), view.y(ob.ideal[1]));
    let _ = writeln!(
        o,
        r##"<path class="ideal" d="M{:.2},{:.2}L{:.2},{:.2}M{:.2},{:.2}L{:.2},{:.2}" stroke="#de2d26" stroke-width="2"/>"##,
        ix - 6.0,
        iy - 6.0,
        ix + 6.0,
        iy + 6.0,
        ix - 6.0,
        iy + 6.0,
        ix + 6.0,
        iy - 6.0
    );
    if let Some(p) = placement {
        let cog = objective_of(topo, opts, p)?.cog;
        let _ = writeln!(o, r#"<circle class="cog" cx="{:.2}" cy="{:.2}" r="5" fill="black"/>"#, view.x(cog[0]), view.y(cog[1]));
    }
    let _ = writeln!(o, "</svg>");
    Ok(out)
}
