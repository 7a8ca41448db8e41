//! SVG rendering of a page: every token box, answer start tokens outlined in
//! red, end tokens in blue, and an arrow from each chain link's start token
//! to the next link's start token, labeled by field.

use std::fmt::Write as _;

use crate::doc_model::{BoundingBox, Document, Span, GRID_MAX};

pub const START_COLOR: &str = "#d62728";
pub const END_COLOR: &str = "#1f77b4";
const TOKEN_COLOR: &str = "#9a9a9a";
const LINK_COLOR: &str = "#2ca02c";

/// Ordered answers of one field.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldChain {
    pub field_id: String,
    pub spans: Vec<Span>,
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

struct Viewport {
    sx: f64,
    sy: f64,
}

impl Viewport {
    fn rect(&self, b: BoundingBox) -> (f64, f64, f64, f64) {
        let (x, y) = (b.x0 as f64 * self.sx, b.y0 as f64 * self.sy);
        (x, y, b.width() as f64 * self.sx, b.height() as f64 * self.sy)
    }

    fn center(&self, b: BoundingBox) -> (f64, f64) {
        let (x, y, w, h) = self.rect(b);
        (x + w / 2.0, y + h / 2.0)
    }
}

/// Renders `doc` at `width` pixels wide (height follows the page aspect
/// ratio). Spans pointing outside the document are skipped.
pub fn render_svg(doc: &Document, chains: &[FieldChain], width: f64) -> String {
    let aspect = if doc.page_width > 0 {
        doc.page_height as f64 / doc.page_width as f64
    } else {
        1.0
    };
    let height = width * aspect;
    let grid = GRID_MAX as f64;
    let vp = Viewport {
        sx: width / grid,
        sy: height / grid,
    };
    let tokens = doc.tokens();
    let valid = |i: usize| i >= 1 && i < tokens.len();

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1}" height="{height:.1}" viewBox="0 0 {width:.1} {height:.1}">"#
    );
    let _ = writeln!(svg, "<title>{}</title>", escape(&doc.doc_id));
    let _ = writeln!(
        svg,
        r#"<defs><marker id="arrow" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="6" markerHeight="6" orient="auto-start-reverse"><path d="M 0 0 L 10 5 L 0 10 z" fill="{LINK_COLOR}"/></marker></defs>"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let _ = writeln!(svg, r#"<g class="tokens" font-family="monospace" font-size="8">"#);
    for (i, t) in tokens.iter().enumerate().skip(1) {
        let (x, y, w, h) = vp.rect(t.bbox);
        let _ = writeln!(
            svg,
            r#"<rect class="token" data-index="{i}" x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="{TOKEN_COLOR}" stroke-width="0.5"/>"#
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.2}" y="{:.2}" fill="#444">{}</text>"##,
            x + 1.0,
            y + h - 1.0,
            escape(&t.text)
        );
    }
    let _ = writeln!(svg, "</g>");

    for chain in chains {
        let spans: Vec<Span> = chain
            .spans
            .iter()
            .copied()
            .filter(|s| valid(s.start) && valid(s.end))
            .collect();
        let _ = writeln!(svg, r#"<g class="field" data-field="{}">"#, escape(&chain.field_id));
        for s in &spans {
            let (x, y, w, h) = vp.rect(tokens[s.start].bbox);
            let _ = writeln!(
                svg,
                r#"<rect class="start" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="{START_COLOR}" stroke-width="1.5"/>"#,
                x - 1.0,
                y - 1.0,
                w + 2.0,
                h + 2.0
            );
            let (x, y, w, h) = vp.rect(tokens[s.end].bbox);
            let _ = writeln!(
                svg,
                r#"<rect class="end" x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="none" stroke="{END_COLOR}" stroke-width="1"/>"#
            );
        }
        for pair in spans.windows(2) {
            let (x1, y1) = vp.center(tokens[pair[0].start].bbox);
            let (x2, y2) = vp.center(tokens[pair[1].start].bbox);
            let _ = writeln!(
                svg,
                r#"<line class="link" x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{LINK_COLOR}" stroke-width="1" marker-end="url(#arrow)"/>"#
            );
        }
        if let Some(first) = spans.first() {
            let (x, y, _, _) = vp.rect(tokens[first.start].bbox);
            let _ = writeln!(
                svg,
                r#"<text class="label" x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="7" fill="{START_COLOR}">{}</text>"#,
                (y - 2.0).max(7.0),
                escape(&chain.field_id)
            );
        }
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    svg
}
