//! SVG export of sketches, and a reader for the exact subset we write.

use std::fmt::Write as _;
use std::path::Path;

use crate::geometry::{CanvasSize, Point, Sketch, Stroke};
use crate::{Error, Result};

/// Path data for one stroke: `M` then a single `L`, `Q` or `C` command.
pub fn path_data(stroke: &Stroke) -> String {
    let pts = stroke.points();
    let command = match stroke.degree() {
        1 => 'L',
        2 => 'Q',
        _ => 'C',
    };
    let mut d = format!("M {:.6} {:.6} {command}", pts[0].x, pts[0].y);
    for p in &pts[1..] {
        write!(d, " {:.6} {:.6}", p.x, p.y).unwrap();
    }
    d
}

pub fn to_svg(sketch: &Sketch) -> String {
    let CanvasSize { width, height } = sketch.canvas();
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    )
    .unwrap();
    for stroke in sketch.strokes() {
        writeln!(
            out,
            r#"  <path d="{}" fill="none" stroke="black" stroke-width="{:.6}" stroke-linecap="round"/>"#,
            path_data(stroke),
            stroke.width()
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

pub fn export_svg(sketch: &Sketch, path: &Path) -> Result<()> {
    std::fs::write(path, to_svg(sketch))?;
    Ok(())
}

fn attr<'a>(element: &'a str, name: &str) -> Option<&'a str> {
    let needle = format!(" {name}=\"");
    let start = element.find(&needle)? + needle.len();
    let len = element[start..].find('"')?;
    Some(&element[start..start + len])
}

fn number(token: &str) -> Result<f64> {
    token.parse().map_err(|_| Error::Parse(format!("bad number {token:?}")))
}

fn parse_path(d: &str, width: f64) -> Result<Stroke> {
    let tokens: Vec<&str> = d.split_whitespace().collect();
    let (want, arity) = match tokens.get(3).copied() {
        Some("L") => (1, 2),
        Some("Q") => (2, 3),
        Some("C") => (3, 4),
        other => return Err(Error::Parse(format!("unsupported path command {other:?}"))),
    };
    if tokens.first() != Some(&"M") || tokens.len() != 4 + 2 * want {
        return Err(Error::Parse(format!("malformed path data {d:?}")));
    }
    let mut points = vec![Point::new(number(tokens[1])?, number(tokens[2])?)];
    for pair in tokens[4..].chunks_exact(2) {
        points.push(Point::new(number(pair[0])?, number(pair[1])?));
    }
    debug_assert_eq!(points.len(), arity);
    Stroke::new(points, width)
}

/// Reads back an SVG produced by [`to_svg`].
pub fn parse_svg(text: &str) -> Result<Sketch> {
    let root_start = text.find("<svg").ok_or_else(|| Error::Parse("no <svg> element".into()))?;
    let root = &text[root_start..root_start + text[root_start..].find('>').unwrap_or(0)];
    let view_box = attr(root, "viewBox").ok_or_else(|| Error::Parse("missing viewBox".into()))?;
    let dims: Vec<&str> = view_box.split_whitespace().collect();
    let [_, _, w, h] = dims.as_slice() else {
        return Err(Error::Parse(format!("bad viewBox {view_box:?}")));
    };
    let canvas = CanvasSize::new(
        w.parse().map_err(|_| Error::Parse(format!("bad width {w:?}")))?,
        h.parse().map_err(|_| Error::Parse(format!("bad height {h:?}")))?,
    );

    let mut strokes = Vec::new();
    let mut rest = &text[root_start..];
    while let Some(start) = rest.find("<path") {
        let end = rest[start..].find("/>").ok_or_else(|| Error::Parse("unterminated <path>".into()))?;
        let element = &rest[start..start + end];
        let d = attr(element, "d").ok_or_else(|| Error::Parse("path without d".into()))?;
        let width = number(attr(element, "stroke-width").unwrap_or("1"))?;
        strokes.push(parse_path(d, width)?);
        rest = &rest[start + end..];
    }
    Sketch::new(strokes, canvas)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_path_matches_expected_text() {
        let s = Stroke::new(
            vec![Point::new(0.0, 0.0), Point::new(0.0, 1.0), Point::new(1.0, 1.0), Point::new(1.0, 0.0)],
            1.5,
        )
        .unwrap();
        assert_eq!(path_data(&s), "M 0.000000 0.000000 C 0.000000 1.000000 1.000000 1.000000 1.000000 0.000000");
    }

    #[test]
    fn line_and_quadratic_commands() {
        let line = Stroke::new(vec![Point::new(1.0, 2.0), Point::new(3.5, 4.25)], 1.0).unwrap();
        assert_eq!(path_data(&line), "M 1.000000 2.000000 L 3.500000 4.250000");
        let quad = Stroke::new(vec![Point::new(0.0, 0.0); 3], 1.0).unwrap();
        assert!(path_data(&quad).contains(" Q "));
    }

    #[test]
    fn one_path_per_stroke() {
        let s = Stroke::new(vec![Point::new(1.0, 1.0), Point::new(2.0, 2.0)], 1.5).unwrap();
        let sk = Sketch::new(vec![s; 16], CanvasSize::square(224)).unwrap();
        let svg = to_svg(&sk);
        assert_eq!(svg.matches("<path").count(), 16);
        assert!(svg.contains(r#"viewBox="0 0 224 224""#));
        assert!(svg.contains(r#"stroke-linecap="round""#));
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_svg("hello").is_err());
        assert!(parse_svg(r#"<svg viewBox="0 0 4 4"><path d="M 0 0 Z"/></svg>"#).is_err());
        assert!(parse_svg(r#"<svg viewBox="0 0 4 4"><path d="M 0 0 L 1"/></svg>"#).is_err());
    }
}
