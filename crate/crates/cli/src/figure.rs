//! Static SVG figures. Output depends only on the input columns: fixed
//! canvas, fixed number formatting, input order preserved.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::CliError;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FigureKind {
    XyProjection,
    #[serde(rename = "3d-path")]
    Path3d,
    Mask,
    Poincare,
    FractionCurve,
}

impl FromStr for FigureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "xy-projection" => FigureKind::XyProjection,
            "3d-path" => FigureKind::Path3d,
            "mask" => FigureKind::Mask,
            "poincare" => FigureKind::Poincare,
            "fraction-curve" => FigureKind::FractionCurve,
            _ => return Err(format!("unknown figure kind {s:?}")),
        })
    }
}

impl FigureKind {
    /// Columns the input table must provide.
    pub fn required_columns(&self) -> &'static [&'static str] {
        match self {
            FigureKind::XyProjection => &["x", "y"],
            FigureKind::Path3d => &["x", "y", "z"],
            FigureKind::Mask => &["x", "y", "trapped"],
            FigureKind::Poincare => &["orbit", "y_wrapped", "z_wrapped"],
            FigureKind::FractionCurve => &["param", "fraction"],
        }
    }
}

type Columns = BTreeMap<String, Vec<f64>>;

fn column<'a>(cols: &'a Columns, name: &str) -> Result<&'a [f64], CliError> {
    cols.get(name).map(Vec::as_slice).ok_or_else(|| CliError::Usage(format!("input lacks column {name:?}")))
}

/// Renders `kind` from named columns.
pub fn render(kind: FigureKind, cols: &Columns) -> Result<String, CliError> {
    for c in kind.required_columns() {
        column(cols, c)?;
    }
    let n = column(cols, kind.required_columns()[0])?.len();
    if n == 0 {
        return Err(CliError::EmptyData);
    }
    match kind {
        FigureKind::XyProjection => {
            let (x, y) = (column(cols, "x")?, column(cols, "y")?);
            let mut c = Canvas::fit(x, y, "x", "y");
            c.polyline(x, y, PALETTE[0]);
            Ok(c.finish())
        }
        FigureKind::Path3d => {
            // oblique projection: depth along z shifts the point up and right
            let (x, y, z) = (column(cols, "x")?, column(cols, "y")?, column(cols, "z")?);
            let u: Vec<f64> = x.iter().zip(y).map(|(x, y)| x - 0.5 * y).collect();
            let v: Vec<f64> = y.iter().zip(z).map(|(y, z)| z + 0.35 * y).collect();
            let mut c = Canvas::fit(&u, &v, "x - y/2", "z + 0.35 y");
            c.polyline(&u, &v, PALETTE[0]);
            Ok(c.finish())
        }
        FigureKind::Mask => {
            let (x, y, m) = (column(cols, "x")?, column(cols, "y")?, column(cols, "trapped")?);
            let mut c = Canvas::fit(x, y, "x", "y");
            let r = (0.45 * (WIDTH - 2.0 * MARGIN) / (n as f64).sqrt()).clamp(0.3, 6.0);
            for k in 0..n {
                let fill = if m[k] > 0.5 { "#1f3b73" } else { "#e6e6e6" };
                c.dot(x[k], y[k], r, fill);
            }
            Ok(c.finish())
        }
        FigureKind::Poincare => {
            let (o, y, z) = (column(cols, "orbit")?, column(cols, "y_wrapped")?, column(cols, "z_wrapped")?);
            let tau = std::f64::consts::TAU;
            let mut c = Canvas::with_bounds((0.0, tau), (0.0, tau), "y mod 2pi", "z mod 2pi");
            for k in 0..n {
                c.dot(y[k], z[k], 1.2, PALETTE[(o[k].max(0.0) as usize) % PALETTE.len()]);
            }
            Ok(c.finish())
        }
        FigureKind::FractionCurve => {
            let (p, f) = (column(cols, "param")?, column(cols, "fraction")?);
            let series = cols.get("series").cloned().unwrap_or_else(|| vec![0.0; n]);
            let mut c = Canvas::with_bounds(bounds(p), (0.0, 1.0), "parameter", "fraction");
            let mut ids: Vec<i64> = series.iter().map(|s| *s as i64).collect();
            ids.dedup();
            ids.sort_unstable();
            ids.dedup();
            for (k, id) in ids.iter().enumerate() {
                let idx: Vec<usize> = (0..n).filter(|&i| series[i] as i64 == *id).collect();
                let px: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
                let py: Vec<f64> = idx.iter().map(|&i| f[i]).collect();
                let colour = PALETTE[k % PALETTE.len()];
                c.polyline(&px, &py, colour);
                for (a, b) in px.iter().zip(&py) {
                    c.dot(*a, *b, 3.0, colour);
                }
            }
            Ok(c.finish())
        }
    }
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let (lo, hi) = v
        .iter()
        .filter(|a| a.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| (lo.min(*a), hi.max(*a)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = if hi > lo { 0.04 * (hi - lo) } else { 0.5 };
    (lo - pad, hi + pad)
}

struct Canvas {
    xr: (f64, f64),
    yr: (f64, f64),
    body: String,
}

impl Canvas {
    fn fit(x: &[f64], y: &[f64], xl: &str, yl: &str) -> Self {
        Self::with_bounds(bounds(x), bounds(y), xl, yl)
    }

    fn with_bounds(xr: (f64, f64), yr: (f64, f64), xl: &str, yl: &str) -> Self {
        let mut body = String::new();
        let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        writeln!(body, r##"<rect x="{l}" y="{t}" width="{}" height="{}" fill="none" stroke="#000"/>"##, r - l, b - t)
            .unwrap();
        for (k, v) in [xr.0, xr.1].iter().enumerate() {
            let px = if k == 0 { l } else { r };
            writeln!(body, r#"<text x="{px}" y="{}" text-anchor="middle" font-size="11">{v:.3}</text>"#, b + 16.0).unwrap();
        }
        for (k, v) in [yr.0, yr.1].iter().enumerate() {
            let py = if k == 0 { b } else { t };
            writeln!(body, r#"<text x="{}" y="{py}" text-anchor="end" font-size="11">{v:.3}</text>"#, l - 4.0).unwrap();
        }
        writeln!(body, r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{xl}</text>"#, WIDTH / 2.0, HEIGHT - 12.0)
            .unwrap();
        writeln!(
            body,
            r#"<text x="16" y="{}" text-anchor="middle" font-size="13" transform="rotate(-90 16 {})">{yl}</text>"#,
            HEIGHT / 2.0,
            HEIGHT / 2.0
        )
        .unwrap();
        Self { xr, yr, body }
    }

    fn px(&self, x: f64, y: f64) -> (f64, f64) {
        let u = MARGIN + (x - self.xr.0) / (self.xr.1 - self.xr.0) * (WIDTH - 2.0 * MARGIN);
        let v = HEIGHT - MARGIN - (y - self.yr.0) / (self.yr.1 - self.yr.0) * (HEIGHT - 2.0 * MARGIN);
        (u, v)
    }

    fn polyline(&mut self, x: &[f64], y: &[f64], colour: &str) {
        let mut pts = String::new();
        for (a, b) in x.iter().zip(y) {
            if !(a.is_finite() && b.is_finite()) {
                continue;
            }
            let (u, v) = self.px(*a, *b);
            write!(pts, "{u:.2},{v:.2} ").unwrap();
        }
        writeln!(self.body, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1"/>"#, pts.trim_end())
            .unwrap();
    }

    fn dot(&mut self, x: f64, y: f64, r: f64, fill: &str) {
        if !(x.is_finite() && y.is_finite()) {
            return;
        }
        let (u, v) = self.px(x, y);
        writeln!(self.body, r#"<circle cx="{u:.2}" cy="{v:.2}" r="{r:.2}" fill="{fill}"/>"#).unwrap();
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n{}</svg>\n",
            self.body
        )
    }
}
