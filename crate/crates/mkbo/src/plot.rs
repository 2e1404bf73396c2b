//! SVG line chart of median best-so-far with an interquartile band.

use std::path::Path;

use plotters::prelude::*;

use crate::error::Error;
use crate::suite::SummaryRow;

const PALETTE: [RGBColor; 8] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
    RGBColor(227, 119, 194),
    RGBColor(127, 127, 127),
];

/// Group rows by method, keeping first-appearance order.
fn by_method(rows: &[SummaryRow]) -> Vec<(&str, Vec<&SummaryRow>)> {
    let mut out: Vec<(&str, Vec<&SummaryRow>)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(m, _)| *m == r.method) {
            Some((_, v)) => v.push(r),
            None => out.push((&r.method, vec![r])),
        }
    }
    out
}

pub fn render_svg(rows: &[SummaryRow], title: &str) -> Result<String, Error> {
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (800, 520)).into_drawing_area();
        draw(&root, rows, title).map_err(|e| Error::Config(format!("plot: {e}")))?;
        root.present().map_err(|e| Error::Config(format!("plot: {e}")))?;
    }
    Ok(svg)
}

fn draw<DB: DrawingBackend>(
    root: &DrawingArea<DB, plotters::coord::Shift>,
    rows: &[SummaryRow],
    title: &str,
) -> Result<(), DrawingAreaErrorKind<DB::ErrorType>> {
    root.fill(&WHITE)?;
    let t_max = rows.iter().map(|r| r.t).max().unwrap_or(1).max(1);
    let (mut lo, mut hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
        (a.min(r.q25), b.max(r.q75))
    });
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    let mut chart = ChartBuilder::on(root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(36)
        .y_label_area_size(56)
        .build_cartesian_2d(1f64..t_max as f64, (lo - pad)..(hi + pad))?;
    chart
        .configure_mesh()
        .x_desc("iteration")
        .y_desc("best so far")
        .draw()?;
    for (i, (method, pts)) in by_method(rows).into_iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut band: Vec<(f64, f64)> = pts.iter().map(|r| (r.t as f64, r.q75)).collect();
        band.extend(pts.iter().rev().map(|r| (r.t as f64, r.q25)));
        chart.draw_series(std::iter::once(Polygon::new(band, color.mix(0.15).filled())))?;
        chart
            .draw_series(LineSeries::new(
                pts.iter().map(|r| (r.t as f64, r.median)),
                color.stroke_width(2),
            ))?
            .label(method)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.85))
        .border_style(BLACK)
        .draw()?;
    Ok(())
}

pub fn write_svg(rows: &[SummaryRow], title: &str, path: &Path) -> Result<(), Error> {
    let svg = render_svg(rows, title)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
