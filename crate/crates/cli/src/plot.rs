//! SVG line charts of study outputs.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Result};
use arpam::experiments::StudyOutcome;
use plotters::prelude::*;

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn bounds(series: &[Series]) -> Option<((f64, f64), (f64, f64))> {
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        return None;
    }
    let pad = |a: f64, b: f64| if b > a { (b - a) * 0.05 } else { a.abs().max(1.0) * 0.05 };
    let (px, py) = (pad(x0, x1), pad(y0, y1));
    Some(((x0 - px, x1 + px), (y0 - py, y1 + py)))
}

pub fn line_chart(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<()> {
    let ((x0, x1), (y0, y1)) = bounds(series).ok_or_else(|| anyhow!("nothing to plot for {title}"))?;
    let root = SVGBackend::new(path, (800, 520)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| anyhow!("{e}"))?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc(y_label)
        .y_label_formatter(&|v| format!("{v:.2e}"))
        .draw()
        .map_err(|e| anyhow!("{e}"))?;
    for (i, s) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(s.points.iter().copied(), color.stroke_width(2)))
            .map_err(|e| anyhow!("{e}"))?
            .label(s.name.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color.stroke_width(2)));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| anyhow!("{e}"))?;
    root.present().map_err(|e| anyhow!("{e}"))?;
    Ok(())
}

/// Overlaid traces, overlaid spectra up to `f_max`, and each feature column
/// against the study variable.
pub fn study_plots(dir: &Path, outcome: &StudyOutcome, f_max: f64) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let arts = &outcome.artifacts;
    if !arts.is_empty() {
        let traces: Vec<Series> = arts
            .iter()
            .map(|a| Series {
                name: a.stem.clone(),
                points: a.trace.samples.iter().enumerate().map(|(i, p)| (a.trace.time(i) * 1e6, *p)).collect(),
            })
            .collect();
        let p = dir.join("traces.svg");
        line_chart(&p, "Array-averaged pressure", "time (µs)", "pressure (Pa)", &traces)?;
        out.push(p);
        let spectra: Vec<Series> = arts
            .iter()
            .map(|a| Series {
                name: a.stem.clone(),
                points: a
                    .spectrum
                    .frequencies
                    .iter()
                    .zip(&a.spectrum.psd)
                    .filter(|(f, _)| **f <= f_max)
                    .map(|(f, p)| (f * 1e-6, *p))
                    .collect(),
            })
            .collect();
        let p = dir.join("spectra.svg");
        line_chart(&p, "Welch power spectral density", "frequency (MHz)", "PSD (Pa²/Hz)", &spectra)?;
        out.push(p);
    }
    let table = &outcome.report.table;
    for (c, name) in table.columns.iter().enumerate().skip(1) {
        let points: Vec<(f64, f64)> = table.rows.iter().filter_map(|r| Some((r[0]?, r[c]?))).collect();
        if points.is_empty() {
            continue;
        }
        let p = dir.join(format!("{name}.svg"));
        let series = [Series { name: name.clone(), points }];
        line_chart(&p, name, &table.columns[0], name, &series)?;
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_is_written() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.svg");
        let s = [Series { name: "a".into(), points: vec![(0.0, 1.0), (1.0, 3.0), (2.0, 2.0)] }];
        line_chart(&p, "t", "x", "y", &s).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("<svg") && text.contains("polyline"));
        assert!(line_chart(&p, "t", "x", "y", &[]).is_err());
    }
}
