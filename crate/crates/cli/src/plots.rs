use std::path::Path;

use plotters::prelude::*;

use crate::error::CliError;

const SIZE: (u32, u32) = (720, 480);

fn fail(path: &Path) -> impl Fn(&dyn std::fmt::Display) -> CliError + '_ {
    move |e| CliError::output(path, e)
}

fn padded_range(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = ((hi - lo) * 0.1).max(0.5);
    (lo - pad, hi + pad)
}

pub fn box_plot(path: &Path, title: &str, y_label: &str, values: &[f64]) -> Result<(), CliError> {
    let err = fail(path);
    if values.is_empty() {
        return Err(err(&"no values to plot"));
    }
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let (lo, hi) = padded_range(values);
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(30)
        .y_label_area_size(60)
        .build_cartesian_2d((0..1).into_segmented(), lo as f32..hi as f32)
        .map_err(|e| err(&e))?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(1)
        .x_label_formatter(&|_| String::new())
        .y_desc(y_label)
        .draw()
        .map_err(|e| err(&e))?;
    let q = Quartiles::new(values);
    chart
        .draw_series(std::iter::once(Boxplot::new_vertical(SegmentValue::CenterOf(0), &q).width(80)))
        .map_err(|e| err(&e))?;
    root.present().map_err(|e| err(&e))
}

pub fn histogram(path: &Path, title: &str, x_label: &str, values: &[f64], bins: usize) -> Result<(), CliError> {
    let err = fail(path);
    if values.is_empty() || bins == 0 {
        return Err(err(&"no values to plot"));
    }
    let (lo, hi) = padded_range(values);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u32; bins];
    for v in values {
        counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
    }
    let top = counts.iter().copied().max().unwrap_or(1).max(1);
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(lo..hi, 0u32..top + 1)
        .map_err(|e| err(&e))?;
    chart.configure_mesh().x_desc(x_label).y_desc("count").draw().map_err(|e| err(&e))?;
    chart
        .draw_series(counts.iter().enumerate().map(|(i, &c)| {
            let x0 = lo + i as f64 * width;
            Rectangle::new([(x0, 0), (x0 + width, c)], BLUE.mix(0.6).filled())
        }))
        .map_err(|e| err(&e))?;
    root.present().map_err(|e| err(&e))
}

/// One point per date, in the given order, joined by a line.
pub fn trend(path: &Path, title: &str, y_label: &str, points: &[(String, f64)]) -> Result<(), CliError> {
    let err = fail(path);
    if points.is_empty() {
        return Err(err(&"no values to plot"));
    }
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let (lo, hi) = padded_range(&ys);
    let n = points.len();
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(-0.5f64..n as f64 - 0.5, lo..hi)
        .map_err(|e| err(&e))?;
    let label = |x: &f64| {
        let i = x.round();
        if (x - i).abs() < 1e-6 && i >= 0.0 && (i as usize) < n {
            points[i as usize].0.clone()
        } else {
            String::new()
        }
    };
    chart
        .configure_mesh()
        .x_labels(n.min(20))
        .x_label_formatter(&label)
        .x_desc("date")
        .y_desc(y_label)
        .draw()
        .map_err(|e| err(&e))?;
    let xy: Vec<(f64, f64)> = ys.iter().enumerate().map(|(i, &y)| (i as f64, y)).collect();
    chart.draw_series(LineSeries::new(xy.clone(), &RED)).map_err(|e| err(&e))?;
    chart.draw_series(xy.into_iter().map(|p| Circle::new(p, 4, RED.filled()))).map_err(|e| err(&e))?;
    root.present().map_err(|e| err(&e))
}
