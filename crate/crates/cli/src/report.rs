//! SVG charts of evaluation results.

use std::path::Path;

use anyhow::{bail, Context, Result};
use plotters::prelude::*;

use ctxseg_core::evaluation::report::{noi_curves, read_sweep_csv, read_traces_csv};
use ctxseg_core::evaluation::{mean_dice, SweepRow};

const PALETTE: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Draws one line per series with point markers.
pub fn line_chart(path: &Path, title: &str, x_label: &str, y_label: &str, series: &[Series]) -> Result<()> {
    let pts = || series.iter().flat_map(|s| s.points.iter()).filter(|p| p.1.is_finite());
    if pts().next().is_none() {
        bail!("nothing to plot for {title}");
    }
    let (x0, x1) = pts().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (y0, y1) = pts().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let pad_x = ((x1 - x0) * 0.05).max(0.5);
    let pad_y = ((y1 - y0) * 0.1).max(0.05);
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(56)
        .build_cartesian_2d((x0 - pad_x)..(x1 + pad_x), (y0 - pad_y).min(0.0)..(y1 + pad_y))?;
    chart.configure_mesh().x_desc(x_label).y_desc(y_label).draw()?;
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let data: Vec<(f64, f64)> = s.points.iter().copied().filter(|p| p.1.is_finite()).collect();
        chart
            .draw_series(LineSeries::new(data.clone(), color.stroke_width(2)))?
            .label(s.name.clone())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        chart.draw_series(data.into_iter().map(|p| Circle::new(p, 3, color.filled())))?;
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw()?;
    root.present()?;
    Ok(())
}

fn sweep_series_by_context(rows: &[SweepRow]) -> Vec<Series> {
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.context_size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    vec![Series {
        name: "context only".into(),
        points: sizes.iter().map(|&c| (c as f64, mean_dice(rows, c, 0))).collect(),
    }]
}

fn sweep_series_by_step(rows: &[SweepRow]) -> Vec<Series> {
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.context_size).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let max_step = rows.iter().map(|r| r.step).max().unwrap_or(0);
    sizes
        .iter()
        .map(|&c| Series {
            name: format!("context {c}"),
            points: (0..=max_step).map(|s| (s as f64, mean_dice(rows, c, s))).collect(),
        })
        .collect()
}

/// Renders every chart whose input table exists in `input`; returns the
/// written files.
pub fn export_report(input: &Path, out: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let traces = input.join("sequential.csv");
    if traces.is_file() {
        let records = read_traces_csv(std::fs::File::open(&traces)?).with_context(|| traces.display().to_string())?;
        let series: Vec<Series> = noi_curves(&records)
            .into_iter()
            .map(|(name, curve)| Series {
                name,
                points: curve.iter().enumerate().map(|(i, &v)| ((i + 1) as f64, v)).collect(),
            })
            .collect();
        let path = out.join("noi_by_example.svg");
        line_chart(&path, "Interactions to reach the target Dice", "example number", "mean NoI", &series)?;
        written.push(path);
    }
    let context = input.join("context_sweep.csv");
    if context.is_file() {
        let rows = read_sweep_csv(std::fs::File::open(&context)?)?;
        let path = out.join("dice_vs_context.svg");
        line_chart(&path, "Context-only Dice", "context size", "mean Dice", &sweep_series_by_context(&rows))?;
        written.push(path);
    }
    let interactive = input.join("interactive_sweep.csv");
    if interactive.is_file() {
        let rows = read_sweep_csv(std::fs::File::open(&interactive)?)?;
        let path = out.join("dice_vs_step.svg");
        line_chart(&path, "Dice over correction steps", "correction step", "mean Dice", &sweep_series_by_step(&rows))?;
        written.push(path);
    }
    if written.is_empty() {
        bail!("no result tables found in {}", input.display());
    }
    Ok(written)
}
