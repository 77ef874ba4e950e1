//! SVG figures: sample paths over the analytic mean (linear and semi-log)
//! and a daily-new-infections bar chart.

use anyhow::Result;
use plotters::prelude::*;

use bdi_core::analytic;

use crate::config::ExperimentConfig;

const PALETTE: [RGBColor; 14] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
    RGBColor(227, 119, 194),
    RGBColor(127, 127, 127),
    RGBColor(188, 189, 34),
    RGBColor(23, 190, 207),
    RGBColor(0, 90, 0),
    RGBColor(90, 0, 90),
    RGBColor(0, 0, 128),
    RGBColor(128, 64, 0),
];

pub fn cmd_plot(config: &ExperimentConfig) -> Result<()> {
    let data = crate::commands::gather_plot_data(config)?;
    let horizon = config.horizon;

    let mean_path: Vec<(f64, f64)> = data
        .day_grid
        .iter()
        .map(|&t| Ok((t, analytic::mean_bdi(&data.tables, t)?)))
        .collect::<Result<_>>()?;
    let y_max = data
        .paths
        .iter()
        .flat_map(|p| p.iter().copied())
        .max()
        .unwrap_or(1)
        .max(mean_path.iter().map(|&(_, m)| m as u64).max().unwrap_or(1)) as f64
        * 1.1
        + 1.0;

    // linear overlay
    {
        let path = data.out_dir.join("i_paths_linear.svg");
        let root = SVGBackend::new(&path, (960, 620)).into_drawing_area();
        root.fill(&WHITE)?;
        let mut chart = ChartBuilder::on(&root)
            .margin(18)
            .x_label_area_size(42)
            .y_label_area_size(70)
            .caption("Sample paths and analytic mean", ("sans-serif", 22))
            .build_cartesian_2d(0.0..horizon, 0.0..y_max)?;
        chart
            .configure_mesh()
            .x_desc("t [days]")
            .y_desc("I(t)")
            .draw()?;
        for (i, states) in data.paths.iter().enumerate() {
            let series = data
                .day_grid
                .iter()
                .zip(states)
                .map(|(&t, &n)| (t, n as f64));
            chart
                .draw_series(LineSeries::new(series, &PALETTE[i % PALETTE.len()]))?
                .label(format!("run {i}"));
        }
        chart.draw_series(LineSeries::new(
            mean_path.iter().copied(),
            BLACK.stroke_width(2),
        ))?;
        root.present()?;
        println!("wrote {}", path.display());
    }

    // semi-log overlay: zero populations sit below the axis floor and clip
    {
        let path = data.out_dir.join("i_paths_semilog.svg");
        let root = SVGBackend::new(&path, (960, 620)).into_drawing_area();
        root.fill(&WHITE)?;
        let mut chart = ChartBuilder::on(&root)
            .margin(18)
            .x_label_area_size(42)
            .y_label_area_size(70)
            .caption("Sample paths and analytic mean (semi-log)", ("sans-serif", 22))
            .build_cartesian_2d(0.0..horizon, (0.9..y_max.max(10.0)).log_scale())?;
        chart
            .configure_mesh()
            .x_desc("t [days]")
            .y_desc("I(t)")
            .draw()?;
        for (i, states) in data.paths.iter().enumerate() {
            let series = data
                .day_grid
                .iter()
                .zip(states)
                .filter(|(_, &n)| n > 0)
                .map(|(&t, &n)| (t, n as f64));
            chart.draw_series(LineSeries::new(series, &PALETTE[i % PALETTE.len()]))?;
        }
        chart.draw_series(LineSeries::new(
            mean_path.iter().copied().filter(|&(_, m)| m > 0.0),
            BLACK.stroke_width(2),
        ))?;
        root.present()?;
        println!("wrote {}", path.display());
    }

    // daily new infections of the first run, expected curve on top
    {
        let path = data.out_dir.join("daily_new_infections.svg");
        let root = SVGBackend::new(&path, (960, 620)).into_drawing_area();
        root.fill(&WHITE)?;
        let bar_max = data
            .first_daily
            .iter()
            .copied()
            .max()
            .unwrap_or(1)
            .max(data.expected_daily.iter().fold(0.0f64, |a, &b| a.max(b)) as u64)
            as f64
            * 1.15
            + 1.0;
        let mut chart = ChartBuilder::on(&root)
            .margin(18)
            .x_label_area_size(42)
            .y_label_area_size(70)
            .caption("Daily new infections (run 0) vs expectation", ("sans-serif", 22))
            .build_cartesian_2d(0.0..horizon, 0.0..bar_max)?;
        chart
            .configure_mesh()
            .x_desc("day")
            .y_desc("new infections")
            .draw()?;
        chart.draw_series(data.first_daily.iter().enumerate().map(|(d, &count)| {
            Rectangle::new(
                [(d as f64, 0.0), (d as f64 + 1.0, count as f64)],
                PALETTE[0].mix(0.45).filled(),
            )
        }))?;
        chart.draw_series(LineSeries::new(
            data.expected_daily
                .iter()
                .enumerate()
                .map(|(d, &v)| (d as f64 + 0.5, v)),
            BLACK.stroke_width(2),
        ))?;
        root.present()?;
        println!("wrote {}", path.display());
    }

    Ok(())
}
