//! Static SVG line plots of a run.

use std::path::{Path, PathBuf};

use plotters::prelude::*;

use crate::sim::SimRecord;

use super::HarnessError;

const MAX_POINTS: usize = 4000;
const SIZE: (u32, u32) = (900, 600);
const PALETTE: [RGBColor; 4] = [RGBColor(31, 119, 180), RGBColor(214, 39, 40), RGBColor(44, 160, 44), RGBColor(148, 103, 189)];

fn plot_err<E: std::fmt::Display>(e: E) -> HarnessError {
    HarnessError::Plot(e.to_string())
}

fn thin(records: &[SimRecord<f64>]) -> Vec<&SimRecord<f64>> {
    let step = records.len().div_ceil(MAX_POINTS).max(1);
    let mut out: Vec<_> = records.iter().step_by(step).collect();
    if let (Some(last), Some(kept)) = (records.last(), out.last()) {
        if !std::ptr::eq(last, *kept) {
            out.push(last);
        }
    }
    out
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

type Series<'a> = (&'a str, Vec<(f64, f64)>);

fn line_panel<DB: DrawingBackend>(
    area: &DrawingArea<DB, plotters::coord::Shift>,
    title: &str,
    x_label: &str,
    series: &[Series<'_>],
) -> Result<(), HarnessError>
where
    DB::ErrorType: 'static,
{
    let (x0, x1) = range(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)));
    let (y0, y1) = range(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)));
    let mut chart = ChartBuilder::on(area)
        .caption(title, ("sans-serif", 18))
        .margin(8)
        .x_label_area_size(30)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(plot_err)?;
    chart.configure_mesh().x_desc(x_label).draw().map_err(plot_err)?;
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        chart
            .draw_series(LineSeries::new(pts.iter().copied().filter(|p| p.1.is_finite()), color))
            .map_err(plot_err)?
            .label(*name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
    }
    if series.len() > 1 {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(plot_err)?;
    }
    Ok(())
}

fn time_series(recs: &[&SimRecord<f64>], f: impl Fn(&SimRecord<f64>) -> f64) -> Vec<(f64, f64)> {
    recs.iter().map(|r| (r.t, f(r))).collect()
}

/// Writes `trajectory.svg`, `states.svg`, `inputs.svg`, `estimates.svg` and
/// `lyapunov.svg` into `dir`.
pub fn write_plots(dir: &Path, records: &[SimRecord<f64>]) -> Result<Vec<PathBuf>, HarnessError> {
    let recs = thin(records);
    let mut written = Vec::new();

    let path = dir.join("trajectory.svg");
    {
        let root = SVGBackend::new(&path, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        line_panel(
            &root,
            "position",
            "horizontal [m]",
            &[
                ("vehicle", recs.iter().map(|r| (r.state.position.x, r.state.position.y)).collect()),
                ("reference", recs.iter().map(|r| (r.reference.x, r.reference.y)).collect()),
            ],
        )?;
        root.present().map_err(plot_err)?;
    }
    written.push(path);

    let path = dir.join("states.svg");
    {
        let root = SVGBackend::new(&path, (1200, 900)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let panels = root.split_evenly((2, 2));
        line_panel(
            &panels[0],
            "position [m]",
            "t [s]",
            &[
                ("r1", time_series(&recs, |r| r.state.position.x)),
                ("r2", time_series(&recs, |r| r.state.position.y)),
            ],
        )?;
        line_panel(
            &panels[1],
            "velocity [m/s]",
            "t [s]",
            &[
                ("v1", time_series(&recs, |r| r.state.velocity.x)),
                ("v2", time_series(&recs, |r| r.state.velocity.y)),
            ],
        )?;
        line_panel(
            &panels[2],
            "thrust [N], roll [rad]",
            "t [s]",
            &[
                ("F", time_series(&recs, |r| r.state.thrust_roll.thrust)),
                ("phi", time_series(&recs, |r| r.state.thrust_roll.roll)),
            ],
        )?;
        line_panel(
            &panels[3],
            "rates",
            "t [s]",
            &[
                ("F_dot", time_series(&recs, |r| r.state.thrust_roll_rate.thrust)),
                ("phi_dot", time_series(&recs, |r| r.state.thrust_roll_rate.roll)),
            ],
        )?;
        root.present().map_err(plot_err)?;
    }
    written.push(path);

    let path = dir.join("inputs.svg");
    {
        let root = SVGBackend::new(&path, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let panels = root.split_evenly((2, 1));
        line_panel(&panels[0], "thrust acceleration [N/s^2]", "t [s]", &[("u1", time_series(&recs, |r| r.input.thrust_accel))])?;
        line_panel(&panels[1], "moment [N m]", "t [s]", &[("u2", time_series(&recs, |r| r.input.moment))])?;
        root.present().map_err(plot_err)?;
    }
    written.push(path);

    let path = dir.join("estimates.svg");
    {
        let root = SVGBackend::new(&path, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        line_panel(
            &root,
            "estimates",
            "t [s]",
            &[
                ("p1_hat", time_series(&recs, |r| r.est.mass_hat)),
                ("p2_hat", time_series(&recs, |r| r.est.inertia_hat)),
                ("theta1_hat", time_series(&recs, |r| r.est.inv_mass_hat)),
                ("vartheta1_hat", time_series(&recs, |r| r.est.inv_mass_aux_hat)),
            ],
        )?;
        root.present().map_err(plot_err)?;
    }
    written.push(path);

    let path = dir.join("lyapunov.svg");
    {
        let root = SVGBackend::new(&path, SIZE).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        line_panel(&root, "log10 V4", "t [s]", &[("V4", time_series(&recs, |r| r.v4.max(1e-300).log10()))])?;
        root.present().map_err(plot_err)?;
    }
    written.push(path);

    Ok(written)
}
