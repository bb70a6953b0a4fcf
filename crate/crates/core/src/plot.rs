//! Minimal SVG step plots for survival curves. One panel, one pair of step
//! curves per method: solid for the treated arm, dashed for the control arm.

use crate::survival::SurvivalCurve;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 24.0;
const MARGIN_BOTTOM: f64 = 48.0;

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// One drawable step function.
pub struct StepSeries<'a> {
    pub label: String,
    pub times: &'a [f64],
    pub survival: &'a [f64],
    /// Palette index; the treated/control pair of one method shares a color.
    pub color: usize,
    pub dashed: bool,
}

/// Render one SVG with a treated/control curve pair per labeled method.
pub fn curves_svg(series: &[(String, &SurvivalCurve, &SurvivalCurve)]) -> String {
    let steps: Vec<StepSeries> = series
        .iter()
        .enumerate()
        .flat_map(|(i, (label, treated, control))| {
            [
                StepSeries {
                    label: label.clone(),
                    times: &treated.times,
                    survival: &treated.survival,
                    color: i,
                    dashed: false,
                },
                StepSeries {
                    label: String::new(),
                    times: &control.times,
                    survival: &control.survival,
                    color: i,
                    dashed: true,
                },
            ]
        })
        .collect();
    step_plot_svg(&steps)
}

/// Render arbitrary labeled step functions (for pointwise mean curves).
pub fn step_plot_svg(series: &[StepSeries]) -> String {
    let t_max = series
        .iter()
        .filter_map(|s| s.times.last().copied())
        .fold(1e-9f64, f64::max)
        * 1.05;

    let x = |t: f64| MARGIN_LEFT + (t / t_max) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT);
    let y = |s: f64| MARGIN_TOP + (1.0 - s) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    svg.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));

    // axes
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        x(0.0),
        y(0.0),
        x(t_max),
        y(0.0)
    ));
    svg.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
        x(0.0),
        y(0.0),
        x(0.0),
        y(1.0)
    ));
    for i in 0..=5 {
        let s = i as f64 / 5.0;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            x(0.0) - 4.0,
            y(s),
            x(0.0),
            y(s)
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{s:.1}</text>\n",
            x(0.0) - 7.0,
            y(s) + 4.0
        ));
        let t = t_max * s;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n",
            x(t),
            y(0.0),
            x(t),
            y(0.0) + 4.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{t:.2}</text>\n",
            x(t),
            y(0.0) + 18.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">time</text>\n",
        (x(0.0) + x(t_max)) / 2.0,
        HEIGHT - 10.0
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" \
         transform=\"rotate(-90 14 {})\">survival</text>\n",
        (y(0.0) + y(1.0)) / 2.0,
        (y(0.0) + y(1.0)) / 2.0
    ));

    let mut legend_slot = 0;
    for s in series {
        let color = PALETTE[s.color % PALETTE.len()];
        let dash = s.dashed.then_some("6,4");
        svg.push_str(&step_path(s.times, s.survival, t_max, &x, &y, color, dash));
        if !s.label.is_empty() {
            let ly = MARGIN_TOP + 16.0 * legend_slot as f64;
            legend_slot += 1;
            svg.push_str(&format!(
                "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
                WIDTH - 200.0,
                ly,
                WIDTH - 170.0,
                ly
            ));
            svg.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>\n",
                WIDTH - 164.0,
                ly + 4.0,
                s.label
            ));
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn step_path(
    times: &[f64],
    survival: &[f64],
    t_max: f64,
    x: &dyn Fn(f64) -> f64,
    y: &dyn Fn(f64) -> f64,
    color: &str,
    dash: Option<&str>,
) -> String {
    let mut d = format!("M {} {}", x(0.0), y(1.0));
    for i in 0..times.len() {
        d.push_str(&format!(" H {}", x(times[i])));
        d.push_str(&format!(" V {}", y(survival[i])));
    }
    d.push_str(&format!(" H {}", x(t_max)));
    let dash_attr = dash.map(|p| format!(" stroke-dasharray=\"{p}\"")).unwrap_or_default();
    format!(
        "<path d=\"{d}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{dash_attr}/>\n"
    )
}
