//! Self-contained SVG 1.1 rendering for curves and verdict maps.
//!
//! Output depends only on the input values: coordinates and labels use fixed
//! decimal formatting and inputs are drawn in a sorted order, so identical
//! data produces byte-identical documents.

use crate::specfun::QuadratureSpec;
use crate::timo::{outage_timo, ChannelSpec, PowerSplit, TimoError};

use super::sweep::Verdict;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;

/// Outage probability sampled on a uniform split grid over `[0, P/2]`.
///
/// This is the data behind curve mode; tests assert on it directly instead of
/// parsing path coordinates back out of the SVG.
pub fn curve_samples(
    spec: &ChannelSpec,
    points: u32,
    quad: &QuadratureSpec,
) -> Result<Vec<(f64, f64)>, TimoError> {
    if points < 2 {
        return Err(TimoError::InvalidChannel(format!(
            "a curve needs at least 2 points, got {points}"
        )));
    }
    let half = 0.5 * spec.total_power();
    let mut out = Vec::with_capacity(points as usize);
    for i in 0..points {
        let q1 = half * f64::from(i) / f64::from(points - 1);
        let est = outage_timo(spec, &PowerSplit::from_q1(spec, q1)?, quad)?;
        out.push((q1, est.p_hat));
    }
    Ok(out)
}

/// A Monte Carlo overlay point with a symmetric error bar.
#[derive(Clone, Copy, Debug)]
pub struct WhiskerPoint {
    /// Split coordinate.
    pub q1: f64,
    /// Estimated probability.
    pub value: f64,
    /// Half-length of the error bar.
    pub stderr: f64,
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Frame {
        let mut x_min = f64::INFINITY;
        let mut x_max = f64::NEG_INFINITY;
        for x in xs {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
        }
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        for y in ys {
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
        // pad so strokes never sit on the frame edge; degenerate spans get a
        // symmetric band
        let x_pad = 0.05 * (x_max - x_min).max(1e-12).max(x_max.abs() * 1e-6);
        let y_pad = 0.05 * (y_max - y_min).max(1e-12).max(y_max.abs() * 1e-6);
        Frame {
            x_min: x_min - x_pad,
            x_max: x_max + x_pad,
            y_min: y_min - y_pad,
            y_max: y_max + y_pad,
        }
    }

    fn x(&self, v: f64) -> f64 {
        LEFT + (v - self.x_min) / (self.x_max - self.x_min) * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - BOTTOM - (v - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - TOP - BOTTOM)
    }
}

fn open_document(out: &mut String, title: &str) {
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{WIDTH}\" \
         height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>\n"
    ));
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"28\" font-family=\"monospace\" font-size=\"16\" \
         text-anchor=\"middle\">{title}</text>\n",
        WIDTH / 2.0
    ));
}

fn draw_axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    out.push_str(&format!(
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" \
         stroke=\"#333333\" stroke-width=\"1\"/>\n",
        WIDTH - LEFT - RIGHT,
        HEIGHT - TOP - BOTTOM
    ));
    for i in 0..=5 {
        let fx = frame.x_min + (frame.x_max - frame.x_min) * f64::from(i) / 5.0;
        let px = frame.x(fx);
        out.push_str(&format!(
            "<line x1=\"{px:.2}\" y1=\"{:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"#333333\" \
             stroke-width=\"1\"/>\n",
            HEIGHT - BOTTOM,
            HEIGHT - BOTTOM + 5.0
        ));
        out.push_str(&format!(
            "<text x=\"{px:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\" \
             text-anchor=\"middle\">{fx:.4}</text>\n",
            HEIGHT - BOTTOM + 18.0
        ));
        let fy = frame.y_min + (frame.y_max - frame.y_min) * f64::from(i) / 5.0;
        let py = frame.y(fy);
        out.push_str(&format!(
            "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{LEFT}\" y2=\"{py:.2}\" stroke=\"#333333\" \
             stroke-width=\"1\"/>\n",
            LEFT - 5.0
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\" \
             text-anchor=\"end\">{fy:.4}</text>\n",
            LEFT - 8.0,
            py + 4.0
        ));
    }
    out.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"13\" \
         text-anchor=\"middle\">{x_label}</text>\n",
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 15.0
    ));
    out.push_str(&format!(
        "<text x=\"20\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"13\" \
         text-anchor=\"middle\" transform=\"rotate(-90 20 {:.2})\">{y_label}</text>\n",
        (TOP + HEIGHT - BOTTOM) / 2.0,
        (TOP + HEIGHT - BOTTOM) / 2.0
    ));
}

/// Renders a probability-versus-split curve with optional Monte Carlo points.
pub fn render_curve(title: &str, line: &[(f64, f64)], points: &[WhiskerPoint]) -> String {
    let mut line = line.to_vec();
    line.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut points = points.to_vec();
    points.sort_by(|a, b| a.q1.total_cmp(&b.q1));

    let xs = line.iter().map(|p| p.0).chain(points.iter().map(|p| p.q1));
    let ys = line.iter().map(|p| p.1).chain(
        points
            .iter()
            .flat_map(|p| [p.value - p.stderr, p.value + p.stderr]),
    );
    let frame = Frame::new(xs, ys);

    let mut out = String::with_capacity(8192);
    open_document(&mut out, title);
    draw_axes(&mut out, &frame, "q1", "outage probability");

    if !line.is_empty() {
        let mut d = String::new();
        for (i, (x, y)) in line.iter().enumerate() {
            let cmd = if i == 0 { 'M' } else { 'L' };
            d.push_str(&format!("{cmd}{:.2} {:.2}", frame.x(*x), frame.y(*y)));
        }
        out.push_str(&format!(
            "<path d=\"{d}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>\n"
        ));
    }
    for p in &points {
        let px = frame.x(p.q1);
        out.push_str(&format!(
            "<line x1=\"{px:.2}\" y1=\"{:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\" stroke=\"#d62728\" \
             stroke-width=\"1\"/>\n",
            frame.y(p.value - p.stderr),
            frame.y(p.value + p.stderr)
        ));
        out.push_str(&format!(
            "<circle cx=\"{px:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"#d62728\"/>\n",
            frame.y(p.value)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn marker(verdict: Verdict) -> (&'static str, f64, bool) {
    // (color, radius, filled): the failure class is large and red, the
    // conforming class small and blue, per the reference figure
    match verdict {
        Verdict::Counterexample => ("#d62728", 7.0, true),
        Verdict::ConjectureHolds => ("#1f77b4", 3.5, true),
        Verdict::Inconclusive => ("#7f7f7f", 3.0, true),
        Verdict::NumericallyUnstable => ("#bbbbbb", 3.0, false),
    }
}

/// Renders a rate/power scatter of sweep verdicts.
pub fn render_map(title: &str, cells: &[(f64, f64, Verdict)]) -> String {
    let mut cells = cells.to_vec();
    cells.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let frame = Frame::new(cells.iter().map(|c| c.0), cells.iter().map(|c| c.1));
    let mut out = String::with_capacity(8192);
    open_document(&mut out, title);
    draw_axes(&mut out, &frame, "R (nats)", "P");

    for &(rate, power, verdict) in &cells {
        let (color, radius, filled) = marker(verdict);
        let (fill, stroke) = if filled { (color, "none") } else { ("none", color) };
        out.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{radius}\" fill=\"{fill}\" \
             stroke=\"{stroke}\" stroke-width=\"1\"/>\n",
            frame.x(rate),
            frame.y(power)
        ));
    }

    for (i, verdict) in [
        Verdict::Counterexample,
        Verdict::ConjectureHolds,
        Verdict::Inconclusive,
        Verdict::NumericallyUnstable,
    ]
    .into_iter()
    .enumerate()
    {
        let (color, radius, filled) = marker(verdict);
        let (fill, stroke) = if filled { (color, "none") } else { ("none", color) };
        let x = LEFT + 12.0 + 170.0 * i as f64;
        out.push_str(&format!(
            "<circle cx=\"{x:.2}\" cy=\"{:.2}\" r=\"{radius}\" fill=\"{fill}\" \
             stroke=\"{stroke}\" stroke-width=\"1\"/>\n",
            TOP - 10.0
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"monospace\" font-size=\"11\">{}</text>\n",
            x + 10.0,
            TOP - 6.0,
            verdict.token()
        ));
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_minimum_sits_in_reference_interval() {
        let spec = ChannelSpec::timo(2, 3.0f64.ln(), 0.5).unwrap();
        let samples = curve_samples(&spec, 41, &QuadratureSpec::default()).unwrap();
        assert_eq!(samples.len(), 41);
        let best = samples
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!(
            best.0 > 0.05 && best.0 < 0.1,
            "curve minimum at q1 = {}",
            best.0
        );
    }

    #[test]
    fn rendering_is_deterministic() {
        let line = vec![(0.0, 0.9084), (0.125, 0.9083), (0.25, 0.9090)];
        let points = vec![WhiskerPoint {
            q1: 0.125,
            value: 0.9085,
            stderr: 0.0004,
        }];
        let a = render_curve("test", &line, &points);
        let b = render_curve("test", &line, &points);
        assert_eq!(a, b);
        assert!(a.starts_with("<?xml version=\"1.0\""));
        assert!(a.contains("version=\"1.1\""));
        assert!(a.ends_with("</svg>\n"));

        let cells = vec![
            (0.9, 0.45, Verdict::Counterexample),
            (1.1, 0.5, Verdict::ConjectureHolds),
        ];
        assert_eq!(render_map("map", &cells), render_map("map", &cells));
        assert!(render_map("map", &cells).contains("#d62728"));
    }

    #[test]
    fn degenerate_single_point_inputs_render() {
        let one = vec![(0.1, 0.5)];
        let svg = render_curve("one", &one, &[]);
        assert!(svg.contains("<path"));
        let map = render_map("one", &[(1.0, 1.0, Verdict::Inconclusive)]);
        assert!(map.contains("<circle"));
    }

    #[test]
    fn curve_rejects_single_point_requests() {
        let spec = ChannelSpec::timo(2, 1.0, 1.0).unwrap();
        assert!(curve_samples(&spec, 1, &QuadratureSpec::default()).is_err());
    }
}
