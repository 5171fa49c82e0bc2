//! Dependency-free SVG rendering for trajectory overlays and scheduler
//! coefficient curves. Coordinates are rounded to 1e-3 so identical inputs
//! produce identical bytes.

use bezsched_core::Scheduler;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 640.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 6] = [
    "#555555", "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e",
];

/// One labeled polyline in data coordinates.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

fn fmt(v: f64) -> String {
    format!("{:.3}", v)
}

fn svg_open(out: &mut String) {
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
}

fn polyline(out: &mut String, pts: &[(f64, f64)], color: &str, width: f64, opacity: f64) {
    if pts.len() < 2 {
        return;
    }
    let coords: Vec<String> = pts
        .iter()
        .map(|(x, y)| format!("{},{}", fmt(*x), fmt(*y)))
        .collect();
    out.push_str(&format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" stroke-opacity=\"{opacity}\" points=\"{}\"/>\n",
        coords.join(" ")
    ));
}

fn legend(out: &mut String, labels: &[(String, &str)]) {
    for (i, (label, color)) in labels.iter().enumerate() {
        let y = MARGIN + 18.0 * i as f64;
        out.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n",
            fmt(MARGIN),
            fmt(y - 10.0)
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"13\" font-family=\"sans-serif\">{}</text>\n",
            fmt(MARGIN + 18.0),
            fmt(y),
            label
        ));
    }
}

/// Overlays 2D trajectories (first two state components) in one document.
/// An empty series list still yields a valid document.
pub fn trajectories_svg(series: &[Series]) -> String {
    let mut out = String::new();
    svg_open(&mut out);
    if !series.is_empty() {
        // shared bounds with a small pad
        let mut min = (f64::INFINITY, f64::INFINITY);
        let mut max = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for s in series {
            for (x, y) in &s.points {
                min.0 = min.0.min(*x);
                min.1 = min.1.min(*y);
                max.0 = max.0.max(*x);
                max.1 = max.1.max(*y);
            }
        }
        let pad = 0.05 * ((max.0 - min.0).max(max.1 - min.1)).max(1e-9);
        min = (min.0 - pad, min.1 - pad);
        max = (max.0 + pad, max.1 + pad);
        let span = (max.0 - min.0).max(max.1 - min.1);
        let scale = (WIDTH - 2.0 * MARGIN) / span;
        let to_px = |x: f64, y: f64| -> (f64, f64) {
            (
                MARGIN + (x - min.0) * scale,
                HEIGHT - MARGIN - (y - min.1) * scale,
            )
        };
        let mut labels = Vec::new();
        for (i, s) in series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<(f64, f64)> = s.points.iter().map(|(x, y)| to_px(*x, *y)).collect();
            polyline(&mut out, &pts, color, 1.2, 0.85);
            if let Some((x, y)) = pts.last() {
                out.push_str(&format!(
                    "<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"{color}\"/>\n",
                    fmt(*x),
                    fmt(*y)
                ));
            }
            if i < series.len().min(PALETTE.len()) && !s.label.is_empty() {
                labels.push((s.label.clone(), color));
            }
        }
        // one legend entry per distinct label
        labels.dedup_by(|a, b| a.0 == b.0);
        legend(&mut out, &labels);
    }
    out.push_str("</svg>\n");
    out
}

/// Coefficient curves alpha(s) (solid) and sigma(s) (dashed) for each
/// scheduler, with Bézier control points marked on the alpha curve.
pub fn scheduler_svg(items: &[(String, Scheduler)]) -> String {
    let mut out = String::new();
    svg_open(&mut out);
    let to_px = |s: f64, v: f64| -> (f64, f64) {
        (
            MARGIN + s * (WIDTH - 2.0 * MARGIN),
            HEIGHT - MARGIN - v * (HEIGHT - 2.0 * MARGIN),
        )
    };
    // unit-square frame
    let frame = [
        to_px(0.0, 0.0),
        to_px(1.0, 0.0),
        to_px(1.0, 1.0),
        to_px(0.0, 1.0),
        to_px(0.0, 0.0),
    ];
    polyline(&mut out, &frame, "#cccccc", 1.0, 1.0);

    let mut labels = Vec::new();
    for (i, (label, sched)) in items.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let samples = 200;
        let alpha: Vec<(f64, f64)> = (0..=samples)
            .map(|k| {
                let s = k as f64 / samples as f64;
                let e = sched.eval(s).expect("s in [0,1]");
                to_px(s, e.alpha)
            })
            .collect();
        polyline(&mut out, &alpha, color, 1.6, 1.0);
        let sigma: Vec<String> = (0..=samples)
            .map(|k| {
                let s = k as f64 / samples as f64;
                let e = sched.eval(s).expect("s in [0,1]");
                let (x, y) = to_px(s, e.sigma);
                format!("{},{}", fmt(x), fmt(y))
            })
            .collect();
        out.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" stroke-dasharray=\"5,4\" points=\"{}\"/>\n",
            sigma.join(" ")
        ));
        if let Scheduler::Bezier(b) = sched {
            let points = b.alpha_control_points().points();
            let n = points.len() - 1;
            for (j, c) in points.iter().enumerate() {
                let (x, y) = to_px(j as f64 / n as f64, *c);
                out.push_str(&format!(
                    "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"none\" stroke=\"{color}\"/>\n",
                    fmt(x),
                    fmt(y)
                ));
            }
        }
        labels.push((label.clone(), color));
    }
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use bezsched_core::LogitVector;

    #[test]
    fn empty_trajectory_list_is_valid_svg() {
        let svg = trajectories_svg(&[]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn identical_input_identical_bytes() {
        let series = vec![Series {
            label: "teacher".into(),
            points: vec![(0.0, 0.0), (1.0, 2.0), (3.0, -1.0)],
        }];
        assert_eq!(trajectories_svg(&series), trajectories_svg(&series));
        let items = vec![("linear".to_string(), Scheduler::linear())];
        assert_eq!(scheduler_svg(&items), scheduler_svg(&items));
    }

    #[test]
    fn gallery_of_distinct_monotone_curves() {
        // four arrangements of 8-degree control points give four distinct
        // monotone curves through (0,0) and (1,1)
        let arrangements: Vec<Vec<f64>> = vec![
            vec![1.0; 8],
            vec![3.0, 2.0, 1.0, 0.0, 0.0, 1.0, 2.0, 3.0],
            vec![0.0, 0.0, 0.0, 0.0, 3.0, 3.0, 3.0, 3.0],
            vec![3.0, 3.0, 3.0, 3.0, 0.0, 0.0, 0.0, 0.0],
        ];
        let items: Vec<(String, Scheduler)> = arrangements
            .into_iter()
            .enumerate()
            .map(|(i, logits)| {
                let sched = Scheduler::bezier(
                    LogitVector::new(logits.clone()).unwrap(),
                    LogitVector::new(logits).unwrap(),
                )
                .unwrap();
                (format!("arrangement {i}"), sched)
            })
            .collect();
        // curves are pairwise distinct (probed off-center, where symmetric
        // arrangements cannot all agree)
        let probes: Vec<f64> = items
            .iter()
            .map(|(_, s)| s.eval(0.3).unwrap().alpha)
            .collect();
        for i in 0..probes.len() {
            for j in (i + 1)..probes.len() {
                assert!(
                    (probes[i] - probes[j]).abs() > 1e-3,
                    "curves {i} and {j} coincide at the probe point"
                );
            }
        }
        // and monotone through the fixed endpoints
        for (_, s) in &items {
            assert_eq!(s.eval(0.0).unwrap().alpha, 0.0);
            assert_eq!(s.eval(1.0).unwrap().alpha, 1.0);
            let mut prev = 0.0;
            for k in 0..=100 {
                let v = s.eval(k as f64 / 100.0).unwrap().alpha;
                assert!(v >= prev - 1e-12);
                prev = v;
            }
        }
        let svg = scheduler_svg(&items);
        assert!(svg.matches("<polyline").count() >= 9); // frame + 4 alpha + 4 sigma
    }
}
