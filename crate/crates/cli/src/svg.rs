//! Minimal dependency-free SVG line plots: one polyline per series, a frame,
//! min/max tick labels. Enough to eyeball a trajectory or a trade-off curve.

const W: f64 = 720.0;
const H: f64 = 420.0;
const ML: f64 = 70.0;
const MR: f64 = 20.0;
const MT: f64 = 36.0;
const MB: f64 = 48.0;

pub struct Series<'a> {
    pub points: &'a [(f64, f64)],
    pub color: &'static str,
}

pub struct Marker {
    pub x: f64,
    pub y: f64,
    pub color: &'static str,
    pub label: String,
}

pub fn line_plot(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series<'_>],
    markers: &[Marker],
) -> String {
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !x_min.is_finite() {
        x_min = 0.0;
        x_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    if x_max - x_min < 1e-12 {
        x_max = x_min + 1.0;
    }
    if y_max - y_min < 1e-12 {
        y_max = y_min + 1.0;
    }
    let pad = 0.04 * (y_max - y_min);
    let (y_lo, y_hi) = (y_min - pad, y_max + pad);

    let sx = |x: f64| ML + (x - x_min) / (x_max - x_min) * (W - ML - MR);
    let sy = |y: f64| H - MB - (y - y_lo) / (y_hi - y_lo) * (H - MT - MB);

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    out.push_str(&format!(
        "<rect x=\"{ML}\" y=\"{MT}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n",
        W - ML - MR,
        H - MT - MB
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        0.5 * W,
        escape(title)
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        0.5 * W,
        H - 12.0,
        escape(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        0.5 * H,
        0.5 * H,
        escape(y_label)
    ));
    // Tick labels at the corners of the data range.
    out.push_str(&format!(
        "<text x=\"{ML}\" y=\"{}\" text-anchor=\"middle\">{x_min:.6}</text>\n",
        H - MB + 16.0
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_max:.6}</text>\n",
        W - MR,
        H - MB + 16.0
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y_min:.6}</text>\n",
        ML - 6.0,
        sy(y_min) + 4.0
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{y_max:.6}</text>\n",
        ML - 6.0,
        sy(y_max) + 4.0
    ));

    for s in series {
        let mut path = String::new();
        for (i, &(x, y)) in s.points.iter().enumerate() {
            path.push_str(if i == 0 { "M" } else { " L" });
            path.push_str(&format!("{:.2} {:.2}", sx(x), sy(y)));
        }
        out.push_str(&format!(
            "<path d=\"{path}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n",
            s.color
        ));
    }
    for m in markers {
        out.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{}\"/>\n",
            sx(m.x),
            sy(m.y),
            m.color
        ));
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>\n",
            sx(m.x) + 7.0,
            sy(m.y) - 6.0,
            escape(&m.label)
        ));
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
