//! Minimal static SVG charts: line, grouped bar, and 2-D scatter with
//! a power-iteration PCA projection. No styling knobs — these are
//! batch experiment artifacts, not a plotting library.

use ndarray::Array2;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 44.0;
const MARGIN_B: f64 = 58.0;

const PALETTE: [&str; 6] = [
    "#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn around(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Frame {
        let mut f = Frame {
            x_min: f64::INFINITY,
            x_max: f64::NEG_INFINITY,
            y_min: f64::INFINITY,
            y_max: f64::NEG_INFINITY,
        };
        for x in xs {
            f.x_min = f.x_min.min(x);
            f.x_max = f.x_max.max(x);
        }
        for y in ys {
            f.y_min = f.y_min.min(y);
            f.y_max = f.y_max.max(y);
        }
        if !f.x_min.is_finite() {
            f.x_min = 0.0;
            f.x_max = 1.0;
        }
        if !f.y_min.is_finite() {
            f.y_min = 0.0;
            f.y_max = 1.0;
        }
        if f.x_max == f.x_min {
            f.x_max = f.x_min + 1.0;
        }
        if f.y_max == f.y_min {
            f.y_max = f.y_min + 1.0;
        }
        f
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B
            - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn open_svg(title: &str, comment: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\">\n\
         <!-- {} -->\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        esc(comment),
        WIDTH / 2.0,
        esc(title)
    )
}

fn axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let (x0, x1) = (MARGIN_L, WIDTH - MARGIN_R);
    let (y0, y1) = (HEIGHT - MARGIN_B, MARGIN_T);
    out.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    ));
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = frame.x_min + t * (frame.x_max - frame.x_min);
        let yv = frame.y_min + t * (frame.y_max - frame.y_min);
        let xp = frame.px(xv);
        let yp = frame.py(yv);
        out.push_str(&format!(
            "<line x1=\"{xp}\" y1=\"{y0}\" x2=\"{xp}\" y2=\"{}\" stroke=\"black\"/>\n\
             <text x=\"{xp}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{:.3}</text>\n",
            y0 + 5.0,
            y0 + 18.0,
            xv
        ));
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{yp}\" x2=\"{x0}\" y2=\"{yp}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{:.3}</text>\n",
            x0 - 5.0,
            x0 - 8.0,
            yp + 4.0,
            yv
        ));
    }
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
        (x0 + x1) / 2.0,
        HEIGHT - 16.0,
        esc(x_label)
    ));
    out.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {})\">{}</text>\n",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        esc(y_label)
    ));
}

fn legend(out: &mut String, names: &[String]) {
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN_T + 14.0 + i as f64 * 18.0;
        let x = WIDTH - MARGIN_R + 12.0;
        out.push_str(&format!(
            "<rect x=\"{x}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"11\">{}</text>\n",
            y - 10.0,
            color(i),
            x + 16.0,
            y,
            esc(name)
        ));
    }
}

/// One named polyline.
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[Series],
    comment: &str,
) -> String {
    let frame = Frame::around(
        series.iter().flat_map(|s| s.points.iter().map(|p| p.0)),
        series.iter().flat_map(|s| s.points.iter().map(|p| p.1)),
    );
    let mut out = open_svg(title, comment);
    axes(&mut out, &frame, x_label, y_label);
    for (i, s) in series.iter().enumerate() {
        let path: Vec<String> = s
            .points
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
            .collect();
        out.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            path.join(" "),
            color(i)
        ));
        for &(x, y) in &s.points {
            out.push_str(&format!(
                "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\"/>\n",
                frame.px(x),
                frame.py(y),
                color(i)
            ));
        }
    }
    legend(&mut out, &series.iter().map(|s| s.name.clone()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Grouped bars: one cluster per category, one bar per series.
pub fn bar_chart(
    title: &str,
    y_label: &str,
    categories: &[String],
    series: &[(String, Vec<f64>)],
    comment: &str,
) -> String {
    let y_max = series
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let frame = Frame {
        x_min: 0.0,
        x_max: categories.len() as f64,
        y_min: 0.0,
        y_max,
    };
    let mut out = open_svg(title, comment);
    // y axis only; category labels replace numeric x ticks
    let (x0, y0) = (MARGIN_L, HEIGHT - MARGIN_B);
    out.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{MARGIN_T}\" stroke=\"black\"/>\n",
        WIDTH - MARGIN_R
    ));
    for i in 0..=4 {
        let yv = y_max * i as f64 / 4.0;
        let yp = frame.py(yv);
        out.push_str(&format!(
            "<line x1=\"{}\" y1=\"{yp}\" x2=\"{x0}\" y2=\"{yp}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{:.3}</text>\n",
            x0 - 5.0,
            x0 - 8.0,
            yp + 4.0,
            yv
        ));
    }
    let cluster = (WIDTH - MARGIN_L - MARGIN_R) / categories.len().max(1) as f64;
    let bar = cluster * 0.8 / series.len().max(1) as f64;
    for (ci, cat) in categories.iter().enumerate() {
        let left = MARGIN_L + ci as f64 * cluster;
        for (si, (_, values)) in series.iter().enumerate() {
            let v = values.get(ci).copied().unwrap_or(0.0);
            let top = frame.py(v);
            out.push_str(&format!(
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>\n",
                left + cluster * 0.1 + si as f64 * bar,
                top,
                bar,
                y0 - top,
                color(si)
            ));
        }
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{}</text>\n",
            left + cluster / 2.0,
            y0 + 18.0,
            esc(cat)
        ));
    }
    out.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" \
         transform=\"rotate(-90 18 {})\">{}</text>\n",
        (y0 + MARGIN_T) / 2.0,
        (y0 + MARGIN_T) / 2.0,
        esc(y_label)
    ));
    legend(&mut out, &series.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    out
}

/// Scatter of labeled 2-D points, colored per category (first-seen
/// order).
pub fn scatter_chart(
    title: &str,
    points: &[(f64, f64, String)],
    comment: &str,
) -> String {
    let frame = Frame::around(points.iter().map(|p| p.0), points.iter().map(|p| p.1));
    let mut out = open_svg(title, comment);
    axes(&mut out, &frame, "component 1", "component 2");
    let mut categories: Vec<String> = Vec::new();
    for (x, y, cat) in points {
        let ci = match categories.iter().position(|c| c == cat) {
            Some(i) => i,
            None => {
                categories.push(cat.clone());
                categories.len() - 1
            }
        };
        out.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3.5\" fill=\"{}\" fill-opacity=\"0.75\"/>\n",
            frame.px(*x),
            frame.py(*y),
            color(ci)
        ));
    }
    legend(&mut out, &categories);
    out.push_str("</svg>\n");
    out
}

/// Project rows onto their top two principal components (power
/// iteration with deflation; deterministic start vectors).
pub fn pca_2d(vectors: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let n = vectors.len();
    if n == 0 {
        return Vec::new();
    }
    let d = vectors[0].len();
    if d == 0 {
        return vec![(0.0, 0.0); n];
    }
    let mut x = Array2::<f64>::zeros((n, d));
    for (i, v) in vectors.iter().enumerate() {
        for (j, &val) in v.iter().enumerate() {
            x[[i, j]] = val;
        }
    }
    for j in 0..d {
        let mean = x.column(j).sum() / n as f64;
        for i in 0..n {
            x[[i, j]] -= mean;
        }
    }
    let cov = x.t().dot(&x) / (n.max(2) - 1) as f64;

    let mut components: Vec<Vec<f64>> = Vec::new();
    let mut deflated = cov;
    for k in 0..2usize.min(d) {
        let mut v: Vec<f64> = (0..d)
            .map(|i| 1.0 + (i as f64 + 1.0) * 0.01 * (k as f64 + 1.0))
            .collect();
        for _ in 0..200 {
            let mut next = vec![0.0; d];
            for (i, row) in deflated.rows().into_iter().enumerate() {
                next[i] = row.iter().zip(&v).map(|(a, b)| a * b).sum();
            }
            let norm = next.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm < 1e-12 {
                break;
            }
            for a in &mut next {
                *a /= norm;
            }
            v = next;
        }
        let lambda: f64 = {
            let mut av = vec![0.0; d];
            for (i, row) in deflated.rows().into_iter().enumerate() {
                av[i] = row.iter().zip(&v).map(|(a, b)| a * b).sum();
            }
            av.iter().zip(&v).map(|(a, b)| a * b).sum()
        };
        for i in 0..d {
            for j in 0..d {
                deflated[[i, j]] -= lambda * v[i] * v[j];
            }
        }
        components.push(v);
    }
    while components.len() < 2 {
        components.push(vec![0.0; d]);
    }

    (0..n)
        .map(|i| {
            let proj = |c: &[f64]| x.row(i).iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            (proj(&components[0]), proj(&components[1]))
        })
        .collect()
}
