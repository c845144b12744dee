//! Static SVG figures rendered from analysis output: a grouped bar chart of
//! factor contributions and grouped box plots of absolute latent scores.
//!
//! Rendering is a pure function of the input values, so identical analysis
//! artifacts always produce byte-identical files.

const PALETTE: [&str; 8] = [
    "#4878d0", "#ee854a", "#6acc64", "#d65f5f", "#956cb4", "#8c613c", "#dc7ec0", "#797979",
];

fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Svg { body: String::new(), width, height }
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        self.body.push_str(&format!(
            "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\"/>\n"
        ));
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64) {
        self.body.push_str(&format!(
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{stroke}\" stroke-width=\"{width:.2}\"/>\n"
        ));
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        self.body.push_str(&format!(
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"{size:.1}\" font-family=\"sans-serif\" text-anchor=\"{anchor}\">{content}</text>\n"
        ));
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.0} {:.0}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.width, self.height, self.width, self.height, self.body
        )
    }
}

/// Grouped bar chart of per-subgroup contributions, one group per factor.
pub fn contributions_bar_chart(
    factor_names: &[String],
    subgroups: &[String],
    contributions: &[Vec<f64>],
) -> String {
    let margin_left = 50.0;
    let margin_bottom = 40.0;
    let margin_top = 30.0;
    let plot_h = 220.0;
    let group_w = 30.0 * subgroups.len() as f64 + 20.0;
    let plot_w = group_w * factor_names.len().max(1) as f64;
    let width = margin_left + plot_w + 140.0;
    let height = margin_top + plot_h + margin_bottom;
    let mut svg = Svg::new(width, height);

    let y_of = |v: f64| margin_top + plot_h * (1.0 - v);
    // Axis and gridlines at 0, 0.25, ..., 1.
    for i in 0..=4 {
        let v = i as f64 * 0.25;
        let y = y_of(v);
        svg.line(margin_left, y, margin_left + plot_w, y, "#dddddd", 1.0);
        svg.text(margin_left - 6.0, y + 3.5, 10.0, "end", &format!("{v:.2}"));
    }
    svg.line(margin_left, margin_top, margin_left, margin_top + plot_h, "#333333", 1.0);
    svg.line(
        margin_left,
        margin_top + plot_h,
        margin_left + plot_w,
        margin_top + plot_h,
        "#333333",
        1.0,
    );
    svg.text(margin_left + plot_w / 2.0, height - 8.0, 11.0, "middle", "factor");
    svg.text(14.0, margin_top - 12.0, 11.0, "start", "contribution");

    for (f, row) in contributions.iter().enumerate() {
        let x0 = margin_left + f as f64 * group_w + 10.0;
        for (g, &v) in row.iter().enumerate() {
            let x = x0 + g as f64 * 30.0;
            let y = y_of(v.clamp(0.0, 1.0));
            svg.rect(x, y, 24.0, margin_top + plot_h - y, color(g));
        }
        svg.text(
            x0 + 15.0 * subgroups.len() as f64,
            margin_top + plot_h + 16.0,
            10.0,
            "middle",
            &factor_names[f],
        );
    }

    // Legend.
    let lx = margin_left + plot_w + 16.0;
    for (g, name) in subgroups.iter().enumerate() {
        let y = margin_top + 10.0 + g as f64 * 18.0;
        svg.rect(lx, y - 9.0, 12.0, 12.0, color(g));
        svg.text(lx + 18.0, y + 1.0, 10.0, "start", name);
    }

    svg.finish()
}

/// Five-number summary used by the box plots.
fn summary(values: &[f64]) -> (f64, f64, f64, f64, f64) {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantile = |q: f64| -> f64 {
        let pos = q * (sorted.len() as f64 - 1.0);
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    };
    (sorted[0], quantile(0.25), quantile(0.5), quantile(0.75), sorted[sorted.len() - 1])
}

/// Grouped box plots of absolute latent scores: one cluster per factor, one
/// box per subgroup.
pub fn abs_score_box_plot(
    factor_names: &[String],
    subgroups: &[String],
    scores: &[Vec<Vec<f64>>],
) -> String {
    let margin_left = 55.0;
    let margin_bottom = 40.0;
    let margin_top = 30.0;
    let plot_h = 240.0;
    let box_w = 22.0;
    let group_w = (box_w + 8.0) * subgroups.len() as f64 + 24.0;
    let plot_w = group_w * factor_names.len().max(1) as f64;
    let width = margin_left + plot_w + 140.0;
    let height = margin_top + plot_h + margin_bottom;
    let mut svg = Svg::new(width, height);

    let max_val = scores
        .iter()
        .flatten()
        .flatten()
        .fold(0.0f64, |acc, &v| acc.max(v))
        .max(1e-12);
    let y_of = |v: f64| margin_top + plot_h * (1.0 - v / (1.05 * max_val));

    for i in 0..=4 {
        let v = max_val * i as f64 / 4.0;
        let y = y_of(v);
        svg.line(margin_left, y, margin_left + plot_w, y, "#dddddd", 1.0);
        svg.text(margin_left - 6.0, y + 3.5, 10.0, "end", &format!("{v:.2}"));
    }
    svg.line(margin_left, margin_top, margin_left, margin_top + plot_h, "#333333", 1.0);
    svg.line(
        margin_left,
        margin_top + plot_h,
        margin_left + plot_w,
        margin_top + plot_h,
        "#333333",
        1.0,
    );
    svg.text(14.0, margin_top - 12.0, 11.0, "start", "absolute latent score");

    for (f, by_group) in scores.iter().enumerate() {
        let x0 = margin_left + f as f64 * group_w + 12.0;
        for (g, values) in by_group.iter().enumerate() {
            if values.is_empty() {
                continue;
            }
            let (min, q1, med, q3, max) = summary(values);
            let x = x0 + g as f64 * (box_w + 8.0);
            let cx = x + box_w / 2.0;
            svg.line(cx, y_of(min), cx, y_of(q1), "#555555", 1.0);
            svg.line(cx, y_of(q3), cx, y_of(max), "#555555", 1.0);
            svg.rect(x, y_of(q3), box_w, (y_of(q1) - y_of(q3)).max(0.5), color(g));
            svg.line(x, y_of(med), x + box_w, y_of(med), "#222222", 1.5);
        }
        svg.text(
            x0 + (box_w + 8.0) * subgroups.len() as f64 / 2.0,
            margin_top + plot_h + 16.0,
            10.0,
            "middle",
            &factor_names[f],
        );
    }

    let lx = margin_left + plot_w + 16.0;
    for (g, name) in subgroups.iter().enumerate() {
        let y = margin_top + 10.0 + g as f64 * 18.0;
        svg.rect(lx, y - 9.0, 12.0, 12.0, color(g));
        svg.text(lx + 18.0, y + 1.0, 10.0, "start", name);
    }

    svg.finish()
}
