//! Minimal SVG emitters for the evaluation and explanation plots.

use std::fmt::Write;

use sidn_core::explain::{ForceData, GlobalSummary};
use sidn_core::metrics::{ConfusionMatrix, RocCurve};

const INCREASE: &str = "#d62728";
const DECREASE: &str = "#1f77b4";

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Self { body: String::new(), width, height }
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, size: u32, content: &str) {
        writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-size="{size}">{}</text>"#,
            escape(content)
        )
        .unwrap();
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        writeln!(self.body, r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#).unwrap();
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, style: &str) {
        writeln!(self.body, r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" {style}/>"#).unwrap();
    }

    fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Blue ramp from white at 0 to dark at 1.
fn shade(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let mix = |from: f64, to: f64| (from + (to - from) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(247.0, 8.0), mix(251.0, 48.0), mix(255.0, 107.0))
}

pub fn confusion_svg(cm: &ConfusionMatrix) -> String {
    let mut s = Svg::new(360.0, 340.0);
    s.text(180.0, 24.0, "middle", 16, "Confusion matrix");
    let cells = [[cm.tn, cm.fp], [cm.fn_, cm.tp]];
    let max = cells.iter().flatten().copied().max().unwrap_or(0).max(1) as f64;
    let names = ["non-suicidal", "suicidal"];
    let (x0, y0, size) = (110.0, 60.0, 110.0);
    for (r, row) in cells.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let t = v as f64 / max;
            let (x, y) = (x0 + c as f64 * size, y0 + r as f64 * size);
            s.rect(x, y, size, size, &shade(t));
            let fill = if t > 0.5 { "white" } else { "black" };
            writeln!(
                s.body,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="18" fill="{fill}">{v}</text>"#,
                x + size / 2.0,
                y + size / 2.0 + 6.0
            )
            .unwrap();
        }
        s.text(x0 - 8.0, y0 + r as f64 * size + size / 2.0 + 4.0, "end", 12, names[r]);
        s.text(x0 + r as f64 * size + size / 2.0, y0 + 2.0 * size + 20.0, "middle", 12, names[r]);
    }
    s.text(x0 + size, y0 + 2.0 * size + 42.0, "middle", 13, "Predicted");
    writeln!(
        s.body,
        r#"<text x="20" y="{:.2}" text-anchor="middle" font-size="13" transform="rotate(-90 20 {:.2})">Actual</text>"#,
        y0 + size,
        y0 + size
    )
    .unwrap();
    s.finish()
}

pub fn roc_svg(roc: &RocCurve, auc: f64) -> String {
    let mut s = Svg::new(400.0, 400.0);
    let (x0, y0, side) = (60.0, 340.0, 300.0);
    let px = |fpr: f64| x0 + fpr * side;
    let py = |tpr: f64| y0 - tpr * side;
    s.text(210.0, 24.0, "middle", 16, "ROC curve");
    s.line(x0, y0, x0 + side, y0, r#"stroke="black""#);
    s.line(x0, y0, x0, y0 - side, r#"stroke="black""#);
    s.line(px(0.0), py(0.0), px(1.0), py(1.0), r##"stroke="#999999" stroke-dasharray="4 4""##);
    for t in [0.0, 0.5, 1.0] {
        s.text(px(t), y0 + 18.0, "middle", 11, &format!("{t}"));
        s.text(x0 - 8.0, py(t) + 4.0, "end", 11, &format!("{t}"));
    }
    let points: Vec<String> = roc.points.iter().map(|p| format!("{:.2},{:.2}", px(p.fpr), py(p.tpr))).collect();
    writeln!(s.body, r#"<polyline points="{}" fill="none" stroke="{INCREASE}" stroke-width="2"/>"#, points.join(" ")).unwrap();
    s.text(px(1.0) - 6.0, py(0.0) - 12.0, "end", 13, &format!("AUC = {auc:.4}"));
    s.text(x0 + side / 2.0, y0 + 40.0, "middle", 13, "False positive rate");
    writeln!(
        s.body,
        r#"<text x="18" y="{:.2}" text-anchor="middle" font-size="13" transform="rotate(-90 18 {:.2})">True positive rate</text>"#,
        y0 - side / 2.0,
        y0 - side / 2.0
    )
    .unwrap();
    s.finish()
}

fn bar_chart(title: &str, rows: &[(String, f64, &str)], footer: &str) -> String {
    let row_h = 22.0;
    let (label_w, bar_w) = (160.0, 320.0);
    let height = 80.0 + row_h * rows.len().max(1) as f64 + 30.0;
    let mut s = Svg::new(label_w + bar_w + 120.0, height);
    s.text((label_w + bar_w + 120.0) / 2.0, 24.0, "middle", 16, title);
    let max = rows.iter().map(|r| r.1.abs()).fold(0.0, f64::max).max(1e-12);
    let has_neg = rows.iter().any(|r| r.1 < 0.0);
    let zero = if has_neg { label_w + bar_w / 2.0 } else { label_w };
    let scale = if has_neg { bar_w / 2.0 } else { bar_w } / max;
    for (i, (label, v, color)) in rows.iter().enumerate() {
        let y = 50.0 + i as f64 * row_h;
        let w = v.abs() * scale;
        let x = if *v < 0.0 { zero - w } else { zero };
        s.rect(x, y, w, row_h - 4.0, color);
        s.text(label_w - 8.0, y + row_h / 2.0 + 2.0, "end", 12, label);
        let (tx, anchor) = if *v < 0.0 { (x - 4.0, "end") } else { (x + w + 4.0, "start") };
        s.text(tx, y + row_h / 2.0 + 2.0, anchor, 11, &format!("{v:+.4}"));
    }
    let bottom = 50.0 + row_h * rows.len().max(1) as f64;
    s.line(zero, 44.0, zero, bottom, r#"stroke="black""#);
    s.text((label_w + bar_w + 120.0) / 2.0, bottom + 24.0, "middle", 12, footer);
    s.finish()
}

/// Horizontal bars per token: red bars raise the prediction, blue bars lower it.
pub fn force_svg(f: &ForceData) -> String {
    let rows: Vec<(String, f64, &str)> = f
        .contributions
        .iter()
        .map(|c| (format!("{} (#{})", c.word, c.position), c.phi, if c.phi >= 0.0 { INCREASE } else { DECREASE }))
        .collect();
    bar_chart(
        "Token contributions",
        &rows,
        &format!("base value {:.4} -> prediction {:.4}", f.base_value, f.prediction),
    )
}

/// Top-k words by mean |phi|, colored by the sign of their mean phi.
pub fn summary_svg(g: &GlobalSummary, top_k: usize) -> String {
    let rows: Vec<(String, f64, &str)> = g
        .entries
        .iter()
        .take(top_k)
        .map(|e| (e.word.clone(), e.mean_abs_phi, if e.mean_phi >= 0.0 { INCREASE } else { DECREASE }))
        .collect();
    bar_chart("Mean |SHAP value| by word", &rows, "red: raises the prediction on average, blue: lowers it")
}
