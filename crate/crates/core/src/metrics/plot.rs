use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{mean_std, LoadedRun};
use crate::error::{Error, Result};
use crate::train::Algorithm;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum PlotKind {
    /// Logged cumulative task reward against step, mean ± std over seeds.
    Cumulative,
    /// Running total of training reward against step, one series per label.
    Ablation,
    /// Final evaluation return per task, grouped bars with error bars.
    FinalEvalBars,
}

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 520.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 220.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;
const MAX_POINTS: usize = 600;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

struct Group<'a> {
    label: String,
    color: String,
    runs: Vec<&'a LoadedRun>,
}

fn group_runs(runs: &[LoadedRun]) -> Vec<Group<'_>> {
    let mut groups: Vec<Group<'_>> = Vec::new();
    for run in runs {
        let label = &run.summary.label;
        match groups.iter_mut().find(|g| &g.label == label) {
            Some(g) => g.runs.push(run),
            None => groups.push(Group {
                label: label.clone(),
                color: String::new(),
                runs: vec![run],
            }),
        }
    }
    for (k, g) in groups.iter_mut().enumerate() {
        g.color = match Algorithm::from_name(&g.label) {
            Some(a) => a.color().to_string(),
            None => PALETTE[k % PALETTE.len()].to_string(),
        };
    }
    groups
}

/// Renders `runs` as an SVG chart at `out`. Identical inputs give identical bytes.
pub fn emit_plots(runs: &[LoadedRun], kind: PlotKind, out: &Path) -> Result<()> {
    if runs.is_empty() {
        return Err(Error::Input("no runs to plot".into()));
    }
    let groups = group_runs(runs);
    let svg = match kind {
        PlotKind::Cumulative => line_chart(&groups, "Cumulative training reward", false)?,
        PlotKind::Ablation => line_chart(&groups, "Averaging ablation: total training reward", true)?,
        PlotKind::FinalEvalBars => bar_chart(&groups)?,
    };
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(out, svg)?;
    Ok(())
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0).max(1e-12) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0).max(1e-12) * (HEIGHT - TOP - BOTTOM)
    }
}

fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = (hi - lo).max(1e-9);
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

fn header(svg: &mut String, title: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="28" text-anchor="middle" font-size="16">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(title)
    );
}

fn axes(svg: &mut String, f: &Frame, xlabel: &str, ylabel: &str, xticks: bool) {
    let (l, r, t, b) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        svg,
        r#"<rect x="{l:.1}" y="{t:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        r - l,
        b - t
    );
    for y in nice_ticks(f.y0, f.y1) {
        let py = f.py(y);
        let _ = writeln!(
            svg,
            r##"<line x1="{l:.1}" y1="{py:.1}" x2="{r:.1}" y2="{py:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            l - 6.0,
            py + 4.0,
            tick_label(y)
        );
    }
    if xticks {
        for x in nice_ticks(f.x0, f.x1) {
            let px = f.px(x);
            let _ = writeln!(
                svg,
                r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                b + 18.0,
                tick_label(x)
            );
        }
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (l + r) / 2.0,
        HEIGHT - 15.0,
        escape(xlabel)
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(20 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (t + b) / 2.0,
        escape(ylabel)
    );
}

fn legend(svg: &mut String, groups: &[Group<'_>]) {
    let x = WIDTH - RIGHT + 15.0;
    for (k, g) in groups.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.1}" y="{:.1}" width="14" height="10" fill="{}"/><text x="{:.1}" y="{:.1}">{} (n={})</text>"#,
            y - 9.0,
            g.color,
            x + 20.0,
            y,
            escape(&g.label),
            g.runs.len()
        );
    }
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 1e4 {
        format!("{:.0}k", v / 1e3)
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn series(run: &LoadedRun, running_total: bool) -> Vec<f64> {
    if running_total {
        let mut acc = 0.0;
        run.rows
            .iter()
            .map(|r| {
                acc += r.reward;
                acc
            })
            .collect()
    } else {
        run.rows.iter().map(|r| r.cumulative_task_reward).collect()
    }
}

fn line_chart(groups: &[Group<'_>], title: &str, running_total: bool) -> Result<String> {
    struct Line {
        xs: Vec<f64>,
        mean: Vec<f64>,
        std: Vec<f64>,
    }
    let mut lines = Vec::new();
    for g in groups {
        let len = g.runs[0].rows.len();
        if len == 0 || g.runs.iter().any(|r| r.rows.len() != len) {
            return Err(Error::Input(format!(
                "runs labelled {} have empty or unequal step logs",
                g.label
            )));
        }
        let all: Vec<Vec<f64>> = g.runs.iter().map(|r| series(r, running_total)).collect();
        let stride = len.div_ceil(MAX_POINTS);
        let mut idx: Vec<usize> = (0..len).step_by(stride).collect();
        if idx.last() != Some(&(len - 1)) {
            idx.push(len - 1);
        }
        let mut line = Line {
            xs: Vec::new(),
            mean: Vec::new(),
            std: Vec::new(),
        };
        for i in idx {
            let (m, s) = mean_std(&all.iter().map(|v| v[i]).collect::<Vec<_>>());
            line.xs.push(g.runs[0].rows[i].step as f64);
            line.mean.push(m);
            line.std.push(s);
        }
        lines.push(line);
    }
    let mut f = Frame {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
    };
    for l in &lines {
        f.x1 = f.x1.max(*l.xs.last().unwrap());
        for (m, s) in l.mean.iter().zip(&l.std) {
            f.y0 = f.y0.min(m - s);
            f.y1 = f.y1.max(m + s);
        }
    }
    let mut svg = String::new();
    header(&mut svg, title);
    axes(&mut svg, &f, "step", "reward", true);
    // Task boundaries of the first run; randomized runs switch every step and get none.
    let first = &groups[0].runs[0].rows;
    let switches: Vec<u64> = first
        .windows(2)
        .filter(|w| w[0].task_id != w[1].task_id)
        .map(|w| w[1].step)
        .collect();
    if !running_total && switches.len() < 64 {
        for step in switches {
            let px = f.px(step as f64);
            let _ = writeln!(
                svg,
                r##"<line x1="{px:.1}" y1="{TOP:.1}" x2="{px:.1}" y2="{:.1}" stroke="#999999" stroke-dasharray="4 4"/>"##,
                HEIGHT - BOTTOM
            );
        }
    }
    for (g, l) in groups.iter().zip(&lines) {
        let mut band = String::new();
        for (x, (m, s)) in l.xs.iter().zip(l.mean.iter().zip(&l.std)) {
            let _ = write!(band, "{:.1},{:.1} ", f.px(*x), f.py(m + s));
        }
        for (x, (m, s)) in l.xs.iter().zip(l.mean.iter().zip(&l.std)).rev() {
            let _ = write!(band, "{:.1},{:.1} ", f.px(*x), f.py(m - s));
        }
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{}" fill-opacity="0.2" stroke="none"/>"#,
            band.trim_end(),
            g.color
        );
        let pts: Vec<String> = l
            .xs
            .iter()
            .zip(&l.mean)
            .map(|(x, m)| format!("{:.1},{:.1}", f.px(*x), f.py(*m)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="1.5"/>"#,
            pts.join(" "),
            g.color
        );
    }
    legend(&mut svg, groups);
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn bar_chart(groups: &[Group<'_>]) -> Result<String> {
    let num_tasks = groups
        .iter()
        .flat_map(|g| g.runs.iter().map(|r| r.summary.eval.len()))
        .max()
        .unwrap_or(0);
    if num_tasks == 0 {
        return Err(Error::Input("runs carry no evaluation results".into()));
    }
    // (mean over seeds of per-task means, pooled std of all returns)
    let mut stats = vec![vec![(0.0, 0.0); num_tasks]; groups.len()];
    for (gi, g) in groups.iter().enumerate() {
        for (t, slot) in stats[gi].iter_mut().enumerate() {
            let means: Vec<f64> = g
                .runs
                .iter()
                .filter_map(|r| r.summary.eval.get(t).map(|e| e.mean))
                .collect();
            let pooled: Vec<f64> = g
                .runs
                .iter()
                .filter_map(|r| r.summary.eval.get(t))
                .flat_map(|e| e.returns.iter().copied())
                .collect();
            *slot = (mean_std(&means).0, mean_std(&pooled).1);
        }
    }
    let mut f = Frame {
        x0: 0.0,
        x1: num_tasks as f64,
        y0: 0.0,
        y1: 1.0,
    };
    for row in &stats {
        for (m, s) in row {
            f.y0 = f.y0.min(m - s);
            f.y1 = f.y1.max(m + s);
        }
    }
    let mut svg = String::new();
    header(&mut svg, "Final evaluation return per task");
    axes(&mut svg, &f, "task", "return", false);
    let zero = f.py(0.0);
    let _ = writeln!(
        svg,
        r#"<line x1="{LEFT:.1}" y1="{zero:.1}" x2="{:.1}" y2="{zero:.1}" stroke="black"/>"#,
        WIDTH - RIGHT
    );
    let slot = (WIDTH - LEFT - RIGHT) / num_tasks as f64;
    let bar = slot * 0.8 / groups.len() as f64;
    for t in 0..num_tasks {
        let base = LEFT + slot * t as f64 + slot * 0.1;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{t}</text>"#,
            LEFT + slot * (t as f64 + 0.5),
            HEIGHT - BOTTOM + 18.0
        );
        for (gi, g) in groups.iter().enumerate() {
            let (m, s) = stats[gi][t];
            let x = base + bar * gi as f64;
            let (y_top, y_bot) = (f.py(m.max(0.0)), f.py(m.min(0.0)));
            let cx = x + bar / 2.0;
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.1}" y="{y_top:.1}" width="{bar:.1}" height="{:.1}" fill="{}"/><line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
                (y_bot - y_top).max(0.0),
                g.color,
                f.py(m + s),
                f.py(m - s)
            );
        }
    }
    legend(&mut svg, groups);
    svg.push_str("</svg>\n");
    Ok(svg)
}
