//! Markdown report and self-rendered SVG plots over whatever artifacts the
//! store holds. Sections whose inputs are missing are replaced by a notice,
//! so the report can be generated at any pipeline state.

use crate::config::Split;
use crate::stages::{
    load_combination, load_matrix, load_test_report, modes_needed, CombinationReport, RunRecord,
    SelectionReport, TestModeReport,
};
use crate::store::RunStore;
use crate::studies::{MoreExpertsStudy, PeriodSweep, SameRunStudy, MORE_EXPERTS_REL, SAME_RUN_REL, SWEEP_REL};
use serde::de::DeserializeOwned;
use soelab_core::env::Mode;
use soelab_core::scoring::ScoreMatrix;
use soelab_core::Result;
use std::fmt::Write as _;

// ---- tiny SVG plotting ---------------------------------------------------

const PALETTE: [&str; 6] = [
    "#1f6fb4", "#d45044", "#3a9a5c", "#8a5bb8", "#e08b2e", "#6b6b6b",
];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

struct Range {
    min: f64,
    max: f64,
}

impl Range {
    fn of(values: impl Iterator<Item = f64>) -> Range {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in values {
            if v.is_finite() {
                min = min.min(v);
                max = max.max(v);
            }
        }
        if !min.is_finite() {
            return Range { min: 0.0, max: 1.0 };
        }
        if (max - min).abs() < 1e-12 {
            // Flat data still needs a visible band.
            return Range {
                min: min - 0.5,
                max: max + 0.5,
            };
        }
        let pad = (max - min) * 0.06;
        Range {
            min: min - pad,
            max: max + pad,
        }
    }

    fn to_px(&self, v: f64, lo_px: f64, hi_px: f64) -> f64 {
        lo_px + (v - self.min) / (self.max - self.min) * (hi_px - lo_px)
    }

    fn ticks(&self) -> Vec<f64> {
        (0..=4)
            .map(|i| self.min + (self.max - self.min) * i as f64 / 4.0)
            .collect()
    }
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Multi-series line chart as a standalone SVG document.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    const W: f64 = 720.0;
    const H: f64 = 440.0;
    const L: f64 = 66.0;
    const R: f64 = 160.0;
    const T: f64 = 44.0;
    const B: f64 = 52.0;
    let xr = Range::of(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let yr = Range::of(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\" font-weight=\"bold\">{}</text>\n",
        W / 2.0,
        xml_escape(title)
    );
    // Grid and axis labels.
    for t in yr.ticks() {
        let y = yr.to_px(t, H - B, T);
        let _ = write!(
            svg,
            "<line x1=\"{L}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
            W - R,
            L - 6.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    for t in xr.ticks() {
        let x = xr.to_px(t, L, W - R);
        let _ = write!(
            svg,
            "<line x1=\"{x:.1}\" y1=\"{T}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#eee\"/>\n\
             <text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            H - B,
            H - B + 18.0,
            fmt_tick(t)
        );
    }
    let _ = write!(
        svg,
        "<line x1=\"{L}\" y1=\"{T}\" x2=\"{L}\" y2=\"{:.1}\" stroke=\"black\"/>\n\
         <line x1=\"{L}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n\
         <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n\
         <text x=\"16\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
        H - B,
        H - B,
        W - R,
        H - B,
        (L + W - R) / 2.0,
        H - 14.0,
        xml_escape(x_label),
        (T + H - B) / 2.0,
        (T + H - B) / 2.0,
        xml_escape(y_label)
    );
    // Series and legend.
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|p| p.0.is_finite() && p.1.is_finite())
            .map(|p| {
                format!(
                    "{:.1},{:.1}",
                    xr.to_px(p.0, L, W - R),
                    yr.to_px(p.1, H - B, T)
                )
            })
            .collect();
        let _ = write!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.8\"/>\n",
            pts.join(" ")
        );
        for p in &pts {
            let xy: Vec<&str> = p.split(',').collect();
            let _ = write!(
                svg,
                "<circle cx=\"{}\" cy=\"{}\" r=\"2.4\" fill=\"{color}\"/>\n",
                xy[0], xy[1]
            );
        }
        let ly = T + 14.0 + k as f64 * 18.0;
        let _ = write!(
            svg,
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{color}\" stroke-width=\"3\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            W - R + 10.0,
            W - R + 34.0,
            W - R + 40.0,
            ly + 4.0,
            xml_escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Grouped bar chart: one cluster per group, one bar per column.
pub fn grouped_bars(title: &str, columns: &[String], groups: &[(String, Vec<f64>)]) -> String {
    const W: f64 = 760.0;
    const H: f64 = 440.0;
    const L: f64 = 66.0;
    const R: f64 = 170.0;
    const T: f64 = 44.0;
    const B: f64 = 86.0;
    let yr = Range::of(
        groups
            .iter()
            .flat_map(|(_, vs)| vs.iter().copied())
            .chain(std::iter::once(0.0)),
    );
    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\" font-weight=\"bold\">{}</text>\n",
        W / 2.0,
        xml_escape(title)
    );
    for t in yr.ticks() {
        let y = yr.to_px(t, H - B, T);
        let _ = write!(
            svg,
            "<line x1=\"{L}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{}</text>\n",
            W - R,
            L - 6.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let plot_w = W - R - L;
    let group_w = plot_w / groups.len().max(1) as f64;
    let bar_w = (group_w * 0.8) / columns.len().max(1) as f64;
    let base_y = yr.to_px(0.0, H - B, T);
    for (g, (name, values)) in groups.iter().enumerate() {
        let gx = L + g as f64 * group_w + group_w * 0.1;
        for (c, &v) in values.iter().enumerate() {
            let color = PALETTE[c % PALETTE.len()];
            let y = yr.to_px(v, H - B, T);
            let (top, height) = if y <= base_y {
                (y, base_y - y)
            } else {
                (base_y, y - base_y)
            };
            let _ = write!(
                svg,
                "<rect x=\"{:.1}\" y=\"{top:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{color}\"/>\n",
                gx + c as f64 * bar_w,
                bar_w * 0.92,
                height.max(0.5)
            );
        }
        let cx = L + g as f64 * group_w + group_w / 2.0;
        let _ = write!(
            svg,
            "<text x=\"{cx:.1}\" y=\"{:.1}\" text-anchor=\"end\" transform=\"rotate(-35 {cx:.1} {:.1})\">{}</text>\n",
            H - B + 16.0,
            H - B + 16.0,
            xml_escape(name)
        );
    }
    let _ = write!(
        svg,
        "<line x1=\"{L}\" y1=\"{base_y:.1}\" x2=\"{:.1}\" y2=\"{base_y:.1}\" stroke=\"black\"/>\n",
        W - R
    );
    for (c, col) in columns.iter().enumerate() {
        let color = PALETTE[c % PALETTE.len()];
        let ly = T + 14.0 + c as f64 * 18.0;
        let _ = write!(
            svg,
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            W - R + 10.0,
            ly - 9.0,
            W - R + 28.0,
            ly + 2.0,
            xml_escape(col)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

// ---- report assembly ------------------------------------------------------

fn try_load<T: DeserializeOwned>(store: &RunStore, rel: &str) -> Option<T> {
    store.read_json(rel).ok()
}

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

fn matrix_table(md: &mut String, matrix: &ScoreMatrix) {
    let _ = write!(md, "| pi_a \\ pi_b |");
    for l in &matrix.member_labels {
        let _ = write!(md, " {l} |");
    }
    let _ = writeln!(md);
    let _ = write!(md, "|---|");
    for _ in &matrix.member_labels {
        let _ = write!(md, "---|");
    }
    let _ = writeln!(md);
    for i in 0..matrix.m() {
        let _ = write!(md, "| {} |", matrix.member_labels[i]);
        for j in 0..matrix.m() {
            let v = pct(matrix.score(i, j));
            if i == j {
                let _ = write!(md, " **{v}** |");
            } else {
                let _ = write!(md, " {v} |");
            }
        }
        let _ = writeln!(md);
    }
}

fn mode_section(md: &mut String, mr: &TestModeReport, combo: &CombinationReport) {
    let _ = writeln!(md, "\n### {}\n", mr.mode.name());
    let _ = writeln!(md, "| policy | held-out score |");
    let _ = writeln!(md, "|---|---|");
    for s in &mr.singles {
        let _ = writeln!(md, "| {} | {} |", s.label, pct(s.score));
    }
    let sel_label = if mr.selected.row == mr.selected.col {
        combo.selection.row_label.clone()
    } else {
        format!("{}+{}", combo.selection.row_label, combo.selection.col_label)
    };
    let _ = writeln!(md, "| **selected: {sel_label}** | **{}** |", pct(mr.selected.score));
    let _ = writeln!(
        md,
        "\nlambda = {:.4}, selected theta = {:.4}, best cell ({}, {}) = {}, max theta {:.4} at ({}, {}).",
        mr.lambda * 100.0,
        mr.selected_theta * 100.0,
        mr.best_cell.row,
        mr.best_cell.col,
        pct(mr.best_cell.score),
        mr.max_theta.theta * 100.0,
        mr.max_theta.row,
        mr.max_theta.col
    );
    if let Some(o) = &mr.overlap {
        let _ = writeln!(
            md,
            "\nFailure overlap of the selected pair over {} scenarios (alternation in parentheses):\n",
            o.scenario_count
        );
        let _ = writeln!(md, "| failure | both | only pi_a | only pi_b | neither |");
        let _ = writeln!(md, "|---|---|---|---|---|");
        for (name, row) in [("collision", &o.collision), ("drivable", &o.drivable)] {
            let _ = writeln!(
                md,
                "| {name} | {} ({}) | {} ({}) | {} ({}) | {} ({}) |",
                row.both,
                row.both_soe,
                row.only_a,
                row.only_a_soe,
                row.only_b,
                row.only_b_soe,
                row.neither,
                row.neither_soe
            );
        }
    }
    if !mr.per_kind.is_empty() {
        let _ = writeln!(md, "\nPer-kind mean scores:\n");
        let _ = write!(md, "| kind | n |");
        for c in &mr.kind_columns {
            let _ = write!(md, " {c} |");
        }
        let _ = writeln!(md, " spread |");
        let _ = write!(md, "|---|---|");
        for _ in &mr.kind_columns {
            let _ = write!(md, "---|");
        }
        let _ = writeln!(md, "---|");
        for k in &mr.per_kind {
            let _ = write!(md, "| {} | {} |", k.kind.name(), k.scenario_count);
            for v in &k.per_model {
                let _ = write!(md, " {} |", pct(*v));
            }
            let _ = writeln!(md, " {} |", pct(k.spread));
        }
    }
}

/// Generate `reports/report.md` and its SVG plots from whatever artifacts
/// exist. Returns the store-relative paths written.
pub fn write_report(store: &RunStore) -> Result<Vec<String>> {
    let config = store.config().clone();
    let mut md = String::new();
    let mut outputs = Vec::new();
    let mut svgs: Vec<(String, String)> = Vec::new();

    let _ = writeln!(md, "# Experiment report\n");
    let _ = writeln!(md, "## Configuration\n");
    let _ = writeln!(md, "| key | value |");
    let _ = writeln!(md, "|---|---|");
    let _ = writeln!(md, "| experiment seed | {} |", config.experiment_seed);
    let _ = writeln!(md, "| training runs (m) | {} |", config.runs);
    let _ = writeln!(md, "| alternation period (n) | {} |", config.period);
    let _ = writeln!(
        md,
        "| scenarios | train {}, val {}, shifted-val {}, test {} |",
        config.scenarios.train, config.scenarios.val, config.scenarios.shifted_val, config.scenarios.test
    );
    let _ = writeln!(md, "| architecture | {:?} |", config.arch);
    let _ = writeln!(
        md,
        "| training | {} epochs, batch {}, lr {} |",
        config.train.epochs, config.train.batch_size, config.train.learning_rate
    );
    let _ = writeln!(md, "| selection signal | {} |", config.selection.name());
    let _ = writeln!(md, "| sigma_ol | {} |", config.sigma_ol);

    // Collection.
    let _ = writeln!(md, "\n## Demonstrations\n");
    match try_load::<crate::stages::CollectSummary>(store, "dataset/collect.json") {
        None => {
            let _ = writeln!(md, "_Collection has not run._");
        }
        Some(c) => {
            let _ = writeln!(
                md,
                "{} rows from {} of {} scenarios.",
                c.row_count, c.used_scenarios, c.scenario_count
            );
            if !c.excluded.is_empty() {
                let _ = writeln!(md, "\nExcluded scenarios:");
                for e in &c.excluded {
                    let _ = writeln!(md, "- {} ({})", e.id, e.termination);
                }
            }
        }
    }

    // Training and validation curves.
    let records: Vec<RunRecord> = (1..=config.runs)
        .filter_map(|i| try_load(store, &format!("runs/run_{i}/record.json")))
        .collect();
    let _ = writeln!(md, "\n## Training\n");
    if records.len() != config.runs {
        let _ = writeln!(md, "_Training has not run._");
    } else {
        let _ = writeln!(md, "| run | seed | final loss |");
        let _ = writeln!(md, "|---|---|---|");
        for r in &records {
            let _ = writeln!(
                md,
                "| {} | {} | {:.6} |",
                r.run_index,
                r.seed,
                r.epochs.last().map(|e| e.train_loss).unwrap_or(f64::NAN)
            );
        }
        let loss_series: Vec<Series> = records
            .iter()
            .map(|r| Series {
                label: format!("run {}", r.run_index),
                points: r
                    .epochs
                    .iter()
                    .map(|e| (e.epoch as f64, e.train_loss))
                    .collect(),
            })
            .collect();
        svgs.push((
            "reports/loss_curves.svg".to_string(),
            line_chart("Training loss per epoch", "epoch", "loss", &loss_series),
        ));
        let _ = writeln!(md, "\n![training loss](loss_curves.svg)");

        let signals: [(&str, fn(&crate::stages::RunRecord, usize) -> Option<f64>); 3] = [
            ("ol", |r, k| r.epochs[k].ol_score),
            ("cl-nr", |r, k| r.epochs[k].cl_nr_score),
            ("cl-r", |r, k| r.epochs[k].cl_r_score),
        ];
        let mut have_scores = false;
        for (name, get) in signals {
            let series: Vec<Series> = records
                .iter()
                .map(|r| Series {
                    label: format!("run {}", r.run_index),
                    points: (0..r.epochs.len())
                        .filter_map(|k| get(r, k).map(|v| (r.epochs[k].epoch as f64, v)))
                        .collect(),
                })
                .filter(|s| !s.points.is_empty())
                .collect();
            if series.is_empty() {
                continue;
            }
            have_scores = true;
            let rel = format!("reports/val_{}.svg", name.replace('-', "_"));
            svgs.push((
                rel.clone(),
                line_chart(
                    &format!("Validation score per epoch ({name})"),
                    "epoch",
                    "score",
                    &series,
                ),
            ));
            let _ = writeln!(
                md,
                "\n![validation {name}]({})",
                rel.trim_start_matches("reports/")
            );
        }
        if !have_scores {
            let _ = writeln!(md, "\n_Per-epoch validation has not run._");
        }
    }

    // Checkpoint selection.
    let _ = writeln!(md, "\n## Checkpoint selection\n");
    match try_load::<SelectionReport>(store, "selection/checkpoints.json") {
        None => {
            let _ = writeln!(md, "_Validation has not run._");
        }
        Some(sel) => {
            let _ = writeln!(
                md,
                "Selection signal: {} on the {} split.\n",
                sel.selection.name(),
                sel.split
            );
            let _ = writeln!(md, "| run | chosen | ol-best | cl-nr-best | cl-r-best | note |");
            let _ = writeln!(md, "|---|---|---|---|---|---|");
            for r in &sel.runs {
                let note = if r.best_ol.epoch != r.best_cl_nr.epoch {
                    "ol/cl disagree"
                } else {
                    ""
                };
                let _ = writeln!(
                    md,
                    "| {} | e{:02} ({:.4}) | e{:02} | e{:02} | e{:02} | {note} |",
                    r.run_index,
                    r.chosen.epoch,
                    r.chosen.score,
                    r.best_ol.epoch,
                    r.best_cl_nr.epoch,
                    r.best_cl_r.epoch
                );
            }
        }
    }

    // Matrices.
    let _ = writeln!(md, "\n## Combination matrices\n");
    let mut any_matrix = false;
    for split in [Split::Val, Split::ShiftedVal, Split::Test] {
        for mode in modes_needed(&config) {
            if let Ok(matrix) = load_matrix(store, split.name(), mode, config.period) {
                any_matrix = true;
                let _ = writeln!(
                    md,
                    "### {} / {} (n = {}), scores x100\n",
                    split.name(),
                    mode.name(),
                    config.period
                );
                matrix_table(&mut md, &matrix);
                let (ti, tj) = matrix.argmax();
                let _ = writeln!(
                    md,
                    "\nlambda = {:.4}; best cell ({}, {}) = {}.\n",
                    matrix.lambda()? * 100.0,
                    matrix.member_labels[ti],
                    matrix.member_labels[tj],
                    pct(matrix.score(ti, tj))
                );
            }
        }
    }
    if !any_matrix {
        let _ = writeln!(md, "_No matrices evaluated yet._");
    }

    // Combination selection.
    let _ = writeln!(md, "\n## Combination selection\n");
    match load_combination(store) {
        Err(_) => {
            let _ = writeln!(md, "_Combination selection has not run._");
        }
        Ok(c) => {
            let s = &c.selection;
            if s.is_pair() {
                let _ = writeln!(
                    md,
                    "Selected alternation {} -> {} (period {}) on {} / {}: score {}, theta {:.4}.",
                    s.row_label,
                    s.col_label,
                    c.period,
                    c.split,
                    c.mode.name(),
                    pct(s.score),
                    s.theta * 100.0
                );
            } else {
                let _ = writeln!(
                    md,
                    "A single expert won selection: {} with score {} on {} / {}.",
                    s.row_label,
                    pct(s.score),
                    c.split,
                    c.mode.name()
                );
            }
        }
    }

    // Held-out test.
    let _ = writeln!(md, "\n## Held-out test\n");
    match load_test_report(store) {
        Err(_) => {
            let _ = writeln!(md, "_The held-out stage has not run._");
        }
        Ok(t) => {
            let _ = writeln!(
                md,
                "Split `{}` (shifted distribution), period {}.",
                t.split, t.period
            );
            for mr in t.modes.values() {
                mode_section(&mut md, mr, &t.combination);
                if !mr.per_kind.is_empty() {
                    let rel = format!("reports/per_kind_{}.svg", mr.mode.name().replace('-', "_"));
                    let groups: Vec<(String, Vec<f64>)> = mr
                        .per_kind
                        .iter()
                        .map(|k| {
                            (
                                k.kind.name().to_string(),
                                k.per_model.iter().map(|v| v * 100.0).collect(),
                            )
                        })
                        .collect();
                    svgs.push((
                        rel.clone(),
                        grouped_bars(
                            &format!("Held-out score by scenario kind ({})", mr.mode.name()),
                            &mr.kind_columns,
                            &groups,
                        ),
                    ));
                    let _ = writeln!(
                        md,
                        "\n![per-kind {}]({})",
                        mr.mode.name(),
                        rel.trim_start_matches("reports/")
                    );
                }
            }
        }
    }

    // Studies.
    if let Some(sweep) = try_load::<PeriodSweep>(store, SWEEP_REL) {
        let _ = writeln!(md, "\n## Period sweep\n");
        let _ = writeln!(md, "| n | mode | lambda | max theta | pair | best score |");
        let _ = writeln!(md, "|---|---|---|---|---|---|");
        for r in &sweep.rows {
            let _ = writeln!(
                md,
                "| {} | {} | {:.4} | {:.4} | {} | {} |",
                r.period,
                r.mode.name(),
                r.lambda * 100.0,
                r.max_theta * 100.0,
                r.theta_pair,
                pct(r.best_score)
            );
        }
        for mode in Mode::ALL {
            let rows: Vec<&crate::studies::PeriodRow> =
                sweep.rows.iter().filter(|r| r.mode == mode).collect();
            if rows.len() < 2 {
                continue;
            }
            let series = [
                Series {
                    label: "lambda".to_string(),
                    points: rows
                        .iter()
                        .map(|r| (r.period as f64, r.lambda * 100.0))
                        .collect(),
                },
                Series {
                    label: "max theta".to_string(),
                    points: rows
                        .iter()
                        .map(|r| (r.period as f64, r.max_theta * 100.0))
                        .collect(),
                },
            ];
            let rel = format!("reports/period_sweep_{}.svg", mode.name().replace('-', "_"));
            svgs.push((
                rel.clone(),
                line_chart(
                    &format!("Improvement vs period ({})", mode.name()),
                    "period n",
                    "score x100",
                    &series,
                ),
            ));
            let _ = writeln!(
                md,
                "\n![period sweep {}]({})",
                mode.name(),
                rel.trim_start_matches("reports/")
            );
        }
    }

    if let Some(study) = try_load::<SameRunStudy>(store, SAME_RUN_REL) {
        let _ = writeln!(md, "\n## Same-run ablation\n");
        let _ = writeln!(
            md,
            "Cross-run members {:?} vs the best epochs {:?} of run {}.\n",
            study.cross_labels, study.same_labels, study.chosen_run
        );
        let _ = writeln!(md, "| mode | lambda (cross-run) | lambda (same-run) |");
        let _ = writeln!(md, "|---|---|---|");
        for r in &study.rows {
            let _ = writeln!(
                md,
                "| {} | {:.4} | {:.4} |",
                r.mode.name(),
                r.lambda_cross * 100.0,
                r.lambda_same * 100.0
            );
        }
    }

    if let Some(study) = try_load::<MoreExpertsStudy>(store, MORE_EXPERTS_REL) {
        let _ = writeln!(md, "\n## Three-expert orderings\n");
        let _ = writeln!(
            md,
            "All cyclic orderings of each leave-one-out triple, on {}. \
             Degenerate check: a triple of one member scores {} vs {} alone.\n",
            study.split,
            pct(study.sanity.triple_score),
            pct(study.sanity.single_score)
        );
        let _ = writeln!(
            md,
            "| absent | mode | min | mean | max | variance | best pair | best single |"
        );
        let _ = writeln!(md, "|---|---|---|---|---|---|---|---|");
        for b in &study.blocks {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} | {:.6} | {} | {} |",
                b.absent_label,
                b.mode.name(),
                pct(b.min),
                pct(b.mean),
                pct(b.max),
                b.variance,
                pct(b.best_pair),
                pct(b.best_single)
            );
        }
        let _ = writeln!(md, "\n| sequence | mode | score |");
        let _ = writeln!(md, "|---|---|---|");
        for r in &study.rows {
            let _ = writeln!(
                md,
                "| {} | {} | {} |",
                r.sequence_labels,
                r.mode.name(),
                pct(r.score)
            );
        }
    }

    std::fs::write(store.path("reports/report.md"), md)?;
    outputs.push("reports/report.md".to_string());
    for (rel, svg) in svgs {
        std::fs::write(store.path(&rel), svg)?;
        outputs.push(rel);
    }
    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::RunStore;
    use crate::testutil::tiny_config;

    #[test]
    fn chart_helpers_emit_wellformed_svg() {
        let svg = line_chart(
            "t",
            "x",
            "y",
            &[Series {
                label: "a".to_string(),
                points: vec![(0.0, 1.0), (1.0, 2.0), (2.0, 1.5)],
            }],
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("polyline"));
        // Escaping keeps labels inert.
        let esc = line_chart("a<b>&c", "x", "y", &[]);
        assert!(esc.contains("a&lt;b&gt;&amp;c"));

        let bars = grouped_bars(
            "t",
            &["m1".to_string(), "m2".to_string()],
            &[("g1".to_string(), vec![0.5, 0.8]), ("g2".to_string(), vec![0.2, 0.4])],
        );
        assert!(bars.contains("<rect"));
        assert_eq!(bars.matches("<rect").count(), 1 + 4 + 2);
    }

    #[test]
    fn report_on_an_empty_store_has_all_notices() {
        let dir = tempfile::tempdir().unwrap();
        let store = RunStore::open(dir.path(), Some(tiny_config())).unwrap();
        let outputs = write_report(&store).unwrap();
        assert_eq!(outputs, vec!["reports/report.md".to_string()]);
        let md = std::fs::read_to_string(dir.path().join("reports/report.md")).unwrap();
        assert!(md.contains("# Experiment report"));
        assert!(md.contains("_Collection has not run._"));
        assert!(md.contains("_Training has not run._"));
        assert!(md.contains("_No matrices evaluated yet._"));
        assert!(md.contains("_The held-out stage has not run._"));
        // No study sections appear without their artifacts.
        assert!(!md.contains("## Period sweep"));
    }
}
