//! `report.json` and the SVG panels.

use std::collections::BTreeMap;

use expecta_core::dataset::Dataset;
use expecta_core::detector::max_softmax;
use expecta_core::{Annotation, LABELS};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::pipeline::{
    arch_extremes, load_calibration, models, score_summaries, AttributionSummary, OverlapRowOut, RegularizationRow,
    COLLECTED, TEST,
};
use crate::rundir::{read_json, write_json, write_text, RunDir};
use crate::svg::{bar_chart, histogram_grid, Panel, Series, PALETTE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchReport {
    pub arch: String,
    pub layers: usize,
    pub val_accuracy: Vec<f64>,
    pub t_star: Vec<f64>,
    pub auroc_t1: Vec<Option<f64>>,
    pub auroc_t_star: Vec<Option<f64>>,
    pub mean_score_t_star: f64,
    pub variance_t1: f64,
    pub variance_t_star: f64,
    pub mean_overlap_t1: Option<f64>,
    pub mean_overlap_t_star: Option<f64>,
    pub max_additivity_gap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub auroc: Option<f64>,
    pub auroc_t1: Option<f64>,
    pub t_star: f64,
    pub mean_overlap_expected: f64,
    pub mean_overlap_estimated: f64,
    pub deepest_arch: String,
    pub shallowest_arch: String,
    pub config_hash: String,
    pub seed: u64,
    pub familiar: usize,
    pub outliers: usize,
    pub archs: Vec<ArchReport>,
}

fn mean_defined(xs: &[Option<f64>]) -> Option<f64> {
    let v: Vec<f64> = xs.iter().flatten().copied().collect();
    (!v.is_empty() && v.len() == xs.len()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn report(cfg: &RunConfig, run: &RunDir) -> CliResult<Report> {
    run.require("attribute")?;
    let entries = models(run)?;
    let scores = score_summaries(run)?;
    let table: Vec<OverlapRowOut> = read_json(&run.path("attributions/overlap_table.json"))?;
    let attributions: Vec<AttributionSummary> = read_json(&run.path("attributions/summary.json"))?;
    let partition: expecta_core::OutlierPartition = read_json(&run.path("scores/partition.json"))?;
    let (deepest, shallowest) = arch_extremes(cfg)?;

    let overlap = |arch: &str, tag_t1: bool| {
        let rows: Vec<&OverlapRowOut> = table.iter().filter(|r| r.arch.as_deref() == Some(arch)).collect();
        rows.get(if tag_t1 { 0 } else { 1 }).map(|r| r.mean)
    };
    let mut archs = Vec::new();
    let mut names: Vec<String> = Vec::new();
    for e in &entries {
        if !names.contains(&e.arch) {
            names.push(e.arch.clone());
        }
    }
    for name in &names {
        let mine: Vec<_> = scores.iter().filter(|s| &s.arch == name).collect();
        let first = mine.first().ok_or_else(|| CliError::MissingArtifact {
            stage: "score",
            path: run.path("scores/summary.json"),
        })?;
        archs.push(ArchReport {
            arch: name.clone(),
            layers: entries.iter().find(|e| &e.arch == name).map_or(0, |e| e.layers),
            val_accuracy: entries.iter().filter(|e| &e.arch == name).map(|e| e.val_accuracy).collect(),
            t_star: mine.iter().map(|s| s.t_star).collect(),
            auroc_t1: mine.iter().map(|s| s.auroc_t1).collect(),
            auroc_t_star: mine.iter().map(|s| s.auroc_t_star).collect(),
            mean_score_t_star: first.mean_t_star,
            variance_t1: first.variance_t1,
            variance_t_star: first.variance_t_star,
            mean_overlap_t1: overlap(name, true),
            mean_overlap_t_star: overlap(name, false),
            max_additivity_gap: attributions
                .iter()
                .filter(|a| &a.arch == name)
                .map(|a| a.max_additivity_gap)
                .reduce(f64::max),
        });
    }
    let deep = archs
        .iter()
        .find(|a| a.arch == deepest)
        .ok_or_else(|| CliError::MissingArtifact { stage: "train", path: run.path("checkpoints/models.json") })?;
    let report = Report {
        auroc: mean_defined(&deep.auroc_t_star),
        auroc_t1: mean_defined(&deep.auroc_t1),
        t_star: deep.t_star[0],
        mean_overlap_expected: table.iter().find(|r| r.source == "P_T").map_or(f64::NAN, |r| r.mean),
        mean_overlap_estimated: deep.mean_overlap_t_star.unwrap_or(f64::NAN),
        deepest_arch: deepest,
        shallowest_arch: shallowest,
        config_hash: run.hash.clone(),
        seed: cfg.seed,
        familiar: partition.familiar.len(),
        outliers: partition.outliers.len(),
        archs,
    };
    write_json(&run.path("report/report.json"), &report)?;
    std::fs::copy(run.path("attributions/overlap_table.json"), run.path("report/overlap_table.json"))
        .map_err(|e| CliError::io("copying overlap table", e))?;
    std::fs::copy(run.path("attributions/overlap_table.csv"), run.path("report/overlap_table.csv"))
        .map_err(|e| CliError::io("copying overlap table", e))?;
    figures(cfg, run, &report)?;
    let files: Vec<std::path::PathBuf> = [
        "report.json",
        "overlap_table.json",
        "overlap_table.csv",
        "fig2_expectation_vs_collected.svg",
        "fig6a_scores.svg",
        "fig6b_auroc.svg",
        "fig7a_nonnegative.svg",
        "fig7b_marginal.svg",
    ]
    .iter()
    .map(|f| std::path::PathBuf::from("report").join(f))
    .collect();
    run.write_manifest("report", cfg, &files, json!({"deepest_arch": report.deepest_arch}))?;
    Ok(report)
}

fn bin_for(cfg: &RunConfig, label: u8) -> f64 {
    if label == 6 {
        5.0
    } else {
        (cfg.canvas as f64 / 32.0).max(1.0)
    }
}

fn label_values(anns: &[Annotation], class: u8, label: u8) -> Vec<f64> {
    anns.iter().filter(|a| a.class == class).map(|a| a.label(label) as f64).collect()
}

fn shape(class: u8) -> &'static str {
    if class == 0 {
        "circle"
    } else {
        "square"
    }
}

struct AttrRow {
    index: usize,
    labels: [i32; 5],
    phi: [f64; 5],
}

fn read_attributions(run: &RunDir, id: &str, tag: &str) -> CliResult<Vec<AttrRow>> {
    let p = run.path(format!("attributions/{id}/{tag}/attributions.csv"));
    let text = std::fs::read_to_string(&p).map_err(|_| CliError::MissingArtifact { stage: "attribute", path: p.clone() })?;
    let bad = || CliError::Core(expecta_core::Error::format("attributions.csv", "malformed row"));
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 13 {
                return Err(bad());
            }
            let mut labels = [0; 5];
            let mut phi = [0.0; 5];
            for j in 0..5 {
                labels[j] = f[1 + j].parse().map_err(|_| bad())?;
                phi[j] = f[7 + j].parse().map_err(|_| bad())?;
            }
            Ok(AttrRow {
                index: f[0].parse().map_err(|_| bad())?,
                labels,
                phi,
            })
        })
        .collect()
}

fn figures(cfg: &RunConfig, run: &RunDir, report: &Report) -> CliResult<()> {
    let test = Dataset::load(&run.path(TEST))?;
    let anns = test.annotations().unwrap_or_default();
    let collected = Dataset::load(&run.path(COLLECTED))?;
    let auto = collected.auto_labels.unwrap_or_default();
    let truth = Dataset::load_truth(&run.path(COLLECTED))?;
    let classes = [0u8, 1];

    let mut panels = Vec::new();
    for k in classes {
        for j in LABELS {
            let w = bin_for(cfg, j);
            panels.push(Panel {
                title: format!("{} y{j}", shape(k)),
                series: vec![
                    Series::histogram("P_T (expected)", PALETTE[0], &label_values(&anns, k, j), w),
                    Series::histogram("P_S (auto-labels)", PALETTE[1], &label_values(&auto, k, j), w),
                ],
            });
        }
    }
    write_text(
        &run.path("report/fig2_expectation_vs_collected.svg"),
        &histogram_grid("Expected vs collected label distributions", &panels, 5),
    )?;

    let deep_id = format!("{}-r0", report.deepest_arch);
    let (rows, cal) = load_calibration(run, &deep_id)?;
    let partition: expecta_core::OutlierPartition = read_json(&run.path("scores/partition.json"))?;
    let familiar = partition.flags();
    let mut panels = Vec::new();
    for t in [1.0, cal.t_star] {
        let s: Vec<f64> = rows.iter().map(|z| max_softmax(z, t)).collect();
        let pick = |want: bool| -> Vec<f64> { s.iter().zip(&familiar).filter(|(_, &f)| f == want).map(|(v, _)| *v).collect() };
        panels.push(Panel {
            title: format!("{} T={t}", report.deepest_arch),
            series: vec![
                Series::histogram("outlier", PALETTE[1], &pick(false), 0.02),
                Series::histogram("familiar", PALETTE[2], &pick(true), 0.02),
            ],
        });
    }
    write_text(&run.path("report/fig6a_scores.svg"), &histogram_grid("Score distribution vs temperature", &panels, 2))?;

    let groups: Vec<(String, Vec<(String, f64)>)> = report
        .archs
        .iter()
        .map(|a| {
            (
                a.arch.clone(),
                vec![
                    ("T=1".to_string(), mean_defined(&a.auroc_t1).unwrap_or(0.0)),
                    ("T*".to_string(), mean_defined(&a.auroc_t_star).unwrap_or(0.0)),
                ],
            )
        })
        .collect();
    write_text(&run.path("report/fig6b_auroc.svg"), &bar_chart("AUROC per architecture", "AUROC", &groups, 1.0))?;

    let attrs = read_attributions(run, &deep_id, "tstar")?;
    let mut panels = Vec::new();
    for (jj, j) in LABELS.iter().enumerate() {
        let w = bin_for(cfg, *j);
        let all: Vec<f64> = attrs.iter().map(|r| r.labels[jj] as f64).collect();
        let pos: Vec<f64> = attrs.iter().filter(|r| r.phi[jj] >= 0.0).map(|r| r.labels[jj] as f64).collect();
        let mut s_pos = Series::histogram("phi >= 0", PALETTE[2], &pos, w);
        // incidence is counted against all samples, not renormalized
        let scale = pos.len() as f64 / all.len().max(1) as f64;
        s_pos.bars.iter_mut().for_each(|b| b.2 *= scale);
        panels.push(Panel {
            title: format!("y{j}"),
            series: vec![Series::histogram("all attributed", PALETTE[0], &all, w), s_pos],
        });
    }
    write_text(
        &run.path("report/fig7a_nonnegative.svg"),
        &histogram_grid(&format!("Non-negative attributions, {} at T*", report.deepest_arch), &panels, 5),
    )?;

    let by_index: BTreeMap<usize, u8> = attrs.iter().map(|r| (r.index, anns.get(r.index).map_or(0, |a| a.class))).collect();
    let mut panels = Vec::new();
    for k in classes {
        for (jj, j) in LABELS.iter().enumerate() {
            let w = bin_for(cfg, *j);
            let mine: Vec<&AttrRow> = attrs.iter().filter(|r| by_index.get(&r.index) == Some(&k)).collect();
            let pt: Vec<f64> = mine.iter().map(|r| r.labels[jj] as f64).collect();
            let pplus: Vec<f64> = mine.iter().filter(|r| r.phi[jj] >= 0.0).map(|r| r.labels[jj] as f64).collect();
            panels.push(Panel {
                title: format!("{} y{j}", shape(k)),
                series: vec![
                    Series::histogram("P_T", PALETTE[0], &pt, w),
                    Series::histogram("P_S (truth)", PALETTE[1], &label_values(&truth, k, *j), w),
                    Series::histogram("P+_T", PALETTE[2], &pplus, w),
                ],
            });
        }
    }
    write_text(
        &run.path("report/fig7b_marginal.svg"),
        &histogram_grid(&format!("Marginal representation, {} at T*", report.deepest_arch), &panels, 5),
    )
}

pub fn regularization_svg(run: &RunDir, rows: &[RegularizationRow]) -> CliResult<()> {
    let mut groups: Vec<(String, Vec<(String, f64)>)> = Vec::new();
    for r in rows {
        for (metric, v) in [("test_acc", r.test_acc), ("auroc", r.auroc.unwrap_or(0.0))] {
            let name = format!("{} {metric}", r.arch);
            match groups.iter_mut().find(|g| g.0 == name) {
                Some(g) => g.1.push((r.variant.clone(), v)),
                None => groups.push((name, vec![(r.variant.clone(), v)])),
            }
        }
    }
    write_text(
        &run.path("report/regularization.svg"),
        &bar_chart("Effect of regularization", "value", &groups, 1.0),
    )
}
