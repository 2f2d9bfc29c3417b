//! The audit stages. Each reads upstream artifacts from the run directory,
//! writes its own, and records a manifest.

use std::fmt::Write as _;
use std::path::PathBuf;

use expecta_core::annot::Canvas;
use expecta_core::attribution::{select_stratified, FEATURES};
use expecta_core::dataset::Dataset;
use expecta_core::detector::{calibrate_from_logits, logits as model_logits, max_softmax, mean_variance};
use expecta_core::nn::{evaluate, load_model, save_model, train_with_validation, ArchConfig, TrainConfig};
use expecta_core::render::contact_sheet_svg;
use expecta_core::rng::{derive_seed, Stream};
use expecta_core::{
    attribute_testset, audit_overlap, auroc, gen_collected, gen_test, marginal_representation, partition_outliers,
    Annotation, AttributionRecord, CalibrationResult, LabelDistribution, MaskingPolicy, Model, OutlierPartition,
    OverlapReport, Simulator, LABELS,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{Profile, RunConfig};
use crate::error::{CliError, CliResult};
use crate::rundir::{read_json, write_json, write_text, RunDir};

pub const COLLECTED: &str = "datasets/collected";
pub const VALIDATION: &str = "datasets/validation";
pub const TEST: &str = "datasets/test";

/// Temperatures explained and tabulated per architecture.
pub const TEMPERATURE_TAGS: [&str; 2] = ["t1", "tstar"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub id: String,
    pub arch: String,
    pub repeat: usize,
    pub layers: usize,
    pub val_accuracy: f64,
    pub best_epoch: usize,
}

fn canvas(cfg: &RunConfig) -> Canvas {
    Canvas::square(cfg.canvas)
}

pub fn arch_for(cfg: &RunConfig, name: &str) -> CliResult<ArchConfig> {
    Ok(ArchConfig::preset_with_widths(name, canvas(cfg), cfg.widths)?)
}

fn model_id(arch: &str, repeat: usize) -> String {
    format!("{}-r{repeat}", arch.to_ascii_uppercase())
}

fn rel(p: &str) -> PathBuf {
    PathBuf::from(p)
}

fn load_dataset(run: &RunDir, rel_dir: &str) -> CliResult<Dataset> {
    let dir = run.path(rel_dir);
    if !dir.join("meta.json").exists() {
        return Err(CliError::MissingArtifact { stage: "gen", path: dir });
    }
    Ok(Dataset::load(&dir)?)
}

fn test_annotations(run: &RunDir) -> CliResult<Vec<Annotation>> {
    let test = load_dataset(run, TEST)?;
    test.annotations()
        .ok_or_else(|| CliError::Config("test set does not carry full annotations".into()))
}

/// Deepest and shallowest configured architectures, by layer count.
pub fn arch_extremes(cfg: &RunConfig) -> CliResult<(String, String)> {
    let mut by_depth = Vec::new();
    for a in &cfg.archs {
        by_depth.push((arch_for(cfg, a)?.layer_count(), a.to_ascii_uppercase()));
    }
    let deepest = by_depth.iter().max_by_key(|(l, _)| *l).expect("nonempty archs").1.clone();
    let shallowest = by_depth.iter().min_by_key(|(l, _)| *l).expect("nonempty archs").1.clone();
    Ok((deepest, shallowest))
}

pub fn gen(cfg: &RunConfig, run: &RunDir) -> CliResult<()> {
    let c = canvas(cfg);
    log::info!("generating {} collected, {} validation, {} test samples", cfg.n_collected, cfg.n_validation, cfg.n_test);
    let mut collected = gen_collected(&cfg.bias, c, cfg.n_collected, derive_seed(cfg.seed, Stream::Collected, 0))?;
    collected.compute_auto_labels()?;
    collected.save(&run.path(COLLECTED))?;
    let validation = gen_collected(&cfg.bias, c, cfg.n_validation, derive_seed(cfg.seed, Stream::Collected, 1))?;
    validation.save(&run.path(VALIDATION))?;
    let test = gen_test(&cfg.expectation, cfg.n_test, derive_seed(cfg.seed, Stream::Expected, 0))?;
    test.save(&run.path(TEST))?;

    let sheet = |ds: &Dataset| {
        let imgs: Vec<_> = ds.images.iter().take(32).collect();
        contact_sheet_svg(&imgs, 8, 2.0)
    };
    write_text(&run.path("datasets/collected_sheet.svg"), &sheet(&collected))?;
    write_text(&run.path("datasets/test_sheet.svg"), &sheet(&test))?;

    let files: Vec<PathBuf> = [COLLECTED, VALIDATION, TEST]
        .iter()
        .flat_map(|d| ["meta.json", "labels.csv"].map(|f| PathBuf::from(d).join(f)))
        .chain([rel("datasets/collected/autolabels.csv"), rel("datasets/collected/truth.csv")])
        .collect();
    run.write_manifest(
        "gen",
        cfg,
        &files,
        json!({"n_collected": collected.len(), "n_validation": validation.len(), "n_test": test.len()}),
    )
}

fn train_config(cfg: &RunConfig, repeat: usize) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(cfg.seed, Stream::Init, repeat as u64),
        ..cfg.train.clone()
    }
}

pub fn train(cfg: &RunConfig, run: &RunDir) -> CliResult<Vec<ModelEntry>> {
    run.require("gen")?;
    let collected = load_dataset(run, COLLECTED)?;
    let validation = load_dataset(run, VALIDATION)?;
    let mut entries = Vec::new();
    let mut files = Vec::new();
    for name in &cfg.archs {
        let arch = arch_for(cfg, name)?;
        for r in 0..cfg.repeats {
            let id = model_id(name, r);
            log::info!("training {id}");
            let (model, history) = train_with_validation(&collected, &validation, &arch, &train_config(cfg, r))?;
            let dir = format!("checkpoints/{id}");
            save_model(&model, &run.path(&dir))?;
            write_text(&run.path(format!("{dir}/history.csv")), &history.to_csv())?;
            files.push(PathBuf::from(format!("{dir}/weights.f32")));
            entries.push(ModelEntry {
                id,
                arch: arch.name.clone(),
                repeat: r,
                layers: arch.layer_count(),
                val_accuracy: history.best_accuracy(),
                best_epoch: history.best_epoch,
            });
        }
    }
    write_json(&run.path("checkpoints/models.json"), &entries)?;
    files.push(rel("checkpoints/models.json"));
    run.write_manifest("train", cfg, &files, json!({"models": entries.len()}))?;
    Ok(entries)
}

pub fn models(run: &RunDir) -> CliResult<Vec<ModelEntry>> {
    run.require("train")?;
    read_json(&run.path("checkpoints/models.json"))
}

fn load_checkpoint(run: &RunDir, id: &str) -> CliResult<Model> {
    let dir = run.path(format!("checkpoints/{id}"));
    if !dir.join("model.json").exists() {
        return Err(CliError::MissingArtifact { stage: "train", path: dir });
    }
    Ok(load_model(&dir)?)
}

fn logits_csv(rows: &[Vec<f64>]) -> String {
    let mut out = String::from("index,logit0,logit1\n");
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(out, "{i},{},{}", r[0], r[1]);
    }
    out
}

fn parse_logits(text: &str) -> CliResult<Vec<Vec<f64>>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let p = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| CliError::Core(expecta_core::Error::format("logits.csv", format!("bad value {s:?}"))))
            };
            if f.len() != 3 {
                return Err(CliError::Core(expecta_core::Error::format("logits.csv", "expected 3 columns")));
            }
            Ok(vec![p(f[1])?, p(f[2])?])
        })
        .collect()
}

pub fn calibrate(cfg: &RunConfig, run: &RunDir) -> CliResult<()> {
    let entries = models(run)?;
    let anns = test_annotations(run)?;
    let sim = Simulator::clean(canvas(cfg));
    let grid = cfg.temperature_grid.values();
    let mut files = Vec::new();
    let mut summary = Vec::new();
    for e in &entries {
        let model = load_checkpoint(run, &e.id)?;
        let rows = model_logits(&model, &anns, &sim)?;
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CliError::Numerical(expecta_core::Error::Dimension(format!("{} produced non-finite logits", e.id))));
        }
        let cal = calibrate_from_logits(&rows, cfg.target_score, &grid)?;
        let dir = format!("scores/{}", e.id);
        write_text(&run.path(format!("{dir}/logits.csv")), &logits_csv(&rows))?;
        write_json(&run.path(format!("{dir}/calibration.json")), &cal)?;
        files.push(PathBuf::from(format!("{dir}/logits.csv")));
        files.push(PathBuf::from(format!("{dir}/calibration.json")));
        summary.push(json!({"id": e.id, "t_star": cal.t_star, "mean": cal.best().mean}));
    }
    run.write_manifest("calibrate", cfg, &files, json!(summary))
}

pub fn load_calibration(run: &RunDir, id: &str) -> CliResult<(Vec<Vec<f64>>, CalibrationResult)> {
    run.require("calibrate")?;
    let dir = run.path(format!("scores/{id}"));
    let text = std::fs::read_to_string(dir.join("logits.csv"))
        .map_err(|_| CliError::MissingArtifact { stage: "calibrate", path: dir.join("logits.csv") })?;
    Ok((parse_logits(&text)?, read_json(&dir.join("calibration.json"))?))
}

/// Familiar/outlier partition of the test set against the auto-labeled
/// collected set.
pub fn partition(cfg: &RunConfig, run: &RunDir, anns: &[Annotation]) -> CliResult<OutlierPartition> {
    let collected = load_dataset(run, COLLECTED)?;
    let auto = collected
        .auto_labels
        .ok_or_else(|| CliError::MissingArtifact { stage: "gen", path: run.path(COLLECTED).join("autolabels.csv") })?;
    let support = LabelDistribution::from_annotations(&auto, cfg.bin_width, 1);
    Ok(partition_outliers(anns, &support)?)
}

fn scores_csv(anns: &[Annotation], rows: &[Vec<f64>], t: f64, familiar: &[bool]) -> String {
    let mut out = String::from("index,y1,y2,y3,y4,y5,y6,logit0,logit1,T,score,familiar\n");
    for (i, (a, z)) in anns.iter().zip(rows).enumerate() {
        let l = a.labels();
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{},{t},{},{}",
            l[0],
            l[1],
            l[2],
            l[3],
            l[4],
            l[5],
            z[0],
            z[1],
            max_softmax(z, t),
            familiar[i] as u8
        );
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub id: String,
    pub arch: String,
    pub repeat: usize,
    pub t_star: f64,
    pub auroc_t1: Option<f64>,
    pub auroc_t_star: Option<f64>,
    pub mean_t1: f64,
    pub variance_t1: f64,
    pub mean_t_star: f64,
    pub variance_t_star: f64,
}

pub fn score(cfg: &RunConfig, run: &RunDir) -> CliResult<Vec<ScoreSummary>> {
    let entries = models(run)?;
    let anns = test_annotations(run)?;
    let part = partition(cfg, run, &anns)?;
    let familiar = part.flags();
    write_json(&run.path("scores/partition.json"), &part)?;
    let mut files = vec![rel("scores/partition.json")];
    let both_present = !part.familiar.is_empty() && !part.outliers.is_empty();
    let mut out = Vec::new();
    for e in &entries {
        let (rows, cal) = load_calibration(run, &e.id)?;
        if rows.len() != anns.len() {
            return Err(CliError::StaleArtifact {
                stage: "calibrate",
                path: run.path(format!("scores/{}/logits.csv", e.id)),
                found: format!("{} rows", rows.len()),
                expected: format!("{} rows", anns.len()),
            });
        }
        let mut stats = Vec::new();
        for (tag, t) in [("scores_t1.csv", 1.0), ("scores.csv", cal.t_star)] {
            let p = format!("scores/{}/{tag}", e.id);
            write_text(&run.path(&p), &scores_csv(&anns, &rows, t, &familiar))?;
            files.push(PathBuf::from(p));
            let s: Vec<f64> = rows.iter().map(|z| max_softmax(z, t)).collect();
            let (m, v) = mean_variance(&s);
            let a = if both_present { Some(auroc(&s, &familiar)?) } else { None };
            stats.push((m, v, a));
        }
        out.push(ScoreSummary {
            id: e.id.clone(),
            arch: e.arch.clone(),
            repeat: e.repeat,
            t_star: cal.t_star,
            auroc_t1: stats[0].2,
            auroc_t_star: stats[1].2,
            mean_t1: stats[0].0,
            variance_t1: stats[0].1,
            mean_t_star: stats[1].0,
            variance_t_star: stats[1].1,
        });
    }
    if !both_present {
        log::warn!("test set has no familiar or no outlier samples; AUROC is undefined");
    }
    write_json(&run.path("scores/summary.json"), &out)?;
    files.push(rel("scores/summary.json"));
    run.write_manifest(
        "score",
        cfg,
        &files,
        json!({"familiar": part.familiar.len(), "outliers": part.outliers.len()}),
    )?;
    Ok(out)
}

pub fn score_summaries(run: &RunDir) -> CliResult<Vec<ScoreSummary>> {
    run.require("score")?;
    read_json(&run.path("scores/summary.json"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlapRowOut {
    pub source: String,
    pub arch: Option<String>,
    pub temperature: Option<f64>,
    pub classes: Vec<u8>,
    /// Per class, V for labels 2..6.
    pub values: Vec<[f64; 5]>,
    pub mean: f64,
}

impl OverlapRowOut {
    fn new(source: &str, arch: Option<&str>, t: Option<f64>, r: &OverlapReport) -> Self {
        OverlapRowOut {
            source: source.into(),
            arch: arch.map(str::to_string),
            temperature: t,
            classes: r.rows.iter().map(|x| x.class).collect(),
            values: r.rows.iter().map(|x| x.values).collect(),
            mean: r.mean,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionSummary {
    pub arch: String,
    pub id: String,
    pub tag: String,
    pub temperature: f64,
    pub records: usize,
    /// Largest `|S_i - phi0 - sum phi|` against the score stage's scores.
    pub max_additivity_gap: f64,
    pub empty_labels: Vec<(u8, u8)>,
    /// Fraction of non-negative attributions per label 2..6.
    pub nonnegative_fraction: [f64; FEATURES],
    pub mean_phi_sum_familiar: Option<f64>,
    pub mean_phi_sum_outlier: Option<f64>,
}

fn attributions_csv(records: &[AttributionRecord], subset: &[usize], anns: &[Annotation]) -> String {
    let mut out = String::from("index,y2,y3,y4,y5,y6,phi0,phi2,phi3,phi4,phi5,phi6,score\n");
    for r in records {
        let i = subset[r.index];
        let a = anns[i];
        let _ = write!(out, "{i}");
        for j in LABELS {
            let _ = write!(out, ",{}", a.label(j));
        }
        let _ = write!(out, ",{}", r.base);
        for p in r.phi {
            let _ = write!(out, ",{p}");
        }
        let _ = writeln!(out, ",{}", r.score);
    }
    out
}

fn overlap_csv(rows: &[OverlapRowOut]) -> String {
    let mut out = String::from("source,arch,T,class,V2,V3,V4,V5,V6,mean\n");
    for r in rows {
        for (k, v) in r.classes.iter().zip(&r.values) {
            let _ = writeln!(
                out,
                "{},{},{},{k},{},{},{},{},{},{}",
                r.source,
                r.arch.as_deref().unwrap_or(""),
                r.temperature.map_or(String::new(), |t| t.to_string()),
                v[0],
                v[1],
                v[2],
                v[3],
                v[4],
                r.mean
            );
        }
    }
    out
}

pub fn attribute(cfg: &RunConfig, run: &RunDir) -> CliResult<(Vec<OverlapRowOut>, Vec<AttributionSummary>)> {
    let entries = models(run)?;
    run.require("score")?;
    let anns = test_annotations(run)?;
    let part = partition(cfg, run, &anns)?;
    let familiar = part.flags();
    let subset_idx = select_stratified(&anns, cfg.n_attr, derive_seed(cfg.seed, Stream::Split, 2));
    let subset: Vec<Annotation> = subset_idx.iter().map(|&i| anns[i]).collect();
    let mut classes: Vec<u8> = subset.iter().map(|a| a.class).collect();
    classes.sort_unstable();
    classes.dedup();

    let truth = Dataset::load_truth(&run.path(COLLECTED))
        .map_err(|_| CliError::MissingArtifact { stage: "gen", path: run.path(COLLECTED).join("truth.csv") })?;
    let p_s = LabelDistribution::from_annotations(&truth, cfg.bin_width, 1);
    let p_t = LabelDistribution::from_annotations(&subset, cfg.bin_width, 1);
    let mut table = vec![OverlapRowOut::new("P_T", None, None, &audit_overlap(&p_t, &p_s, &classes)?)];
    let policy = MaskingPolicy {
        background: cfg.background,
        source: cfg.expectation.clone(),
    };
    let mut files = Vec::new();
    let mut out = Vec::new();
    for e in entries.iter().filter(|e| e.repeat == 0) {
        let model = load_checkpoint(run, &e.id)?;
        let (rows, cal) = load_calibration(run, &e.id)?;
        for (tag, t) in TEMPERATURE_TAGS.iter().zip([1.0, cal.t_star]) {
            log::info!("attributing {} at T={t}", e.id);
            let records = attribute_testset(&model, t, &subset, &policy, cfg.seed)?;
            let dir = format!("attributions/{}/{tag}", e.id);
            write_text(&run.path(format!("{dir}/attributions.csv")), &attributions_csv(&records, &subset_idx, &anns))?;
            let rep = marginal_representation(&records, &subset, &classes, cfg.bin_width)?;
            write_text(&run.path(format!("{dir}/representation.csv")), &rep.distribution.to_csv())?;
            files.push(PathBuf::from(format!("{dir}/attributions.csv")));
            files.push(PathBuf::from(format!("{dir}/representation.csv")));
            let report = audit_overlap(&rep.distribution, &p_s, &classes)?;
            table.push(OverlapRowOut::new("P+_T", Some(&e.arch), Some(t), &report));

            let gap = records
                .iter()
                .map(|r| {
                    let s = max_softmax(&rows[subset_idx[r.index]], t);
                    (s - r.base - r.phi.iter().sum::<f64>()).abs()
                })
                .fold(0.0, f64::max);
            let mut nonneg = [0.0; FEATURES];
            for r in &records {
                for (n, p) in nonneg.iter_mut().zip(r.phi) {
                    *n += (p >= 0.0) as u8 as f64 / records.len() as f64;
                }
            }
            let mean_sum = |want: bool| {
                let v: Vec<f64> = records
                    .iter()
                    .filter(|r| familiar[subset_idx[r.index]] == want)
                    .map(|r| r.phi.iter().sum::<f64>())
                    .collect();
                (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
            };
            out.push(AttributionSummary {
                arch: e.arch.clone(),
                id: e.id.clone(),
                tag: tag.to_string(),
                temperature: t,
                records: records.len(),
                max_additivity_gap: gap,
                empty_labels: rep.empty,
                nonnegative_fraction: nonneg,
                mean_phi_sum_familiar: mean_sum(true),
                mean_phi_sum_outlier: mean_sum(false),
            });
        }
    }
    write_json(&run.path("attributions/subset.json"), &subset_idx)?;
    write_json(&run.path("attributions/overlap_table.json"), &table)?;
    write_text(&run.path("attributions/overlap_table.csv"), &overlap_csv(&table))?;
    write_json(&run.path("attributions/summary.json"), &out)?;
    files.extend(
        ["subset.json", "overlap_table.json", "overlap_table.csv", "summary.json"].map(|f| PathBuf::from("attributions").join(f)),
    );
    run.write_manifest("attribute", cfg, &files, json!({"subset": subset_idx.len(), "rows": table.len()}))?;
    Ok((table, out))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizationRow {
    pub arch: String,
    pub variant: String,
    pub test_acc: f64,
    pub auroc: Option<f64>,
    pub t_star: f64,
}

pub fn check_regularization_profile(cfg: &RunConfig) -> CliResult<()> {
    if cfg.profile == Profile::Ci {
        return Err(CliError::Config("experiment-regularization needs the desk or paper profile".into()));
    }
    Ok(())
}

pub fn experiment_regularization(cfg: &RunConfig, run: &RunDir) -> CliResult<Vec<RegularizationRow>> {
    check_regularization_profile(cfg)?;
    run.require("gen")?;
    let collected = load_dataset(run, COLLECTED)?;
    let validation = load_dataset(run, VALIDATION)?;
    let test = load_dataset(run, TEST)?;
    let anns = test_annotations(run)?;
    let part = partition(cfg, run, &anns)?;
    let familiar = part.flags();
    let sim = Simulator::clean(canvas(cfg));
    let grid = cfg.temperature_grid.values();
    let mut rows = Vec::new();
    for name in &cfg.archs {
        let base = arch_for(cfg, name)?;
        let variants = [
            ("vanilla", base.clone()),
            ("batchnorm", base.clone().with_batch_norm(true)),
            ("dropout", base.clone().with_dropout(cfg.regularization.dropout)),
        ];
        for (variant, arch) in variants {
            log::info!("regularization: {} {variant}", arch.name);
            let (model, _) = train_with_validation(&collected, &validation, &arch, &train_config(cfg, 0))?;
            let test_acc = evaluate(&model, &test)?;
            let z = model_logits(&model, &anns, &sim)?;
            let cal = calibrate_from_logits(&z, cfg.target_score, &grid)?;
            let s: Vec<f64> = z.iter().map(|r| max_softmax(r, cal.t_star)).collect();
            let a = if part.familiar.is_empty() || part.outliers.is_empty() {
                None
            } else {
                Some(auroc(&s, &familiar)?)
            };
            rows.push(RegularizationRow {
                arch: arch.name.clone(),
                variant: variant.into(),
                test_acc,
                auroc: a,
                t_star: cal.t_star,
            });
        }
    }
    let mut csv = String::from("arch,variant,test_acc,auroc,t_star\n");
    for r in &rows {
        let a = r.auroc.map_or(String::new(), |a| a.to_string());
        let _ = writeln!(csv, "{},{},{},{a},{}", r.arch, r.variant, r.test_acc, r.t_star);
    }
    write_text(&run.path("report/regularization.csv"), &csv)?;
    crate::report::regularization_svg(run, &rows)?;
    run.write_manifest(
        "experiment-regularization",
        cfg,
        &[rel("report/regularization.csv"), rel("report/regularization.svg")],
        json!({"rows": rows.len()}),
    )?;
    Ok(rows)
}
