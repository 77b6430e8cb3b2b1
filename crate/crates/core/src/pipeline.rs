//! End-to-end runs: stages, persisted outputs and the run manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{class_members, TagSeries};
use crate::episode::{build_episode, detect_all, EpisodeConfig};
use crate::error::{Error, Result};
use crate::event::{read_events_file, EventStream};
use crate::growth::{build_design, diagnostics, fit_armax, ArmaxFit, ResidualDiagnostics};
use crate::report::{write_diagnostics, write_km, write_rows, write_table, ModelTable};
use crate::survival::{
    build_counting_rows, build_records, counting_covariate_names, fit_cox, fit_cox_counting, fixed_covariate_names,
    km, median_survival, CoxFit, KMCurve,
};
use crate::taxonomy::{cluster, label_classes, ClassAssignment, ClusterModel, FeatureVector, TrajectoryClass};
use crate::trajectory::{summarize, CurveAnalysis, SplineOptions};
use crate::vibrancy::{env_series, frame_series, EnvFrame, VibrancyFrame};

pub const DEFAULT_TOP_N: usize = 5;
/// Alternative turning-point thresholds written alongside the curve summaries.
pub const SENSITIVITY_DELTAS: [f64; 3] = [0.005, 0.01, 0.02];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Detect,
    Features,
    Curves,
    Classify,
    FitGrowth,
    FitSurvival,
    Km,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Detect,
        Stage::Features,
        Stage::Curves,
        Stage::Classify,
        Stage::FitGrowth,
        Stage::FitSurvival,
        Stage::Km,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Detect => "detect",
            Stage::Features => "features",
            Stage::Curves => "curves",
            Stage::Classify => "classify",
            Stage::FitGrowth => "fit-growth",
            Stage::FitSurvival => "fit-survival",
            Stage::Km => "km",
        }
    }

    pub fn dependency(self) -> Option<Stage> {
        match self {
            Stage::Detect => None,
            Stage::Features => Some(Stage::Detect),
            Stage::Curves => Some(Stage::Features),
            Stage::Classify => Some(Stage::Curves),
            Stage::FitGrowth | Stage::FitSurvival | Stage::Km => Some(Stage::Classify),
        }
    }

    /// This stage and everything it needs.
    pub fn closure(self) -> Vec<Stage> {
        let mut out = vec![self];
        let mut s = self;
        while let Some(d) = s.dependency() {
            out.push(d);
            s = d;
        }
        out.reverse();
        out
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Stages {
    #[serde(default = "yes")]
    pub detect: bool,
    #[serde(default = "yes")]
    pub features: bool,
    #[serde(default = "yes")]
    pub curves: bool,
    #[serde(default = "yes")]
    pub classify: bool,
    #[serde(default = "yes")]
    pub fit_growth: bool,
    #[serde(default = "yes")]
    pub fit_survival: bool,
    #[serde(default = "yes")]
    pub km: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Self::all()
    }
}

impl Stages {
    pub fn all() -> Self {
        Self::only(&Stage::ALL)
    }

    pub fn only(stages: &[Stage]) -> Self {
        let on = |s| stages.contains(&s);
        Self {
            detect: on(Stage::Detect),
            features: on(Stage::Features),
            curves: on(Stage::Curves),
            classify: on(Stage::Classify),
            fit_growth: on(Stage::FitGrowth),
            fit_survival: on(Stage::FitSurvival),
            km: on(Stage::Km),
        }
    }

    pub fn enabled(&self, stage: Stage) -> bool {
        match stage {
            Stage::Detect => self.detect,
            Stage::Features => self.features,
            Stage::Curves => self.curves,
            Stage::Classify => self.classify,
            Stage::FitGrowth => self.fit_growth,
            Stage::FitSurvival => self.fit_survival,
            Stage::Km => self.km,
        }
    }

    pub fn list(&self) -> Vec<Stage> {
        Stage::ALL.into_iter().filter(|s| self.enabled(*s)).collect()
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_top_n() -> usize {
    DEFAULT_TOP_N
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Event files (JSONL or CSV), merged into one stream.
    pub inputs: Vec<PathBuf>,
    pub episodes: Vec<EpisodeConfig>,
    /// Replaces every episode's relevance keywords when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keywords: Option<Vec<String>>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub stages: Stages,
    #[serde(default)]
    pub with_env: bool,
    #[serde(default)]
    pub seed: u64,
    /// Tags in the cumulative overlay.
    #[serde(default = "default_top_n")]
    pub top_n: usize,
}

impl PipelineConfig {
    pub fn new(inputs: Vec<PathBuf>, episodes: Vec<EpisodeConfig>, out: impl Into<PathBuf>) -> Self {
        Self {
            inputs,
            episodes,
            keywords: None,
            out: out.into(),
            stages: Stages::all(),
            with_env: false,
            seed: 0,
            top_n: DEFAULT_TOP_N,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    /// Reads a TOML config; relative paths are taken from the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in &mut cfg.inputs {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.out.is_relative() {
            cfg.out = base.join(&cfg.out);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn episode_configs(&self) -> Vec<EpisodeConfig> {
        let mut eps = self.episodes.clone();
        if let Some(k) = &self.keywords {
            for e in &mut eps {
                e.keywords = k.clone();
            }
        }
        eps
    }

    pub fn validate(&self) -> Result<()> {
        let stages = self.stages.list();
        if stages.is_empty() {
            return Err(Error::config("no stage is enabled"));
        }
        for s in &stages {
            if let Some(d) = s.dependency() {
                if !self.stages.enabled(d) {
                    return Err(Error::config(format!("stage `{s}` needs stage `{d}`, which is disabled")));
                }
            }
        }
        if self.inputs.is_empty() {
            return Err(Error::config("no input files"));
        }
        if self.episodes.is_empty() {
            return Err(Error::config("no episodes configured"));
        }
        let mut ids: Vec<&str> = self.episodes.iter().map(|e| e.episode_id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("episode ids must be unique"));
        }
        for e in self.episode_configs() {
            e.validate()?;
        }
        Ok(())
    }

    /// Digest of the settings that shape results: output location and input paths are left out,
    /// inputs are covered by their content hashes.
    pub fn digest(&self) -> Result<String> {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.inputs = c
            .inputs
            .iter()
            .map(|p| PathBuf::from(p.file_name().unwrap_or_default()))
            .collect();
        c.episodes = c.episode_configs();
        c.keywords = None;
        Ok(sha256_hex(serde_json::to_string(&c)?.as_bytes()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectedRow {
    pub episode_id: String,
    pub tag: String,
    /// Minute of first use, relative to the event start.
    pub t0_minute: i64,
    pub user_count: usize,
    pub pop: bool,
    pub relevant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagFrames {
    pub tag: String,
    pub episode_id: String,
    pub frames: Vec<VibrancyFrame>,
    pub env: Vec<EnvFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode_id: String,
    pub tag: String,
    pub t0: i64,
    pub t_star: i64,
    pub t_e: i64,
    pub growth: f64,
    pub persistence: i64,
    pub final_size: f64,
    pub t_m: f64,
    pub spline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRow {
    pub tag: String,
    pub episode_id: String,
    pub class: TrajectoryClass,
    pub cluster: usize,
    pub growth: f64,
    pub persistence: f64,
    pub final_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmSummaryRow {
    pub class: TrajectoryClass,
    pub subjects: usize,
    pub events: usize,
    pub median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: Stage,
    /// Set when only one class's model failed.
    pub class: Option<TrajectoryClass>,
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

impl StageError {
    fn new(stage: Stage, class: Option<TrajectoryClass>, err: &Error) -> Self {
        Self {
            stage,
            class,
            kind: err.kind().to_string(),
            message: err.to_string(),
            exit_code: err.exit_code(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Completed,
    CompletedWithErrors,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub with_env: bool,
    pub config_sha256: String,
    pub inputs: Vec<InputDigest>,
    pub stages: BTreeMap<Stage, StageStatus>,
    pub outputs: Vec<OutputDigest>,
}

#[derive(Debug, Clone)]
pub struct ClassFit<T> {
    pub class: TrajectoryClass,
    pub fit: T,
}

/// Everything a run produced; empty fields belong to stages that did not run.
#[derive(Debug, Clone, Default)]
pub struct ReportBundle {
    pub detected: Vec<DetectedRow>,
    pub features: Vec<TagFrames>,
    pub analyses: Vec<(String, CurveAnalysis<f64>)>,
    pub series: Vec<TagSeries>,
    pub model: Option<ClusterModel<f64>>,
    pub features_used: Vec<FeatureVector<f64>>,
    pub assignments: Vec<ClassAssignment<f64>>,
    pub growth_fits: Vec<ClassFit<ArmaxFit>>,
    pub growth_env_fits: Vec<ClassFit<ArmaxFit>>,
    pub diagnostics: Vec<(String, ResidualDiagnostics)>,
    pub growth_tables: Vec<(String, ModelTable)>,
    pub cox_fits: Vec<ClassFit<CoxFit>>,
    pub cox_env_fits: Vec<ClassFit<CoxFit>>,
    pub persistence_tables: Vec<(String, ModelTable)>,
    pub km_curves: Vec<(TrajectoryClass, KMCurve)>,
    pub km_summary: Vec<KmSummaryRow>,
    pub errors: Vec<StageError>,
    pub manifest: Option<Manifest>,
}

impl ReportBundle {
    pub fn curve_rows(&self) -> Vec<CurveRow> {
        self.series
            .iter()
            .map(|s| CurveRow {
                episode_id: s.episode_id.clone(),
                tag: s.tag.clone(),
                t0: s.summary.t0,
                t_star: s.summary.t_star,
                t_e: s.summary.t_e,
                growth: s.summary.growth,
                persistence: s.summary.persistence,
                final_size: s.summary.final_size,
                t_m: s.summary.t_m,
                spline: s.summary.spline,
            })
            .collect()
    }

    pub fn assignment_rows(&self) -> Vec<AssignmentRow> {
        self.assignments
            .iter()
            .zip(&self.features_used)
            .map(|(a, f)| AssignmentRow {
                tag: a.tag.clone(),
                episode_id: self
                    .series
                    .iter()
                    .find(|s| s.tag == a.tag)
                    .map(|s| s.episode_id.clone())
                    .unwrap_or_default(),
                class: a.class,
                cluster: a.cluster,
                growth: f.growth,
                persistence: f.persistence,
                final_size: f.final_size,
            })
            .collect()
    }

    /// Exit status of the run: the first recorded error's, else 0.
    pub fn exit_code(&self) -> i32 {
        self.errors.first().map_or(0, |e| e.exit_code)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn load_stream(inputs: &[PathBuf]) -> Result<EventStream> {
    let mut events = Vec::new();
    for p in inputs {
        info!("reading {}", p.display());
        events.extend(read_events_file(p)?.into_events());
    }
    let stream = EventStream::new(events);
    crate::event::validate_stream(&stream)?;
    Ok(stream)
}

fn detect_stage(stream: &EventStream, episodes: &[EpisodeConfig], bundle: &mut ReportBundle) -> Result<()> {
    let mut rows = Vec::new();
    for (cfg, d) in detect_all(stream, episodes)? {
        info!(
            "{}: {} novel, {} pop, {} relevant",
            cfg.episode_id,
            d.novel.len(),
            d.pop.len(),
            d.relevant.len()
        );
        for tag in &d.novel {
            let first = stream
                .window(cfg.event_start, cfg.peak_end())
                .iter()
                .find(|e| e.has_tag(tag))
                .map(|e| cfg.minute_of(e.timestamp))
                .unwrap_or(0);
            rows.push(DetectedRow {
                episode_id: cfg.episode_id.clone(),
                tag: tag.clone(),
                t0_minute: first,
                user_count: d.user_counts.get(tag).copied().unwrap_or(0),
                pop: d.pop.contains(tag),
                relevant: d.relevant.contains(tag),
            });
        }
    }
    bundle.detected = rows;
    Ok(())
}

fn features_stage(stream: &EventStream, episodes: &[EpisodeConfig], bundle: &mut ReportBundle) -> Result<()> {
    let jobs: Vec<(&EpisodeConfig, &str)> = bundle
        .detected
        .iter()
        .filter(|r| r.relevant)
        .filter_map(|r| {
            episodes
                .iter()
                .find(|e| e.episode_id == r.episode_id)
                .map(|e| (e, r.tag.as_str()))
        })
        .collect();
    let out: Result<Vec<TagFrames>> = jobs
        .par_iter()
        .map(|(cfg, tag)| {
            let ep = build_episode(stream, cfg, tag)?;
            Ok(TagFrames {
                tag: tag.to_string(),
                episode_id: cfg.episode_id.clone(),
                frames: frame_series(&ep, cfg),
                env: env_series(&ep, stream, cfg),
            })
        })
        .collect();
    bundle.features = out?;
    Ok(())
}

fn curves_stage(bundle: &mut ReportBundle) -> Result<()> {
    let opts = SplineOptions::default();
    let out: Result<Vec<(String, CurveAnalysis<f64>)>> = bundle
        .features
        .par_iter()
        .map(|f| {
            summarize::<f64>(&f.frames, &opts)
                .map(|a| (f.tag.clone(), a))
                .map_err(|e| Error::data(format!("{}: {e}", f.tag)))
        })
        .collect();
    let analyses = out?;
    bundle.series = bundle
        .features
        .iter()
        .zip(&analyses)
        .map(|(f, (_, a))| TagSeries {
            tag: f.tag.clone(),
            episode_id: f.episode_id.clone(),
            summary: a.summary,
            frames: f.frames.clone(),
            env: f.env.clone(),
        })
        .collect();
    bundle.analyses = analyses;
    Ok(())
}

fn classify_stage(bundle: &mut ReportBundle, seed: u64) -> Result<()> {
    let features: Vec<FeatureVector<f64>> = bundle
        .series
        .iter()
        .map(|s| {
            FeatureVector::new(
                s.tag.clone(),
                s.summary.growth,
                s.summary.persistence as f64,
                s.summary.final_size,
            )
        })
        .collect();
    let model = cluster(&features, 2, seed)?;
    if model.degenerate {
        warn!("all hashtags share one feature vector; every tag is labelled also-ran");
    }
    bundle.assignments = label_classes(&model, &features)?;
    bundle.features_used = features;
    bundle.model = Some(model);
    Ok(())
}

fn class_title(c: TrajectoryClass) -> &'static str {
    c.title()
}

fn growth_stage(bundle: &mut ReportBundle, with_env: bool) {
    let variants: &[bool] = if with_env { &[false, true] } else { &[false] };
    for &env in variants {
        let mut fits = Vec::new();
        for class in TrajectoryClass::ALL {
            let members = class_members(&bundle.series, &bundle.assignments, class);
            let res = if members.is_empty() {
                info!("{class}: empty class, no growth model");
                continue;
            } else {
                build_design(&members, env).and_then(|d| fit_armax(&d))
            };
            match res {
                Ok(fit) => {
                    if !env {
                        match diagnostics(&fit) {
                            Ok(d) => bundle.diagnostics.push((class.as_str().to_string(), d)),
                            Err(e) => warn!("{class}: residual diagnostics unavailable: {e}"),
                        }
                    }
                    fits.push(ClassFit { class, fit });
                }
                Err(e) => {
                    warn!("{class}: growth model failed: {e}");
                    bundle.errors.push(StageError::new(Stage::FitGrowth, Some(class), &e));
                }
            }
        }
        let columns: Vec<(&str, Option<&ArmaxFit>)> = TrajectoryClass::ALL
            .iter()
            .map(|c| (class_title(*c), fits.iter().find(|f| f.class == *c).map(|f| &f.fit)))
            .collect();
        let (stem, title) = if env {
            ("growth_env", "Growth models with environmental covariates")
        } else {
            ("growth", "Growth models")
        };
        bundle
            .growth_tables
            .push((stem.to_string(), ModelTable::growth(title, &columns)));
        if env {
            bundle.growth_env_fits = fits;
        } else {
            bundle.growth_fits = fits;
        }
    }
}

fn survival_stage(bundle: &mut ReportBundle, with_env: bool) {
    let variants: &[bool] = if with_env { &[false, true] } else { &[false] };
    for &env in variants {
        let mut fits = Vec::new();
        for class in TrajectoryClass::ALL {
            let members = class_members(&bundle.series, &bundle.assignments, class);
            if members.is_empty() {
                info!("{class}: empty class, no persistence model");
                continue;
            }
            let res = if env {
                build_counting_rows(&members).and_then(|rows| fit_cox_counting(&counting_covariate_names(), &rows))
            } else {
                build_records(&members).and_then(|r| fit_cox(&fixed_covariate_names(), &r))
            };
            match res {
                Ok(fit) => fits.push(ClassFit { class, fit }),
                Err(e) => {
                    warn!("{class}: persistence model failed: {e}");
                    bundle.errors.push(StageError::new(Stage::FitSurvival, Some(class), &e));
                }
            }
        }
        let columns: Vec<(&str, Option<&CoxFit>)> = TrajectoryClass::ALL
            .iter()
            .map(|c| (class_title(*c), fits.iter().find(|f| f.class == *c).map(|f| &f.fit)))
            .collect();
        let (stem, title) = if env {
            ("persistence_env", "Persistence models with environmental covariates")
        } else {
            ("persistence", "Persistence models")
        };
        bundle
            .persistence_tables
            .push((stem.to_string(), ModelTable::persistence(title, &columns)));
        if env {
            bundle.cox_env_fits = fits;
        } else {
            bundle.cox_fits = fits;
        }
    }
}

fn km_stage(bundle: &mut ReportBundle) -> Result<()> {
    for class in TrajectoryClass::ALL {
        let members = class_members(&bundle.series, &bundle.assignments, class);
        if members.is_empty() {
            continue;
        }
        let records = build_records(&members)?;
        let curve = km(&records)?;
        bundle.km_summary.push(KmSummaryRow {
            class,
            subjects: records.len(),
            events: records.iter().filter(|r| r.event).count(),
            median: median_survival(&curve),
        });
        bundle.km_curves.push((class, curve));
    }
    Ok(())
}

fn persist(bundle: &ReportBundle, stage: Stage, dir: &Path, top_n: usize) -> Result<()> {
    match stage {
        Stage::Detect => write_rows(&dir.join("detected_tags.csv"), &bundle.detected),
        Stage::Features => write_frames(&dir.join("features").join("frames.csv"), &bundle.features),
        Stage::Curves => {
            write_rows(&dir.join("curves.csv"), &bundle.curve_rows())?;
            emit_curve_plots(bundle, dir, top_n)
        }
        Stage::Classify => {
            write_rows(&dir.join("assignments.csv"), &bundle.assignment_rows())?;
            if let Some(m) = &bundle.model {
                write_json(&dir.join("clusters.json"), m)?;
            }
            Ok(())
        }
        Stage::FitGrowth => {
            emit_growth_tables(bundle, dir)?;
            for (class, d) in &bundle.diagnostics {
                write_diagnostics(&dir.join("diagnostics").join(format!("growth_{class}.csv")), d)?;
            }
            Ok(())
        }
        Stage::FitSurvival => emit_persistence_tables(bundle, dir),
        Stage::Km => emit_km(bundle, dir),
    }
}

fn write_frames(path: &Path, features: &[TagFrames]) -> Result<()> {
    let header = [
        "episode_id",
        "tag",
        "minute",
        "y",
        "rt",
        "rp",
        "src_alpha",
        "follow_alpha",
        "rt_env",
        "rp_env",
        "src_env_alpha",
    ];
    let mut rows = Vec::new();
    for f in features {
        for (v, e) in f.frames.iter().zip(&f.env) {
            rows.push(vec![
                f.episode_id.clone(),
                f.tag.clone(),
                v.minute.to_string(),
                v.y.to_string(),
                v.rt.to_string(),
                v.rp.to_string(),
                v.src_alpha.to_string(),
                v.follow_alpha.to_string(),
                e.rt_env.to_string(),
                e.rp_env.to_string(),
                e.src_env_alpha.to_string(),
            ]);
        }
    }
    write_table(path, &header, &rows)
}

fn emit_growth_tables(bundle: &ReportBundle, dir: &Path) -> Result<()> {
    let tables = dir.join("tables");
    for (stem, t) in &bundle.growth_tables {
        t.write(&tables, stem)?;
    }
    Ok(())
}

fn emit_persistence_tables(bundle: &ReportBundle, dir: &Path) -> Result<()> {
    let tables = dir.join("tables");
    for (stem, t) in &bundle.persistence_tables {
        t.write(&tables, stem)?;
    }
    Ok(())
}

fn emit_km(bundle: &ReportBundle, dir: &Path) -> Result<()> {
    let km_dir = dir.join("km");
    for (class, curve) in &bundle.km_curves {
        write_km(&km_dir.join(format!("{}.csv", class.as_str())), curve)?;
    }
    write_rows(&km_dir.join("summary.csv"), &bundle.km_summary)
}

fn emit_curve_plots(bundle: &ReportBundle, dir: &Path, top_n: usize) -> Result<()> {
    let plots = dir.join("plots");
    for (tag, a) in &bundle.analyses {
        let rows: Vec<Vec<String>> = a
            .plot_rows()
            .into_iter()
            .map(|(m, obs, fit, tan)| vec![m.to_string(), obs.to_string(), fit.to_string(), tan.to_string()])
            .collect();
        write_table(
            &plots.join("curves").join(format!("{tag}.csv")),
            &["minute", "observed", "fitted", "tangent"],
            &rows,
        )?;
    }
    let mut sens = Vec::new();
    for (tag, a) in &bundle.analyses {
        for (d, t) in a.turning_sensitivity(&SENSITIVITY_DELTAS) {
            sens.push(vec![tag.clone(), d.to_string(), t.to_string()]);
        }
    }
    write_table(&dir.join("turning_sensitivity.csv"), &["tag", "delta", "t_star"], &sens)?;
    let rows: Vec<Vec<String>> = top_tags(bundle, top_n)
        .into_iter()
        .flat_map(|(tag, a)| {
            (0..a.curve.len())
                .map(|i| vec![tag.clone(), a.curve.minute(i).to_string(), a.curve.counts[i].to_string()])
                .collect::<Vec<_>>()
        })
        .collect();
    write_table(&plots.join("overlay_top.csv"), &["tag", "minute", "cumulative"], &rows)
}

/// The `n` tags with the largest final size, ties broken by tag name.
pub fn top_tags(bundle: &ReportBundle, n: usize) -> Vec<(&String, &CurveAnalysis<f64>)> {
    let mut v: Vec<(&String, &CurveAnalysis<f64>)> = bundle.analyses.iter().map(|(t, a)| (t, a)).collect();
    v.sort_by(|a, b| {
        b.1.summary
            .final_size
            .total_cmp(&a.1.summary.final_size)
            .then_with(|| a.0.cmp(b.0))
    });
    v.truncate(n);
    v
}

/// Writes every model table present in the bundle as text, CSV and JSON.
pub fn emit_tables(bundle: &ReportBundle, dir: &Path) -> Result<()> {
    emit_growth_tables(bundle, dir)?;
    emit_persistence_tables(bundle, dir)
}

/// Writes per-tag curve CSVs, the top-`n` overlay and the KM curves.
pub fn emit_plotdata(bundle: &ReportBundle, dir: &Path, top_n: usize) -> Result<()> {
    emit_curve_plots(bundle, dir, top_n)?;
    emit_km(bundle, dir)
}

fn file_digests(dir: &Path) -> Result<Vec<OutputDigest>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<OutputDigest>) -> Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                let rel = path.strip_prefix(root).unwrap_or(&path);
                let name = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
                if name == "manifest.json" {
                    continue;
                }
                out.push(OutputDigest {
                    path: name,
                    sha256: sha256_hex(&fs::read(&path)?),
                });
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out)?;
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Runs the enabled stages in order, persisting each stage's files before the next starts.
///
/// Configuration and input problems are returned as errors. A failing stage stops the stages
/// that depend on it; its error lands in `errors.json` and in the returned bundle.
pub fn run_pipeline(config: &PipelineConfig) -> Result<ReportBundle> {
    config.validate()?;
    let dir = config.out.as_path();
    fs::create_dir_all(dir).map_err(|e| Error::config(format!("output directory {}: {e}", dir.display())))?;
    let mut inputs = Vec::new();
    for p in &config.inputs {
        let bytes = fs::read(p).map_err(|e| Error::config(format!("input {}: {e}", p.display())))?;
        inputs.push(InputDigest {
            file: p.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
    }
    let episodes = config.episode_configs();
    let stream = load_stream(&config.inputs)?;
    let mut bundle = ReportBundle::default();
    let mut status: BTreeMap<Stage, StageStatus> = BTreeMap::new();
    for stage in config.stages.list() {
        let blocked = stage
            .dependency()
            .is_some_and(|d| !matches!(status.get(&d), Some(StageStatus::Completed | StageStatus::CompletedWithErrors)));
        if blocked {
            status.insert(stage, StageStatus::Skipped);
            continue;
        }
        info!("stage {stage}");
        let before = bundle.errors.len();
        let res = match stage {
            Stage::Detect => detect_stage(&stream, &episodes, &mut bundle),
            Stage::Features => features_stage(&stream, &episodes, &mut bundle),
            Stage::Curves => curves_stage(&mut bundle),
            Stage::Classify => classify_stage(&mut bundle, config.seed),
            Stage::FitGrowth => {
                growth_stage(&mut bundle, config.with_env);
                Ok(())
            }
            Stage::FitSurvival => {
                survival_stage(&mut bundle, config.with_env);
                Ok(())
            }
            Stage::Km => km_stage(&mut bundle),
        };
        let res = res.and_then(|_| persist(&bundle, stage, dir, config.top_n));
        match res {
            Ok(()) if bundle.errors.len() > before => {
                status.insert(stage, StageStatus::CompletedWithErrors);
            }
            Ok(()) => {
                status.insert(stage, StageStatus::Completed);
            }
            Err(e) => {
                warn!("stage {stage} failed: {e}");
                bundle.errors.push(StageError::new(stage, None, &e));
                status.insert(stage, StageStatus::Failed);
            }
        }
    }
    if !bundle.errors.is_empty() {
        write_json(&dir.join("errors.json"), &bundle.errors)?;
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        with_env: config.with_env,
        config_sha256: config.digest()?,
        inputs,
        stages: status,
        outputs: file_digests(dir)?,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    bundle.manifest = Some(manifest);
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closure_orders_dependencies() {
        assert_eq!(
            Stage::Km.closure(),
            vec![Stage::Detect, Stage::Features, Stage::Curves, Stage::Classify, Stage::Km]
        );
    }

    #[test]
    fn missing_dependency_is_config_error() {
        let mut cfg = PipelineConfig::new(vec!["x.jsonl".into()], vec![EpisodeConfig::new("e", 0)], "out");
        cfg.stages.classify = false;
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.exit_code(), 1);
        cfg.stages = Stages::only(&[]);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_defaults() {
        let cfg = PipelineConfig::from_toml(
            r#"
            inputs = ["events.jsonl"]
            seed = 7
            [stages]
            fit-survival = false
            km = false
            [[episodes]]
            episode_id = "d1"
            event_start = 1349312400
            "#,
        )
        .unwrap();
        assert_eq!(cfg.top_n, 5);
        assert!(cfg.stages.fit_growth && !cfg.stages.fit_survival);
        assert_eq!(cfg.episodes[0].min_users, 100);
        cfg.validate().unwrap();
        assert!(PipelineConfig::from_toml("inputs = []\nbogus = 1\nepisodes = []").is_err());
    }

    #[test]
    fn digest_ignores_output_location() {
        let a = PipelineConfig::new(vec!["/a/ev.jsonl".into()], vec![EpisodeConfig::new("e", 0)], "o1");
        let mut b = a.clone();
        b.out = "elsewhere".into();
        b.inputs = vec!["/b/ev.jsonl".into()];
        assert_eq!(a.digest().unwrap(), b.digest().unwrap());
        b.seed = 1;
        assert_ne!(a.digest().unwrap(), b.digest().unwrap());
    }
}
