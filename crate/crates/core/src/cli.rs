//! `taskdesc` command line: learn, generalize and simulate, file to file.
//!
//! Exit codes: 0 ok, 1 I/O failure, 2 parse or invalid input, 3 not enough
//! data, 4 non-executable model, 5 geometry failure. Every failure prints
//! one `error: stage=... code=... kind=... path=... msg=...` line on
//! standard error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::{Isometry3, Point2, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::artmodel::{FitError, ModelClass, ModelParams, Sample, Trajectory3};
use crate::camera::{deproject, project, Intrinsics, PixelDepth};
use crate::descriptor::{learn, DescriptorError, TaskDescriptor};
use crate::generalize::{generalize, GeneralizationRequest, GeneralizeErrorKind, Waypoint};
use crate::mlesac::MlesacConfig;
use crate::refframe::{BBox, EdgeClass, RefFrameRule, Segment, Side};
use crate::scene::SceneAnnotation;
use crate::schema::{parse_versioned, to_document, SchemaError};
use crate::selection::SelectionReport;
use crate::synth::{gen_demo, gen_scene, BookLayout, SynthSpec};

pub const RECORDING_VERSION: u64 = 1;
pub const REPORT_VERSION: u64 = 1;
pub const TRUTH_VERSION: u64 = 1;
pub const SPEC_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Io = 1,
    Parse = 2,
    Data = 3,
    Model = 4,
    Geometry = 5,
}

impl ExitCode {
    fn kind(self) -> &'static str {
        match self {
            ExitCode::Ok => "ok",
            ExitCode::Io => "io",
            ExitCode::Parse => "parse",
            ExitCode::Data => "data",
            ExitCode::Model => "model",
            ExitCode::Geometry => "geometry",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: ExitCode,
    pub stage: String,
    pub path: Option<String>,
    pub msg: String,
}

impl CliError {
    fn new(code: ExitCode, stage: &str, msg: impl std::fmt::Display) -> Self {
        Self {
            code,
            stage: stage.into(),
            path: None,
            msg: msg.to_string(),
        }
    }

    fn schema(stage: &str, e: SchemaError) -> Self {
        Self {
            code: ExitCode::Parse,
            stage: stage.into(),
            path: e.path().map(String::from),
            msg: e.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "error: stage={} code={} kind={} path={} msg={:?}",
            self.stage,
            self.code as i32,
            self.code.kind(),
            self.path.as_deref().unwrap_or("-"),
            self.msg
        )
    }
}

// ---------------------------------------------------------------- formats

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingHeader {
    pub intrinsics: Intrinsics,
    pub rate_hz: f64,
    pub object_label: String,
    pub recording_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Frame {
    pub t: f64,
    pub grasp_px: [f64; 2],
    /// Metric z-depth; 0 when the sensor had no reading.
    pub grasp_depth: f64,
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grasp_orientation: Option<[f64; 4]>,
}

/// A tracked demonstration: per-frame grasp pixel, depth and object box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recording {
    pub version: u64,
    pub header: RecordingHeader,
    pub frames: Vec<Frame>,
    /// Camera-frame grasp positions; when present, deprojection is skipped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory3: Option<Trajectory3>,
}

impl Recording {
    pub fn to_json(&self) -> String {
        to_document(self)
    }

    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        let r: Recording = parse_versioned(text, RECORDING_VERSION)?;
        let violation = |path: String, msg: String| SchemaError::SchemaViolation { path, msg };
        r.header
            .intrinsics
            .validate()
            .map_err(|e| violation("header.intrinsics".into(), e.to_string()))?;
        if !(r.header.rate_hz > 0.0) {
            return Err(violation(
                "header.rate_hz".into(),
                "must be positive".into(),
            ));
        }
        for (i, f) in r.frames.iter().enumerate() {
            f.bbox
                .validate()
                .map_err(|e| violation(format!("frames[{i}].bbox"), e.to_string()))?;
            if i > 0 && !(f.t > r.frames[i - 1].t) {
                return Err(violation(
                    format!("frames[{i}].t"),
                    "frames must be strictly time-ordered".into(),
                ));
            }
        }
        Ok(r)
    }

    /// Grasp positions in camera coordinates from frames with valid depth.
    pub fn trajectory(&self) -> Result<Trajectory3, FitError> {
        if let Some(t) = &self.trajectory3 {
            return Ok(t.clone());
        }
        let k = &self.header.intrinsics;
        let samples: Vec<Sample> = self
            .frames
            .iter()
            .filter_map(|f| {
                let p = deproject(
                    &PixelDepth::new(f.grasp_px[0], f.grasp_px[1], f.grasp_depth),
                    k,
                )
                .ok()?;
                Some(Sample { t: f.t, p })
            })
            .collect();
        if samples.len() < 3 {
            return Err(FitError::InsufficientData {
                needed: 3,
                got: samples.len(),
            });
        }
        Trajectory3::new(samples)
    }

    /// Annotation of the first frame.
    pub fn first_scene(&self) -> Option<SceneAnnotation> {
        let f = self.frames.first()?;
        Some(SceneAnnotation {
            label: self.header.object_label.clone(),
            bbox: f.bbox,
            grasp: PixelDepth::new(f.grasp_px[0], f.grasp_px[1], f.grasp_depth),
            intrinsics: self.header.intrinsics,
            depth_patch: vec![],
            grasp_orientation: f.grasp_orientation,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnReport {
    pub version: u64,
    pub recording_id: String,
    pub config: MlesacConfig,
    pub selection: SelectionReport,
    pub ref_rule: RefFrameRule,
    pub swept_angle: Option<f64>,
    pub travel_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecFile {
    pub version: u64,
    pub spec: SynthSpec,
}

/// Sidecar written next to simulated recordings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFile {
    pub version: u64,
    pub spec: SynthSpec,
    pub model: ModelParams,
    pub extent: f64,
    pub outliers: Vec<bool>,
    pub outlier_count: usize,
    pub hinge_side: Side,
    pub hinge_class: EdgeClass,
    pub surface_normal: Vector3<f64>,
}

// ---------------------------------------------------------------- arguments

#[derive(Parser, Debug)]
#[command(
    name = "taskdesc",
    version,
    about = "Learn and transfer constrained manipulation tasks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit a constraint model to a recording and write a task descriptor.
    Learn(LearnArgs),
    /// Apply a descriptor to a new scene and write waypoints.
    Generalize(GeneralizeArgs),
    /// Write a synthetic recording, its ground truth and a scene file.
    Simulate(SimulateArgs),
}

#[derive(clap::Args, Debug)]
pub struct LearnArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Report path [default: <output>.report.json]
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Overlay path prefix; writes .svg and .txt [default: <output>.overlay]
    #[arg(long)]
    pub overlay: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub iterations: usize,
    /// Inlier noise scale, meters.
    #[arg(long, default_value_t = 0.005)]
    pub sigma: f64,
    /// Outlier span, meters.
    #[arg(long, default_value_t = 1.0)]
    pub nu: f64,
    #[arg(long, default_value_t = 5)]
    pub em_steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Residual threshold for inlier masks [default: 2.5 sigma]
    #[arg(long)]
    pub inlier_threshold: Option<f64>,
}

#[derive(clap::Args, Debug)]
pub struct GeneralizeArgs {
    #[arg(long)]
    pub descriptor: PathBuf,
    #[arg(long)]
    pub scene: PathBuf,
    /// Waypoint CSV (t,x,y,z,param).
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub n_waypoints: usize,
    /// Sweep in radians (revolute) or travel in meters (prismatic).
    #[arg(long, allow_negative_numbers = true)]
    pub sweep: Option<f64>,
    #[arg(long)]
    pub duration: Option<f64>,
    /// World-from-camera transform "tx,ty,tz,qw,qx,qy,qz".
    #[arg(long, allow_negative_numbers = true)]
    pub world: Option<String>,
    /// Overlay path prefix [default: <output>.overlay]
    #[arg(long)]
    pub overlay: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimClass {
    Revolute,
    Prismatic,
    Rigid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum HingeArg {
    Top,
    Bottom,
    Left,
    Right,
}

impl From<HingeArg> for Side {
    fn from(h: HingeArg) -> Side {
        match h {
            HingeArg::Top => Side::Top,
            HingeArg::Bottom => Side::Bottom,
            HingeArg::Left => Side::Left,
            HingeArg::Right => Side::Right,
        }
    }
}

#[derive(clap::Args, Debug)]
pub struct SimulateArgs {
    /// Versioned spec file; inline flags are ignored when given.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
    /// Ground-truth sidecar [default: <output>.truth.json]
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Scene file for generalization [default: <output>.scene.json]
    #[arg(long)]
    pub scene_output: Option<PathBuf>,
    /// Overrides the spec's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = SimClass::Revolute)]
    pub class: SimClass,
    #[arg(long, default_value_t = 100)]
    pub n_samples: usize,
    #[arg(long, default_value_t = 20.0)]
    pub rate_hz: f64,
    #[arg(long, default_value_t = 0.002)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pub outlier_fraction: f64,
    #[arg(long, default_value_t = 1.0)]
    pub outlier_span: f64,
    /// Revolute sweep, degrees.
    #[arg(long, default_value_t = 90.0, allow_negative_numbers = true)]
    pub sweep_deg: f64,
    /// Prismatic travel along the cover's width, meters.
    #[arg(long, default_value_t = 0.3, allow_negative_numbers = true)]
    pub travel: f64,
    /// Cover width and height, meters.
    #[arg(long, default_value_t = 0.16)]
    pub width: f64,
    #[arg(long, default_value_t = 0.24)]
    pub height: f64,
    /// Distance of the cover from the camera, meters.
    #[arg(long, default_value_t = 1.0)]
    pub distance: f64,
    #[arg(long, value_enum, default_value_t = HingeArg::Left)]
    pub hinge: HingeArg,
}

// ---------------------------------------------------------------- entry

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() {
                ExitCode::Parse as i32
            } else {
                0
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Learn(a) => cmd_learn(&a),
        Command::Generalize(a) => cmd_generalize(&a),
        Command::Simulate(a) => cmd_simulate(&a),
    };
    match result {
        Ok(code) => code as i32,
        Err(e) => {
            eprintln!("{e}");
            e.code as i32
        }
    }
}

fn read(stage: &str, path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| {
        let mut err = CliError::new(
            ExitCode::Parse,
            stage,
            format!("cannot read {}: {e}", path.display()),
        );
        err.path = Some(path.display().to_string());
        err
    })
}

fn write(stage: &str, path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| {
        CliError::new(
            ExitCode::Io,
            stage,
            format!("cannot write {}: {e}", path.display()),
        )
    })
}

/// `out.json` -> `out.<suffix>`
fn derived(path: &Path, suffix: &str) -> PathBuf {
    path.with_extension(suffix)
}

/// `prefix` -> `prefix.<ext>`
fn appended(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

// ---------------------------------------------------------------- learn

pub fn cmd_learn(a: &LearnArgs) -> Result<ExitCode, CliError> {
    let stage = "learn";
    let rec =
        Recording::from_json(&read(stage, &a.input)?).map_err(|e| CliError::schema(stage, e))?;
    let cfg = MlesacConfig {
        iterations: a.iterations,
        sigma: a.sigma,
        nu: a.nu,
        em_steps: a.em_steps,
        seed: a.seed,
        inlier_threshold: a.inlier_threshold.unwrap_or(2.5 * a.sigma),
    };
    cfg.validate()
        .map_err(|e| CliError::new(ExitCode::Parse, stage, e))?;
    let traj = rec.trajectory().map_err(|e| fit_error(stage, e))?;
    let scene = rec
        .first_scene()
        .ok_or_else(|| CliError::new(ExitCode::Data, stage, "recording has no frames"))?;

    let (desc, selection) =
        learn(&traj, &scene, &cfg, &rec.header.recording_id).map_err(|e| match e {
            DescriptorError::Fit(f) => fit_error(stage, f),
            DescriptorError::Frame(f) => CliError::new(ExitCode::Geometry, "classify_axis_edge", f),
            DescriptorError::Schema(s) => CliError::schema(stage, s),
            other => CliError::new(ExitCode::Model, stage, other),
        })?;

    let report = LearnReport {
        version: REPORT_VERSION,
        recording_id: rec.header.recording_id.clone(),
        config: cfg,
        selection: selection.clone(),
        ref_rule: desc.ref_rule,
        swept_angle: desc.provenance.swept_angle,
        travel_distance: desc.provenance.travel_distance,
    };
    let report_path = a
        .report
        .clone()
        .unwrap_or_else(|| derived(&a.output, "report.json"));
    let overlay = a
        .overlay
        .clone()
        .unwrap_or_else(|| derived(&a.output, "overlay"));
    write(stage, &a.output, &desc.to_json())?;
    write(stage, &report_path, &to_document(&report))?;
    let ov = learn_overlay(&desc, &traj, &scene);
    write(
        stage,
        &appended(&overlay, "svg"),
        &ov.svg(&scene.intrinsics),
    )?;
    write(stage, &appended(&overlay, "txt"), &ov.text())?;
    print!("{}", learn_summary(&desc, &selection));

    if !desc.is_executable() {
        let e = CliError::new(
            ExitCode::Model,
            stage,
            format!("winning model `{}` is not executable", desc.class()),
        );
        eprintln!("{e}");
        return Ok(ExitCode::Model);
    }
    Ok(ExitCode::Ok)
}

fn fit_error(stage: &str, e: FitError) -> CliError {
    match e {
        FitError::InsufficientData { .. } | FitError::EmptyTrajectory => {
            CliError::new(ExitCode::Data, stage, e)
        }
        FitError::InvalidTrajectory(_) | FitError::InvalidConfig(_) => {
            CliError::new(ExitCode::Parse, stage, e)
        }
        _ => CliError::new(ExitCode::Model, stage, e),
    }
}

fn learn_summary(d: &TaskDescriptor, s: &SelectionReport) -> String {
    let mut o = String::new();
    let p = &d.provenance;
    let _ = writeln!(
        o,
        "recording {} ({} samples, {:.2} s)",
        p.recording_id, p.sample_count, p.duration_s
    );
    let _ = writeln!(
        o,
        "{:<10} {:>14} {:>10} {:>8}  note",
        "class", "bic", "weight", "inliers"
    );
    for r in &s.records {
        let bic = r.bic.map_or("-".to_string(), |b| format!("{b:.3}"));
        let inl = r
            .fit
            .as_ref()
            .map_or("-".to_string(), |f| f.inlier_count().to_string());
        let note = if r.class == s.winner {
            "selected"
        } else {
            r.failure.as_deref().unwrap_or("")
        };
        let _ = writeln!(
            o,
            "{:<10} {:>14} {:>10.4} {:>8}  {}",
            r.class.name(),
            bic,
            r.posterior_weight,
            inl,
            note
        );
    }
    match &d.model {
        ModelParams::Revolute(r) => {
            let _ = writeln!(
                o,
                "revolute: center ({:.4}, {:.4}, {:.4}) axis ({:.4}, {:.4}, {:.4}) radius {:.4} m",
                r.center.x, r.center.y, r.center.z, r.axis.x, r.axis.y, r.axis.z, r.radius
            );
        }
        ModelParams::Prismatic(q) => {
            let _ = writeln!(
                o,
                "prismatic: origin ({:.4}, {:.4}, {:.4}) direction ({:.4}, {:.4}, {:.4})",
                q.origin.x, q.origin.y, q.origin.z, q.direction.x, q.direction.y, q.direction.z
            );
        }
        ModelParams::Rigid(r) => {
            let _ = writeln!(
                o,
                "rigid: anchor ({:.4}, {:.4}, {:.4})",
                r.anchor.x, r.anchor.y, r.anchor.z
            );
        }
        ModelParams::Free => {
            let _ = writeln!(o, "free motion");
        }
    }
    if let Some(a) = p.swept_angle {
        let _ = writeln!(o, "swept angle {:.2} deg", a.to_degrees());
    }
    if let Some(t) = p.travel_distance {
        let _ = writeln!(o, "travel {t:.4} m");
    }
    if let RefFrameRule::Revolute {
        edge_class,
        grasp_axis_distance_px,
        ..
    } = d.ref_rule
    {
        let class = match edge_class {
            EdgeClass::Longer => "longer",
            EdgeClass::Shorter => "shorter",
        };
        let _ = writeln!(o, "axis on a {class} box edge, furthest from the grasp ({grasp_axis_distance_px:.1} px away)");
    }
    let _ = writeln!(o, "executable: {}", if p.executable { "yes" } else { "no" });
    o
}

// ---------------------------------------------------------------- overlays

/// Pixel-space drawing: box, named segments, named points and a polyline.
#[derive(Debug, Clone, Default)]
pub struct Overlay {
    pub bbox: Option<BBox>,
    pub segments: Vec<(String, Segment)>,
    pub points: Vec<(String, Point2<f64>)>,
    pub path: Vec<Point2<f64>>,
}

impl Overlay {
    pub fn text(&self) -> String {
        let mut o = String::new();
        if let Some(b) = &self.bbox {
            let _ = writeln!(o, "bbox {} {} {} {}", b.u0, b.v0, b.u1, b.v1);
        }
        for (name, s) in &self.segments {
            let _ = writeln!(o, "segment {name} {} {} {} {}", s.a.x, s.a.y, s.b.x, s.b.y);
        }
        for (name, p) in &self.points {
            let _ = writeln!(o, "point {name} {} {}", p.x, p.y);
        }
        for p in &self.path {
            let _ = writeln!(o, "path {} {}", p.x, p.y);
        }
        o
    }

    pub fn svg(&self, k: &Intrinsics) -> String {
        let mut o = String::new();
        let _ = writeln!(
            o,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
            w = k.width,
            h = k.height
        );
        let _ = writeln!(
            o,
            r##"<rect x="0" y="0" width="{}" height="{}" fill="#ffffff"/>"##,
            k.width, k.height
        );
        if let Some(b) = &self.bbox {
            let _ = writeln!(
                o,
                r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#2a9d3f" stroke-width="2"/>"##,
                b.u0,
                b.v0,
                b.width(),
                b.height()
            );
        }
        if !self.path.is_empty() {
            let pts: Vec<String> = self
                .path
                .iter()
                .map(|p| format!("{},{}", p.x, p.y))
                .collect();
            let _ = writeln!(
                o,
                r##"<polyline points="{}" fill="none" stroke="#e07b00" stroke-width="1.5"/>"##,
                pts.join(" ")
            );
        }
        for (name, s) in &self.segments {
            let _ = writeln!(
                o,
                r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#d62828" stroke-width="3"><title>{name}</title></line>"##,
                s.a.x, s.a.y, s.b.x, s.b.y
            );
        }
        for (name, p) in &self.points {
            let _ = writeln!(
                o,
                r##"<circle cx="{}" cy="{}" r="4" fill="#1d4ed8"><title>{name}</title></circle>"##,
                p.x, p.y
            );
        }
        o.push_str("</svg>\n");
        o
    }
}

fn learn_overlay(d: &TaskDescriptor, traj: &Trajectory3, scene: &SceneAnnotation) -> Overlay {
    let k = &scene.intrinsics;
    let px = |p: &nalgebra::Point3<f64>| project(p, k).ok().map(|q| Point2::new(q.u, q.v));
    let mut ov = Overlay {
        bbox: Some(scene.bbox),
        points: vec![("grasp".into(), Point2::new(scene.grasp.u, scene.grasp.v))],
        path: traj.points().filter_map(px).collect(),
        ..Default::default()
    };
    if let ModelParams::Revolute(r) = &d.model {
        if let (Some(a), Some(b)) = (
            px(&(r.center - r.axis * r.radius)),
            px(&(r.center + r.axis * r.radius)),
        ) {
            ov.segments.push(("axis".into(), Segment::new(a, b)));
        }
        if let Some(c) = px(&r.center) {
            ov.points.push(("center".into(), c));
        }
    }
    ov
}

// ---------------------------------------------------------------- generalize

fn parse_world(s: &str) -> Result<Isometry3<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}")))
        .collect::<Result<_, _>>()?;
    let [tx, ty, tz, qw, qx, qy, qz] = v[..] else {
        return Err(format!(
            "expected 7 comma-separated numbers, got {}",
            v.len()
        ));
    };
    let q = Quaternion::new(qw, qx, qy, qz);
    if !v.iter().all(|x| x.is_finite()) || !(q.norm() > 1e-12) {
        return Err("transform must be finite with a non-zero quaternion".into());
    }
    Ok(Isometry3::from_parts(
        Translation3::new(tx, ty, tz),
        UnitQuaternion::from_quaternion(q),
    ))
}

pub fn waypoints_csv(w: &[Waypoint]) -> String {
    let mut o = String::from("t,x,y,z,param\n");
    for w in w {
        let _ = writeln!(
            o,
            "{},{},{},{},{}",
            w.t, w.position.x, w.position.y, w.position.z, w.param
        );
    }
    o
}

pub fn cmd_generalize(a: &GeneralizeArgs) -> Result<ExitCode, CliError> {
    let stage = "generalize";
    let desc = TaskDescriptor::from_json(&read(stage, &a.descriptor)?)
        .map_err(|e| CliError::schema(stage, e))?;
    let scene = SceneAnnotation::from_json(&read(stage, &a.scene)?)
        .map_err(|e| CliError::schema(stage, e))?;
    if a.n_waypoints < 2 {
        return Err(CliError::new(
            ExitCode::Parse,
            stage,
            "--n-waypoints must be at least 2",
        ));
    }
    let mut req = GeneralizationRequest::new(desc, scene);
    req.n_waypoints = a.n_waypoints;
    req.sweep = a.sweep;
    req.duration = a.duration;
    if let Some(w) = &a.world {
        req.world_from_camera =
            parse_world(w).map_err(|m| CliError::new(ExitCode::Parse, stage, m))?;
    }
    let out = generalize(&req).map_err(|e| {
        let code = match e.kind {
            GeneralizeErrorKind::NonExecutable(_) => ExitCode::Model,
            GeneralizeErrorKind::InvalidRequest(_) => ExitCode::Parse,
            _ => ExitCode::Geometry,
        };
        CliError::new(code, e.stage.name(), e.kind)
    })?;

    let overlay = a
        .overlay
        .clone()
        .unwrap_or_else(|| derived(&a.output, "overlay"));
    write(stage, &a.output, &waypoints_csv(&out.waypoints))?;
    let r = &out.report;
    let mut ov = Overlay {
        bbox: Some(r.bbox),
        points: vec![("grasp".into(), r.grasp_px)],
        path: r.path_px.clone(),
        ..Default::default()
    };
    if let Some(s) = r.axis_px {
        ov.segments.push(("axis".into(), s));
    }
    if let Some(c) = r.center_px {
        ov.points.push(("center".into(), c));
    }
    write(
        stage,
        &appended(&overlay, "svg"),
        &ov.svg(&req.scene.intrinsics),
    )?;
    write(stage, &appended(&overlay, "txt"), &ov.text())?;

    match r.class {
        ModelClass::Revolute => println!(
            "revolute: radius {:.4} m, sweep {:.2} deg, {} waypoints over {:.2} s",
            r.radius.unwrap_or(f64::NAN),
            r.extent.to_degrees(),
            out.waypoints.len(),
            r.duration
        ),
        _ => println!(
            "prismatic: travel {:.4} m, {} waypoints over {:.2} s",
            r.extent,
            out.waypoints.len(),
            r.duration
        ),
    }
    Ok(ExitCode::Ok)
}

// ---------------------------------------------------------------- simulate

fn inline_spec(a: &SimulateArgs) -> SynthSpec {
    let layout = BookLayout::frontal(a.distance, a.width, a.height, a.hinge.into());
    let geometry = match a.class {
        SimClass::Revolute => layout.revolute(a.sweep_deg.to_radians()),
        SimClass::Prismatic => layout.slide(layout.right, a.travel),
        SimClass::Rigid => crate::synth::Geometry::Rigid {
            anchor: layout.grasp_point(),
        },
    };
    SynthSpec {
        geometry,
        n_samples: a.n_samples,
        rate_hz: a.rate_hz,
        noise_sigma: a.noise,
        outlier_fraction: a.outlier_fraction,
        outlier_span: a.outlier_span,
        seed: 0,
        scene: Some(layout),
    }
}

/// Recording whose frames carry the projected samples and the first-frame
/// box of the simulated scene.
pub fn simulate(spec: &SynthSpec) -> Result<(Recording, TruthFile, SceneAnnotation), String> {
    let demo = gen_demo(spec).map_err(|e| e.to_string())?;
    let truth = gen_scene(spec).map_err(|e| e.to_string())?;
    let k = truth.scene.intrinsics;
    let frames = demo
        .traj
        .samples()
        .iter()
        .map(|s| {
            let (grasp_px, grasp_depth) = match project(&s.p, &k) {
                Ok(q) => ([q.u, q.v], q.d),
                Err(_) => ([k.cx, k.cy], 0.0),
            };
            Frame {
                t: s.t,
                grasp_px,
                grasp_depth,
                bbox: truth.scene.bbox,
                grasp_orientation: None,
            }
        })
        .collect();
    let rec = Recording {
        version: RECORDING_VERSION,
        header: RecordingHeader {
            intrinsics: k,
            rate_hz: spec.rate_hz,
            object_label: truth.scene.label.clone(),
            recording_id: format!("synth-{}", spec.seed),
        },
        frames,
        trajectory3: None,
    };
    let sidecar = TruthFile {
        version: TRUTH_VERSION,
        spec: spec.clone(),
        model: demo.truth,
        extent: demo.extent,
        outlier_count: demo.outliers.iter().filter(|&&o| o).count(),
        outliers: demo.outliers,
        hinge_side: truth.hinge_side,
        hinge_class: truth.hinge_class,
        surface_normal: truth.surface_normal,
    };
    Ok((rec, sidecar, truth.scene))
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<ExitCode, CliError> {
    let stage = "simulate";
    let mut spec = match &a.spec {
        Some(p) => {
            let f: SpecFile = parse_versioned(&read(stage, p)?, SPEC_VERSION)
                .map_err(|e| CliError::schema(stage, e))?;
            f.spec
        }
        None => inline_spec(a),
    };
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let (rec, truth, scene) =
        simulate(&spec).map_err(|m| CliError::new(ExitCode::Parse, stage, m))?;
    write(stage, &a.output, &rec.to_json())?;
    write(
        stage,
        &a.truth
            .clone()
            .unwrap_or_else(|| derived(&a.output, "truth.json")),
        &to_document(&truth),
    )?;
    write(
        stage,
        &a.scene_output
            .clone()
            .unwrap_or_else(|| derived(&a.output, "scene.json")),
        &scene.to_json(),
    )?;
    println!(
        "simulated {} frames at {} Hz ({} outliers), seed {}",
        rec.frames.len(),
        rec.header.rate_hz,
        truth.outlier_count,
        spec.seed
    );
    Ok(ExitCode::Ok)
}
