use std::path::Path;
use std::process::{Command, Output};

use taskdesc::artmodel::{residual, ModelParams};
use taskdesc::cli::{Recording, SpecFile, TruthFile};
use taskdesc::descriptor::TaskDescriptor;
use taskdesc::scene::SceneAnnotation;
use taskdesc::synth::SynthSpec;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taskdesc"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn truth(dir: &Path, name: &str) -> TruthFile {
    serde_json::from_str(&read(dir, name)).unwrap()
}

#[test]
fn default_simulation_is_100_frames_at_20hz() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(d.path(), &["simulate", "--output", "r.json"])), 0);
    let rec = Recording::from_json(&read(d.path(), "r.json")).unwrap();
    assert_eq!(rec.frames.len(), 100);
    assert_eq!(rec.header.rate_hz, 20.0);
    assert_eq!(rec.frames[1].t, 0.05);
    assert!(d.path().join("r.truth.json").exists());
    SceneAnnotation::from_json(&read(d.path(), "r.scene.json")).unwrap();
}

#[test]
fn simulation_is_byte_identical_per_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [a.path(), b.path()] {
        assert_eq!(
            code(&run(
                dir,
                &[
                    "simulate",
                    "--output",
                    "r.json",
                    "--seed",
                    "5",
                    "--outlier-fraction",
                    "0.3"
                ]
            )),
            0
        );
    }
    for f in ["r.json", "r.truth.json", "r.scene.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(truth(a.path(), "r.truth.json").outlier_count, 30);
    assert_eq!(
        truth(a.path(), "r.truth.json")
            .outliers
            .iter()
            .filter(|&&o| o)
            .count(),
        30
    );
}

#[test]
fn learn_recovers_simulated_book() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&run(
            d.path(),
            &["simulate", "--output", "r.json", "--seed", "2"]
        )),
        0
    );
    let o = run(
        d.path(),
        &[
            "learn",
            "--input",
            "r.json",
            "--output",
            "desc.json",
            "--sigma",
            "0.002",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let desc = TaskDescriptor::from_json(&read(d.path(), "desc.json")).unwrap();
    let (ModelParams::Revolute(r), ModelParams::Revolute(t)) =
        (desc.model, truth(d.path(), "r.truth.json").model)
    else {
        panic!("expected revolute")
    };
    assert!((r.radius - t.radius).abs() < 0.005);
    for f in ["desc.report.json", "desc.overlay.svg", "desc.overlay.txt"] {
        assert!(d.path().join(f).exists(), "{f}");
    }
    assert!(read(d.path(), "desc.overlay.svg").starts_with("<svg"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("revolute"));
}

#[test]
fn learn_then_generalize_to_second_book() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    assert_eq!(
        code(&run(p, &["simulate", "--output", "a.json", "--seed", "1"])),
        0
    );
    assert_eq!(
        code(&run(
            p,
            &[
                "simulate",
                "--output",
                "b.json",
                "--seed",
                "2",
                "--width",
                "0.26",
                "--height",
                "0.34",
                "--distance",
                "1.2"
            ]
        )),
        0
    );
    assert_eq!(
        code(&run(
            p,
            &[
                "learn",
                "--input",
                "a.json",
                "--output",
                "desc.json",
                "--sigma",
                "0.002"
            ]
        )),
        0
    );
    let o = run(
        p,
        &[
            "generalize",
            "--descriptor",
            "desc.json",
            "--scene",
            "b.scene.json",
            "--output",
            "w.csv",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let circle = truth(p, "b.truth.json").model;
    let csv = read(p, "w.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x,y,z,param"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 50);
    for r in &rows {
        let p = nalgebra::Point3::new(r[1], r[2], r[3]);
        assert!(residual(&circle, &p) < 0.005);
    }
    assert!(read(p, "w.overlay.txt").contains("segment axis"));

    let o = run(
        p,
        &[
            "generalize",
            "--descriptor",
            "desc.json",
            "--scene",
            "b.scene.json",
            "--output",
            "two.csv",
            "--n-waypoints",
            "2",
        ],
    );
    assert_eq!(code(&o), 0);
    assert_eq!(read(p, "two.csv").lines().count(), 3);

    let o = run(
        p,
        &[
            "generalize",
            "--descriptor",
            "desc.json",
            "--scene",
            "b.scene.json",
            "--output",
            "moved.csv",
            "--world",
            "1,0,0,1,0,0,0",
        ],
    );
    assert_eq!(code(&o), 0);
    let first = read(p, "moved.csv").lines().nth(1).unwrap().to_string();
    let x: f64 = first.split(',').nth(1).unwrap().parse().unwrap();
    assert!((x - 1.0 - rows[0][1]).abs() < 1e-12);
}

#[test]
fn two_frames_is_a_data_error() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&run(
            d.path(),
            &["simulate", "--output", "r.json", "--n-samples", "3"]
        )),
        0
    );
    let mut rec = Recording::from_json(&read(d.path(), "r.json")).unwrap();
    rec.frames.truncate(2);
    std::fs::write(d.path().join("short.json"), rec.to_json()).unwrap();
    let o = run(
        d.path(),
        &["learn", "--input", "short.json", "--output", "x.json"],
    );
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("code=3 kind=data"));
}

#[test]
fn malformed_header_reports_field_path() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(d.path(), &["simulate", "--output", "r.json"])), 0);
    let mut v: serde_json::Value = serde_json::from_str(&read(d.path(), "r.json")).unwrap();
    v["header"]["intrinsics"]
        .as_object_mut()
        .unwrap()
        .remove("fy");
    std::fs::write(d.path().join("bad.json"), v.to_string()).unwrap();
    let o = run(
        d.path(),
        &["learn", "--input", "bad.json", "--output", "x.json"],
    );
    assert_eq!(code(&o), 2);
    let line = stderr(&o);
    assert!(
        line.starts_with("error: stage=learn code=2 kind=parse path=header.intrinsics.fy "),
        "{line}"
    );
    assert!(!d.path().join("x.json").exists());
}

#[test]
fn stationary_demo_is_not_executable() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    assert_eq!(
        code(&run(
            p,
            &["simulate", "--output", "r.json", "--class", "rigid"]
        )),
        0
    );
    let o = run(
        p,
        &[
            "learn",
            "--input",
            "r.json",
            "--output",
            "desc.json",
            "--sigma",
            "0.002",
        ],
    );
    assert_eq!(code(&o), 4);
    assert!(p.join("desc.json").exists() && p.join("desc.report.json").exists());
    let o = run(
        p,
        &[
            "generalize",
            "--descriptor",
            "desc.json",
            "--scene",
            "r.scene.json",
            "--output",
            "w.csv",
        ],
    );
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("kind=model"));
}

#[test]
fn geometry_failure_names_stage() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    assert_eq!(code(&run(p, &["simulate", "--output", "r.json"])), 0);
    assert_eq!(
        code(&run(
            p,
            &[
                "learn",
                "--input",
                "r.json",
                "--output",
                "desc.json",
                "--sigma",
                "0.002"
            ]
        )),
        0
    );
    let mut scene = SceneAnnotation::from_json(&read(p, "r.scene.json")).unwrap();
    scene.depth_patch.clear();
    std::fs::write(p.join("flat.json"), scene.to_json()).unwrap();
    let o = run(
        p,
        &[
            "generalize",
            "--descriptor",
            "desc.json",
            "--scene",
            "flat.json",
            "--output",
            "w.csv",
        ],
    );
    assert_eq!(code(&o), 5);
    assert!(
        stderr(&o).contains("stage=surface_normal code=5 kind=geometry"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn descriptor_version_is_checked() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    assert_eq!(code(&run(p, &["simulate", "--output", "r.json"])), 0);
    assert_eq!(
        code(&run(
            p,
            &["learn", "--input", "r.json", "--output", "desc.json"]
        )),
        0
    );
    let mut v: serde_json::Value = serde_json::from_str(&read(p, "desc.json")).unwrap();
    v["version"] = 99.into();
    std::fs::write(p.join("v99.json"), v.to_string()).unwrap();
    let o = run(
        p,
        &[
            "generalize",
            "--descriptor",
            "v99.json",
            "--scene",
            "r.scene.json",
            "--output",
            "w.csv",
        ],
    );
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("path=version"));
}

#[test]
fn simulate_from_spec_file() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let mut spec = SynthSpec::book_demo(0);
    spec.n_samples = 40;
    let file = SpecFile { version: 1, spec };
    std::fs::write(p.join("spec.json"), serde_json::to_string(&file).unwrap()).unwrap();
    let o = run(
        p,
        &[
            "simulate",
            "--spec",
            "spec.json",
            "--output",
            "r.json",
            "--seed",
            "8",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        Recording::from_json(&read(p, "r.json"))
            .unwrap()
            .frames
            .len(),
        40
    );
    assert_eq!(truth(p, "r.truth.json").spec.seed, 8);

    std::fs::write(
        p.join("bad.json"),
        r#"{"version":1,"spec":{"n_samples":3}}"#,
    )
    .unwrap();
    let o = run(p, &["simulate", "--spec", "bad.json", "--output", "x.json"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("path=spec"));
}

#[test]
fn bad_flags_exit_2() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(d.path(), &["learn", "--input", "a.json"])), 2);
    assert_eq!(
        code(&run(
            d.path(),
            &[
                "simulate",
                "--output",
                "r.json",
                "--outlier-fraction",
                "1.5"
            ]
        )),
        2
    );
    assert_eq!(code(&run(d.path(), &["--help"])), 0);
}
