use std::path::Path;
use std::process::{Command, Output};

fn cvr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cvr"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cvr(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(cvr(&["--help"]).status.code(), Some(0));
    assert_eq!(cvr(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(cvr(&[]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.json");
    let out = cvr(&[
        "train",
        "--modality",
        "depth",
        "--manifest",
        s(&missing),
        "--out",
        s(&dir.path().join("x.cvrm")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn pipeline_end_to_end_and_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = |name: &str| {
        let out = d.join(name);
        ok(&[
            "synth",
            "--out",
            s(&out),
            "--n-train",
            "5",
            "--n-test",
            "2",
            "--size",
            "32",
            "--val-fraction",
            "0.2",
            "--seed",
            "3",
        ]);
        out.join("manifest.json")
    };
    let (m1, m2) = (corpus("c1"), corpus("c2"));
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());

    let train = |manifest: &Path, out: &Path| {
        ok(&[
            "train",
            "--modality",
            "depth",
            "--manifest",
            s(manifest),
            "--epochs",
            "2",
            "--out",
            s(out),
            "--no-cache",
        ])
    };
    let (k1, k2) = (d.join("g1.cvrm"), d.join("g2.cvrm"));
    let log1 = train(&m1, &k1);
    train(&m2, &k2);
    assert!(log1.contains("kept epoch"));
    assert_eq!(std::fs::read(&k1).unwrap(), std::fs::read(&k2).unwrap());

    let weights = d.join("w.json");
    ok(&[
        "calibrate",
        "--manifest",
        s(&m1),
        "--ckpt-g",
        s(&k1),
        "--out",
        s(&weights),
    ]);
    let w: serde_json::Value = serde_json::from_slice(&std::fs::read(&weights).unwrap()).unwrap();
    assert_eq!(w["alpha_g"], 1.0);

    let eval = |report: &Path| {
        ok(&[
            "eval",
            "--manifest",
            s(&m1),
            "--ckpt-g",
            s(&k1),
            "--weights",
            s(&weights),
            "--report",
            s(report),
        ])
    };
    let (r1, r2) = (d.join("r1"), d.join("r2"));
    eval(&r1);
    eval(&r2);
    for f in ["report.txt", "report.csv", "report.json"] {
        assert_eq!(
            std::fs::read(r1.join(f)).unwrap(),
            std::fs::read(r2.join(f)).unwrap(),
            "{f}"
        );
    }

    let video = d.join("c1/test-0000-fake/frames.rgb");
    let out = ok(&[
        "detect",
        "--input",
        s(&video),
        "--ckpt-g",
        s(&k1),
        "--heatmaps",
        s(&d.join("hm")),
    ]);
    assert!(out.starts_with("verdict: "), "{out}");
    assert!(out.contains("clip   0"));
    assert!(d.join("hm/clip_000/depth/heatmap.cvrt").exists());

    let cam = d.join("cam");
    let out = ok(&[
        "gradcam",
        "--ckpt",
        s(&k1),
        "--manifest",
        s(&m1),
        "--clip-id",
        "test-0000-fake",
        "--out",
        s(&cam),
    ]);
    assert!(out.starts_with("25 files"), "{out}");
    assert!(cam.join("frame_023.png").exists());

    let vol = d.join("flow.cvrt");
    let out = ok(&[
        "extract",
        "--modality",
        "flow",
        "--frames",
        s(&video),
        "--out",
        s(&vol),
    ]);
    assert!(out.contains("[2, 24, 32, 32]"), "{out}");

    let bad = cvr(&[
        "eval",
        "--manifest",
        s(&m1),
        "--ckpt-g",
        s(&k1),
        "--epsilon",
        "1.5",
    ]);
    assert_eq!(bad.status.code(), Some(2));
}
