use std::path::Path;
use std::process::{Command, Output};

fn koopman(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_koopman"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn rotation_needs_two_delays() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    stdout(&koopman(
        d,
        &[
            "simulate",
            "--system",
            "rotation",
            "--theta",
            "0.5",
            "--observe",
            "first",
            "--x0",
            "1,0",
            "--steps",
            "60",
            "--out",
            "rot.csv",
        ],
    ));
    let one = stdout(&koopman(
        d,
        &[
            "fit", "--algo", "dmd", "--data", "rot.csv", "--out", "h1.json",
        ],
    ));
    assert_eq!(one.lines().count(), 2, "{one}");
    let two = stdout(&koopman(
        d,
        &[
            "fit", "--algo", "dmd", "--data", "rot.csv", "--embed", "2", "--out", "h2.json",
        ],
    ));
    assert_eq!(
        two.lines().next().unwrap(),
        "index,re,im,magnitude,phase,training_residual"
    );
    let spectrum = stdout(&koopman(d, &["spectrum", "--model", "h2.json"]));
    let rows: Vec<Vec<f64>> = spectrum
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert!(
            (r[3] - 1.0).abs() < 1e-9 && (r[4].abs() - 0.5).abs() < 1e-9,
            "{r:?}"
        );
    }
    // a single history row cannot seed a depth-2 embedding
    std::fs::write(d.join("ic.csv"), "t,x1\n0,1\n").unwrap();
    let short = koopman(
        d,
        &[
            "predict", "--model", "h2.json", "--ic", "ic.csv", "--steps", "3",
        ],
    );
    assert_eq!(short.status.code(), Some(3));
    std::fs::write(d.join("ic.csv"), "t,x1\n0,1\n1,0.8775825618903728\n").unwrap();
    let pred = stdout(&koopman(
        d,
        &[
            "predict", "--model", "h2.json", "--ic", "ic.csv", "--steps", "3",
        ],
    ));
    let last: f64 = pred
        .lines()
        .last()
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!((last - 2.0_f64.cos()).abs() < 1e-9, "{pred}");
}

#[test]
fn forced_system_fit_and_predict() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let sim = stdout(&koopman(
        d,
        &[
            "simulate",
            "--system",
            "forced",
            "--a",
            "0.9,0.1;0,0.7",
            "--b-in",
            "1;0.5",
            "--x0",
            "0,0",
            "--steps",
            "40",
            "--input-hold",
            "4",
            "--seed",
            "3",
        ],
    ));
    assert!(sim.contains("u1"), "{sim}");
    std::fs::write(d.join("forced.csv"), &sim).unwrap();
    let fitted = koopman(
        d,
        &[
            "fit",
            "--algo",
            "dmd",
            "--augment-inputs",
            "--data",
            "forced.csv",
            "--out",
            "m.json",
        ],
    );
    stdout(&fitted);
    let model = std::fs::read_to_string(d.join("m.json")).unwrap();
    assert!(model.contains("\"augment_inputs\": true"));
    std::fs::write(d.join("ic.csv"), "t,x1,x2,u1\n0,1,1,0\n").unwrap();
    let pred = stdout(&koopman(
        d,
        &[
            "predict", "--model", "m.json", "--ic", "ic.csv", "--steps", "2",
        ],
    ));
    let last: Vec<f64> = pred
        .lines()
        .last()
        .unwrap()
        .split(',')
        .skip(1)
        .map(|v| v.parse().unwrap())
        .collect();
    // zero input: x₂ = A² x₀
    assert!(
        (last[0] - 0.97).abs() < 1e-9 && (last[1] - 0.49).abs() < 1e-9,
        "{pred}"
    );
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        koopman(
            d,
            &["fit", "--algo", "bogus", "--data", "x.csv", "--out", "m.json"]
        )
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        koopman(
            d,
            &["fit", "--algo", "edmd", "--data", "x.csv", "--out", "m.json"]
        )
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        koopman(d, &["spectrum", "--model", "absent.json"])
            .status
            .code(),
        Some(3)
    );
    std::fs::write(d.join("bad.csv"), "t,x1\n0,1\n1,abc\n").unwrap();
    let bad = koopman(
        d,
        &[
            "fit", "--algo", "dmd", "--data", "bad.csv", "--out", "m.json",
        ],
    );
    assert_eq!(bad.status.code(), Some(3));
    assert!(bad.stdout.is_empty());
    std::fs::write(d.join("zero.csv"), "t,x1\n0,0\n1,0\n2,0\n").unwrap();
    assert_eq!(
        koopman(
            d,
            &["fit", "--algo", "dmd", "--data", "zero.csv", "--out", "m.json"]
        )
        .status
        .code(),
        Some(4)
    );
    let diverge = koopman(
        d,
        &[
            "simulate", "--system", "linear", "--a", "1e7", "--x0", "1", "--steps", "5",
        ],
    );
    assert_eq!(diverge.status.code(), Some(4));
}
