use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sadam_core::harness::csv_io::parse_trace_csv;
use sadam_core::harness::write_matrix_csv;
use sadam_core::{DenseMatrix, RandomSource};

fn sadam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sadam")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_bench(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "bench",
        "--out",
        s(out),
        "--method",
        "admm,adam,sadam,svrg",
        "--iters",
        "15",
        "--no-timing",
    ];
    args.extend_from_slice(extra);
    sadam(&args)
}

fn trace_files(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir.join("traces"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn four_methods_one_subject_two_layers_give_eight_traces() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = small_bench(&out, &["--subjects", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let names = trace_files(&out);
    assert_eq!(names.len(), 8, "{names:?}");
    assert!(names.contains(&"subject00_svrg_seed0_layer2.csv".to_string()));
    for n in &names {
        let text = fs::read_to_string(out.join("traces").join(n)).unwrap();
        assert!(text.starts_with("iter,loss,wall_ms,shuffle_fired\n"));
        let rows = parse_trace_csv(&text).unwrap();
        assert_eq!(rows.len(), 16);
        assert!(rows.iter().enumerate().all(|(i, r)| r.0 == i));
    }
    let table = fs::read_to_string(out.join("timing.txt")).unwrap();
    assert!(table.contains(" ± "));
    assert!(out.join("summary.toml").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = small_bench(out, &["--subjects", "2", "--seed", "4,5"]);
        assert_eq!(code(&o), 0);
    }
    let names = trace_files(&a);
    assert_eq!(names, trace_files(&b));
    assert_eq!(names.len(), 2 * 4 * 2 * 2);
    for n in &names {
        assert_eq!(
            fs::read(a.join("traces").join(n)).unwrap(),
            fs::read(b.join("traces").join(n)).unwrap(),
            "{n}"
        );
    }
    assert_eq!(
        fs::read(a.join("summary.toml")).unwrap(),
        fs::read(b.join("summary.toml")).unwrap()
    );
}

#[test]
fn missing_input_fails_that_subject_only() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.csv");
    let m = DenseMatrix::random_uniform(16, 20, -1.0, 1.0, &mut RandomSource::new(1));
    write_matrix_csv(&good, &m).unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("missing.csv");
    let o = small_bench(&out, &["--input", s(&good), "--input", s(&missing)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("subject missing failed"));
    assert_eq!(trace_files(&out).len(), 8);
    let summary: toml::Table = fs::read_to_string(out.join("summary.toml")).unwrap().parse().unwrap();
    assert_eq!(summary["run"]["subjects_failed"].as_integer(), Some(1));
}

#[test]
fn verify_passes_and_catches_a_dropped_column() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("verify.toml");
    let o = sadam(&["verify", "--out", s(&report)]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{stdout}");
    assert!(stdout.contains("PASS gd_contraction_ratio"));
    assert!(report.exists());

    let o = sadam(&["verify", "--fault", "drop-column"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 3);
    assert!(stdout.contains("FAIL shuffle_norm_preservation"), "{stdout}");
}

#[test]
fn generate_decompose_and_icc() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = sadam(&["generate", "--out", s(&data), "--rows", "12", "--cols", "16", "--ranks", "3,2", "--seed", "9"]);
    assert_eq!(code(&o), 0);
    let input = data.join("subject00.csv");
    assert!(data.join("truth/subject00_x2.csv").exists());

    let out = dir.path().join("dec");
    let o = sadam(&[
        "decompose", "--input", s(&input), "--out", s(&out), "--method", "gd", "--iters", "10", "--layers", "2",
        "--ranks", "3,2", "--lambda", "0.2", "--trigger-eps", "1e-6",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("subject00_gd_seed0_layer2.csv").exists());
    assert!(out.join("subject00_z1.csv").exists());

    let ratings = dir.path().join("ratings.csv");
    fs::write(&ratings, "1,1\n2,2\n3,3\n").unwrap();
    let o = sadam(&["icc", "--input", s(&ratings)]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("icc = 1.0"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // configuration errors
    assert_eq!(code(&sadam(&["bench", "--method", "storm"])), 1);
    assert_eq!(code(&sadam(&["bench", "--iters", "0", "--out", s(dir.path())])), 1);
    assert_eq!(code(&sadam(&["frobnicate"])), 1);
    // data errors
    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, "1,2\n3\n").unwrap();
    let o = sadam(&["decompose", "--input", s(&ragged), "--out", s(dir.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
    assert_eq!(code(&sadam(&["icc", "--input", s(&dir.path().join("none.csv"))])), 2);
}
