use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cgc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cgc"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("run cgc")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn generate_small(dir: &Path) {
    let o = cgc(
        dir,
        &[
            "generate",
            "--dims",
            "16,16,24,2",
            "--biomes",
            "3",
            "--seed",
            "2",
            "-o",
            "in.cgct",
            "--truth",
            "truth.csv",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn nmi_of_identical_files_is_one() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path());
    let o = cgc(dir.path(), &["nmi", "truth.csv", "truth.csv"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "1.000000\n");
}

#[test]
fn single_resolution_writes_one_csv() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path());
    let o = cgc(
        dir.path(),
        &[
            "cgc",
            "--levels-spatial",
            "1",
            "--levels-temporal",
            "1",
            "--k",
            "2",
            "in.cgct",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("labels_1_1_1.csv")).unwrap();
    assert!(text.starts_with("i1,i2,label\n"));
    assert_eq!(text.lines().count(), 1 + 16 * 16);

    let o = cgc(
        dir.path(),
        &[
            "cgc",
            "--levels-spatial",
            "1..2",
            "--levels-temporal",
            "1",
            "--k",
            "2",
            "in.cgct",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_from_config_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path());
    fs::write(
        dir.path().join("run.toml"),
        "input = \"in.cgct\"\noutput = \"sweep\"\nlevels_spatial = \"1..2\"\nlevels_temporal = \"1..2\"\nk = 2\nseed = 1\n",
    )
    .unwrap();
    let o = cgc(
        dir.path(),
        &[
            "sweep",
            "--config",
            "run.toml",
            "--k",
            "3",
            "--threads",
            "2",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let root = dir.path().join("sweep");
    assert_eq!(fs::read_dir(root.join("k3/labels")).unwrap().count(), 4);
    assert!(root.join("k3/mier.txt").exists());
    assert!(root.join("stats/bins.csv").exists());
    let manifest = fs::read_to_string(root.join("manifest.txt")).unwrap();
    assert!(manifest.contains("k=3\n"));
    assert!(!manifest.contains("threads"));

    let o = cgc(dir.path(), &["report", "sweep"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("spatial_1-2"));
}

#[test]
fn thread_count_does_not_change_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    generate_small(dir.path());
    for (threads, out) in [("1", "a"), ("3", "b")] {
        let o = cgc(
            dir.path(),
            &[
                "sweep",
                "in.cgct",
                "--levels-spatial",
                "1..2",
                "--levels-temporal",
                "1..3",
                "--k-range",
                "2..3",
                "--threads",
                threads,
                "-o",
                out,
            ],
        );
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for file in [
        "manifest.txt",
        "k2/mier.txt",
        "k3/nmi_edges.csv",
        "stats/adjacent_pairs.csv",
        "k3/labels/res_2_2_3.csv",
    ] {
        assert_eq!(
            fs::read(dir.path().join("a").join(file)).unwrap(),
            fs::read(dir.path().join("b").join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        cgc(dir.path(), &["sweep", "--no-such-flag"]).status.code(),
        Some(2)
    );
    assert_eq!(cgc(dir.path(), &["frobnicate"]).status.code(), Some(2));
    let o = cgc(dir.path(), &["nmi", "missing.csv", "missing.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    fs::write(dir.path().join("bad.cgct"), b"XXXXXXXXjunk").unwrap();
    let o = cgc(
        dir.path(),
        &[
            "cgc",
            "--k",
            "2",
            "--levels-spatial",
            "1",
            "--levels-temporal",
            "1",
            "bad.cgct",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
}
