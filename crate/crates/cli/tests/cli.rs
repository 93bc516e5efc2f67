use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

/// A synthetic MNIST-shaped dataset: each label lights its own band of rows.
fn data_dir() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let root = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("synthetic-mnist");
        let dir = root.join("mnist");
        fs::create_dir_all(&dir).unwrap();
        let mut state = 0x2545_f491_4f6c_dd1du64;
        let mut noise = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 60) as u8
        };
        for (prefix, n) in [("train", 60_000u32), ("t10k", 10_000)] {
            let mut images = Vec::with_capacity(16 + n as usize * 784);
            let mut labels = Vec::with_capacity(8 + n as usize);
            for v in [0x0803u32, n, 28, 28] {
                images.extend_from_slice(&v.to_be_bytes());
            }
            for v in [0x0801u32, n] {
                labels.extend_from_slice(&v.to_be_bytes());
            }
            for i in 0..n {
                let label = (i % 10) as u8;
                labels.push(label);
                for p in 0..784usize {
                    let on = p / 78 == usize::from(label);
                    images.push(if on { 180 + noise() } else { noise() });
                }
            }
            fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), images).unwrap();
            fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), labels).unwrap();
        }
        root
    })
}

fn small_flags(out: &Path, seeds: &str) -> Vec<String> {
    let d = data_dir().to_string_lossy().into_owned();
    let out = out.to_string_lossy().into_owned();
    [
        "--data-dir", &d, "--out-dir", &out, "--dims", "64", "--seeds", seeds, "--train-limit", "600",
        "--test-limit", "300", "--max-epochs", "2", "--validation-size", "100",
    ]
    .map(String::from)
    .to_vec()
}

fn hdcnet(args: &[&str], extra: &[String]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdcnet")).args(args).args(extra).output().unwrap()
}

fn ok(out: Output) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(out.status.success(), "stdout:\n{stdout}\nstderr:\n{}", String::from_utf8_lossy(&out.stderr));
    stdout
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn subcommands_chain_through_saved_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let flags = small_flags(out, "0");

    ok(hdcnet(&["encode", "--limit", "20"], &flags));
    assert!(out.join("mnist-seed0-encoded.json").exists());
    assert_eq!(json(&out.join("encode-report.json"))["samples"], 20);

    ok(hdcnet(&["train"], &flags));
    let model = out.join("mnist-hdc-seed0.json");
    let one_shot = json(&out.join("train-report.json"))["test_accuracy"].as_f64().unwrap();
    assert!(one_shot > 0.9, "{one_shot}");

    ok(hdcnet(&["retrain", "--model", model.to_str().unwrap()], &flags));
    assert!(out.join("mnist-hdc-seed0-retrained.json").exists());

    ok(hdcnet(&["nn-train", "--lr", "0.01"], &flags));
    let checkpoint = out.join("mnist-network-seed0.json");
    let net_acc = json(&out.join("nn-train-report.json"))["test_accuracy"].as_f64().unwrap();

    let stdout = ok(hdcnet(&["derive", "--checkpoint", checkpoint.to_str().unwrap()], &flags));
    assert!(stdout.contains("300 of 300 test predictions match"), "{stdout}");
    let derived = json(&out.join("derive-report.json"));
    assert_eq!(derived["mismatches"], 0);
    assert_eq!(derived["test_accuracy"].as_f64().unwrap(), net_acc);

    ok(hdcnet(&["eval", "--checkpoint", checkpoint.to_str().unwrap()], &flags));
    assert_eq!(json(&out.join("eval-report.json"))["test_accuracy"].as_f64().unwrap(), net_acc);
    let derived_model = out.join("mnist-network-seed0-derived.json");
    ok(hdcnet(&["eval", "--model", derived_model.to_str().unwrap()], &flags));
    assert_eq!(json(&out.join("eval-report.json"))["test_accuracy"].as_f64().unwrap(), net_acc);
    assert!(out.join("eval-config.toml").exists());
}

#[test]
fn bench_reports_are_written_and_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let stdout = ok(hdcnet(&["bench", "--pipeline", "hdc_base,nn_derive"], &small_flags(&out, "0,1")));
        (out, stdout)
    };
    let (a, stdout) = run("a");
    for f in ["report.json", "table.txt", "table.csv", "config.toml"] {
        assert!(a.join(f).exists(), "missing {f}");
    }
    assert!(stdout.contains("hdc_base") && stdout.contains("nn_derive"));
    let csv = fs::read_to_string(a.join("table.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "{csv}");

    let (b, _) = run("b");
    let seeds = |dir: &Path| -> Vec<(u64, u64)> {
        let v = json(&dir.join("report.json"));
        v.as_array()
            .unwrap()
            .iter()
            .flat_map(|r| r["seeds"].as_array().unwrap().clone())
            .map(|s| (s["seed"].as_u64().unwrap(), s["accuracy"].as_f64().unwrap().to_bits()))
            .collect()
    };
    assert_eq!(seeds(&a).len(), 4);
    assert_eq!(seeds(&a), seeds(&b));
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.toml");
    fs::write(&config, "dims = 32\nseeds = [3]\nmax_epochs = 1\ntest_limit = 50\n").unwrap();
    let out = tmp.path().join("out");
    let d = data_dir().to_string_lossy().into_owned();
    let o = out.to_string_lossy().into_owned();
    let args = ["--config", config.to_str().unwrap(), "--dims", "48", "--data-dir", &d, "--out-dir", &o, "--train-limit", "200"];
    ok(hdcnet(&["bench"], &args.map(String::from)));
    let written: toml::Value = toml::from_str(&fs::read_to_string(out.join("config.toml")).unwrap()).unwrap();
    assert_eq!(written["dims"].as_integer(), Some(48));
    assert_eq!(written["seeds"].as_array().unwrap()[0].as_integer(), Some(3));
    assert_eq!(written["max_epochs"].as_integer(), Some(1));
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hdcnet(&["bench", "--data-dir", tmp.path().to_str().unwrap(), "--out-dir", tmp.path().to_str().unwrap()], &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("train-images-idx3-ubyte"));

    let out = hdcnet(&["bench", "--pipeline", "svm"], &[]);
    assert!(!out.status.success());

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "dimz = 4\n").unwrap();
    let out = hdcnet(&["bench", "--config", bad.to_str().unwrap()], &[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimz"));
}
