use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use eids::data::{AttackClass, FEATURE_COLUMNS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PROTOS: [&str; 3] = ["tcp", "udp", "arp"];
const SERVICES: [&str; 3] = ["-", "http", "dns"];
const STATES: [&str; 3] = ["FIN", "INT", "CON"];

/// Small UNSW-shaped CSV: every class present, a few features carry the label.
fn fixture_csv(path: &Path, rows: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from("id,");
    out.push_str(&FEATURE_COLUMNS.join(","));
    out.push_str(",attack_cat,label\n");
    for i in 0..rows {
        let class = AttackClass::ALL[i % AttackClass::ALL.len()];
        let c = class.id() as f64;
        write!(out, "{}", i + 1).unwrap();
        for (j, col) in FEATURE_COLUMNS.iter().enumerate() {
            let cell = match *col {
                "proto" => PROTOS[(class.id() as usize + rng.gen_range(0..2)) % 3].to_string(),
                "service" => SERVICES[rng.gen_range(0..3)].to_string(),
                "state" => STATES[class.id() as usize % 3].to_string(),
                _ if j % 4 == 0 => format!("{:.4}", c * 10.0 + rng.gen::<f64>()),
                _ => format!("{:.4}", rng.gen::<f64>() * 100.0),
            };
            write!(out, ",{cell}").unwrap();
        }
        let label = u8::from(class != AttackClass::Normal);
        writeln!(out, ",{},{label}", class.name()).unwrap();
    }
    std::fs::write(path, out).unwrap();
}

struct Sandbox {
    dir: tempfile::TempDir,
}

impl Sandbox {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fixture_csv(&dir.path().join("train.csv"), 300, 1);
        fixture_csv(&dir.path().join("test.csv"), 100, 2);
        Sandbox { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn out(&self) -> PathBuf {
        self.path("out")
    }

    fn eids(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_eids"))
            .args(args)
            .arg("--out")
            .arg(self.out())
            .env_remove("EIDS_DATA_DIR")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let o = self.eids(args);
        assert!(
            o.status.success(),
            "{args:?} failed: {}\n{}",
            String::from_utf8_lossy(&o.stdout),
            String::from_utf8_lossy(&o.stderr)
        );
        String::from_utf8(o.stdout).unwrap()
    }

    fn ingest(&self) {
        let train = self.path("train.csv");
        let test = self.path("test.csv");
        self.ok(&[
            "ingest",
            "--train",
            train.to_str().unwrap(),
            "--test",
            test.to_str().unwrap(),
        ]);
    }

    fn read(&self, name: &str) -> Vec<u8> {
        std::fs::read(self.out().join(name)).unwrap()
    }
}

fn code(o: &Output) -> Option<i32> {
    o.status.code()
}

const FAST_TRAIN: [&str; 5] = ["train", "--epochs", "2", "--batch-size", "32"];

#[test]
fn end_to_end_pipeline() {
    let sb = Sandbox::new();
    sb.ingest();
    let sel = sb.ok(&["select", "--k", "10"]);
    assert!(sel.contains("kept 10 features"), "{sel}");
    let tr = sb.ok(&FAST_TRAIN);
    assert!(tr.contains("train time"), "{tr}");
    let ev = sb.ok(&["eval", "--format", "json,csv,text"]);
    assert!(ev.contains("Accuracy"), "{ev}");
    for f in [
        "train.eids",
        "test.eids",
        "encoder.json",
        "scores.csv",
        "scores.txt",
        "mask.json",
        "model.eidm",
        "trace.csv",
        "train_summary.json",
        "report.json",
        "report.csv",
        "report.txt",
        "confusion.csv",
    ] {
        assert!(sb.out().join(f).exists(), "missing {f}");
    }
    let report: serde_json::Value = serde_json::from_slice(&sb.read("report.json")).unwrap();
    assert_eq!(report["n_eval_rows"], 100);
    assert_eq!(report["model"], "CNN-BiLSTM");
    assert!(report["train_time_s"].as_f64().unwrap() > 0.0);
    assert_eq!(report["config"]["run"]["seed"], 42);

    sb.ok(&["predict"]);
    let preds = String::from_utf8(sb.read("predictions.csv")).unwrap();
    assert_eq!(preds.lines().count(), 101);
    assert!(preds.starts_with("row,predicted,label,p_attack"));

    let csv = sb.path("test.csv");
    let from_csv = sb.path("from_csv.csv");
    sb.ok(&["predict", "--csv", csv.to_str().unwrap(), "--output", from_csv.to_str().unwrap()]);
    assert_eq!(std::fs::read(&from_csv).unwrap(), sb.read("predictions.csv"));

    sb.ok(&["bench", "--repeat", "2"]);
    let bench: serde_json::Value = serde_json::from_slice(&sb.read("bench.json")).unwrap();
    assert_eq!(bench["seconds"].as_array().unwrap().len(), 2);

    for b in ["logistic", "knn"] {
        let out = sb.ok(&["eval", "--baseline", b, "--knn-k", "3", "--format", "json"]);
        assert!(out.contains("Accuracy"), "{out}");
        assert!(sb.out().join(b).join("report.json").exists());
    }
    sb.ok(&["eval", "--baseline", "logistic", "--all-features", "--format", "json"]);
    let all: serde_json::Value =
        serde_json::from_slice(&sb.read("logistic/report.json")).unwrap();
    assert_eq!(all["config"]["features"].as_array().unwrap().len(), 42);
}

#[test]
fn multiclass_run_and_head_mismatch() {
    let sb = Sandbox::new();
    sb.ingest();
    sb.ok(&["select", "--k", "12", "--label-view", "multi"]);
    sb.ok(&["train", "--task", "multi", "--epochs", "1", "--batch-size", "64"]);
    let ev = sb.ok(&["eval", "--format", "json"]);
    assert!(ev.contains("Accuracy"), "{ev}");
    let report: serde_json::Value = serde_json::from_slice(&sb.read("report.json")).unwrap();
    assert_eq!(report["confusion"]["class_names"].as_array().unwrap().len(), 10);

    let o = sb.eids(&["eval", "--task", "binary"]);
    assert_eq!(code(&o), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn reruns_are_byte_identical() {
    let sb = Sandbox::new();
    sb.ingest();
    let caches = (sb.read("train.eids"), sb.read("test.eids"), sb.read("encoder.json"));
    sb.ingest();
    assert_eq!(caches, (sb.read("train.eids"), sb.read("test.eids"), sb.read("encoder.json")));

    sb.ok(&["select", "--k", "8"]);
    sb.ok(&FAST_TRAIN);
    let first = sb.read("model.eidm");
    sb.ok(&FAST_TRAIN);
    assert_eq!(first, sb.read("model.eidm"));

    let mut reseeded = FAST_TRAIN.to_vec();
    reseeded.extend(["--seed", "7"]);
    sb.ok(&reseeded);
    assert_ne!(first, sb.read("model.eidm"));
}

#[test]
fn missing_input_file_exits_2() {
    let sb = Sandbox::new();
    let o = sb.eids(&["ingest", "--train", "/nonexistent/train.csv", "--test", "/nonexistent/test.csv"]);
    assert_eq!(code(&o), Some(2));
    let o = sb.eids(&["select"]);
    assert_eq!(code(&o), Some(2), "select without caches");
}

#[test]
fn contract_violations_exit_3() {
    let sb = Sandbox::new();
    sb.ingest();
    let o = sb.eids(&["select", "--k", "43"]);
    assert_eq!(code(&o), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    sb.ok(&["select", "--k", "5"]);
    sb.ok(&FAST_TRAIN);
    std::fs::write(sb.out().join("model.eidm"), b"not a checkpoint").unwrap();
    let o = sb.eids(&["eval"]);
    assert_eq!(code(&o), Some(3));
}

#[test]
fn config_errors_exit_4() {
    let sb = Sandbox::new();
    let o = sb.eids(&["ingest"]);
    assert_eq!(code(&o), Some(4), "no data paths and no EIDS_DATA_DIR");
    let o = sb.eids(&["train", "--lr", "fast"]);
    assert_eq!(code(&o), Some(4), "unparsable flag");
    let o = sb.eids(&["bench", "--repeat", "0"]);
    assert_eq!(code(&o), Some(4));

    let cfg = sb.path("bad.toml");
    std::fs::write(&cfg, "[train]\nlearning_rate = 0.1\n").unwrap();
    let o = sb.eids(&["--config", cfg.to_str().unwrap(), "select"]);
    assert_eq!(code(&o), Some(4), "unknown config key");

    sb.ingest();
    sb.ok(&["select", "--k", "5"]);
    let o = sb.eids(&["train", "--dropout", "1.5"]);
    assert_eq!(code(&o), Some(4));
}

#[test]
fn config_file_drives_the_run() {
    let sb = Sandbox::new();
    let cfg = sb.path("run.toml");
    std::fs::write(
        &cfg,
        format!(
            "seed = 5\n\n[data]\ntrain = {:?}\ntest = {:?}\n\n[select]\nk = 6\n\n[train]\nepochs = 1\nbatch_size = 50\n",
            sb.path("train.csv"),
            sb.path("test.csv"),
        ),
    )
    .unwrap();
    let c = cfg.to_str().unwrap();
    sb.ok(&["--config", c, "ingest"]);
    sb.ok(&["--config", c, "select"]);
    sb.ok(&["--config", c, "train"]);
    sb.ok(&["--config", c, "eval", "--format", "json"]);
    let report: serde_json::Value = serde_json::from_slice(&sb.read("report.json")).unwrap();
    assert_eq!(report["config"]["run"]["seed"], 5);
    assert_eq!(report["config"]["checkpoint"]["mask"].as_array().unwrap().len(), 6);
    assert_eq!(report["config"]["checkpoint"]["metadata"]["epochs_run"], 1);
}

fn help(args: &[&str]) -> String {
    let o = Command::new(env!("CARGO_BIN_EXE_eids"))
        .args(args)
        .arg("--help")
        .output()
        .unwrap();
    assert_eq!(code(&o), Some(0));
    String::from_utf8(o.stdout).unwrap()
}

#[test]
fn help_matches_golden_files() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let update = std::env::var_os("EIDS_UPDATE_GOLDEN").is_some();
    for sub in ["", "ingest", "select", "train", "eval", "predict", "bench"] {
        let args: Vec<&str> = if sub.is_empty() { vec![] } else { vec![sub] };
        let text = help(&args);
        let file = golden.join(format!("help-{}.txt", if sub.is_empty() { "eids" } else { sub }));
        if update {
            std::fs::write(&file, &text).unwrap();
            continue;
        }
        let want = std::fs::read_to_string(&file)
            .unwrap_or_else(|_| panic!("{} missing; run with EIDS_UPDATE_GOLDEN=1", file.display()));
        assert_eq!(text, want, "help for `{sub}` drifted from {}", file.display());
    }
}
