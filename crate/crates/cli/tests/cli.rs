use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use egan_core::data::{stream, Stream};
use egan_core::nets::{gen_forward, MlpSpec};
use egan_core::{Checkpoint, Network, NoiseSampler};
use sha2::{Digest, Sha256};
use tempfile::TempDir;

const SMALL: &str = "\
[generator]
width = 8
depth = 2

[discriminator]
width = 8
depth = 2

[metrics]
eval_samples = 200
kde_resolution = 16
";

struct Sandbox {
    dir: TempDir,
}

impl Sandbox {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        fs::write(dir.path().join("small.toml"), SMALL).unwrap();
        Sandbox { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self) -> String {
        self.path("small.toml").display().to_string()
    }

    fn egan(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_egan")).args(args).output().unwrap()
    }

    /// Runs `command` with the small config into `out` and returns the output.
    fn run(&self, command: &str, out: &str, extra: &[&str]) -> Output {
        let out = self.path(out).display().to_string();
        let config = self.config();
        let mut args = vec![command, "--config", &config, "--out", &out];
        args.extend_from_slice(extra);
        self.egan(&args)
    }

    fn read(&self, rel: &str) -> String {
        fs::read_to_string(self.path(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
    }
}

fn ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\nstderr: {}", o.status.code(), String::from_utf8_lossy(&o.stderr));
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines().map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn train_writes_one_row_per_step_and_a_manifest() {
    let s = Sandbox::new();
    ok(&s.run("train", "run", &["--dataset", "ring8", "--iterations", "5", "--seed", "7"]));
    let steps = s.read("run/steps.csv");
    assert_eq!(steps.lines().count(), 1 + 5);
    assert_eq!(s.read("run/samples.csv").lines().count(), 1 + 200);
    for f in ["config.toml", "final.ckpt", "coverage.csv", "kde.csv", "selection.csv"] {
        assert!(s.path("run").join(f).is_file(), "{f} missing");
    }

    let manifest = s.read("run/manifest.txt");
    assert!(manifest.contains("seed 7\n"));
    assert!(manifest.contains("status ok\n"));
    let artifacts = manifest.split("artifacts\n").nth(1).unwrap();
    assert_eq!(artifacts.lines().count(), 7);
    for line in artifacts.lines() {
        let (sum, name) = line.trim().split_once("  ").unwrap();
        let bytes = fs::read(s.path("run").join(name)).unwrap();
        assert_eq!(sum, format!("{:x}", Sha256::digest(&bytes)), "{name}");
    }
}

#[test]
fn identical_invocations_are_bitwise_identical() {
    let s = Sandbox::new();
    let args = ["--iterations", "6", "--seed", "3", "--checkpoint-every", "3"];
    ok(&s.run("train", "a", &args));
    ok(&s.run("train", "b", &args));
    for f in ["steps.csv", "final.ckpt", "samples.csv", "checkpoints/step-000003.ckpt", "checkpoints/step-000006.ckpt"] {
        assert_eq!(fs::read(s.path("a").join(f)).unwrap(), fs::read(s.path("b").join(f)).unwrap(), "{f}");
    }
    let tail = |d: &str| s.read(&format!("{d}/manifest.txt")).split("artifacts\n").nth(1).unwrap().to_string();
    assert_eq!(tail("a"), tail("b"));
}

#[test]
fn snapshot_config_reproduces_the_run() {
    let s = Sandbox::new();
    ok(&s.run("train", "a", &["--iterations", "4", "--seed", "11", "--gamma", "0.2"]));
    let snapshot = s.path("a/config.toml").display().to_string();
    let out = s.path("b").display().to_string();
    ok(&s.egan(&["train", "--config", &snapshot, "--out", &out]));
    assert_eq!(s.read("a/steps.csv"), s.read("b/steps.csv"));
    assert!(s.read("a/config.toml").contains("gamma = 0.2"));
}

#[test]
fn zero_gamma_survivors_maximize_quality() {
    let s = Sandbox::new();
    ok(&s.run("train", "run", &["--iterations", "15", "--gamma", "0"]));
    let rows = csv_rows(&s.read("run/steps.csv"));
    let header = &rows[0];
    let col = |name: &str| header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no {name}"));
    let fq: Vec<usize> = (0..3).map(|c| col(&format!("child{c}_fq"))).collect();
    let survivors = col("survivors");
    for row in &rows[1..] {
        let q: Vec<f64> = fq.iter().map(|&i| row[i].parse().unwrap()).collect();
        let best: usize = row[survivors].parse().unwrap();
        assert!(q.iter().all(|&v| v <= q[best]), "{row:?}");
    }
}

#[test]
fn baseline_accepts_exactly_three_objectives() {
    let s = Sandbox::new();
    for (i, obj) in ["minimax", "heuristic", "leastsq"].iter().enumerate() {
        let out = format!("ok{i}");
        ok(&s.run("baseline", &out, &["--objective", obj, "--iterations", "3"]));
        let steps = s.read(&format!("{out}/steps.csv"));
        assert_eq!(steps.lines().count(), 4);
        assert!(!steps.lines().next().unwrap().contains("fq"));
        assert!(!s.path(&out).join("selection.csv").exists());
    }
    for bad in ["least_squares", "wgan", "Heuristic"] {
        let o = s.run("baseline", "bad", &["--objective", bad, "--iterations", "3"]);
        assert_eq!(code(&o), 2, "{bad}");
    }
    assert!(!s.path("bad").exists());
}

#[test]
fn config_errors_name_the_key() {
    let s = Sandbox::new();
    fs::write(s.path("typo.toml"), "train.gama = 0.3\n").unwrap();
    let out = s.path("o1").display().to_string();
    let o = s.egan(&["train", "--config", s.path("typo.toml").to_str().unwrap(), "--out", &out]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("gama"), "{}", stderr(&o));

    let o = s.run("train", "o2", &["--gamma", "-1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("train.gamma"), "{}", stderr(&o));

    fs::write(s.path("grid.toml"), "dataset.name = \"grid\"\ndataset.radius = 3.0\n").unwrap();
    let out = s.path("o3").display().to_string();
    let o = s.egan(&["train", "--config", s.path("grid.toml").to_str().unwrap(), "--out", &out]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("dataset.radius"), "{}", stderr(&o));
    assert!(!s.path("o1").exists() && !s.path("o2").exists() && !s.path("o3").exists());
}

#[test]
fn flags_override_the_config_file() {
    let s = Sandbox::new();
    fs::write(s.path("small.toml"), format!("{SMALL}\n[run]\nseed = 1\niterations = 9\n")).unwrap();
    ok(&s.run("train", "run", &["--seed", "2", "--iterations", "2"]));
    assert!(s.read("run/manifest.txt").contains("seed 2\n"));
    assert_eq!(s.read("run/steps.csv").lines().count(), 3);
}

#[test]
fn existing_outputs_are_never_overwritten() {
    let s = Sandbox::new();
    fs::create_dir(s.path("used")).unwrap();
    fs::write(s.path("used/steps.csv"), "precious").unwrap();
    let o = s.run("train", "used", &["--iterations", "1"]);
    assert_eq!(code(&o), 2);
    assert_eq!(s.read("used/steps.csv"), "precious");
}

#[test]
fn numeric_failure_exits_3_with_last_good_checkpoint() {
    let s = Sandbox::new();
    fs::write(s.path("small.toml"), format!("{SMALL}\n[adam]\nlr = 1e300\n")).unwrap();
    let o = s.run("train", "run", &["--iterations", "20"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let err = stderr(&o);
    let path = err.lines().find_map(|l| l.strip_prefix("last good checkpoint: ")).expect("checkpoint path");
    let ckpt = Checkpoint::load(Path::new(path)).unwrap();
    let rows = s.read("run/steps.csv").lines().count() as u64 - 1;
    assert_eq!(ckpt.step, rows);
    assert!(s.read("run/manifest.txt").contains(&format!("status failed at step {rows}")));
}

#[test]
fn eval_reports_are_reproducible() {
    let s = Sandbox::new();
    ok(&s.run("train", "run", &["--iterations", "3"]));
    let ckpt = s.path("run/final.ckpt").display().to_string();
    ok(&s.run("eval", "e1", &["--checkpoint", &ckpt, "--samples", "300", "--seed", "5"]));
    ok(&s.run("eval", "e2", &["--checkpoint", &ckpt, "--samples", "300", "--seed", "5"]));
    assert_eq!(s.read("e1/samples.csv").lines().count(), 301);
    for f in ["samples.csv", "coverage.csv", "kde.csv"] {
        assert_eq!(s.read(&format!("e1/{f}")), s.read(&format!("e2/{f}")), "{f}");
    }
    assert!(s.read("e1/kde.csv").starts_with("# extent_min=-6,extent_max=6,resolution=16,bandwidth=0.1"));

    let o = s.run("eval", "e3", &["--checkpoint", &ckpt, "--samples", "0"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn eval_rejects_unusable_checkpoints() {
    let s = Sandbox::new();
    let mut rng = stream(0, Stream::Init);
    let bad = Checkpoint {
        step: 0,
        generators: vec![Network::init(MlpSpec::generator(2, 3, 4, 1), &mut rng).unwrap()],
        discriminator: Network::init(MlpSpec::discriminator(3, 4, 1), &mut rng).unwrap(),
    };
    bad.save(&s.path("3d.ckpt")).unwrap();
    fs::write(s.path("junk.ckpt"), "not a checkpoint").unwrap();
    for name in ["3d.ckpt", "junk.ckpt", "missing.ckpt"] {
        let ckpt = s.path(name).display().to_string();
        let o = s.run("eval", "e", &["--checkpoint", &ckpt]);
        assert_eq!(code(&o), 2, "{name}: {}", stderr(&o));
        let o = s.run("interp", "i", &["--checkpoint", &ckpt]);
        assert_eq!(code(&o), 2, "{name}: {}", stderr(&o));
    }
}

#[test]
fn interpolation_endpoints_match_the_generator() {
    let s = Sandbox::new();
    ok(&s.run("train", "run", &["--iterations", "3"]));
    let ckpt = s.path("run/final.ckpt").display().to_string();
    ok(&s.run("interp", "two", &["--checkpoint", &ckpt, "--steps", "2", "--seed", "9"]));
    ok(&s.run("interp", "i1", &["--checkpoint", &ckpt, "--steps", "7", "--seed", "9"]));
    ok(&s.run("interp", "i2", &["--checkpoint", &ckpt, "--steps", "7", "--seed", "9"]));
    assert_eq!(s.read("i1/interp.csv"), s.read("i2/interp.csv"));

    let two = csv_rows(&s.read("two/interp.csv"));
    assert_eq!(two.len(), 3);
    let seven = csv_rows(&s.read("i1/interp.csv"));
    assert_eq!(seven.len(), 8);

    let gen = Checkpoint::load(Path::new(&ckpt)).unwrap().generators.remove(0);
    let z = NoiseSampler::new(2).unwrap().sample(2, &mut stream(9, Stream::Eval)).unwrap();
    let direct = gen_forward(&gen, &z).unwrap();
    for (row, r) in [(&seven[1], 0), (&seven[7], 1), (&two[1], 0), (&two[2], 1)] {
        let x: f64 = row[4].parse().unwrap();
        let y: f64 = row[5].parse().unwrap();
        assert_eq!([x, y], [direct.row(r)[0], direct.row(r)[1]]);
    }

    let o = s.run("interp", "one", &["--checkpoint", &ckpt, "--steps", "1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn csv_datasets_train_without_coverage() {
    let s = Sandbox::new();
    fs::write(s.path("pts.csv"), "0,1\n1,0\n-1,0\n0,-1\n").unwrap();
    let data = s.path("pts.csv").display().to_string();
    ok(&s.run("train", "run", &["--dataset", &data, "--iterations", "2"]));
    assert!(s.path("run/samples.csv").is_file());
    assert!(!s.path("run/coverage.csv").exists());

    fs::write(s.path("broken.csv"), "0,1\nx,y\n").unwrap();
    let data = s.path("broken.csv").display().to_string();
    let o = s.run("train", "bad", &["--dataset", &data, "--iterations", "2"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}
