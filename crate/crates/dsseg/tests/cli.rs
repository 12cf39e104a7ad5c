use std::fs;
use std::path::Path;

use clap::CommandFactory;
use dsseg::cli::{run, Cli};
use dsseg::rvol;
use dsseg_core::{ConvVariant, Network, NetworkConfig, Volume, VolumeShape};

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn dsseg(args: &[&str]) -> Output {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("dsseg").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    Output { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

const TINY_PHANTOM: &str = r#"{"schema_version": 1, "phantom": {"shape": [8, 32, 32], "organ_center": [3.5, 15.5, 15.5],
  "organ_radii": [3.5, 10.0, 12.0], "lesion_count": 1, "lesion_radius": [1, 2], "seed": 4}}"#;

const TINY_RUN: &str = r#"{"schema_version": 1,
  "network": {"depth": 2, "base_channels": 4},
  "training": {"batch_size": 2, "iterations_per_epoch": 2,
               "schedule": {"stage1_epochs": 2, "stage2_epochs": 1}, "validation_volumes": 1}}"#;

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let o = dsseg(&[]);
    assert_eq!(o.code, 2);
    assert!(o.stderr.contains("Usage:"));
    assert!(o.stdout.is_empty());
}

#[test]
fn unknown_flags_and_missing_values_are_usage_errors() {
    assert_eq!(dsseg(&["sample", "--bogus"]).code, 2);
    assert_eq!(
        dsseg(&["sample", "--volume", "x.rvol", "--center", "two", "--thickness", "3", "--stride", "1"]).code,
        2
    );
    assert_eq!(dsseg(&["frobnicate"]).code, 2);
}

#[test]
fn every_subcommand_help_lists_its_flags() {
    let expected: &[(&str, &[&str])] = &[
        ("phantom", &["--spec", "--out", "--seed", "--count"]),
        ("sample", &["--volume", "--center", "--thickness", "--stride"]),
        ("params", &["--config"]),
        ("train", &["--data", "--config", "--out", "--seed", "--log"]),
        ("predict", &["--checkpoint", "--volume", "--out"]),
        ("evaluate", &["--pred-dir", "--gt-dir"]),
    ];
    let cmd = Cli::command();
    assert_eq!(cmd.get_subcommands().count(), expected.len());
    for (name, flags) in expected {
        let o = dsseg(&[name, "--help"]);
        assert_eq!(o.code, 0, "{name}");
        let listed: Vec<&str> = o
            .stdout
            .split_whitespace()
            .filter(|w| w.starts_with("--"))
            .map(|w| w.trim_end_matches(','))
            .filter(|w| *w != "--help")
            .collect();
        for flag in *flags {
            assert!(listed.contains(flag), "{name} help lacks {flag}:\n{}", o.stdout);
        }
        let declared: Vec<String> = cmd
            .find_subcommand(name)
            .unwrap()
            .get_arguments()
            .filter_map(|a| a.get_long().map(|l| format!("--{l}")))
            .collect();
        assert_eq!(declared.len(), flags.len(), "{name}: {declared:?}");
    }
}

#[test]
fn sample_prints_dense_neighbours() {
    let dir = tempfile::tempdir().unwrap();
    let vol = dir.path().join("ten.rvol");
    rvol::write_volume(&Volume::filled(VolumeShape::new(10, 2, 2), 0.0).unwrap(), &vol).unwrap();
    let o = dsseg(&["sample", "--volume", p(&vol), "--center", "2", "--thickness", "3", "--stride", "1"]);
    assert_eq!((o.code, o.stdout.as_str()), (0, "1\n2\n3\n"));
    let o = dsseg(&["sample", "--volume", p(&vol), "--center", "10", "--thickness", "5", "--stride", "2"]);
    assert_eq!(o.stdout, "6\n8\n10\n10\n10\n");
}

#[test]
fn runtime_failures_exit_1_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.rvol");
    let o = dsseg(&["sample", "--volume", p(&missing), "--center", "1", "--thickness", "3", "--stride", "1"]);
    assert_eq!(o.code, 1);
    assert_eq!(o.stderr.lines().count(), 1, "{}", o.stderr);
    assert!(o.stderr.starts_with("error: "));

    let vol = dir.path().join("v.rvol");
    rvol::write_volume(&Volume::filled(VolumeShape::new(4, 2, 2), 0.0).unwrap(), &vol).unwrap();
    let o = dsseg(&["sample", "--volume", p(&vol), "--center", "1", "--thickness", "4", "--stride", "1"]);
    assert_eq!(o.code, 1);
    assert_eq!(o.stderr.lines().count(), 1);
}

#[test]
fn params_matches_allocated_networks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.json");
    fs::write(&cfg_path, TINY_RUN).unwrap();
    let o = dsseg(&["params", "--config", p(&cfg_path)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let base = NetworkConfig { depth: 2, base_channels: 4, ..Default::default() };
    let count = |v| Network::build(&base.with_variant(v), 0).unwrap().total_params();
    let (std, ds) = (count(ConvVariant::Standard), count(ConvVariant::DepthwiseSeparable));
    assert_eq!(o.stdout, format!("standard\t{std}\ndepthwise-separable\t{ds}\nratio\t{:.6}\n", ds as f64 / std as f64));
}

#[test]
fn phantom_generation_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("ph.json");
    fs::write(&spec, TINY_PHANTOM).unwrap();
    let (a, b, c) = (dir.path().join("a.rvol"), dir.path().join("b.rvol"), dir.path().join("c.rvol"));
    assert_eq!(dsseg(&["phantom", "--spec", p(&spec), "--out", p(&a), "--seed", "8"]).code, 0);
    assert_eq!(dsseg(&["phantom", "--spec", p(&spec), "--out", p(&b), "--seed", "8"]).code, 0);
    assert_eq!(dsseg(&["phantom", "--spec", p(&spec), "--out", p(&c), "--seed", "9"]).code, 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    let v = rvol::read_volume(&a).unwrap();
    assert_eq!(v.shape(), VolumeShape::new(8, 32, 32));
    assert!(v.labels().unwrap().contains(&2));
}

#[test]
fn train_predict_evaluate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let (spec, run_cfg) = (root.join("ph.json"), root.join("run.json"));
    fs::write(&spec, TINY_PHANTOM).unwrap();
    fs::write(&run_cfg, TINY_RUN).unwrap();
    let data = root.join("data");
    let o = dsseg(&["phantom", "--spec", p(&spec), "--out", p(&data), "--count", "3"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_eq!(dsseg::dataset::list_volumes(&data).unwrap().len(), 3);

    let train = |out: &Path, log: &Path| {
        dsseg(&["train", "--data", p(&data), "--config", p(&run_cfg), "--out", p(out), "--seed", "5", "--log", p(log)])
    };
    let (ck1, ck2, log1, log2) = (root.join("a.rnet"), root.join("b.rnet"), root.join("a.tsv"), root.join("b.tsv"));
    let first = train(&ck1, &log1);
    assert_eq!(first.code, 0, "{}", first.stderr);
    let second = train(&ck2, &log2);
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(fs::read(&ck1).unwrap(), fs::read(&ck2).unwrap());
    assert_eq!(fs::read_to_string(&log1).unwrap(), first.stdout);
    let lines: Vec<&str> = first.stdout.lines().collect();
    assert_eq!(lines[0], "epoch\tstage\tstrides\ttrain_loss\tval_dice_1\tval_dice_2");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("0\tDS\t") && lines[3].starts_with("2\tD\t1:4\t"));
    assert!(first.stderr.contains("epoch 2"));

    let (pred_dir, gt_dir) = (root.join("pred"), root.join("gt"));
    fs::create_dir_all(&pred_dir).unwrap();
    fs::create_dir_all(&gt_dir).unwrap();
    let src = data.join("phantom_000.rvol");
    fs::copy(&src, gt_dir.join("case.rvol")).unwrap();
    let o = dsseg(&["predict", "--checkpoint", p(&ck1), "--volume", p(&src), "--out", p(&pred_dir.join("case.rvol"))]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let (input, pred) = (rvol::read_volume(&src).unwrap(), rvol::read_volume(pred_dir.join("case.rvol")).unwrap());
    assert_eq!(pred.shape(), input.shape());
    assert_eq!(pred.intensities(), input.intensities());
    assert!(pred.labels().unwrap().iter().all(|&l| l <= 2));

    let o = dsseg(&["evaluate", "--pred-dir", p(&pred_dir), "--gt-dir", p(&gt_dir)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let rows: Vec<Vec<&str>> = o.stdout.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows[0], ["class", "mean_dice", "std", "volumes"]);
    assert_eq!((rows[1][0], rows[2][0], rows[1][3]), ("organ", "lesion", "1"));
}

#[test]
fn evaluate_table_is_fixed() {
    let dir = tempfile::tempdir().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    fs::create_dir_all(&pred).unwrap();
    fs::create_dir_all(&gt).unwrap();
    let shape = VolumeShape::new(1, 1, 4);
    let write = |dir: &Path, name: &str, labels: [u8; 4]| {
        let v = Volume::new(shape, vec![0.0; 4], Some(labels.to_vec()), [1.0; 3]).unwrap();
        rvol::write_volume(&v, dir.join(name)).unwrap();
    };
    // a: organ 2·1/(2+1), lesion both empty; b: organ exact, lesion missed
    write(&gt, "a.rvol", [1, 1, 0, 0]);
    write(&pred, "a.rvol", [1, 0, 0, 0]);
    write(&gt, "b.rvol", [1, 0, 2, 0]);
    write(&pred, "b.rvol", [1, 0, 0, 0]);
    let o = dsseg(&["evaluate", "--pred-dir", p(&pred), "--gt-dir", p(&gt)]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let organ = [2.0 / 3.0, 1.0];
    let (m, s) = (organ.iter().sum::<f64>() / 2.0, ((organ[0] - organ[1]) / 2.0f64).abs());
    assert_eq!(
        o.stdout,
        format!("class\tmean_dice\tstd\tvolumes\norgan\t{m:.6}\t{s:.6}\t2\nlesion\t0.500000\t0.500000\t2\n")
    );
    fs::remove_file(pred.join("b.rvol")).unwrap();
    assert_eq!(dsseg(&["evaluate", "--pred-dir", p(&pred), "--gt-dir", p(&gt)]).code, 1);
}
