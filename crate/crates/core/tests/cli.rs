use std::path::Path;
use std::process::{Command, Output};

fn owc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_owc-hrs"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn channel_csv_shape() {
    let dir = tempfile::tempdir().unwrap();
    let o = owc(dir.path(), &["channel", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "user,ap,gain");
    assert_eq!(lines.len(), 1 + 6 * 4 + 1);
    assert_eq!(lines[1].split(',').take(2).collect::<Vec<_>>(), ["1", "1"]);
    assert!(lines[25].starts_with("noise_variance="));
    // at least 12 significant digits
    let gain = lines[1].split(',').nth(2).unwrap();
    assert!(gain.split('e').next().unwrap().replace(['.', '-'], "").len() >= 12);
}

#[test]
fn rates_and_optimize_footers() {
    let dir = tempfile::tempdir().unwrap();
    for scheme in ["hrs", "hrs-uniform", "rs", "oma"] {
        let o = owc(dir.path(), &["rates", "--scheme", scheme, "--seed", "2"]);
        assert_eq!(o.status.code(), Some(0), "{scheme}");
        let text = stdout(&o);
        assert!(text.starts_with("message,user,group,sinr,rate\n"));
        assert!(text.lines().last().unwrap().starts_with("sum_rate="));
    }
    let o = owc(dir.path(), &["optimize", "--seed", "2", "--utility", "sum"]);
    let text = stdout(&o);
    assert!(text.starts_with("slot,index,power\noc,1,"));
    for key in ["utility=", "sum_rate=", "feasible=", "qos_met="] {
        assert!(text.lines().any(|l| l.starts_with(key)), "{key}");
    }
    let expect = if text.contains("qos_met=true") { 0 } else { 2 };
    assert_eq!(o.status.code(), Some(expect));
}

#[test]
fn unmet_rate_target_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("hard.toml"), "[power]\nr_min = 1000.0\n").unwrap();
    let o = owc(dir.path(), &["optimize", "--config", "hard.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("qos_met=false"));
}

#[test]
fn usage_and_parse_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[room]\nlenght = 5.0\n").unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["frobnicate"],
        vec!["channel", "--seed", "abc"],
        vec!["rates", "--scheme", "tdma"],
        vec!["channel", "--config", "missing.toml"],
        vec!["channel", "--config", "bad.toml"],
        vec!["gen-dataset", "--n", "20"],
        vec!["gen-dataset", "--n", "5", "--out", "d.csv"],
        vec!["eval", "--model", "nope.txt", "--data", "nope.csv"],
        vec!["sweep", "--variable", "users", "--values", "40"],
        vec!["channel", "--threads", "0"],
    ];
    for args in cases {
        let o = owc(dir.path(), &args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!o.stderr.is_empty(), "{args:?}");
    }
    assert_eq!(owc(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn dataset_train_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let o = owc(p, &["gen-dataset", "--n", "15", "--utility", "sum", "--out", "d.csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let header = std::fs::read_to_string(p.join("d.csv")).unwrap();
    assert!(header.starts_with(
        "sample_id,demand_1,demand_2,demand_3,demand_4,demand_5,demand_6,gain_1,gain_2,gain_3,gain_4,gain_5,gain_6,\
         pp_1,pp_2,pp_3,pp_4,pp_5,pp_6,pic_1,pic_2,ptotal,split\n"
    ));
    assert!(p.join("d.csv.meta.json").exists());
    let o = owc(p, &["train", "--data", "d.csv", "--epochs", "2", "--out", "m.txt"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let loss = std::fs::read_to_string(p.join("m.txt.loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 1 + 3);
    let o = owc(p, &["eval", "--model", "m.txt", "--data", "d.csv", "--split", "validation"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("feasible_fraction=1"));
    let o = owc(p, &["report", "--model", "m.txt", "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("scheme dnn"));
}
