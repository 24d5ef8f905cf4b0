use std::path::Path;
use std::process::{Command, Output};

use loopsim::output::{parse_metrics_csv, METRICS_HEADER, STEPS_HEADER};
use loopsim::svg::{emit_svg, stroke_style, Panel, Series};
use loopsim_core::data::{synthesize, write_csv};
use loopsim_core::loop_sim::{run_simulation, SimulationConfig};
use loopsim_core::models::ModelFamily;

fn loopsim(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loopsim"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = loopsim(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out.stderr.is_empty(), "stderr on success");
    out
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn default_run_writes_documented_files() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["run", "--out", "o"], dir.path());
    let o = dir.path().join("o");
    let metrics = read(o.join("metrics.csv"));
    assert_eq!(metrics.lines().next(), Some(METRICS_HEADER));
    assert_eq!(read(o.join("steps.csv")).lines().next(), Some(STEPS_HEADER));
    for file in ["metrics.csv", "steps.csv", "summary.json", "plot_ridge_r2.svg", "plot_ridge_mae.svg"] {
        let text = read(o.join(file));
        assert!(!text.contains('\r'), "{file} has CR");
        assert!(text.ends_with('\n'));
    }
    let summary: serde_json::Value = serde_json::from_str(&read(o.join("summary.json"))).unwrap();
    assert_eq!(summary["config"]["p"], 0.7);
    assert_eq!(summary["config"]["s"], 0.3);
    assert_eq!(summary["config"]["steps_per_round"], 20);
    assert_eq!(summary["config"]["model"], "ridge");
    assert_eq!(summary["config"]["dataset"]["n"], 506);
    let checklist = &summary["runs"][0]["checklist"];
    assert_eq!(checklist["q2_p_gt_half_and_s_lt_one"]["value"], true);
    assert_eq!(checklist["verdict"], "loop indicated");
    assert!(checklist["runtime_flags"]["baseline_alarm"].is_boolean());
}

#[test]
fn metrics_csv_round_trips_round_records() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["run", "--out", "o", "--m", "30", "--p", "0.9", "--seed", "4"], dir.path());
    let rows = parse_metrics_csv(&read(dir.path().join("o/metrics.csv"))).unwrap();

    let ds = synthesize(506, 13, 0.2, 1).unwrap();
    let expected = run_simulation(&ds, &SimulationConfig::new(ModelFamily::Ridge, 0.9, 0.3, 30, 4)).unwrap();
    assert_eq!(rows.len(), expected.rounds.len());
    for (row, rec) in rows.iter().zip(&expected.rounds) {
        assert_eq!(row.run_id, "ridge_p0.9_s0.3_M30");
        assert_eq!(row.round, rec.round);
        assert_eq!(row.partial, rec.partial);
        assert_eq!(row.r2.to_bits(), rec.r2.to_bits());
        assert_eq!(row.mae.to_bits(), rec.mae.to_bits());
        assert_eq!(row.sigma2.to_bits(), rec.sigma_f2.to_bits());
        assert_eq!((row.p, row.s, row.steps_per_round, row.seed), (0.9, 0.3, 30, 4));
    }
    assert!(rows.last().unwrap().partial);
}

#[test]
fn identical_invocations_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let files = ["metrics.csv", "steps.csv", "summary.json", "plot_ridge_r2.svg"];
    for args in [
        vec!["run", "--out", "o", "--model", "ridge"],
        vec!["sweep", "--out", "o", "--p-range", "0.5,0.9", "--s-range", "0.3"],
    ] {
        ok(&args, dir.path());
        let first: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(dir.path().join("o").join(f)).unwrap()).collect();
        ok(&args, dir.path());
        for (f, bytes) in files.iter().zip(first) {
            assert_eq!(std::fs::read(dir.path().join("o").join(f)).unwrap(), bytes, "{f}");
        }
    }
}

#[test]
fn sweep_grid_has_four_runs_and_panels() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["sweep", "--out", "o", "--p-range", "0.5,0.7", "--s-range", "0.3,0.9", "--sequential"], dir.path());
    let rows = parse_metrics_csv(&read(dir.path().join("o/metrics.csv"))).unwrap();
    let mut ids: Vec<&str> = rows.iter().map(|r| r.run_id.as_str()).collect();
    ids.dedup();
    assert_eq!(ids.len(), 4);

    let svg = read(dir.path().join("o/plot_ridge_r2.svg"));
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let texts: Vec<&str> = doc.descendants().filter(|n| n.is_element()).filter_map(|n| n.text()).collect();
    for title in ["p = 0.7, s = 0.3", "p = 0.7, s = 0.9", "p = 0.5, s = 0.3", "p = 0.5, s = 0.9"] {
        assert_eq!(texts.iter().filter(|t| **t == title).count(), 1, "{title}");
    }
    assert!(texts.contains(&"round r (retrains)"));
    assert!(texts.contains(&"R² (unitless)"));
    let mae = read(dir.path().join("o/plot_ridge_mae.svg"));
    roxmltree::Document::parse(&mae).unwrap();
    assert!(mae.contains("MAE (log price)"));
}

#[test]
fn svg_edge_cases() {
    let one = Panel {
        title: "p = 1, s = 0".into(),
        series: vec![Series { label: "M = 20".into(), points: vec![(1.0, 0.9)] }],
    };
    let svg = emit_svg("t", "round", "R²", &[one], 1);
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("circle")).count(), 1);
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polyline")).count(), 0);

    let two = Panel {
        title: "two".into(),
        series: vec![
            Series { label: "M = 1".into(), points: vec![(1.0, 0.5), (2.0, 0.6)] },
            Series { label: "M = 20".into(), points: vec![(1.0, 0.4), (2.0, 0.7)] },
        ],
    };
    let svg = emit_svg("t", "round", "R²", &[two], 1);
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let lines: Vec<(&str, &str)> = doc
        .descendants()
        .filter(|n| n.has_tag_name("polyline"))
        .map(|n| (n.attribute("stroke").unwrap(), n.attribute("stroke-dasharray").unwrap()))
        .collect();
    assert_eq!(lines, vec![stroke_style(0), stroke_style(1)]);
    assert_ne!(lines[0], lines[1]);
    let texts: Vec<&str> = doc.descendants().filter(|n| n.is_element()).filter_map(|n| n.text()).collect();
    assert!(texts.contains(&"M = 1") && texts.contains(&"M = 20"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.conf"), "# test\nuser.p = 0.5\nuser.s = 0.9\noutput.dir = from_file\n").unwrap();
    ok(&["run", "--config", "run.conf", "--p", "0.7"], dir.path());
    let rows = parse_metrics_csv(&read(dir.path().join("from_file/metrics.csv"))).unwrap();
    assert!(rows.iter().all(|r| r.p == 0.7 && r.s == 0.9));
}

#[test]
fn config_errors_exit_nonzero_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("dataset.csv = a.csv\ndataset.synthetic.n = 100\n", "conflicting dataset sources"),
        ("user.pp = 1\n", "unknown key `user.pp`"),
        ("sim.steps_per_round = many\n", "`sim.steps_per_round` expects"),
    ];
    for (text, message) in cases {
        std::fs::write(dir.path().join("bad.conf"), text).unwrap();
        let out = loopsim(&["run", "--config", "bad.conf"], dir.path());
        assert!(!out.status.success());
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.starts_with("error:") && stderr.contains(message), "{stderr}");
    }
    let out = loopsim(&["run", "--csv", "missing.csv"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.csv"));
}

#[test]
fn csv_dataset_source() {
    let dir = tempfile::tempdir().unwrap();
    let ds = synthesize(506, 13, 0.2, 1).unwrap();
    write_csv(&ds, dir.path().join("housing.csv"), "MEDV").unwrap();
    assert_eq!(read(dir.path().join("housing.csv")).lines().count(), 507);
    ok(&["run", "--csv", "housing.csv", "--out", "o"], dir.path());
    let summary: serde_json::Value = serde_json::from_str(&read(dir.path().join("o/summary.json"))).unwrap();
    assert_eq!(summary["config"]["dataset"]["kind"], "csv");
    assert_eq!(summary["dataset"]["n_rows"], 506);
    assert_eq!(summary["dataset"]["steps"], 355);
}

#[test]
fn detect_reports_contraction_and_checklist() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("detect.conf"),
        "dataset.synthetic.n = 200\ndetect.contraction.pairs = 20\nuser.p = 1\nchecklist.q1 = false\n",
    )
    .unwrap();
    let out = ok(&["detect", "--config", "detect.conf", "--out", "o"], dir.path());
    assert!(String::from_utf8_lossy(&out.stdout).contains("summary.json"));
    let summary: serde_json::Value = serde_json::from_str(&read(dir.path().join("o/summary.json"))).unwrap();
    assert_eq!(summary["command"], "detect");
    assert_eq!(summary["contraction"]["pairs_sampled"], 20);
    assert_eq!(summary["checklist"]["q3_contraction"], summary["contraction"]);
    let detected = summary["contraction"]["contraction_detected"].as_bool().unwrap();
    let verdict = if detected { "loop indicated" } else { "no loop indicated" };
    assert_eq!(summary["checklist"]["verdict"], verdict);
    assert!(!dir.path().join("o/metrics.csv").exists());
}

#[test]
fn help_lists_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["run", "--help"], dir.path());
    let help = String::from_utf8_lossy(&out.stdout);
    for needle in ["user.p", "0.7", "sim.steps_per_round", "sweep.p", "--config"] {
        assert!(help.contains(needle), "{needle}");
    }
    let out = ok(&["sweep", "--help"], dir.path());
    assert!(String::from_utf8_lossy(&out.stdout).contains("--p-range"));
}
