use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use pnr_core::coincidence::{aggregate, ClickHistogram, WindowSchedule};
use pnr_core::fitter::fit;
use pnr_core::io::config::RunConfig;
use pnr_core::io::histogram::HistogramFile;
use pnr_core::io::snr_files::read_surface_file;
use pnr_core::io::surface::SurfaceFile;
use pnr_core::io::tags::{read_tags_file, write_tags_file};
use pnr_core::pipeline::simulate_level;
use pnr_core::snr::{snr_surface, SnrParams};
use pnr_core::{click_distribution, snr_db, ClickModelParams, TagRecord, TimeTagStream};

const TINY: &str = r#"
seed = 11
detectors.count = 2
sim.duration = "10ms"
sweep.windows = ["10ns", "1us", "5us"]
sweep.alpha_sq = [2.0, 12.0]
output.write_tags = true
"#;

fn pnr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pnr"))
        .args(args)
        .env_remove("PNR_OUT_DIR")
        .output()
        .expect("run pnr")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn tiny_pipeline_is_fast_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let start = Instant::now();
    let o = pnr(&["pipeline", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(start.elapsed().as_secs_f64() < 10.0);
    let o = pnr(&["pipeline", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap(), "--workers", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (ta, tb) = (tree(&a), tree(&b));
    assert_eq!(ta, tb);
    for name in ["count_rates.csv", "click_stats.csv", "distribution.csv", "surface.txt", "tags/level_00.tags"] {
        assert!(ta.contains_key(Path::new(name)), "missing {name}");
    }

    let dist = String::from_utf8(ta[Path::new("distribution.csv")].clone()).unwrap();
    let mut sums = [0.0; 3];
    for line in dist.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        for (s, v) in sums.iter_mut().zip(&f[1..]) {
            *s += v.parse::<f64>().unwrap();
        }
    }
    for s in sums {
        assert!((s - 1.0).abs() < 1e-9, "{dist}");
    }
    assert!(dist.lines().last().unwrap().starts_with("2+,"));

    let surface = SurfaceFile::read_file(&a.join("surface.txt")).unwrap();
    assert_eq!(surface.rows.len(), 6);
}

#[test]
fn seed_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(pnr(&["simulate", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]).status.success());
    let o = pnr(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "12", "--out", b.to_str().unwrap()]);
    assert!(o.status.success());
    assert_ne!(tree(&a), tree(&b));
}

#[test]
fn stagewise_commands_match_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = write_config(dir.path(), TINY);
    let cfg = RunConfig::from_toml(TINY, "tiny").unwrap();
    let out = dir.path().join("out");
    let c = cfg_path.to_str().unwrap();
    let o = pnr(&["simulate", "--config", c, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let tags = out.join("tags/level_01.tags");
    let o = pnr(&["aggregate", "--config", c, "--out", out.to_str().unwrap(), tags.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));

    let (_, stream) = read_tags_file(&tags).unwrap();
    assert_eq!(stream, simulate_level(&cfg, 1).unwrap());
    let hist_path = out.join("hist/level_01_w001000.hist");
    let file = HistogramFile::read_file(&hist_path).unwrap();
    assert_eq!(file.hist, aggregate(&stream, &WindowSchedule::gated(1000, stream.gate_ticks)).unwrap());
    assert_eq!(file.alpha_sq, Some(12.0));

    let fit_out = dir.path().join("fit");
    let o = pnr(&["fit", "--config", c, "--out", fit_out.to_str().unwrap(), hist_path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let surface = SurfaceFile::read_file(&fit_out.join("surface.txt")).unwrap();
    assert_eq!(surface.rows.len(), 1);
    let direct = fit(&file.hist, &cfg.fit_config(1e-6, &file.hist)).unwrap();
    assert_eq!(surface.rows[0].mu, direct.params.mu);
    assert_eq!(surface.rows[0].chi_squared, direct.chi_squared);

    let again = dir.path().join("fit2");
    assert!(pnr(&["fit", "--config", c, "--out", again.to_str().unwrap(), hist_path.to_str().unwrap()]).status.success());
    assert_eq!(tree(&fit_out), tree(&again));
}

#[test]
fn fit_ladder_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "detectors.count = 4\nsweep.windows = [\"1us\"]\n");
    let mut inputs = Vec::new();
    for (i, mu) in [0.2, 0.5, 1.0, 2.0, 3.0, 4.0].into_iter().enumerate() {
        let p = ClickModelParams::uniform(4, mu, 1.0, 3e-4);
        let patterns: BTreeMap<u64, u64> = click_distribution(&p)
            .iter()
            .enumerate()
            .map(|(k, q)| ((1u64 << k) - 1, (q * 1e5).round() as u64))
            .collect();
        let f = HistogramFile {
            schedule: WindowSchedule::gated(1000, 0),
            tick_duration: 1e-9,
            alpha_sq: Some(mu),
            hist: ClickHistogram::from_pattern_counts(4, patterns).unwrap(),
        };
        let path = dir.path().join(format!("h{i}.hist"));
        f.write_file(&path).unwrap();
        inputs.push(path.to_str().unwrap().to_string());
    }
    let out = dir.path().join("out");
    let mut args = vec!["fit", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend(inputs.iter().map(String::as_str));
    let o = pnr(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = SurfaceFile::read_file(&out.join("surface.txt")).unwrap();
    let mus: Vec<f64> = s.rows.iter().map(|r| r.mu).collect();
    assert!(mus.windows(2).all(|w| w[1] > w[0]), "{mus:?}");
}

#[test]
fn aggregate_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = TimeTagStream::empty(2, 1e-9, 20);
    let tags = dir.path().join("empty.tags");
    write_tags_file(&tags, &s, None).unwrap();
    let o = pnr(&["aggregate", "--windows", "10ns", "--out", dir.path().to_str().unwrap(), tags.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let h = HistogramFile::read_file(&dir.path().join("hist/empty_w000010.hist")).unwrap();
    assert_eq!(h.hist.multiplicity_counts, vec![2, 0, 0]);

    s.records = vec![
        TagRecord { timestamp: 1, mask: 1 },
        TagRecord { timestamp: 3, mask: 2 },
        TagRecord { timestamp: 12, mask: 1 },
    ];
    let tags = dir.path().join("hand.tags");
    write_tags_file(&tags, &s, None).unwrap();
    let o = pnr(&["aggregate", "--windows", "10ns", "--out", dir.path().to_str().unwrap(), tags.to_str().unwrap()]);
    assert!(o.status.success());
    let h = HistogramFile::read_file(&dir.path().join("hist/hand_w000010.hist")).unwrap();
    assert_eq!(h.hist.pattern_counts, BTreeMap::from([(1, 1), (3, 1)]));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sweep.alpha_sq = []\n");
    let o = pnr(&["simulate", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sweep.alpha_sq"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), "detectors.dead_tim = \"2us\"\n");
    let o = pnr(&["pipeline", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("detectors.dead_tim"));

    let bad = dir.path().join("bad.tags");
    std::fs::write(
        &bad,
        "PNRTAGS\nversion=1\ntick_duration_ns=1\ndetector_count=2\ngate_ticks=0\nseed=0\nspan_ticks=100\n---\n4,1\n5,zz\n",
    )
    .unwrap();
    let o = pnr(&["aggregate", "--windows", "10ns", "--out", dir.path().to_str().unwrap(), bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains(":10:"), "{}", stderr(&o));

    let o = pnr(&["fit", "--out", dir.path().to_str().unwrap(), dir.path().join("missing.hist").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn inconsistent_detector_counts_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for n in [2usize, 3] {
        let f = HistogramFile {
            schedule: WindowSchedule::new(10),
            tick_duration: 1e-9,
            alpha_sq: Some(n as f64),
            hist: ClickHistogram::from_pattern_counts(n, BTreeMap::from([(0, 5), (1, 5)])).unwrap(),
        };
        let p = dir.path().join(format!("n{n}.hist"));
        f.write_file(&p).unwrap();
        paths.push(p.to_str().unwrap().to_string());
    }
    let o = pnr(&["fit", "--out", dir.path().to_str().unwrap(), &paths[0], &paths[1]]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_pnr"))
        .args(["snr"])
        .env("PNR_OUT_DIR", &target)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(target.join("snr_grid.txt").exists());
}

#[test]
fn snr_command() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "snr.n_min = 2\nsnr.n_max = 2\nsnr.window_min = \"1ns\"\nsnr.window_max = \"1ns\"\nsnr.window_points = 1\n",
    );
    let survey = dir.path().join("survey.csv");
    std::fs::write(&survey, "name,rate_cps,window_s,coherence_s,integration_s,n\nlab,2e5,1e-9,2e-12,0.5,6\n").unwrap();
    let out = dir.path().join("out");
    let o = pnr(&[
        "snr",
        "--config",
        cfg.to_str().unwrap(),
        "--survey",
        survey.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let grid = read_surface_file(&out.join("snr_grid.txt")).unwrap();
    assert_eq!(grid.db.len(), 1);
    assert!((grid.db[0] + 20.5).abs() < 0.1);
    let p = SnrParams {
        n_detectors: 2,
        rate: 2e5,
        window: 1e-9,
        coherence: 2e-12,
        integration: 0.5,
    };
    assert_eq!(grid.db[0], snr_db(&p).unwrap());
    let curve = std::fs::read_to_string(out.join("survey.csv")).unwrap();
    assert_eq!(curve.lines().filter(|l| l.starts_with("lab,")).count(), 6);

    let o = pnr(&["snr", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let grid = read_surface_file(&out.join("snr_grid.txt")).unwrap();
    let cfg = RunConfig::default();
    let direct = snr_surface(&cfg.snr.n_values, &cfg.snr.windows, cfg.snr.rate, cfg.snr.coherence, cfg.snr.integration).unwrap();
    assert_eq!(grid.db, direct.db);
    assert_eq!(grid.saturated, direct.saturated);
    let contour = std::fs::read_to_string(out.join("snr_contour.csv")).unwrap();
    assert!(contour.contains("\n3,none\n"));

    let cfg = write_config(dir.path(), "snr.rate = -5\n");
    let o = pnr(&["snr", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn default_config_stream_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::default();
    let top = cfg.levels.len() - 1;
    let stream = simulate_level(&cfg, top).unwrap();
    assert!(!stream.records.is_empty());
    let path = dir.path().join("d.tags");
    write_tags_file(&path, &stream, Some(cfg.levels[top])).unwrap();
    let (h, back) = read_tags_file(&path).unwrap();
    assert_eq!(back, stream);
    assert_eq!(h.alpha_sq, Some(cfg.levels[top]));
}
