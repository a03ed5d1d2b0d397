//! End-to-end acceptance checks. Each prints one PASS/FAIL line; any failure
//! makes the process exit nonzero.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pnr_core::fitter::{fit, FitConfig};
use pnr_core::io::config::RunConfig;
use pnr_core::pipeline::{cmd_pipeline, run_pipeline, simulate_level};
use pnr_core::snr::three_db_crossing;
use pnr_core::{
    aggregate, click_distribution, detection_probability, simulate_stream, snr_db, ClickHistogram, ClickModelParams,
    CoherentSource, DetectorSpec, SamplingMode, SimConfig, SnrParams, SplitterNetwork, TagRecord, TimeTagStream,
    WindowSchedule,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Pattern enumeration over all `2^N` on/off assignments.
fn c1_binomial_enumeration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for draw in 0..1000 {
        let n = 1 + draw % 10;
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let params = ClickModelParams {
            mu: rng.random_range(0.0..10.0),
            etas: (0..n).map(|_| rng.random_range(0.0..=1.0)).collect(),
            nus: (0..n).map(|_| rng.random_range(0.0..0.5)).collect(),
            weights: raw.iter().map(|w| w / total).collect(),
        };
        let p: Vec<f64> = (0..n)
            .map(|i| 1.0 - (-(params.etas[i] * params.weights[i] * params.mu + params.nus[i])).exp())
            .collect();
        let mut brute = vec![0.0; n + 1];
        for mask in 0u32..(1 << n) {
            let prob: f64 = (0..n).map(|i| if mask >> i & 1 == 1 { p[i] } else { 1.0 - p[i] }).product();
            brute[mask.count_ones() as usize] += prob;
        }
        let got = click_distribution(&params);
        for (a, b) in got.iter().zip(&brute) {
            worst = worst.max((a - b).abs());
        }
    }
    check(worst < 1e-12, format!("max |error| {worst:.2e} over 1000 draws, N = 1..10"))
}

/// Gaussian-draw simulation frequency against the analytic crossing probability.
fn c2_classical_oracle() -> Outcome {
    const SLOTS: u64 = 1_000_000;
    let sim = SimConfig {
        duration: SLOTS as f64 * 1e-9,
        gate_time: 0.0,
        sampling_mode: SamplingMode::GaussianDraw,
        ..SimConfig::default()
    };
    let net = SplitterNetwork::uniform(1).unwrap();
    let mut worst_sigma = 0.0f64;
    let mut point = 0u64;
    for mean_amp in [0.0, 0.5, 1.0, 2.0, 3.0] {
        for gamma in [0.5, 1.0, 1.5, 2.0] {
            // a one-slot dead time leaves every slot live
            let det = DetectorSpec::new(gamma, 1e-9).unwrap();
            let source = CoherentSource::new(mean_amp * mean_amp, 2e-12).unwrap();
            let cfg = SimConfig { seed: 1000 + point, ..sim };
            point += 1;
            let stream = simulate_stream(&source, &net, &[det], &cfg).unwrap();
            let freq = stream.records.len() as f64 / SLOTS as f64;
            let p = detection_probability(mean_amp, gamma).unwrap();
            let sigma = (p * (1.0 - p) / SLOTS as f64).sqrt();
            worst_sigma = worst_sigma.max((freq - p).abs() / sigma);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let zero = num_complex::Complex64::new(0.0, 0.0);
    let one = num_complex::Complex64::new(1.0, 0.0);
    let hits = (0..SLOTS)
        .filter(|_| pnr_core::field_model::sample_arm_modes(one, zero, &mut rng).0.norm() > 1.0)
        .count();
    let vac = hits as f64 / SLOTS as f64;
    let e2 = (-2.0f64).exp();
    let vac_sigma = (vac - e2).abs() / (e2 * (1.0 - e2) / SLOTS as f64).sqrt();
    let exact = (e2 - 0.13534).abs() < 5e-6;
    check(
        point == 20 && worst_sigma < 5.0 && vac_sigma < 5.0 && exact,
        format!("20 points x 1e6 slots, worst deviation {worst_sigma:.2} sigma; vacuum per-mode {vac:.5} ({vac_sigma:.2} sigma from e^-2)"),
    )
}

/// Fit round trip on multinomially sampled histograms.
fn c3_fit_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_rel = 0.0f64;
    let mut worst_resid = 0.0f64;
    let mut report = Vec::new();
    for mu in [0.5, 1.0, 2.0, 4.0] {
        let truth = ClickModelParams::uniform(4, mu, 0.5, 3e-7);
        let p: Vec<f64> = truth.click_probabilities();
        let mut patterns = BTreeMap::new();
        for _ in 0..100_000 {
            let mask = (0..4).fold(0u64, |m, i| if rng.random::<f64>() < p[i] { m | 1 << i } else { m });
            *patterns.entry(mask).or_insert(0u64) += 1;
        }
        let hist = ClickHistogram::from_pattern_counts(4, patterns).unwrap();
        let cfg = FitConfig::new(ClickModelParams::uniform(4, 1.0, 0.5, 3e-7), 40.0);
        let r = fit(&hist, &cfg).unwrap();
        let rel = (r.params.mu - mu).abs() / mu;
        worst_rel = worst_rel.max(rel);
        worst_resid = worst_resid.max(r.residual_max);
        report.push(format!("{mu}->{:.4}", r.params.mu));
    }
    check(
        worst_rel <= 0.05 && worst_resid <= 0.015,
        format!("{}; worst mu error {:.2}%, worst residual {:.3}%", report.join(" "), 100.0 * worst_rel, 100.0 * worst_resid),
    )
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            r[k] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Window sweep from 10 ns to 20 µs at one drive level, 0.1 s of data.
const SWEEP_CONFIG: &str = r#"
seed = 2024
sim.duration = "0.1s"
sweep.alpha_sq = [5.0]
fit.target = "pattern"
output.write_tags = true
"#;

fn c4_window_dependence() -> Outcome {
    let cfg = RunConfig::from_toml(SWEEP_CONFIG, "acceptance").unwrap();
    let run = run_pipeline(&cfg, None).unwrap();
    let mu = run.mu_by_window(0);
    let rho = spearman(&cfg.windows, &mu);
    let d2: Vec<f64> = mu.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).collect();
    let tail = &d2[d2.len() / 2..];
    let trend = tail.iter().sum::<f64>() / tail.len() as f64;
    let first = mu[0];
    let last = mu[mu.len() - 1];
    check(
        cfg.windows.len() >= 10 && rho > 0.9 && trend <= 0.0 && last > first,
        format!(
            "{} windows {:.0e}..{:.0e} s, mu {first:.3}..{last:.3}, Spearman {rho:.4}, mean tail second difference {trend:.4}",
            cfg.windows.len(),
            cfg.windows[0],
            cfg.windows[cfg.windows.len() - 1]
        ),
    )
}

/// Single-detector count rate against drive, approaching the dead-time ceiling.
fn c5_power_saturation() -> Outcome {
    let cfg = RunConfig::from_toml("sim.duration = \"0.1s\"\n", "acceptance").unwrap();
    let rates: Vec<(f64, f64)> = (0..cfg.levels.len())
        .map(|level| {
            let s = simulate_level(&cfg, level).unwrap();
            let count = s.detector_counts()[0] as f64;
            (count / s.duration_s(), count.sqrt() / s.duration_s())
        })
        .collect();
    let monotone = rates
        .windows(2)
        .all(|w| w[1].0 - w[0].0 >= -5.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt());
    let ceiling = 1.0 / cfg.detectors.dead_time;
    let top = rates.last().unwrap().0;
    let within = (top - ceiling).abs() / ceiling <= 0.10;
    check(
        monotone && within,
        format!(
            "{} levels, rate {:.0}..{top:.0} cps, ceiling {ceiling:.0} cps ({:+.2}%)",
            rates.len(),
            rates[0].0,
            100.0 * (top - ceiling) / ceiling
        ),
    )
}

fn oracle_snr_db(n: f64, r: f64, dt: f64, tau: f64, t: f64) -> f64 {
    let linear = n * (n - 1.0) / 2.0 * (r * dt).powf(n / 2.0) * (tau / dt) * (t / dt).sqrt();
    10.0 * linear.ln() / std::f64::consts::LN_10
}

fn c6_snr() -> Outcome {
    let p = SnrParams {
        n_detectors: 2,
        rate: 2e5,
        window: 1e-9,
        coherence: 2e-12,
        integration: 0.5,
    };
    let db = snr_db(&p).unwrap();
    let oracle = oracle_snr_db(2.0, 2e5, 1e-9, 2e-12, 0.5);
    let (mut lo, mut hi) = (1e-25f64.ln(), 1e-3f64.ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if oracle_snr_db(2.0, 2e5, mid.exp(), 2e-12, 0.5) > 3.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let bisected = (0.5 * (lo + hi)).exp();
    let crossing = three_db_crossing(2, 2e5, 2e-12, 0.5).unwrap();
    let ok_crossing = crossing.is_some_and(|c| (1e-15..=1e-13).contains(&c) && (c - bisected).abs() <= 1e-6 * c);
    check(
        (db + 20.5).abs() <= 0.1 && (db - oracle).abs() < 1e-9 && ok_crossing,
        format!("SNR {db:.4} dB (oracle {oracle:.4}); 3-dB crossing {:.3e} s (bisection {bisected:.3e})", crossing.unwrap_or(f64::NAN)),
    )
}

fn naive_histogram(stream: &TimeTagStream, sched: &WindowSchedule) -> ClickHistogram {
    let w = sched.window_ticks;
    let mut starts = Vec::new();
    if sched.gate_ticks == 0 {
        let mut s = sched.origin_tick;
        while s + w <= stream.span_ticks {
            starts.push(s);
            s += w;
        }
    } else {
        let mut g = sched.origin_tick;
        while g < stream.span_ticks {
            let mut s = g;
            while s + w <= g + sched.gate_ticks && s + w <= stream.span_ticks {
                starts.push(s);
                s += w;
            }
            g += sched.gate_ticks;
        }
    }
    let mut patterns = BTreeMap::new();
    for s in starts {
        let mask = stream
            .records
            .iter()
            .filter(|r| r.timestamp >= s && r.timestamp < s + w)
            .fold(0u64, |m, r| m | r.mask);
        *patterns.entry(mask).or_insert(0u64) += 1;
    }
    ClickHistogram::from_pattern_counts(stream.detector_count, patterns).unwrap()
}

fn c7_aggregator_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    for _ in 0..500 {
        let n = rng.random_range(1..=8usize);
        let len = rng.random_range(0..=1000usize);
        let span = rng.random_range(1..=20_000u64);
        let mut ts: Vec<u64> = (0..len).map(|_| rng.random_range(0..span)).collect();
        ts.sort_unstable();
        let mut stream = TimeTagStream::empty(n, 1e-9, span);
        stream.records = ts
            .into_iter()
            .map(|t| TagRecord {
                timestamp: t,
                mask: rng.random_range(1..(1u64 << n)),
            })
            .collect();
        let window = rng.random_range(1..=200u64);
        let sched = WindowSchedule {
            window_ticks: window,
            origin_tick: if rng.random_bool(0.3) { rng.random_range(0..50) } else { 0 },
            gate_ticks: if rng.random_bool(0.5) { window * rng.random_range(1..8) + rng.random_range(0..window) } else { 0 },
        };
        if aggregate(&stream, &sched).unwrap() != naive_histogram(&stream, &sched) {
            mismatches += 1;
        }
    }

    let fixture = |records: &[(u64, u64)], window: u64, span: u64| {
        let mut s = TimeTagStream::empty(2, 1e-9, span);
        s.records = records.iter().map(|&(timestamp, mask)| TagRecord { timestamp, mask }).collect();
        aggregate(&s, &WindowSchedule::new(window)).unwrap()
    };
    let same_window = fixture(&[(1, 1), (5, 1)], 10, 10);
    let straddling = fixture(&[(9, 1), (10, 1)], 10, 20);
    let same_tick = fixture(&[(3, 1), (3, 1), (4, 2)], 10, 10);
    let dup_ok = same_window.multiplicity_counts == [0, 1, 0]
        && straddling.multiplicity_counts == [0, 2, 0]
        && same_tick.multiplicity_counts == [0, 0, 1];
    check(
        mismatches == 0 && dup_ok,
        format!("{mismatches} mismatches over 500 random streams; duplicate fixtures {}", if dup_ok { "ok" } else { "wrong" }),
    )
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

fn c8_determinism() -> Outcome {
    let cfg = RunConfig::from_toml(SWEEP_CONFIG, "acceptance").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cmd_pipeline(&cfg, &a).unwrap();
    cmd_pipeline(&cfg, &b).unwrap();
    let (ta, tb) = (tree(&a), tree(&b));
    let bytes: usize = ta.values().map(Vec::len).sum();
    check(
        !ta.is_empty() && ta == tb,
        format!("{} files, {bytes} bytes, trees {}", ta.len(), if ta == tb { "identical" } else { "differ" }),
    )
}

fn main() {
    let criteria: [(&str, f64, fn() -> Outcome); 8] = [
        ("1 binomial model vs pattern enumeration", 10.0, c1_binomial_enumeration),
        ("2 gaussian draws vs analytic detection", 60.0, c2_classical_oracle),
        ("3 fit round trip", 120.0, c3_fit_round_trip),
        ("4 coincidence-window dependence", 600.0, c4_window_dependence),
        ("5 power saturation", 120.0, c5_power_saturation),
        ("6 SNR reproduction", 1.0, c6_snr),
        ("7 aggregator vs naive rescan", 30.0, c7_aggregator_oracle),
        ("8 determinism", 1200.0, c8_determinism),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let pass = outcome.pass && secs < budget;
        if !pass {
            failed += 1;
        }
        println!(
            "[{}] {name}: {} ({secs:.2} s, budget {budget} s)",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail
        );
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
