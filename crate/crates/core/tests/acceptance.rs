//! Acceptance run. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use f0lab::corpus::white_noise;
use f0lab::dsp::{measured_snr_db, mix_at_snr};
use f0lab::experiment::{run_experiment, ExperimentConfig, RunManifest};
use f0lab::lstm::{check_gradients, Arch, EarlyStopping, InitKind, Optimizer, StopReason};
use f0lab::metrics::{detection_rate, voice_decision_error, F0Track, System};
use f0lab::{Exec, Signal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Master seed of the shipped demo run.
const DEMO_SEED: u64 = 7;
const EXTRA_SEEDS: [u64; 5] = [101, 102, 103, 104, 105];

struct Outcome {
    id: u8,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(id: u8, name: &'static str, pass: bool, detail: String) -> Outcome {
    println!(
        "criterion {id} [{}] {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    Outcome {
        id,
        name,
        pass,
        detail,
    }
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let cases = [
        (Arch::new(3, vec![4], 3).unwrap(), 5),
        (Arch::new(3, vec![4, 3], 3).unwrap(), 4),
        (Arch::new(15, vec![6], 15).unwrap(), 3),
        (Arch::new(2, vec![3, 3, 2], 4).unwrap(), 4),
    ];
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (seed, (arch, t)) in cases.iter().enumerate() {
        let e = check_gradients(arch, seed as u64 + 1, *t).unwrap();
        parts.push(format!("{arch}: {e:.2e}"));
        worst = worst.max(e);
    }
    let elapsed = start.elapsed();
    report(
        1,
        "gradient check",
        worst < 1e-5 && elapsed < Duration::from_secs(30),
        format!(
            "max rel err {worst:.2e} ({}) in {:.2?}",
            parts.join(", "),
            elapsed
        ),
    )
}

fn brute_dr(pred: &[f64], truth: &[f64]) -> Option<f64> {
    let mut np = 0u32;
    let mut hit = 0u32;
    for i in 0..truth.len() {
        if truth[i] == 0.0 {
            continue;
        }
        np += 1;
        let voiced = pred[i] != 0.0;
        let within = (pred[i] - truth[i]).abs() <= 0.05 * truth[i];
        if voiced && within {
            hit += 1;
        }
    }
    (np > 0).then(|| 100.0 * f64::from(hit) / f64::from(np))
}

fn brute_vde(pred: &[f64], truth: &[f64]) -> f64 {
    let mut v_to_u = 0u32;
    let mut u_to_v = 0u32;
    for i in 0..truth.len() {
        match (truth[i] > 0.0, pred[i] > 0.0) {
            (true, false) => v_to_u += 1,
            (false, true) => u_to_v += 1,
            _ => {}
        }
    }
    100.0 * f64::from(v_to_u + u_to_v) / truth.len() as f64
}

fn random_track(rng: &mut ChaCha8Rng, n: usize, p_voiced: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            if rng.random_bool(p_voiced) {
                rng.random_range(60.0..400.0)
            } else {
                0.0
            }
        })
        .collect()
}

fn metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    let mut undefined = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..200);
        let truth = random_track(&mut rng, n, 0.6);
        let pred: Vec<f64> = truth
            .iter()
            .map(|&t| match rng.random_range(0..4) {
                0 => 0.0,
                1 if t > 0.0 => t * rng.random_range(0.9..1.1),
                2 => rng.random_range(60.0..400.0),
                _ => t,
            })
            .collect();
        let (p, t) = (
            F0Track::new(pred.clone()).unwrap(),
            F0Track::new(truth.clone()).unwrap(),
        );
        match (detection_rate(&p, &t), brute_dr(&pred, &truth)) {
            (Ok(a), Some(b)) if a == b => {}
            (Err(_), None) => undefined += 1,
            _ => mismatches += 1,
        }
        if voice_decision_error(&p, &t).unwrap() != brute_vde(&pred, &truth) {
            mismatches += 1;
        }
    }
    let truth = F0Track::new(vec![200.0; 10]).unwrap();
    let mut half = vec![209.0; 5];
    half.extend([211.0; 5]);
    let dr_case = detection_rate(&F0Track::new(half).unwrap(), &truth).unwrap();
    let t10 = F0Track::new(vec![
        100.0, 100.0, 100.0, 100.0, 100.0, 0.0, 0.0, 0.0, 0.0, 0.0,
    ])
    .unwrap();
    let p10 = F0Track::new(vec![
        0.0, 100.0, 100.0, 100.0, 100.0, 120.0, 0.0, 0.0, 0.0, 0.0,
    ])
    .unwrap();
    let vde_case = voice_decision_error(&p10, &t10).unwrap();
    report(
        2,
        "metric oracle",
        mismatches == 0 && dr_case == 50.0 && vde_case == 20.0,
        format!(
            "1000 pairs, {mismatches} mismatches ({undefined} with undefined DR on both sides); hand cases DR {dr_case}%, VDE {vde_case}%"
        ),
    )
}

fn mixer() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let levels = [-10.0, -5.0, 0.0, 5.0, 10.0];
    let mut worst = 0.0f64;
    for k in 0..100u64 {
        let n = rng.random_range(800..16000);
        let f = rng.random_range(80.0..400.0);
        let amp = rng.random_range(0.01..0.8);
        let samples: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / 16000.0;
                amp * (2.0 * std::f64::consts::PI * f * t).sin()
                    + 0.3 * amp * (2.0 * std::f64::consts::PI * 2.7 * f * t).sin()
            })
            .collect();
        let clean = Signal::new(samples, 16000).unwrap();
        let noise = white_noise(n + rng.random_range(0..500), 1000 + k).unwrap();
        let target = levels[rng.random_range(0..levels.len())];
        let noisy = mix_at_snr(&clean, &noise, target).unwrap();
        worst = worst.max((measured_snr_db(clean.samples(), noisy.samples()) - target).abs());
    }
    report(
        3,
        "SNR mixer precision",
        worst <= 0.01,
        format!("100 triples, max |measured - target| = {worst:.2e} dB"),
    )
}

fn early_stopping() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for k in [1usize, 7, 100, 500, 900] {
        let mut es = EarlyStopping::new(40, 1000);
        let mut stopped = None;
        for epoch in 1..=1000 {
            let loss = if epoch <= k {
                1000.0 - epoch as f64
            } else {
                2000.0
            };
            if let Some(reason) = es.observe(loss).stop {
                stopped = Some((epoch, reason));
                break;
            }
        }
        let good = stopped == Some((k + 40, StopReason::PatienceExhausted)) && es.best_epoch() == k;
        ok &= good;
        parts.push(format!("k={k} -> {:?}", stopped.map(|s| s.0)));
    }
    report(4, "early stopping at k+40", ok, parts.join(", "))
}

/// The shipped demo configuration.
const DESK_TOML: &str = include_str!("../../../configs/desk.toml");

fn desk_config(out: &Path, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml_str(DESK_TOML).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg.master_seed = seed;
    cfg.mark_modified();
    cfg
}

fn cell_record(m: &RunManifest, init: InitKind, snr: f64) -> Option<&f0lab::lstm::TrainRecord> {
    m.cells
        .iter()
        .find(|c| c.cell.init == init && c.cell.snr_db == Some(snr))
        .map(|c| &c.record)
}

fn epoch1(r: &f0lab::lstm::TrainRecord) -> f64 {
    r.epoch(1).map_or(f64::NAN, |e| e.val_sse)
}

fn pretraining(m: &RunManifest, elapsed: f64) -> Outcome {
    let Some(rec) = &m.pretrain else {
        return report(
            5,
            "auto-associative pretraining",
            false,
            "pretraining did not complete".into(),
        );
    };
    let first = epoch1(rec);
    let ratio = rec.best_validation_sse / first;
    report(
        5,
        "auto-associative pretraining",
        ratio <= 0.10 && elapsed < 15.0 * 60.0,
        format!(
            "best {:.1} at epoch {} vs epoch-1 {:.1} (ratio {:.3}), {:.0} s",
            rec.best_validation_sse, rec.best_epoch, first, ratio, elapsed
        ),
    )
}

fn warm_start(m: &RunManifest) -> Outcome {
    let (Some(r), Some(a)) = (
        cell_record(m, InitKind::Random, 0.0),
        cell_record(m, InitKind::AutoAssociative, 0.0),
    ) else {
        return report(
            6,
            "AA vs random at SNR 0",
            false,
            "SNR 0 cells missing".into(),
        );
    };
    let (r1, a1) = (epoch1(r), epoch1(a));
    let pass = a.best_validation_sse <= r.best_validation_sse && a1 < r1;
    report(
        6,
        "AA vs random at SNR 0",
        pass,
        format!(
            "seed {DEMO_SEED}: epoch-1 val sse AA {a1:.1} vs random {r1:.1}; best AA {:.1} vs random {:.1}",
            a.best_validation_sse, r.best_validation_sse
        ),
    )
}

fn extra_seeds(root: &Path) {
    for seed in EXTRA_SEEDS {
        let mut cfg = desk_config(&root.join(format!("seed_{seed}")), seed);
        cfg.snr_levels = vec![0.0];
        cfg.systems = vec![System::Lstm, System::LstmAa];
        match run_experiment(cfg, Exec::Parallel) {
            Ok(m) => match (
                cell_record(&m, InitKind::Random, 0.0),
                cell_record(&m, InitKind::AutoAssociative, 0.0),
            ) {
                (Some(r), Some(a)) => println!(
                    "  criterion 6 record, seed {seed}: epoch-1 AA {:.1} vs random {:.1} ({}); best AA {:.1} vs random {:.1} ({})",
                    epoch1(a),
                    epoch1(r),
                    if epoch1(a) < epoch1(r) { "holds" } else { "violated" },
                    a.best_validation_sse,
                    r.best_validation_sse,
                    if a.best_validation_sse <= r.best_validation_sse { "holds" } else { "violated" },
                ),
                _ => println!("  criterion 6 record, seed {seed}: cells incomplete"),
            },
            Err(e) => println!("  criterion 6 record, seed {seed}: run failed: {e}"),
        }
    }
}

fn beats_baseline(m: &RunManifest) -> Outcome {
    let find = |s: System, snr: f64| m.reports.iter().find(|r| r.system == s && r.snr_db == snr);
    let mut pass = true;
    let mut parts = Vec::new();
    for snr in [-5.0, 0.0] {
        let Some(none) = find(System::Baseline, snr) else {
            pass = false;
            continue;
        };
        for s in [System::Lstm, System::LstmAa] {
            match find(s, snr) {
                Some(r) => {
                    pass &= r.vde_percent < none.vde_percent && r.dr_percent > none.dr_percent;
                    parts.push(format!(
                        "{snr} dB {s}: VDE {:.2} vs {:.2}, DR {:.2} vs {:.2}",
                        r.vde_percent, none.vde_percent, r.dr_percent, none.dr_percent
                    ));
                }
                None => pass = false,
            }
        }
    }
    report(
        7,
        "LSTM systems beat None at -5 and 0 dB",
        pass,
        parts.join("; "),
    )
}

fn tree(root: &Path, sub: &str) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let dir = root.join(sub);
    for e in std::fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        out.insert(
            p.strip_prefix(root).unwrap().to_path_buf(),
            std::fs::read(&p).unwrap(),
        );
    }
    out
}

fn determinism(root: &Path) -> Outcome {
    let tiny = |dir: &str| {
        let mut cfg = ExperimentConfig::desk();
        cfg.output_dir = root.join(dir);
        cfg.corpus.n_train = 6;
        cfg.corpus.n_val = 3;
        cfg.corpus.n_test = 3;
        cfg.corpus.synth.duration_min = 0.6;
        cfg.corpus.synth.duration_max = 0.9;
        cfg.hidden = vec![8];
        cfg.train.max_epochs = 6;
        cfg.train.patience = 3;
        cfg.pretrain.max_epochs = 6;
        cfg.pretrain.patience = 3;
        cfg.train.optimizer = Optimizer::adam();
        cfg.pretrain.optimizer = Optimizer::adam();
        cfg
    };
    let a = run_experiment(tiny("det_a"), Exec::Parallel).unwrap();
    let b = run_experiment(tiny("det_b"), Exec::Sequential).unwrap();
    let (ra, rb) = (root.join("det_a"), root.join("det_b"));
    let mut files = 0;
    let mut differing = Vec::new();
    for sub in ["reports", "curves", "models"] {
        let (ta, tb) = (tree(&ra, sub), tree(&rb, sub));
        files += ta.len();
        if ta.keys().ne(tb.keys()) {
            differing.push(format!("{sub}: file sets differ"));
        }
        for (k, v) in &ta {
            if tb.get(k) != Some(v) {
                differing.push(k.display().to_string());
            }
        }
    }
    report(
        8,
        "run-all determinism",
        a.is_complete() && b.is_complete() && differing.is_empty() && files > 0,
        format!("{files} report/curve/model files compared, parallel vs sequential; differing: {differing:?}"),
    )
}

fn main() {
    let root = tempfile::tempdir().unwrap();
    let mut outcomes = vec![gradients(), metrics_oracle(), mixer(), early_stopping()];

    let start = Instant::now();
    let desk = run_experiment(
        desk_config(&root.path().join("desk"), DEMO_SEED),
        Exec::Parallel,
    );
    let total = start.elapsed().as_secs_f64();
    match desk {
        Ok(m) => {
            let pretrain_secs = m
                .timings
                .iter()
                .find(|t| t.stage == "pretrain")
                .map_or(f64::NAN, |t| t.seconds);
            for f in &m.incomplete {
                println!("  desk run incomplete: {}: {}", f.cell, f.error);
            }
            outcomes.push(pretraining(&m, pretrain_secs));
            outcomes.push(warm_start(&m));
            extra_seeds(root.path());
            outcomes.push(beats_baseline(&m));
            println!("  desk run-all took {total:.0} s");
        }
        Err(e) => {
            for (id, name) in [
                (5, "auto-associative pretraining"),
                (6, "AA vs random at SNR 0"),
                (7, "LSTM systems beat None at -5 and 0 dB"),
            ] {
                outcomes.push(report(id, name, false, format!("desk run failed: {e}")));
            }
        }
    }
    outcomes.push(determinism(root.path()));

    let failed: Vec<&Outcome> = outcomes.iter().filter(|o| !o.pass).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        outcomes.len() - failed.len(),
        outcomes.len()
    );
    for o in &failed {
        println!("  failed: criterion {} ({}): {}", o.id, o.name, o.detail);
    }
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
