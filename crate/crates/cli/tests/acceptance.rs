//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use gameclr::augment::AugmentPolicy;
use gameclr::contrastive::{contrastive_probability, method, ContrastiveBatch, LossConfig, Provenance};
use gameclr::data::{AnchorGroup, DataMode, GenSpec};
use gameclr::image::Image;
use gameclr::nn::{gradient_check, GradCheckSpec, Tensor};
use gameclr::probe::{fit_ridge, r_squared, welch_p_value};
use gameclr::render::{render, road_mask, SIZE};
use gameclr::rng::Xoshiro256;
use gameclr::scene::{sample_scene, scene_altering_augment, scene_preserving_augment, traffic_variables};
use gameclr::training::{train, TrainConfig, TrainLogRecord, TrainingData};
use gameclr_cli::config::ExperimentConfig;
use gameclr_cli::experiment::run_experiment;

const MEMORY_LIMIT_KB: u64 = 2 * 1024 * 1024;

struct Line {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn line(id: u32, name: &'static str, pass: bool, detail: String) -> Line {
    let l = Line { id, name, pass, detail };
    println!(
        "[{}] {}. {}: {}",
        if l.pass { "PASS" } else { "FAIL" },
        l.id,
        l.name,
        l.detail
    );
    l
}

fn random_unit(rng: &mut Xoshiro256, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn peak_rss_kb(pid: &str) -> u64 {
    std::fs::read_to_string(format!("/proc/{pid}/status"))
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("VmHWM:"))
                .and_then(|l| l.split_whitespace().nth(1))
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(0)
}

fn criterion_1() -> Line {
    let t = Instant::now();
    let spec = GradCheckSpec::default();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let instances = 100;
    for seed in 0..instances {
        let r = gradient_check(&spec, 1_000 + seed).expect("gradient check runs");
        worst = worst.max(r.max_rel_error);
        checked += r.checked;
    }
    let secs = t.elapsed().as_secs_f64();
    line(
        1,
        "gradient fidelity",
        worst < 1e-4 && secs < 120.0,
        format!("{instances} instances, {checked} coordinates, max rel err {worst:.2e} (< 1e-4), {secs:.1}s (< 120s)"),
    )
}

/// Direct evaluation of the softmax ratio, no stabilization.
fn dense_softmax(a: &[f64], p: &[f64], negs: &[Vec<f64>], tau: f64) -> f64 {
    let num = (dot(a, p) / tau).exp();
    num / (num + negs.iter().map(|n| (dot(a, n) / tau).exp()).sum::<f64>())
}

fn criterion_2() -> Line {
    let mut rng = Xoshiro256::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let dim = 2 + rng.index(31);
        let tau = rng.uniform(0.05, 1.0);
        let a = random_unit(&mut rng, dim);
        let p = random_unit(&mut rng, dim);
        let negs: Vec<Vec<f64>> = (0..rng.index(40)).map(|_| random_unit(&mut rng, dim)).collect();
        let refs: Vec<&[f64]> = negs.iter().map(|n| n.as_slice()).collect();
        let got = contrastive_probability(&a, &p, &refs, tau).unwrap();
        worst = worst.max((got - dense_softmax(&a, &p, &negs, tau)).abs());
    }
    let empty = contrastive_probability(&[1.0, 0.0], &[0.0, 1.0], &[], 0.3).unwrap();
    let sym = contrastive_probability(&[1.0, 0.0], &[0.6, 0.8], &[&[0.6, -0.8]], 0.2).unwrap();
    let tagged = contrastive_probability(&[1.0, 0.0], &[0.6, 0.8], &[&[0.0, 1.0]], 0.2).unwrap();
    let e3 = 3f64.exp();
    let tagged_ok = empty == 1.0 && (sym - 0.5).abs() < 1e-12 && (tagged - e3 / (e3 + 1.0)).abs() < 1e-9;
    line(
        2,
        "contrastive probability",
        worst < 1e-9 && tagged_ok && (tagged - 0.952574).abs() < 1e-6,
        format!("1000 instances, max |diff| {worst:.2e} (< 1e-9); empty negatives {empty}, symmetric {sym:.12}, tagged {tagged:.6}"),
    )
}

/// Loss from the similarity matrix, with roles read off provenance and group
/// tags.
fn brute_force_loss(kind: &str, prov: &[Provenance], group: &[usize], z: &Tensor<f64>, tau: f64) -> f64 {
    let n = prov.len();
    let s: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| dot(z.row(i), z.row(j)) / tau).collect()).collect();
    let mut total = 0.0;
    let mut anchors = 0;
    for a in 0..n {
        let (pos, neg): (Vec<usize>, Vec<usize>) = match kind {
            "simclr" => {
                let pos = (0..n).filter(|&j| j != a && group[j] == group[a]).collect();
                let neg = (0..n).filter(|&j| group[j] != group[a]).collect();
                (pos, neg)
            }
            _ => {
                if prov[a] != Provenance::Anchor {
                    continue;
                }
                let pos = (0..n).filter(|&j| group[j] == group[a] && prov[j] == Provenance::SynPos).collect();
                let neg = (0..n)
                    .filter(|&j| group[j] != group[a] || prov[j] == Provenance::SynNeg)
                    .collect();
                (pos, neg)
            }
        };
        anchors += 1;
        for &p in &pos {
            let denom: f64 = s[a][p].exp() + neg.iter().map(|&k| s[a][k].exp()).sum::<f64>();
            total -= (s[a][p].exp() / denom).ln();
        }
    }
    total / anchors as f64
}

fn criterion_3() -> Line {
    let mut rng = Xoshiro256::seed_from_u64(3);
    let tiny = Image::new(2, 2);
    let mut worst: f64 = 0.0;
    for t in 0..100 {
        let kind = if t % 2 == 0 { "simclr" } else { "gameclr" };
        let b = 2 + rng.index(12);
        let cfg = LossConfig {
            kp: 1 + rng.index(3),
            kn: 1 + rng.index(3),
            batch_size: b,
            temperature: rng.uniform(0.1, 1.0),
        };
        let groups: Vec<AnchorGroup> = (0..b)
            .map(|_| AnchorGroup {
                anchor: tiny.clone(),
                syn_pos: vec![tiny.clone(); cfg.kp],
                syn_neg: vec![tiny.clone(); cfg.kn],
            })
            .collect();
        let views = method(kind)
            .unwrap()
            .build_views(&groups, &cfg, &AugmentPolicy::identity(), t)
            .unwrap();
        let n = views.layout.len();
        let dim = 8;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| random_unit(&mut rng, dim)).collect();
        let z = Tensor::from_rows(&rows).unwrap();
        let prov = views.layout.provenance.clone();
        let group = views.layout.group.clone();
        let batch = ContrastiveBatch::new(views.layout, z.clone()).unwrap();
        let got = batch.loss(cfg.temperature).unwrap();
        let want = brute_force_loss(kind, &prov, &group, &z, cfg.temperature);
        worst = worst.max((got - want).abs());
    }
    line(
        3,
        "batch loss equivalence",
        worst < 1e-6,
        format!("100 batches (50 simclr, 50 gameclr), max |diff| {worst:.2e} (< 1e-6)"),
    )
}

fn criterion_4() -> Line {
    let t = Instant::now();
    let mask = road_mask();
    let mut failures = Vec::new();
    for i in 0..1000u64 {
        let s = sample_scene(40_000 + i, 2);
        let p = scene_preserving_augment(&s, i);
        if traffic_variables(&p) != traffic_variables(&s) {
            failures.push(format!("e_p changed traffic at {i}"));
        }
        let a = scene_altering_augment(&s, i).unwrap();
        if a.vehicle_count() <= s.vehicle_count() || traffic_variables(&a) == traffic_variables(&s) {
            failures.push(format!("e_a did not add traffic at {i}"));
        }
        let img = render(&s);
        if img.data() != render(&s).data() {
            failures.push(format!("render not deterministic at {i}"));
        }
        let mut traffic_only = a.clone();
        traffic_only.ego_color = s.ego_color;
        traffic_only.weather = s.weather;
        traffic_only.time_of_day = s.time_of_day;
        let other = render(&traffic_only);
        for y in 0..SIZE {
            for x in 0..SIZE {
                if img.pixel(y, x) != other.pixel(y, x) && !mask[y * SIZE + x] {
                    failures.push(format!("diff outside road mask at scene {i} ({y},{x})"));
                }
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    line(
        4,
        "engine contracts",
        failures.is_empty() && secs < 60.0,
        format!(
            "1000 scenes, {} violations{}, {secs:.1}s (< 60s)",
            failures.len(),
            failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default()
        ),
    )
}

struct CurveShape {
    first_gap: f64,
    final_gap: f64,
    mid_syn_gap: f64,
    final_syn_gap: f64,
}

impl CurveShape {
    fn from_log(log: &[TrainLogRecord]) -> Self {
        let gap = |r: &TrainLogRecord| (r.cos_pos - r.cos_neg_reg) as f64;
        let syn_gap = |r: &TrainLogRecord| (r.cos_neg_syn.expect("gameclr log") - r.cos_neg_reg) as f64;
        let mid: Vec<f64> = log.iter().filter(|r| (2..=10).contains(&r.epoch)).map(syn_gap).collect();
        let last = log.last().expect("non-empty log");
        Self {
            first_gap: gap(&log[0]),
            final_gap: gap(last),
            mid_syn_gap: mid.iter().sum::<f64>() / mid.len() as f64,
            final_syn_gap: syn_gap(last),
        }
    }

    fn holds(&self) -> bool {
        self.first_gap.abs() < 0.05
            && self.final_gap > 0.2
            && self.mid_syn_gap > 0.0
            && self.final_syn_gap < self.mid_syn_gap
    }
}

fn criterion_5(seed42: &[TrainLogRecord]) -> Line {
    let mut shapes = vec![(42, CurveShape::from_log(seed42))];
    for seed in [43u64, 44] {
        let cfg = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let data = TrainingData::procedural(GenSpec::new(DataMode::GameClr, seed));
        let out = train(&cfg, &data).expect("gameclr training");
        shapes.push((seed, CurveShape::from_log(&out.log)));
    }
    let held = shapes.iter().filter(|(_, f)| f.holds()).count();
    let detail = shapes
        .iter()
        .map(|(s, f)| {
            format!(
                "seed {s}: |epoch-1 gap| {:.3} (< 0.05), final gap {:.3} (> 0.2), mid syn-reg {:.3} (> 0), final syn-reg {:.3} (< mid) -> {}",
                f.first_gap.abs(),
                f.final_gap,
                f.mid_syn_gap,
                f.final_syn_gap,
                if f.holds() { "holds" } else { "fails" }
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    line(5, "training-curve shape", held >= 2, format!("{held}/3 seeds hold (>= 2); {detail}"))
}

fn criterion_6(report: &gameclr::probe::ProbeReport) -> Line {
    let mean = |m: &str| report.overall_mean(m).unwrap_or(f64::NAN);
    let (u, s, g) = (mean("untrained"), mean("simclr"), mean("gameclr"));
    let vars = report.variables();
    let wins = vars
        .iter()
        .filter(|v| report.row(v, "gameclr").unwrap().mean > report.row(v, "simclr").unwrap().mean)
        .count();
    let rel = (g - s) / s.abs();
    let (best_var, _) = vars
        .iter()
        .map(|v| (*v, report.row(v, "gameclr").unwrap().mean - report.row(v, "simclr").unwrap().mean))
        .fold(("", f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let scores = |m: &str| -> Vec<f64> {
        report
            .runs
            .iter()
            .filter(|r| r.variable == best_var && r.model == m)
            .map(|r| r.r2)
            .collect()
    };
    let p = welch_p_value(&scores("gameclr"), &scores("simclr")).unwrap_or(1.0);
    line(
        6,
        "probe ordering and gain",
        g > s && s > u && wins >= 5 && rel >= 0.03 && p < 0.05,
        format!(
            "mean R2 gameclr {g:.4} > simclr {s:.4} > untrained {u:.4}; gameclr wins {wins}/6 (>= 5); relative gain {:.1}% (>= 3%); Welch p on {best_var} {p:.2e} (< 0.05)",
            100.0 * rel
        ),
    )
}

fn criterion_7() -> Line {
    let mut rng = Xoshiro256::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let (n, d, lambda) = (50, 8, 0.1);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.normal()).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.normal() * 2.0 + 1.0).collect();
        let x = Tensor::from_rows(&rows).unwrap();
        let fit = fit_ridge(&x, &y, lambda).unwrap();
        // coordinate descent on ½‖y − b − Xw‖² + ½λ‖w‖², b unpenalized
        let mut w = vec![0.0; d];
        let mut b = y.iter().sum::<f64>() / n as f64;
        let col_sq: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j] * r[j]).sum()).collect();
        for _ in 0..20_000 {
            let mut delta: f64 = 0.0;
            for j in 0..d {
                let rho: f64 = rows
                    .iter()
                    .zip(&y)
                    .map(|(r, yi)| {
                        let pred = b + dot(r, &w) - r[j] * w[j];
                        r[j] * (yi - pred)
                    })
                    .sum();
                let new = rho / (col_sq[j] + lambda);
                delta = delta.max((new - w[j]).abs());
                w[j] = new;
            }
            let nb = rows.iter().zip(&y).map(|(r, yi)| yi - dot(r, &w)).sum::<f64>() / n as f64;
            delta = delta.max((nb - b).abs());
            b = nb;
            if delta < 1e-14 {
                break;
            }
        }
        for j in 0..d {
            worst = worst.max((fit.weights[j] - w[j]).abs());
        }
        worst = worst.max((fit.intercept - b).abs());
    }
    let r2 = r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
    line(
        7,
        "ridge oracle",
        worst < 1e-6 && (r2 - 0.5).abs() < 1e-12,
        format!("20 instances, max coefficient diff {worst:.2e} (< 1e-6); r_squared([1,2,3],[1,2,4]) = {r2}"),
    )
}

fn run_cli(args: &[&str]) -> (bool, u64) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_gameclr"))
        .args(args)
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .expect("spawn gameclr");
    let pid = child.id().to_string();
    let mut peak = 0;
    loop {
        peak = peak.max(peak_rss_kb(&pid));
        if let Some(status) = child.try_wait().expect("wait") {
            return (status.success(), peak);
        }
        std::thread::sleep(Duration::from_millis(20));
    }
}

fn criterion_8(dir: &Path) -> (Line, u64) {
    let config = dir.join("small.conf");
    std::fs::write(
        &config,
        "# reduced run for the determinism check\nepochs = 2\nanchors_per_epoch = 128\nbatch_size = 16\ntrain_anchors = 64\nprobe_anchors = 120\nprobe_runs = 2\n",
    )
    .unwrap();
    let mut manifests = Vec::new();
    let mut peak = 0;
    for run in ["a", "b"] {
        let out = dir.join(run);
        let (ok, kb) = run_cli(&["experiment", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        peak = peak.max(kb);
        manifests.push(if ok { std::fs::read_to_string(out.join("manifest.txt")).ok() } else { None });
    }
    let same = manifests[0].is_some() && manifests[0] == manifests[1];
    let files = manifests[0].as_deref().map_or(0, |m| m.lines().count());
    (
        line(
            8,
            "end-to-end determinism",
            same,
            format!("two `gameclr experiment` runs, {files} hashed files, manifests identical: {same}"),
        ),
        peak,
    )
}

fn main() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut lines = vec![criterion_1(), criterion_2(), criterion_3(), criterion_4(), criterion_7()];
    let (l8, child_peak) = criterion_8(tmp.path());
    lines.push(l8);

    let outcome = run_experiment(&ExperimentConfig::default(), &tmp.path().join("default"), &mut |m| eprintln!("  {m}"))
        .expect("default experiment");
    lines.push(criterion_5(&outcome.gameclr_log));
    lines.push(criterion_6(&outcome.report));

    let secs = start.elapsed().as_secs_f64();
    let peak_kb = peak_rss_kb("self").max(child_peak);
    lines.push(line(
        9,
        "budget",
        secs < 45.0 * 60.0 && peak_kb < MEMORY_LIMIT_KB,
        format!(
            "total {:.1} min (< 45), peak resident memory {:.0} MB (< 2048)",
            secs / 60.0,
            peak_kb as f64 / 1024.0
        ),
    ));

    lines.sort_by_key(|l| l.id);
    let failed: Vec<String> = lines.iter().filter(|l| !l.pass).map(|l| format!("{} ({})", l.id, l.name)).collect();
    println!("acceptance summary: {}/{} criteria pass", lines.len() - failed.len(), lines.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
