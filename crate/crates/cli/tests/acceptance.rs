//! Acceptance suite. Prints one pass/fail line per criterion and exits
//! non-zero if any fails. Criterion numbers given as arguments select a
//! subset: `cargo test -p mimic-cli --test acceptance -- 3 7`.
//!
//! Budgets are desk-scale and pinned; see the README for the rationale.

use std::collections::BTreeMap;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode, Output};
use std::time::Instant;

use mimic_core::eval::{
    dtw_align, evaluate, friction_sweep, iterations_to_success, pose_absurdity, pose_error,
    push_robustness, rolling_std, PolicyController, PoseErrorReport, PoseFrame, PushDirection,
    SuccessCriterion, SweepMode,
};
use mimic_core::math::Vec3;
use mimic_core::policy::{feature_dim, PolicyParams};
use mimic_core::reference::{
    generate_reference, ReferenceKind, ReferenceMotion, Track, WaveParams,
};
use mimic_core::sim::{contact_force, Character, CharacterSpec, ContactSpec, StepConfig, GRAVITY};
use mimic_core::train::{
    ablation_variants, env_rng, rollout, rollout_gradient, state_distance, train_until,
    AblationAxis, IterationLog, ReplayMode, TrainConfig, TrainOutcome, TRUNCATION_STEPS,
};
use tempfile::TempDir;

// Criterion 3: pendulum convergence. The pinned value is the first oracle
// run's final pose error; later runs must stay within ±20% of it.
const PENDULUM_PINNED: f64 = 0.01536;
const PENDULUM_BAND: f64 = 0.2;
const PENDULUM_BOUND: f64 = 0.05;

// Criterion 4: acrobot replay smoothing.
const SMOOTH_BUDGET: Budget = Budget {
    iterations: 150,
    steps: 60,
    batch: 4,
};
const SMOOTH_EPSILON: f64 = 0.1;
const SMOOTH_WINDOW: usize = 50;
const SMOOTH_FRACTION: f64 = 0.8;

// Criteria 5 and 6: walker replay and truncation ablations.
const WALKER_BUDGET: Budget = Budget {
    iterations: 80,
    steps: 90,
    batch: 2,
};
const ABSURDITY_K: f64 = 0.05;

// Criterion 7 reuses criterion 3's task with early stopping.
const RSI_LIMIT: usize = 500;

const SEEDS: [u64; 3] = [0, 1, 2];

// Criterion 10: values of the first run, enforced as regressions.
const FRICTIONS: [f64; 3] = [0.8, 1.0, 1.2];
const FRICTION_PINNED: [f64; 3] = [
    0.07320354953333144,
    0.07353752596369253,
    0.07392449899941592,
];
const PUSH_PINNED: f64 = 20.0;
const REGRESSION_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy)]
struct Budget {
    iterations: usize,
    steps: usize,
    batch: usize,
}

impl Budget {
    fn config(self, seed: u64) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            episode_steps: self.steps,
            batch: self.batch,
            seed,
            ..TrainConfig::default()
        }
    }
}

fn dt() -> f64 {
    StepConfig::default().control_dt()
}

fn spline(ch: &Character) -> ReferenceMotion {
    let kind = ReferenceKind::SplineTrack;
    generate_reference(ch, kind, &WaveParams::preset(ch, kind)).expect("reference")
}

fn builtin(name: &str) -> Character {
    Character::builtin(name).expect("builtin character")
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

fn run_training(
    ch: &Character,
    motion: &ReferenceMotion,
    cfg: &TrainConfig,
    stop: Option<&SuccessCriterion>,
) -> TrainOutcome {
    let initial = PolicyParams::init(feature_dim(ch), &cfg.hidden, ch.action_dim(), cfg.seed);
    train_until(&initial, ch, motion, cfg, |r| match stop {
        Some(c) if c.succeeds(r.pose_error, r.sustained_low_root) => ControlFlow::Break(()),
        _ => ControlFlow::Continue(()),
    })
    .expect("training runs")
}

fn mimic(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mimic"))
        .current_dir(dir)
        .env_remove("MIMIC_OUTPUT_ROOT")
        .args(args)
        .output()
        .expect("mimic binary runs")
}

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Results shared between criteria so no training run happens twice.
#[derive(Default)]
struct Shared {
    pendulum_log: Option<Vec<IterationLog>>,
    walker: BTreeMap<(String, u64), TrainOutcome>,
}

impl Shared {
    fn walker_run(&mut self, variant: &str, seed: u64) -> &TrainOutcome {
        let key = (variant.to_string(), seed);
        if !self.walker.contains_key(&key) {
            let ch = builtin("walker");
            let motion = spline(&ch);
            let base = WALKER_BUDGET.config(seed);
            let cfg = ablation_variants(AblationAxis::Replay, &base)
                .into_iter()
                .chain(ablation_variants(AblationAxis::Truncation, &base))
                .find(|v| v.label == variant)
                .expect("known variant")
                .config;
            self.walker
                .insert(key.clone(), run_training(&ch, &motion, &cfg, None));
        }
        &self.walker[&key]
    }
}

fn c1_gradient_fidelity(_: &mut Shared) -> Verdict {
    let tmp = TempDir::new().unwrap();
    let mut lines = Vec::new();
    let mut pass = true;
    for name in ["pendulum", "acrobot", "walker", "hopper"] {
        let gen = mimic(
            tmp.path(),
            &["gen-ref", "--character", name, "--out", "refs"],
        );
        let motion = String::from_utf8_lossy(&gen.stdout).trim().to_string();
        let o = mimic(
            tmp.path(),
            &[
                "gradcheck",
                "--character",
                name,
                "--motion",
                &motion,
                "--out",
                name,
            ],
        );
        let stdout = String::from_utf8_lossy(&o.stdout);
        let touching: usize = stdout
            .lines()
            .next()
            .unwrap_or_default()
            .split(", ")
            .find_map(|s| s.strip_suffix(" contact points touching the ground at the start"))
            .and_then(|n| n.parse().ok())
            .unwrap_or(0);
        let error = stdout
            .lines()
            .last()
            .and_then(|l| l.strip_prefix("max relative error "))
            .and_then(|l| l.split(' ').next())
            .unwrap_or("?")
            .to_string();
        let in_contact = !matches!(name, "walker" | "hopper") || touching > 0;
        pass &= o.status.success() && in_contact;
        lines.push(format!("{name} {error} ({touching} in contact)"));
    }
    Verdict::new(pass, lines.join(", "))
}

fn c2_exact_identities(_: &mut Shared) -> Verdict {
    let ch = builtin("walker");
    let motion = spline(&ch);
    let steps = 60;
    let track = Track::new(&motion, &ch, dt(), steps).unwrap();
    let w = ch.spec().loss_weights;
    let mut checks = Vec::new();

    let loss: f64 = (0..=steps)
        .map(|i| state_distance(track.state(i), track.state(i), &w).unwrap())
        .sum();
    checks.push(("loss of identical trajectories", loss == 0.0));

    let reference: Vec<PoseFrame> = (0..=steps)
        .map(|i| PoseFrame::of(&ch, track.state(i)))
        .collect();
    checks.push((
        "pose error of identical frames",
        pose_error(&reference, &reference).unwrap() == 0.0,
    ));

    let policy = PolicyParams::zeros(feature_dim(&ch), &[16], ch.action_dim());
    let e = evaluate(&ch, &track, &mut PolicyController(&policy), None).unwrap();
    let sim: Vec<PoseFrame> = e.states.iter().map(|s| PoseFrame::of(&ch, s)).collect();
    let base = pose_error(&sim, &reference).unwrap();
    let moved: Vec<PoseFrame> = sim
        .iter()
        .map(|f| f.translated(Vec3::new(3.7, -1.2, 0.4)))
        .collect();
    let shifted = pose_error(&moved, &reference).unwrap();
    checks.push((
        "translation invariance",
        base > 0.0 && (shifted - base).abs() <= 1e-12 * base,
    ));

    let al = dtw_align(&reference, &reference, |a, b| {
        mimic_core::eval::frame_error(a, b).unwrap()
    })
    .unwrap();
    let diagonal = al
        .path
        .iter()
        .enumerate()
        .all(|(k, &(i, j))| i == k && j == k);
    checks.push((
        "DTW of identical sequences",
        al.cost == 0.0 && diagonal && al.path.len() == reference.len(),
    ));

    let report = PoseErrorReport::new(&sim, &reference).unwrap();
    checks.push((
        "L2@1 equals the mean",
        pose_absurdity(&report.per_frame, 1.0).unwrap() == report.mean,
    ));

    let policy = PolicyParams::init(feature_dim(&ch), &[16, 16], ch.action_dim(), 5);
    let cfg = TrainConfig {
        episode_steps: 30,
        hidden: vec![16, 16],
        ..TrainConfig::default()
    };
    let inf = TrainConfig {
        replay: ReplayMode::Threshold {
            epsilon: f64::INFINITY,
        },
        ..cfg.clone()
    };
    let (ra, ga) = rollout_gradient(&policy, &ch, &track, &cfg, &mut env_rng(9, 0, 0)).unwrap();
    let (rb, gb) = rollout_gradient(&policy, &ch, &track, &inf, &mut env_rng(9, 0, 0)).unwrap();
    let bits = |g: &[f64]| g.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    checks.push((
        "ε = ∞ equals no replay",
        ra.bitwise_eq(&rb) && bits(&ga) == bits(&gb),
    ));

    let full_n = TrainConfig {
        truncation: Some(cfg.episode_steps),
        ..cfg.clone()
    };
    let (rc, gc) = rollout_gradient(&policy, &ch, &track, &full_n, &mut env_rng(9, 0, 0)).unwrap();
    checks.push((
        "truncation n = T equals full backward",
        ra.bitwise_eq(&rc) && bits(&ga) == bits(&gc),
    ));

    let f64_loss = rollout::<f64>(
        &policy,
        policy.theta(),
        &ch,
        &track,
        &cfg,
        &mut env_rng(9, 0, 0),
    )
    .unwrap()
    .loss;
    checks.push((
        "taped and plain losses agree",
        f64_loss.to_bits() == ra.loss.to_bits(),
    ));

    let failed: Vec<&str> = checks
        .iter()
        .filter(|(_, ok)| !ok)
        .map(|(n, _)| *n)
        .collect();
    if failed.is_empty() {
        Verdict::new(true, format!("{} identities hold", checks.len()))
    } else {
        Verdict::new(false, format!("violated: {}", failed.join(", ")))
    }
}

fn c3_pendulum_convergence(shared: &mut Shared) -> Verdict {
    let ch = builtin("pendulum");
    let motion = spline(&ch);
    let cfg = TrainConfig::default();
    let out = run_training(&ch, &motion, &cfg, None);
    let error = out.evaluation.pose.mean;
    shared.pendulum_log = Some(out.log);
    let band = (error - PENDULUM_PINNED).abs() <= PENDULUM_BAND * PENDULUM_PINNED;
    Verdict::new(
        error < PENDULUM_BOUND && band,
        format!(
            "pose error {error:.5} m after {} iterations (bound {PENDULUM_BOUND}, pinned {PENDULUM_PINNED} ± {:.0}%)",
            cfg.iterations,
            PENDULUM_BAND * 100.0
        ),
    )
}

fn c4_replay_smoothing(_: &mut Shared) -> Verdict {
    let ch = builtin("acrobot");
    let motion = spline(&ch);
    let mut fractions = Vec::new();
    for seed in SEEDS {
        let full = SMOOTH_BUDGET.config(seed);
        let thr = TrainConfig {
            replay: ReplayMode::Threshold {
                epsilon: SMOOTH_EPSILON,
            },
            ..full.clone()
        };
        let losses = |cfg: &TrainConfig| -> Vec<f64> {
            run_training(&ch, &motion, cfg, None)
                .log
                .iter()
                .map(|r| r.loss)
                .collect()
        };
        let (a, b) = (
            rolling_std(&losses(&full), SMOOTH_WINDOW),
            rolling_std(&losses(&thr), SMOOTH_WINDOW),
        );
        let smoother = a.iter().zip(&b).filter(|(f, t)| t < f).count();
        fractions.push(smoother as f64 / a.len() as f64);
    }
    let shown: Vec<String> = fractions
        .iter()
        .map(|f| format!("{:.0}%", f * 100.0))
        .collect();
    Verdict::new(
        fractions.iter().all(|&f| f >= SMOOTH_FRACTION),
        format!(
            "acrobot windows smoother under ε = {SMOOTH_EPSILON}: {} (need ≥ {:.0}% per seed)",
            shown.join(", "),
            SMOOTH_FRACTION * 100.0
        ),
    )
}

fn walker_median(shared: &mut Shared, variant: &str, metric: fn(&TrainOutcome) -> f64) -> f64 {
    median(
        SEEDS
            .iter()
            .map(|&s| metric(shared.walker_run(variant, s)))
            .collect(),
    )
}

fn absurdity(o: &TrainOutcome) -> f64 {
    o.evaluation
        .pose
        .l2_at(ABSURDITY_K)
        .expect("reported fraction")
}

fn c5_absurdity(shared: &mut Shared) -> Verdict {
    let full = walker_median(shared, "full", absurdity);
    let best = |shared: &mut Shared, prefix: &str| {
        ablation_variants(AblationAxis::Replay, &TrainConfig::default())
            .into_iter()
            .filter(|v| v.label.starts_with(prefix))
            .map(|v| (walker_median(shared, &v.label, absurdity), v.label))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("variants")
    };
    let (random, random_label) = best(shared, "random-");
    let (threshold, threshold_label) = best(shared, "threshold-");
    Verdict::new(
        threshold <= random && threshold < full,
        format!(
            "walker median L2@{ABSURDITY_K}: {threshold_label} {threshold:.4}, {random_label} {random:.4}, full {full:.4}"
        ),
    )
}

fn c6_truncation(shared: &mut Shared) -> Verdict {
    let pose = |o: &TrainOutcome| o.evaluation.pose.mean;
    let full = walker_median(shared, "full", pose);
    let label = format!("truncation-{TRUNCATION_STEPS}");
    let cut = walker_median(shared, &label, pose);
    Verdict::new(
        cut >= full,
        format!("walker median pose error: {label} {cut:.4}, full {full:.4}"),
    )
}

fn c7_rsi(shared: &mut Shared) -> Verdict {
    let ch = builtin("pendulum");
    let motion = spline(&ch);
    let criterion = SuccessCriterion::for_character(&ch, dt());
    let base = TrainConfig {
        iterations: RSI_LIMIT,
        ..TrainConfig::default()
    };
    // A run that never succeeds counts as one past the limit.
    let to_success =
        |log: &[IterationLog]| iterations_to_success(log, &criterion).unwrap_or(RSI_LIMIT) as f64;
    let mut counts = BTreeMap::new();
    for rsi in [false, true] {
        let mut runs = Vec::new();
        for seed in SEEDS {
            let cfg = TrainConfig {
                seed,
                rsi,
                ..base.clone()
            };
            let reuse = !rsi && seed == 0 && cfg.iterations == TrainConfig::default().iterations;
            let log = match (&shared.pendulum_log, reuse) {
                (Some(log), true) => log.clone(),
                _ => run_training(&ch, &motion, &cfg, Some(&criterion)).log,
            };
            runs.push(to_success(&log));
        }
        counts.insert(rsi, runs);
    }
    let (off, on) = (
        median(counts[&false].clone()),
        median(counts[&true].clone()),
    );
    let trend = if on <= off {
        "RSI no slower"
    } else {
        "RSI slower at desk scale, recorded"
    };
    // The criterion asks for the comparison to be recorded whichever way it
    // falls; it fails only if the experiment cannot run.
    Verdict::new(
        true,
        format!(
            "iterations to success, median of seeds {:?} / {:?}: RSI on {on}, off {off} ({trend})",
            counts[&true], counts[&false]
        ),
    )
}

fn sim_character(text: &str) -> Character {
    Character::new(CharacterSpec::from_toml(text).expect("spec parses")).expect("valid character")
}

fn c8_simulator(_: &mut Shared) -> Verdict {
    let cfg = StepConfig::default();
    let h = 1.0 / 480.0;
    let mut checks = Vec::new();

    let ball = sim_character(
        "schema = \"character/v1\"\nname = \"ball\"\n[root]\nkind = \"free\"\nrest_position = [0.0, 0.0, 5.0]\n[[links]]\nname = \"body\"\nmass = 2.0\ninertia = [0.1, 0.2, 0.3]\n",
    );
    let mut s = ball.rest_state();
    for _ in 0..240 {
        s = ball.step(&s, &[], &cfg).unwrap();
    }
    checks.push((
        "ballistic",
        (s.links[0].v.z + GRAVITY * 240.0 * h).abs() < 1e-9,
    ));

    let pendulum = builtin("pendulum");
    let mut s = pendulum.rest_state();
    let mut still = true;
    for _ in 0..480 {
        let next = pendulum.step(&s, &[0.0], &cfg).unwrap();
        still &= (next.coords[0] - s.coords[0]).abs() < 1e-12
            && (next.vels[0] - s.vels[0]).abs() < 1e-12;
        s = next;
    }
    checks.push(("equilibrium", still));

    let chain = sim_character(
        "schema = \"character/v1\"\nname = \"chain\"\n[root]\nkind = \"free\"\nrest_position = [0.0, 0.0, 3.0]\n\
         [[links]]\nname = \"base\"\nmass = 3.0\ninertia = [0.2, 0.3, 0.25]\n\
         [[links]]\nname = \"arm\"\nparent = \"base\"\nmass = 1.5\ninertia = [0.05, 0.06, 0.01]\njoint_offset = [0.2, 0.0, 0.1]\ncom_offset = [0.3, 0.0, 0.0]\n\
         [links.joint]\ntype = \"revolute\"\naxis = [0.0, 0.6, 0.8]\nlimits = [[-3.0, 3.0]]\nlimit_stiffness = 0.0\nkp = 0.0\nkd = 0.0\n",
    );
    let weightless = StepConfig {
        gravity: 0.0,
        ..cfg
    };
    let mut q = chain.rest_coords();
    q[7] = 0.6;
    let u: Vec<f64> = (0..chain.nv()).map(|i| 0.3 * i as f64 - 0.8).collect();
    let mut s = chain.state_from_coords(q, u, 0.0).unwrap();
    let p0 = chain.linear_momentum(&s);
    let mut drift: f64 = 0.0;
    for _ in 0..480 {
        s = chain.step(&s, &[0.0], &weightless).unwrap();
        drift = drift.max((chain.linear_momentum(&s) - p0).norm());
    }
    checks.push(("momentum", drift < 1e-8));

    let contact = ContactSpec::default();
    let mut complementary = true;
    for i in 0..=40 {
        let height = -0.02 + 0.001 * i as f64;
        for v in [-2.0, -0.3, 0.0, 0.4, 1.5] {
            let f = contact_force(height, Vec3::new(v, -0.5 * v, v), &contact);
            let tangential = (f.x * f.x + f.y * f.y).sqrt();
            complementary &= f.z >= 0.0 && tangential <= contact.friction * f.z + 1e-12;
            if height >= 0.0 {
                complementary &= f == Vec3::ZERO;
            }
        }
    }
    checks.push(("contact complementarity", complementary));

    let (k, m) = (1000.0_f64, 1.0);
    let block = sim_character(&format!(
        "schema = \"character/v1\"\nname = \"block\"\n[root]\nkind = \"free\"\nrest_position = [0.0, 0.0, 0.2]\n\
         [contact]\nstiffness = {k}\ndamping = {}\nfriction = 1.0\n\
         [[links]]\nname = \"body\"\nmass = {m}\ninertia = [0.01, 0.01, 0.01]\n\
         [links.capsule]\nradius = 0.1\nhalf_length = 0.0\naxis = [0.0, 0.0, 1.0]\n",
        2.0 * (k * m).sqrt()
    ));
    let mut s = block.rest_state();
    for _ in 0..(480 * 4) {
        s = block.step(&s, &[], &cfg).unwrap();
    }
    let penetration = 0.1 - s.links[0].p.z;
    let gap = (penetration - m * GRAVITY / k).abs();
    checks.push(("resting penetration", gap < 1e-6));

    let failed: Vec<&str> = checks
        .iter()
        .filter(|(_, ok)| !ok)
        .map(|(n, _)| *n)
        .collect();
    Verdict::new(
        failed.is_empty(),
        if failed.is_empty() {
            format!("ballistic, equilibrium, momentum, contact hold; penetration off the spring balance by {gap:.1e} m")
        } else {
            format!("violated: {}", failed.join(", "))
        },
    )
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    std::fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}

fn c9_determinism(_: &mut Shared) -> Verdict {
    let tmp = TempDir::new().unwrap();
    let small = ["--batch", "2", "--steps", "20", "--hidden", "16"];
    let run = |root: &str| -> Result<(), String> {
        let motion = format!("{root}/refs/hopper-spline-track.motion");
        let checkpoint = format!("{root}/train/policy.json");
        let commands: Vec<Vec<&str>> = vec![
            vec!["gen-ref", "--character", "hopper", "--out", "refs"],
            vec![
                "train",
                "--character",
                "hopper",
                "--motion",
                &motion,
                "--iters",
                "4",
                "--replay",
                "random:0.1",
                "--rsi",
                "--progress",
                "0",
                "--out",
                "train",
            ],
            vec![
                "gradcheck",
                "--character",
                "hopper",
                "--motion",
                &motion,
                "--out",
                "gradcheck",
            ],
            vec![
                "ablate",
                "--axis",
                "truncation",
                "--character",
                "hopper",
                "--motion",
                &motion,
                "--iters",
                "2",
                "--seeds",
                "0,1",
                "--out",
                "ablate",
            ],
            vec![
                "rollout",
                "--checkpoint",
                &checkpoint,
                "--motion",
                &motion,
                "--frames",
                "40",
                "--out",
                "rollout",
            ],
            vec![
                "evaluate",
                "--checkpoint",
                &checkpoint,
                "--motion",
                &motion,
                "--frames",
                "40",
                "--friction",
                "0.9,1.1",
                "--push",
                "forward",
                "--out",
                "evaluate",
            ],
        ];
        let dir = tmp.path().join(root);
        std::fs::create_dir_all(&dir).unwrap();
        for mut args in commands {
            let out_at = args.iter().position(|a| *a == "--out").unwrap() + 1;
            let target = format!("{root}/{}", args[out_at]);
            args[out_at] = &target;
            if matches!(args[0], "train" | "gradcheck" | "ablate") {
                args.extend(small);
            }
            let o = mimic(tmp.path(), &args);
            if !o.status.success() {
                return Err(format!(
                    "{} failed: {}",
                    args[0],
                    String::from_utf8_lossy(&o.stderr)
                ));
            }
        }
        Ok(())
    };
    if let Err(e) = run("a").and_then(|_| run("b")) {
        return Verdict::new(false, e);
    }
    // Runs under different roots echo different input paths; everything
    // else must match byte for byte.
    let normalize = |files: BTreeMap<PathBuf, Vec<u8>>, root: &str| -> BTreeMap<PathBuf, Vec<u8>> {
        files
            .into_iter()
            .map(|(p, bytes)| {
                let text = String::from_utf8_lossy(&bytes).replace(&format!("{root}/"), "");
                (p, text.into_bytes())
            })
            .collect()
    };
    let a = normalize(files_under(&tmp.path().join("a")), "a");
    let b = normalize(files_under(&tmp.path().join("b")), "b");
    let differing: Vec<String> = a
        .iter()
        .filter(|(p, bytes)| b.get(*p) != Some(*bytes))
        .map(|(p, _)| p.display().to_string())
        .collect();
    Verdict::new(
        differing.is_empty() && a.len() == b.len(),
        if differing.is_empty() {
            format!("{} output files identical across reruns", a.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    )
}

fn c10_robustness(shared: &mut Shared) -> Verdict {
    let hopper = builtin("hopper");
    let motion = spline(&hopper);
    let cfg = WALKER_BUDGET.config(0);
    let trained = run_training(&hopper, &motion, &cfg, None);
    // The push starts half a cycle in; two seconds remain to recover.
    let horizon = (motion.cycle_period() / 2.0 / dt()).round() as usize + 60;
    let track = Track::new(&motion, &hopper, dt(), horizon).unwrap();
    let push = push_robustness(&trained.policy, &hopper, &track, PushDirection::Forward).unwrap();
    let force = push.max_force.unwrap_or(f64::NAN);

    let walker = builtin("walker");
    let walker_motion = spline(&walker);
    let policy = &shared.walker_run("full", 0).policy;
    let sweep = friction_sweep(
        &walker,
        &walker_motion,
        &FRICTIONS,
        SweepMode::Evaluate(policy),
        WALKER_BUDGET.steps,
    )
    .unwrap();
    let errors: Vec<String> = sweep
        .iter()
        .map(|p| format!("μ {} → {:.5}", p.mu, p.pose_error))
        .collect();
    let finite = force.is_finite() && sweep.iter().all(|p| p.pose_error.is_finite());
    let pinned = force == PUSH_PINNED
        && sweep
            .iter()
            .zip(FRICTION_PINNED)
            .all(|(p, want)| (p.pose_error - want).abs() <= REGRESSION_TOLERANCE * want);
    Verdict::new(
        finite && pinned,
        format!(
            "hopper survives a {force} N forward push; walker pose error {}{}",
            errors.join(", "),
            if pinned {
                ""
            } else {
                " (differs from the pinned regression)"
            }
        ),
    )
}

type Criterion = fn(&mut Shared) -> Verdict;

const CRITERIA: [(&str, Criterion); 10] = [
    ("gradient fidelity", c1_gradient_fidelity),
    ("exact identities", c2_exact_identities),
    ("pendulum convergence", c3_pendulum_convergence),
    ("replay smoothing", c4_replay_smoothing),
    ("absurdity improvement", c5_absurdity),
    ("truncation ablation", c6_truncation),
    ("RSI effect", c7_rsi),
    ("simulator physics", c8_simulator),
    ("determinism", c9_determinism),
    ("robustness harnesses", c10_robustness),
];

fn main() -> ExitCode {
    // libtest flags such as --nocapture may be forwarded; only numbers select.
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut shared = Shared::default();
    let mut failures = 0;
    for (i, (name, check)) in CRITERIA.iter().enumerate() {
        let n = i + 1;
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let t0 = Instant::now();
        let v = check(&mut shared);
        failures += usize::from(!v.pass);
        println!(
            "criterion {n:>2} {}: {name}: {} [{:.0} s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t0.elapsed().as_secs_f64()
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
