use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use mimic_core::autodiff::Op;
use mimic_core::eval::{
    evaluate, friction_sweep, iterations_to_success, push_robustness, rolling_std, EvalReport,
    PolicyController, SuccessCriterion, SweepMode, ABSURDITY_FRACTIONS,
};
use mimic_core::math::Vec3;
use mimic_core::policy::{feature_dim, state_features, PolicyParams};
use mimic_core::reference::{
    generate_reference, ReferenceKind, ReferenceMotion, Track, WaveParams,
};
use mimic_core::sim::{Character, StepConfig};
use mimic_core::train::{
    ablation_variants, gradcheck, train, GradCheckOptions, TrainConfig, TrainError, TrainOutcome,
    GRADCHECK_MIN_COORDS,
};
use serde::Serialize;

use crate::args::{
    AblateArgs, EvaluateArgs, GenRefArgs, GradcheckArgs, Horizon, RolloutArgs, TrainArgs,
};
use crate::error::{CliError, CliResult};
use crate::run_config::RunConfig;

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_VAR: &str = "MIMIC_OUTPUT_ROOT";
/// Window of the loss-smoothness statistic in ablation reports.
pub const SMOOTHNESS_WINDOW: usize = 50;
/// Episode length of a gradient check unless configured otherwise.
pub const GRADCHECK_STEPS_DEFAULT: usize = 30;

fn control_dt() -> f64 {
    StepConfig::default().control_dt()
}

/// `--out`, else `$MIMIC_OUTPUT_ROOT/<name>`, else `runs/<name>`; created.
fn output_dir(out: Option<&Path>, name: &str) -> CliResult<PathBuf> {
    let dir = match out {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(OUTPUT_ROOT_VAR)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("runs"))
            .join(name),
    };
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn write(path: &Path, contents: &str) -> CliResult {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes") + "\n"
}

fn check_policy(policy: &PolicyParams, ch: &Character) -> CliResult {
    if policy.input_dim() != feature_dim(ch) || policy.action_dim() != ch.action_dim() {
        return Err(CliError::Config(format!(
            "checkpoint maps {} features to {} actions; {} needs {} and {}",
            policy.input_dim(),
            policy.action_dim(),
            ch.name(),
            feature_dim(ch),
            ch.action_dim()
        )));
    }
    Ok(())
}

/// Runs training and streams the log to `dir/train_log.jsonl`. A diverged
/// run leaves `dir/diagnostics.json` behind.
fn train_into(
    dir: &Path,
    ch: &Character,
    motion: &ReferenceMotion,
    cfg: &TrainConfig,
    progress: usize,
) -> CliResult<TrainOutcome> {
    let initial = PolicyParams::init(feature_dim(ch), &cfg.hidden, ch.action_dim(), cfg.seed);
    let log_path = dir.join("train_log.jsonl");
    let file = File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?;
    let mut log = BufWriter::new(file);
    let mut io_error = None;
    let result = train(&initial, ch, motion, cfg, |r| {
        if let Err(e) = writeln!(log, "{}", r.to_json_line()) {
            io_error.get_or_insert(e);
        }
        if progress > 0 && (r.iteration % progress == 0 || r.iteration + 1 == cfg.iterations) {
            eprintln!(
                "iter {:>5}  loss {:.5}  pose error {:.4} m  replay {:.2}",
                r.iteration, r.loss, r.pose_error, r.replay_fraction
            );
        }
    });
    if let Err(e) = log.flush() {
        io_error.get_or_insert(e);
    }
    if let Some(e) = io_error {
        return Err(CliError::io(&log_path, e));
    }
    match result {
        Ok(outcome) => Ok(outcome),
        Err(TrainError::Diverged {
            iteration,
            diagnostics,
        }) => {
            let path = dir.join("diagnostics.json");
            write(&path, &to_json(&diagnostics))?;
            Err(CliError::Numeric(format!(
                "training diverged at iteration {iteration}: {}; diagnostics written to {}",
                diagnostics.summary,
                path.display()
            )))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_train(args: &TrainArgs, out: Option<&Path>) -> CliResult {
    let cfg = RunConfig::from_args(&args.run)?;
    let ch = cfg.character()?;
    let motion = cfg.motion()?;
    motion.check_character(&ch)?;
    let dir = output_dir(out, &format!("train-{}", ch.name()))?;
    write(&dir.join("config.toml"), &cfg.to_toml())?;
    let outcome = train_into(&dir, &ch, &motion, &cfg.train, args.progress)?;
    outcome.policy.save(ch.name(), &dir.join("policy.json"))?;
    let criterion = SuccessCriterion::for_character(&ch, control_dt());
    let report = EvalReport::new(&ch, &outcome.evaluation, &criterion);
    write(&dir.join("eval.json"), &report.to_json())?;
    write(
        &dir.join("eval_frames.csv"),
        &outcome.evaluation.pose.to_csv(),
    )?;
    println!(
        "trained {} for {} iterations: pose error {:.4} m, success {}; outputs in {}",
        ch.name(),
        outcome.log.len(),
        report.pose_error,
        report.success,
        dir.display()
    );
    Ok(())
}

fn parse_corruption(spec: &str) -> CliResult<(Op, f64)> {
    let (op, factor) = match spec.split_once(':') {
        Some((op, f)) => (
            op,
            f.parse::<f64>()
                .map_err(|e| CliError::Config(format!("corruption factor {f:?}: {e}")))?,
        ),
        None => (spec, 1.5),
    };
    Ok((op.parse::<Op>().map_err(CliError::Config)?, factor))
}

pub fn cmd_gradcheck(args: &GradcheckArgs, out: Option<&Path>) -> CliResult {
    let mut cfg = RunConfig::from_args(&args.run)?;
    if args.run.steps.is_none() && args.run.config.is_none() {
        cfg.train.episode_steps = GRADCHECK_STEPS_DEFAULT;
        cfg.train.validate()?;
    }
    if args.coords < GRADCHECK_MIN_COORDS {
        return Err(CliError::Config(format!(
            "--coords must be at least {GRADCHECK_MIN_COORDS}"
        )));
    }
    let corrupt = args
        .corrupt_adjoint
        .as_deref()
        .map(parse_corruption)
        .transpose()?;
    let ch = cfg.character()?;
    let motion = cfg.motion()?;
    motion.check_character(&ch)?;
    let dir = output_dir(out, &format!("gradcheck-{}", ch.name()))?;
    write(&dir.join("config.toml"), &cfg.to_toml())?;
    let t = &cfg.train;
    let policy = PolicyParams::init(feature_dim(&ch), &t.hidden, ch.action_dim(), t.seed);
    let track = Track::new(&motion, &ch, control_dt(), t.episode_steps)?;
    let opts = GradCheckOptions {
        coords: args.coords,
        seed: t.seed,
        corrupt,
    };
    let report = gradcheck(&policy, &ch, &track, t, &opts)?;
    write(&dir.join("gradcheck.json"), &to_json(&report))?;
    let touching = ch
        .contact_points(track.state(0))
        .iter()
        .filter(|(_, p)| p.z <= 0.0)
        .count();
    println!(
        "gradcheck {}: {} coordinates, {} steps, loss {:.6e}, {} contact points touching the ground at the start",
        ch.name(),
        report.coords.len(),
        t.episode_steps,
        report.loss,
        touching
    );
    for p in &report.probes {
        println!(
            "  h = {:e}  max relative error {:.3e}",
            p.h, p.max_relative_error
        );
    }
    let verdict = format!(
        "max relative error {:.3e} at h = {:e}",
        report.max_relative_error, report.best_h
    );
    if report.passed {
        println!("{verdict}: pass");
        Ok(())
    } else {
        println!("{verdict}: FAIL");
        Err(CliError::GradCheck(verdict))
    }
}

/// One trained variant of an ablation.
#[derive(Debug, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    pub iterations: usize,
    pub final_loss: f64,
    pub pose_error: f64,
    /// `[k, L2@k]` of the final evaluation.
    pub absurdity: Vec<(f64, f64)>,
    pub iterations_to_success: Option<usize>,
    pub mean_replay_fraction: f64,
    /// Mean over windows of the rolling loss standard deviation.
    pub loss_rolling_std: Option<f64>,
}

#[derive(Debug, Serialize)]
struct AblationReport<'a> {
    schema: &'static str,
    character: &'a str,
    axis: String,
    window: usize,
    rows: &'a [AblationRow],
}

pub fn cmd_ablate(args: &AblateArgs, out: Option<&Path>) -> CliResult {
    let cfg = RunConfig::from_args(&args.run)?;
    let ch = cfg.character()?;
    let motion = cfg.motion()?;
    motion.check_character(&ch)?;
    let dir = output_dir(out, &format!("ablate-{}-{}", args.axis, ch.name()))?;
    write(&dir.join("config.toml"), &cfg.to_toml())?;
    let criterion = SuccessCriterion::for_character(&ch, control_dt());
    let mut rows = Vec::new();
    for variant in ablation_variants(args.axis, &cfg.train) {
        variant.config.validate()?;
        for &seed in &args.seeds {
            let run_cfg = TrainConfig {
                seed,
                ..variant.config.clone()
            };
            let run_dir = dir.join(&variant.label).join(format!("seed-{seed}"));
            std::fs::create_dir_all(&run_dir).map_err(|e| CliError::io(&run_dir, e))?;
            eprintln!("{} seed {seed}", variant.label);
            let outcome = train_into(&run_dir, &ch, &motion, &run_cfg, 0)?;
            outcome
                .policy
                .save(ch.name(), &run_dir.join("policy.json"))?;
            let losses: Vec<f64> = outcome.log.iter().map(|r| r.loss).collect();
            let stds = rolling_std(&losses, SMOOTHNESS_WINDOW);
            let n = outcome.log.len().max(1) as f64;
            rows.push(AblationRow {
                variant: variant.label.clone(),
                seed,
                iterations: outcome.log.len(),
                final_loss: losses.last().copied().unwrap_or(f64::NAN),
                pose_error: outcome.evaluation.pose.mean,
                absurdity: outcome.evaluation.pose.absurdity.clone(),
                iterations_to_success: iterations_to_success(&outcome.log, &criterion),
                mean_replay_fraction: outcome.log.iter().map(|r| r.replay_fraction).sum::<f64>()
                    / n,
                loss_rolling_std: (!stds.is_empty())
                    .then(|| stds.iter().sum::<f64>() / stds.len() as f64),
            });
        }
    }
    let report = AblationReport {
        schema: "ablation/v1",
        character: ch.name(),
        axis: args.axis.to_string(),
        window: SMOOTHNESS_WINDOW,
        rows: &rows,
    };
    write(&dir.join("comparison.json"), &to_json(&report))?;
    let mut csv = String::from("variant,seed,iterations,final_loss,pose_error");
    for k in ABSURDITY_FRACTIONS {
        csv.push_str(&format!(",l2_at_{k}"));
    }
    csv.push_str(",iterations_to_success,mean_replay_fraction,loss_rolling_std\n");
    let opt = |v: Option<String>| v.unwrap_or_default();
    println!(
        "{:<16} {:>5} {:>12} {:>10} {:>10} {:>8}",
        "variant", "seed", "pose error", "L2@0.05", "success", "replay"
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}",
            r.variant, r.seed, r.iterations, r.final_loss, r.pose_error
        ));
        for (_, v) in &r.absurdity {
            csv.push_str(&format!(",{v}"));
        }
        csv.push_str(&format!(
            ",{},{},{}\n",
            opt(r.iterations_to_success.map(|i| i.to_string())),
            r.mean_replay_fraction,
            opt(r.loss_rolling_std.map(|s| s.to_string()))
        ));
        let l2 = r
            .absurdity
            .iter()
            .find(|(k, _)| *k == 0.05)
            .map_or(f64::NAN, |(_, v)| *v);
        println!(
            "{:<16} {:>5} {:>12.4} {:>10.4} {:>10} {:>8.2}",
            r.variant,
            r.seed,
            r.pose_error,
            l2,
            opt(r.iterations_to_success.map(|i| i.to_string())),
            r.mean_replay_fraction
        );
    }
    write(&dir.join("comparison.csv"), &csv)?;
    println!("comparison written to {}", dir.display());
    Ok(())
}

/// Loads a checkpoint (or builds a zero policy) and the character it runs.
fn load_policy(
    checkpoint: Option<&Path>,
    character: Option<&str>,
    hidden: &[usize],
) -> CliResult<(Character, PolicyParams)> {
    let loaded = checkpoint.map(PolicyParams::load).transpose()?;
    let name = character
        .or(loaded.as_ref().map(|(c, _)| c.as_str()))
        .ok_or_else(|| {
            CliError::Config("no character given (--character or a checkpoint)".into())
        })?;
    let ch = Character::resolve(name)?;
    let policy = match loaded {
        Some((trained_for, policy)) => {
            if trained_for != ch.name() {
                return Err(CliError::Config(format!(
                    "checkpoint was trained for {trained_for:?}, character is {:?}",
                    ch.name()
                )));
            }
            policy
        }
        None => PolicyParams::zeros(feature_dim(&ch), hidden, ch.action_dim()),
    };
    check_policy(&policy, &ch)?;
    Ok((ch, policy))
}

/// Frames (states, start included) requested by `h`, or `default`.
fn frames(h: &Horizon, default: usize) -> CliResult<usize> {
    let n = match (h.seconds, h.frames) {
        (Some(s), _) if !(s.is_finite() && s > 0.0) => {
            return Err(CliError::Config(format!(
                "--seconds must be positive, got {s}"
            )))
        }
        (Some(s), _) => (s / control_dt()).round() as usize,
        (None, Some(f)) => f,
        (None, None) => default,
    };
    if n < 2 {
        return Err(CliError::Config(format!(
            "a rollout needs at least 2 frames, got {n}"
        )));
    }
    Ok(n)
}

pub fn cmd_rollout(args: &RolloutArgs, out: Option<&Path>) -> CliResult {
    let (ch, policy) = load_policy(
        args.checkpoint.as_deref(),
        args.character.as_deref(),
        &args.hidden,
    )?;
    let motion = ReferenceMotion::load(&args.motion)?;
    motion.check_character(&ch)?;
    let dt = control_dt();
    let default = (motion.cycle_period() / dt).round() as usize + 1;
    let n = frames(&args.horizon, default)?;
    let track = Track::new(&motion, &ch, dt, n - 1)?;
    let evaluation = evaluate(&ch, &track, &mut PolicyController(&policy), None)?;
    let actions = evaluation.states[..n - 1]
        .iter()
        .map(|s| {
            let a = policy.mean(policy.theta(), &state_features(s))?;
            Ok(ch.clamp_action(&a))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let export = ReferenceMotion::new(
        ch.name(),
        ch.link_names(),
        1.0 / dt,
        false,
        Vec3::ZERO,
        evaluation.states.iter().map(|s| s.links.clone()).collect(),
        Some(actions),
    )?;
    let dir = output_dir(out, &format!("rollout-{}", ch.name()))?;
    export.save(&dir.join("rollout.motion"))?;
    write(&dir.join("rollout_frames.csv"), &evaluation.pose.to_csv())?;
    let criterion = SuccessCriterion::for_character(&ch, dt);
    let report = EvalReport::new(&ch, &evaluation, &criterion);
    write(&dir.join("rollout_eval.json"), &report.to_json())?;
    println!(
        "exported {n} frames of {} to {}: pose error {:.4} m",
        ch.name(),
        dir.join("rollout.motion").display(),
        report.pose_error
    );
    Ok(())
}

pub fn cmd_evaluate(args: &EvaluateArgs, out: Option<&Path>) -> CliResult {
    let (ch, policy) = load_policy(Some(&args.checkpoint), args.character.as_deref(), &[])?;
    let motion = ReferenceMotion::load(&args.motion)?;
    motion.check_character(&ch)?;
    let dt = control_dt();
    let default = mimic_core::eval::success_steps(&motion, dt) + 1;
    let steps = frames(&args.horizon, default)? - 1;
    let track = Track::new(&motion, &ch, dt, steps)?;
    let dir = output_dir(out, &format!("evaluate-{}", ch.name()))?;
    let evaluation = evaluate(&ch, &track, &mut PolicyController(&policy), None)?;
    let criterion = SuccessCriterion::for_character(&ch, dt);
    let report = EvalReport::new(&ch, &evaluation, &criterion);
    write(&dir.join("eval.json"), &report.to_json())?;
    write(&dir.join("eval_frames.csv"), &evaluation.pose.to_csv())?;
    println!(
        "{} over {steps} steps: pose error {:.4} m, success {}",
        ch.name(),
        report.pose_error,
        report.success
    );
    if !args.push.is_empty() {
        let mut pushes = Vec::new();
        for &direction in &args.push {
            let r = push_robustness(&policy, &ch, &track, direction)?;
            match r.max_force {
                Some(f) if r.capped => println!("push {direction}: survives the {f} N cap"),
                Some(f) => println!("push {direction}: {f} N"),
                None => println!("push {direction}: fails without a push"),
            }
            pushes.push(r);
        }
        write(&dir.join("push.json"), &to_json(&pushes))?;
    }
    if !args.friction.is_empty() {
        let points = friction_sweep(
            &ch,
            &motion,
            &args.friction,
            SweepMode::Evaluate(&policy),
            steps,
        )?;
        for p in &points {
            println!(
                "friction {}: pose error {:.4} m, success {}",
                p.mu, p.pose_error, p.success
            );
        }
        write(&dir.join("friction.json"), &to_json(&points))?;
    }
    Ok(())
}

pub fn cmd_gen_ref(args: &GenRefArgs, out: Option<&Path>) -> CliResult {
    let ch = Character::resolve(&args.character)?;
    let motion = generate_reference(&ch, args.kind, &WaveParams::preset(&ch, args.kind))?;
    let kind = match args.kind {
        ReferenceKind::SplineTrack => "spline-track",
        ReferenceKind::OraclePd => "oracle-pd",
    };
    let dir = output_dir(out, "references")?;
    let path = dir.join(format!("{}-{kind}.motion", ch.name()));
    motion.save(&path)?;
    println!("{}", path.display());
    Ok(())
}
