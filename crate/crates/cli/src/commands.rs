use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use primo_core::avoidance::{AvoidanceFit, TurningSample};
use primo_core::dmp::FitOptions;
use primo_core::ingest::{DemoSpec, InjectedAvoidance, PreprocessConfig, Profile};
use primo_core::scenarios::{self, RaiseOptions};
use primo_core::sim::{LibrarySpec, Metrics, SceneJob};
use primo_core::{
    batch_run, fit, generate_synthetic_demo, learn_from_pair, pca_project, preprocess, run_pick_and_raise, run_scene,
    AvoidanceParams, DmpModel, Error, Obstacle, RawDemo, RolloutLog, Scene, Trajectory,
};
use serde_json::{json, Value};

use crate::config::Config;
use crate::{
    BatchArgs, Command, Failure, FilterArgs, GenDemoArgs, InspectArgs, LearnCommand, LearnDmpArgs, LearnOaArgs,
    PreprocessArgs, ProfileArg, SceneArgs, SceneKind, SimulateArgs,
};

type Outcome = Result<(), Failure>;

pub fn run(cmd: Command, cfg: &Config) -> Outcome {
    match cmd {
        Command::GenDemo(a) => gen_demo(a, cfg),
        Command::Preprocess(a) => preprocess_cmd(a, cfg),
        Command::Learn(LearnCommand::Dmp(a)) => learn_dmp(a, cfg),
        Command::Learn(LearnCommand::Oa(a)) => learn_oa(a, cfg),
        Command::Inspect(a) => inspect(a),
        Command::Scene(a) => scene(a),
        Command::Simulate(a) => simulate(a),
        Command::Batch(a) => batch(a, cfg),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Error> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn print_json(value: &Value) {
    println!("{}", serde_json::to_string(value).expect("JSON values serialise"));
}

fn filter_config(cfg: &Config, f: &FilterArgs) -> PreprocessConfig {
    let mut p = cfg.preprocess;
    if f.resample_dt.is_some() {
        p.resample_dt = f.resample_dt;
    }
    if let Some(w) = f.hampel_window {
        p.hampel_window = w;
    }
    if let Some(n) = f.hampel_nsigma {
        p.hampel_nsigma = n;
    }
    if let Some(w) = f.smooth_window {
        p.smooth_window = w;
    }
    p
}

fn is_trajectory_csv(path: &Path) -> Result<bool, Error> {
    let mut first = String::new();
    BufReader::new(File::open(path)?).read_line(&mut first)?;
    Ok(first.trim_end().starts_with("t,dof0_x"))
}

/// Trajectory CSVs are used as they are; raw demos are preprocessed.
fn read_demo(path: &Path, filter: &PreprocessConfig) -> Result<Trajectory, Error> {
    if is_trajectory_csv(path)? {
        Trajectory::load(path)
    } else {
        preprocess(&RawDemo::load(path)?, filter)
    }
}

fn gen_demo(a: GenDemoArgs, cfg: &Config) -> Outcome {
    let goal = a.to.0;
    let start = a.from.map_or_else(|| vec![0.0; goal.len()], |p| p.0);
    if start.len() != goal.len() {
        return Err(Failure::Usage("--from and --to must have the same number of entries".into()));
    }
    let profile = match a.profile {
        ProfileArg::MinJerk => Profile::MinJerk,
        ProfileArg::DmpRollout => Profile::DmpRollout,
    };
    if a.model.is_some() && matches!(profile, Profile::MinJerk) {
        return Err(Failure::Usage("--model only applies to --profile dmp-rollout".into()));
    }
    let avoidance = match (a.obstacle, a.gamma, a.beta) {
        (Some(pos), Some(gamma), Some(beta)) => Some(InjectedAvoidance {
            obstacle: Obstacle::new(pos.0, a.radius),
            params: AvoidanceParams::new(gamma, beta)?,
        }),
        _ => None,
    };
    let spec = DemoSpec {
        profile,
        start,
        goal,
        duration: a.duration,
        dt: a.dt,
        noise_sigma: a.noise,
        jitter: a.jitter,
        seed: a.seed.or(cfg.seed).unwrap_or(0),
        avoidance,
        model: a.model.as_deref().map(DmpModel::load).transpose()?,
    };
    let demo = generate_synthetic_demo(&spec)?;
    demo.raw.save(&a.out)?;
    if let Some(p) = &a.clean {
        demo.clean.save(p)?;
    }
    println!(
        "wrote {} samples ({} DoF, seed {}) to {}",
        demo.raw.len(),
        demo.raw.dims(),
        spec.seed,
        a.out.display()
    );
    Ok(())
}

fn preprocess_cmd(a: PreprocessArgs, cfg: &Config) -> Outcome {
    let filter = filter_config(cfg, &a.filter);
    let traj = preprocess(&RawDemo::load(&a.input)?, &filter)?;
    traj.save(&a.out)?;
    if let Some(p) = &a.pca {
        let pca = pca_project(&traj)?;
        let projected: Vec<Vec<f64>> = traj.positions().iter().map(|x| pca.project_point(x).to_vec()).collect();
        write_json(
            p,
            &json!({
                "mean": pca.mean,
                "components": pca.components,
                "eigenvalues": pca.eigenvalues,
                "explained": pca.explained(),
                "dt": traj.dt(),
                "projected": projected,
            }),
        )?;
    }
    println!("wrote {} samples at dt = {} to {}", traj.len(), traj.dt(), a.out.display());
    Ok(())
}

fn learn_dmp(a: LearnDmpArgs, cfg: &Config) -> Outcome {
    let demo = read_demo(&a.demo, &filter_config(cfg, &a.filter))?;
    let mut opts: FitOptions = cfg.fit.clone();
    if let Some(n) = a.n_basis {
        opts.n_basis = n;
    }
    if a.tau.is_some() {
        opts.tau = a.tau;
    }
    let model = fit(&demo, &opts)?;
    let replay = model.reproduce(demo.dt(), demo.len() - 1)?;
    let rmse = replay.position_rmse(&demo);
    let range = demo.range();
    model.save(&a.out)?;
    let report = json!({
        "rmse": rmse,
        "range": range,
        "relative_rmse": rmse / range,
        "n_basis": model.n_basis(),
        "tau": model.tau,
        "samples": demo.len(),
    });
    if let Some(p) = &a.report {
        write_json(p, &report)?;
    }
    print_json(&report);
    Ok(())
}

fn write_series(path: &Path, series: &[TurningSample]) -> Result<(), Error> {
    let mut w = csv_writer(path)?;
    w.write_record(["theta", "theta_dot"])?;
    for s in series {
        w.write_record([s.theta.to_string(), s.theta_dot.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, Error> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

fn learn_oa(a: LearnOaArgs, cfg: &Config) -> Outcome {
    let filter = filter_config(cfg, &a.filter);
    let perturbed = read_demo(&a.perturbed, &filter)?;
    let baseline = read_demo(&a.baseline, &filter)?;
    let mut learn = cfg.learn;
    if let Some(r) = a.min_relative_rate {
        learn.min_relative_rate = r;
    }
    // The radius plays no part in learning.
    let obstacle = Obstacle::new(a.obstacle.0, 0.0);
    let (AvoidanceFit { params, r_squared, samples_used }, series) =
        learn_from_pair(&perturbed, &baseline, &obstacle, &cfg.fit, &learn)?;
    write_json(&a.out, &params)?;
    if let Some(p) = &a.series {
        write_series(p, &series)?;
    }
    let report = json!({
        "gamma": params.gamma,
        "beta_oa": params.beta_oa,
        "r_squared": r_squared,
        "samples_used": samples_used,
        "samples_total": series.len(),
    });
    if let Some(p) = &a.report {
        write_json(p, &report)?;
    }
    print_json(&report);
    Ok(())
}

fn inspect(a: InspectArgs) -> Outcome {
    let path = a.path.as_path();
    if path.extension().is_some_and(|e| e == "csv") {
        let summary = if is_trajectory_csv(path)? {
            let t = Trajectory::load(path)?;
            json!({"kind": "trajectory", "samples": t.len(), "dims": t.dims(), "dt": t.dt(),
                   "duration": t.duration(), "range": t.range(), "path_length": t.path_length()})
        } else {
            let raw = RawDemo::load(path)?;
            json!({"kind": "raw-demo", "samples": raw.len(), "dims": raw.dims(),
                   "duration": raw.t.last().copied().unwrap_or(0.0) - raw.t.first().copied().unwrap_or(0.0)})
        };
        print_json(&summary);
        return Ok(());
    }

    let text = std::fs::read_to_string(path).map_err(Error::from)?;
    let value: Value = serde_json::from_str(&text).map_err(Error::from)?;
    let has = |k: &str| value.get(k).is_some();
    if has("weights") {
        let model = DmpModel::from_json(&text)?;
        let norms: Vec<f64> = (0..model.dims)
            .map(|d| model.weights.iter().map(|w| w[d] * w[d]).sum::<f64>().sqrt())
            .collect();
        print_json(&json!({"kind": "dmp", "dims": model.dims, "n_basis": model.n_basis(), "alpha": model.alpha,
                           "beta": model.beta, "alpha_k": model.alpha_k, "tau": model.tau, "x0": model.x0,
                           "g": model.g, "weight_norms": norms}));
        if let Some(out) = &a.rollout {
            let x0 = a.from.clone().map_or_else(|| model.x0.clone(), |p| p.0);
            let g = a.goal.clone().map_or_else(|| model.g.clone(), |p| p.0);
            let tau = a.tau.unwrap_or(model.tau);
            if !(a.dt > 0.0 && a.horizon > 0.0) {
                return Err(Failure::Usage("--dt and --horizon must be positive".into()));
            }
            let n = (a.horizon * tau / a.dt).round() as usize;
            model.rollout(&x0, &g, tau, a.dt, n, &[])?.save(out)?;
        }
    } else if has("dims") && has("start") {
        let scene = Scene::from_json(&text)?;
        print_json(&json!({"kind": "scene", "dims": scene.dims, "start": scene.start, "goal": scene.goal,
                           "obstacles": scene.obstacles.len(), "steps": scene.steps(), "dt": scene.dt,
                           "avoidance": scene.avoidance,
                           "absolute_skills": scene.library.as_ref().map_or(0, |l| l.absolute.len()),
                           "relative_skills": scene.library.as_ref().map_or(0, |l| l.relative.len())}));
    } else if has("gamma") {
        let p: AvoidanceParams = serde_json::from_str(&text).map_err(Error::from)?;
        p.validate()?;
        print_json(&json!({"kind": "avoidance", "gamma": p.gamma, "beta_oa": p.beta_oa,
                           "peak_angle": p.peak_angle(), "peak_rate": p.peak_rate()}));
    } else if has("goal_error") {
        let m: Metrics = serde_json::from_str(&text).map_err(Error::from)?;
        print_json(&json!({"kind": "metrics", "metrics": m}));
    } else {
        return Err(Error::Format(format!("{} is not a model, scene, parameter or metrics file", path.display())).into());
    }
    Ok(())
}

fn scene(a: SceneArgs) -> Outcome {
    let (mut scene, lib) = match a.kind {
        SceneKind::Transfer => scenarios::transfer_scene(!a.no_avoidance)?,
        SceneKind::Raise => scenarios::raise_scene(RaiseOptions {
            obstacle: a.obstacle,
            grasp_skill: !a.no_grasp_skill,
            squeeze: a.squeeze,
        })?,
    };
    scene.library = Some(LibrarySpec::inline(&lib));
    std::fs::write(&a.out, scene.to_json()? + "\n").map_err(Error::from)?;
    println!("wrote scene to {}", a.out.display());
    Ok(())
}

fn metrics_json(m: &Metrics) -> Value {
    serde_json::to_value(m).expect("metrics serialise")
}

fn simulate(a: SimulateArgs) -> Outcome {
    let (mut scene, lib) = Scene::load(&a.scene)?;
    if a.no_avoidance {
        scene.avoidance = false;
    }
    let log = if a.raise { run_pick_and_raise(&scene, &lib)? } else { run_scene(&scene, &lib)? };
    log.write_dir(&a.out)?;
    print_json(&metrics_json(&log.metrics));
    if log.metrics.success {
        Ok(())
    } else {
        Err(Failure::Task("task failed: see metrics.json".into()))
    }
}

fn batch(a: BatchArgs, cfg: &Config) -> Outcome {
    let mut names = Vec::new();
    let mut jobs = Vec::new();
    for path in &a.scenes {
        let (scene, library) = Scene::load(path)?;
        names.push(path.file_stem().map_or("scene".into(), |s| s.to_string_lossy().into_owned()));
        jobs.push(SceneJob { scene, library });
    }
    if let Some(n) = a.random {
        let seed = a.seed.or(cfg.seed).unwrap_or(0);
        for (i, job) in scenarios::random_obstacle_batch(n, seed)?.into_iter().enumerate() {
            names.push(format!("random-{i:03}"));
            jobs.push(job);
        }
    }
    if jobs.is_empty() {
        return Err(Failure::Usage("no scenes given (pass scene files or --random N)".into()));
    }

    let results = batch_run(&jobs);
    std::fs::create_dir_all(&a.out).map_err(Error::from)?;
    let mut summary = csv_writer(&a.out.join("summary.csv"))?;
    summary
        .write_record(["index", "name", "success", "goal_error", "min_clearance", "stress", "error"])
        .map_err(Error::from)?;
    let (mut successes, mut errors) = (0usize, 0usize);
    for (i, (name, result)) in names.iter().zip(&results).enumerate() {
        let row = match result {
            Ok(log) => {
                write_entry(&a.out.join(format!("{i:03}-{name}")), log, &jobs[i].scene)?;
                successes += log.metrics.success as usize;
                let m = &log.metrics;
                [
                    i.to_string(),
                    name.clone(),
                    m.success.to_string(),
                    m.goal_error.to_string(),
                    m.min_clearance.map_or(String::new(), |c| c.to_string()),
                    m.stress.to_string(),
                    String::new(),
                ]
            }
            Err(e) => {
                errors += 1;
                [i.to_string(), name.clone(), "false".into(), String::new(), String::new(), String::new(), e.to_string()]
            }
        };
        summary.write_record(&row).map_err(Error::from)?;
    }
    summary.flush().map_err(Error::from)?;
    let total = jobs.len();
    let overview = json!({
        "total": total,
        "errors": errors,
        "successes": successes,
        "success_rate": successes as f64 / total as f64,
    });
    write_json(&a.out.join("summary.json"), &overview)?;
    print_json(&overview);
    if errors > 0 {
        return Err(Failure::Task(format!("{errors} of {total} scenes failed to run")));
    }
    Ok(())
}

fn write_entry(dir: &Path, log: &RolloutLog, scene: &Scene) -> Result<(), Error> {
    log.write_dir(dir)?;
    let mut f = BufWriter::new(File::create(dir.join("scene.json"))?);
    f.write_all((scene.to_json()? + "\n").as_bytes())?;
    f.flush()?;
    Ok(())
}
