use primo_core::scenarios::style_pair;
use primo_core::sim::LibrarySpec;
use primo_core::{
    fit, generate_synthetic_demo, learn_from_pair, preprocess, run_scene, AbsoluteSkill, DmpModel, FitOptions, GraspConfig,
    RawDemo, Scene, SkillLibrary, Trajectory,
};

#[test]
fn noisy_style_recovery_over_many_seeds() {
    let mut worst = 0.0f64;
    for seed in 100..160 {
        let pair = style_pair(1e-3, seed);
        let base = generate_synthetic_demo(&pair.baseline).unwrap();
        let pert = generate_synthetic_demo(&pair.perturbed).unwrap();
        let base = preprocess(&base.raw, &pair.preprocess).unwrap();
        let pert = preprocess(&pert.raw, &pair.preprocess).unwrap();
        let (fit, _) = learn_from_pair(&pert, &base, &pair.obstacle, &FitOptions::default(), &pair.learn).unwrap();
        let eg = (fit.params.gamma / pair.params.gamma - 1.0).abs();
        let eb = (fit.params.beta_oa / pair.params.beta_oa - 1.0).abs();
        worst = worst.max(eg).max(eb);
    }
    assert!(worst < 0.15, "worst relative error {worst}");
}

#[test]
fn files_round_trip_through_a_scene() {
    let dir = tempfile::tempdir().unwrap();
    let pair = style_pair(5e-4, 1);
    let demo = generate_synthetic_demo(&pair.baseline).unwrap();
    demo.raw.save(dir.path().join("raw.csv")).unwrap();
    let raw = RawDemo::load(dir.path().join("raw.csv")).unwrap();
    assert_eq!(raw.positions, demo.raw.positions);

    let traj = preprocess(&raw, &pair.preprocess).unwrap();
    traj.save(dir.path().join("traj.csv")).unwrap();
    let traj = Trajectory::load(dir.path().join("traj.csv")).unwrap();
    let model = fit(&traj, &FitOptions::default()).unwrap();
    model.save(dir.path().join("model.json")).unwrap();
    assert_eq!(DmpModel::load(dir.path().join("model.json")).unwrap(), model);

    let lib = SkillLibrary::new(vec![AbsoluteSkill { model, avoidance: Some(pair.params) }], vec![]).unwrap();
    let grasp = GraspConfig::symmetric([0.0, 0.1, 0.0].into());
    let mut scene = Scene::new(vec![0.0, 0.0], vec![1.0, 0.0], grasp, 1e-3, 3.0);
    scene.library = Some(LibrarySpec::inline(&lib));
    std::fs::write(dir.path().join("scene.json"), scene.to_json().unwrap()).unwrap();
    let (loaded, loaded_lib) = Scene::load(dir.path().join("scene.json")).unwrap();
    let a = run_scene(&scene, &lib).unwrap();
    let b = run_scene(&loaded, &loaded_lib).unwrap();
    assert_eq!(a, b);
    assert!(a.metrics.goal_error < 1e-3);
}
