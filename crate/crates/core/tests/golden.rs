use std::path::PathBuf;

use bayesdoe::io::{load_csv, load_problem, OutOfBounds};
use bayesdoe::{ask, init_campaign, tell, CampaignConfig, OutputRole};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn shape(case: &str) -> (usize, usize, usize) {
    let problem = load_problem(data(&format!("{case}.space.json"))).unwrap();
    let space = problem.space().unwrap();
    let rows = load_csv(data(&format!("{case}.csv")), &space, &problem.outputs, OutOfBounds::Reject).unwrap();
    (rows.len(), space.dim(), problem.outputs.len())
}

#[test]
fn case_study_shapes() {
    assert_eq!(shape("BatchObj"), (27, 4, 1));
    assert_eq!(shape("MultiObj"), (24, 4, 4));
    assert_eq!(shape("BBcon"), (17, 3, 2));
    assert_eq!(shape("SurfRough"), (21, 3, 2));
}

#[test]
fn surface_roughness_class_is_not_modeled() {
    let problem = load_problem(data("SurfRough.space.json")).unwrap();
    assert!(matches!(problem.outputs[1].role, OutputRole::Auxiliary));
}

#[test]
fn suggestions_stay_in_bounds() {
    for case in ["BatchObj", "MultiObj", "BBcon", "SurfRough"] {
        let problem = load_problem(data(&format!("{case}.space.json"))).unwrap();
        let space = problem.space().unwrap();
        let rows = load_csv(data(&format!("{case}.csv")), &space, &problem.outputs, OutOfBounds::Reject).unwrap();
        let mut config = CampaignConfig::default();
        config.fit.restarts = 3;
        let state = init_campaign(space.clone(), problem.outputs.clone(), config, 11).unwrap();
        let state = tell(&state, rows).unwrap();
        let (_, result) = ask(&state, 2).unwrap();
        assert_eq!(result.points.len(), 2, "{case}");
        assert!(!result.cold_start);
        for p in &result.points {
            assert!(space.contains(p), "{case}: {p:?} out of bounds");
        }
    }
}
