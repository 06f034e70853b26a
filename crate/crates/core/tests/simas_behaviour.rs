use loopsched::perturbation::scenario_by_name;
use loopsched::sim::PeResume;
use loopsched::simas::{
    complete_parameters, rank_predictions, run_with_simas_time_stepping, Prediction, Reason,
    SimasController,
};
use loopsched::{
    run_with_simas, simulate, Platform, Scenario, SimInput, SimasConfig, Technique, Workload,
};

fn fresh(p: usize) -> Vec<PeResume> {
    vec![
        PeResume {
            serve_at: Some(0.0),
            sent: 0.0,
            report: None,
            last_finish: 0.0,
        };
        p
    ]
}

#[test]
fn setup_keeps_the_default_and_launches_predictions() {
    let platform = Platform::builtin("mini128").unwrap();
    let w = Workload::constant(40_000, 2.3e8).unwrap();
    let np = Scenario::none();
    let mut input = SimInput::new(&platform, &w, &np, Technique::SS);
    complete_parameters(&mut input);
    let cfg = SimasConfig {
        prediction_delay: 1.0,
        ..SimasConfig::default()
    };
    assert_eq!(cfg.portfolio.len(), 10);
    let mut ctl = SimasController::new(&input, cfg, true).unwrap();
    assert_eq!(ctl.setup(0.0, &fresh(128)), Technique::AwfB);
    assert!(ctl.has_pending());
    assert_eq!(ctl.selections()[0].reason, Reason::Default);
    // not ready before the delay has passed
    assert_eq!(ctl.update(0.5, &fresh(128)), None);
    assert!(ctl.has_pending());
}

#[test]
fn standard_portfolio_excludes_the_poor_techniques() {
    let portfolio = Technique::standard_portfolio();
    for t in [Technique::GSS, Technique::TSS, Technique::FAC] {
        assert!(!portfolio.contains(&t));
    }
    let platform = Platform::builtin("mini128").unwrap();
    let w = Workload::constant(100_000, 2.3e8).unwrap();
    for name in ["np", "pea-cs", "lat-cs"] {
        let sc = scenario_by_name(name, 1).unwrap();
        let mut input = SimInput::new(&platform, &w, &sc, Technique::SS);
        complete_parameters(&mut input);
        let out = run_with_simas(&input, &SimasConfig::default(), true).unwrap();
        for e in &out.selections {
            assert!(
                portfolio.contains(&e.chosen) || e.chosen == Technique::AwfB,
                "{name}: {:?}",
                e.chosen
            );
        }
        assert!(out.outcome.completed);
    }
}

#[test]
fn strict_dominance_and_ties() {
    let p = |t, s, f| Prediction {
        technique: t,
        sim_time: s,
        finished_tasks: f,
    };
    let portfolio = [Technique::SS, Technique::AwfB, Technique::AF];
    let preds = [p(Technique::SS, 120.0, 10), p(Technique::AwfB, 100.0, 10)];
    assert_eq!(rank_predictions(&portfolio, &preds), Some(Technique::AwfB));
    let preds = [p(Technique::AF, 100.0, 10), p(Technique::AwfB, 100.0, 10)];
    assert_eq!(rank_predictions(&portfolio, &preds), Some(Technique::AwfB));
    // more finished tasks beat a shorter time
    let preds = [p(Technique::SS, 500.0, 10), p(Technique::AF, 50.0, 9)];
    assert_eq!(rank_predictions(&portfolio, &preds), Some(Technique::SS));
}

#[test]
fn reselecting_the_live_technique_changes_nothing() {
    let platform = Platform::builtin("mini128").unwrap();
    let w = Workload::constant(200_000, 2.3e8).unwrap();
    let sc = scenario_by_name("pea-cs", 1).unwrap();
    let mut input = SimInput::new(&platform, &w, &sc, Technique::AwfB);
    complete_parameters(&mut input);
    input.record_chunks = false;
    let plain = simulate(&input).unwrap();
    let cfg = SimasConfig {
        portfolio: vec![Technique::AwfB],
        ..SimasConfig::default()
    };
    let out = run_with_simas(&input, &cfg, false).unwrap();
    assert!(out.batches > 1);
    assert!(out.predicted_selections().all(|e| e.reason == Reason::Keep));
    assert_eq!(out.outcome.per_pe_finish, plain.per_pe_finish);
    assert_eq!(out.outcome.sim_time, plain.sim_time);
}

#[test]
fn no_predictions_near_the_end() {
    let platform = Platform::from_speeds(&[1e9; 4], f64::INFINITY, 0.0).unwrap();
    let w = Workload::constant(4, 1e9).unwrap();
    let np = Scenario::none();
    let input = SimInput::new(&platform, &w, &np, Technique::SS);
    let cfg = SimasConfig {
        portfolio: vec![Technique::SS],
        default_technique: Technique::SS,
        ..SimasConfig::default()
    };
    let out = run_with_simas(&input, &cfg, true).unwrap();
    // four iterations on four PEs: only the setup batch is ever launched
    assert_eq!(out.batches, 1);
}

#[test]
fn every_step_restarts_from_wf() {
    let platform = Platform::builtin("mini128").unwrap();
    let w = Workload::constant(40_000, 2.3e8).unwrap();
    let np = Scenario::none();
    let mut input = SimInput::new(&platform, &w, &np, Technique::SS);
    complete_parameters(&mut input);
    let steps = vec![w.clone(); 3];
    let cfg = SimasConfig {
        default_technique: Technique::WF,
        ..SimasConfig::default()
    };
    let out = run_with_simas_time_stepping(&input, &steps, true, &cfg, true).unwrap();
    assert_eq!(out.len(), 3);
    for (k, step) in out.iter().enumerate() {
        let first = &step.selections[0];
        assert_eq!(first.reason, Reason::Default);
        assert_eq!(first.chosen, Technique::WF);
        if k > 0 {
            assert_eq!(first.time, out[k - 1].outcome.sim_time);
        }
    }
}

#[test]
fn selection_loop_is_deterministic() {
    let platform = Platform::builtin("mini128").unwrap();
    let w = Workload::constant(100_000, 2.3e8).unwrap();
    let sc = scenario_by_name("all-es", 9).unwrap();
    let mut input = SimInput::new(&platform, &w, &sc, Technique::SS);
    complete_parameters(&mut input);
    for oracle in [true, false] {
        let a = run_with_simas(&input, &SimasConfig::default(), oracle).unwrap();
        let b = run_with_simas(&input, &SimasConfig::default(), oracle).unwrap();
        assert_eq!(a, b);
    }
}
