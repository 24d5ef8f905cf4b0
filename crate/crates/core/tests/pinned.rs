//! Values frozen from seeded runs. A change here means the numerics moved.

use loopsim_core::data::{split, synthesize, SplitSpec};
use loopsim_core::detectors::{estimate_contraction, ContractionConfig, ContractionOutcome, HeldOutR2, LoopTransition};
use loopsim_core::loop_sim::{run_simulation, SimulationConfig};
use loopsim_core::metrics::r2;
use loopsim_core::models::{
    fit_gbr, fit_ridge, fit_tree_mae, grid_search_cv, predict, train_and_evaluate, GbrParams,
    HyperGrid, Model, ModelFamily,
};

const TOL: f64 = 1e-10;

fn close(got: f64, want: f64) {
    assert!((got - want).abs() <= TOL * want.abs().max(1.0), "{got} vs {want}");
}

fn split75(seed: u64) -> SplitSpec {
    SplitSpec { train_fraction: 0.75, seed }
}

#[test]
fn linear_holdout_r2() {
    let ds = synthesize(506, 13, 0.2, 1).unwrap();
    let (train, holdout) = split(&ds, split75(0)).unwrap();
    let model = Model::Ridge(fit_ridge(&train, 0.01).unwrap());
    close(r2(&holdout.targets, &predict(&model, &holdout.features).unwrap()).unwrap(), 0.9825899749053025);
}

#[test]
fn tuned_ridge_triple() {
    let ds = synthesize(506, 13, 0.2, 1).unwrap();
    let (train, holdout) = split(&ds, split75(0)).unwrap();
    let cv = grid_search_cv(&train, &HyperGrid::default_for(ModelFamily::Ridge), ModelFamily::Ridge, 0).unwrap();
    assert_eq!(cv.best.ridge_alpha().unwrap(), 0.1);
    let t = train_and_evaluate(&train, &holdout, ModelFamily::Ridge, &cv.best).unwrap();
    close(t.holdout_r2, 0.9826093797675777);
    close(t.holdout_mae, 0.16259461102400857);
    close(t.sigma_f2, 0.04376316349891046);
}

#[test]
fn boosting_beats_a_stump() {
    let ds = synthesize(200, 5, 0.1, 3).unwrap();
    let (train, holdout) = split(&ds, split75(0)).unwrap();
    let params = GbrParams {
        n_estimators: 100,
        max_depth: 3,
        learning_rate: 0.1,
        min_samples_leaf: 5,
        huber_delta_quantile: 0.9,
    };
    let gbr = Model::Gbr(fit_gbr(&train, &params).unwrap());
    let gbr_r2 = r2(&holdout.targets, &predict(&gbr, &holdout.features).unwrap()).unwrap();
    let stump = fit_tree_mae(&train, 1, 5).unwrap();
    let stump_preds: Vec<f64> = (0..holdout.n_rows())
        .map(|i| stump.predict_row(&holdout.row_features(i)))
        .collect();
    let stump_r2 = r2(&holdout.targets, &stump_preds).unwrap();
    close(gbr_r2, 0.9726809868349799);
    close(stump_r2, 0.5487212910506197);
}

#[test]
fn ridge_feedback_curve() {
    let ds = synthesize(506, 13, 0.2, 1).unwrap();
    let result = run_simulation(&ds, &SimulationConfig::new(ModelFamily::Ridge, 0.7, 0.3, 20, 0)).unwrap();
    let want = [
        0.9775992428876871, 0.9695684777396896, 0.983368920592383, 0.9735849446667678,
        0.9841828878083496, 0.9790003431618326, 0.9860725903472961, 0.9868487656908612,
        0.9866942073734425, 0.9883887579171582, 0.9838231704323049, 0.9871187979829167,
        0.99312074608121, 0.980466600290279, 0.9855379776338503, 0.9951676086570141,
        0.9872545703502202, 0.9901075730434323, 0.9865405281207154,
    ];
    let got = result.r2_series();
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(want) {
        close(*g, w);
    }
    assert!(result.final_r2() > got[0]);
    assert!(result.final_r2() >= 0.95);
}

#[test]
fn closed_loop_contraction() {
    let ds = synthesize(506, 13, 0.2, 1).unwrap();
    let config = SimulationConfig::new(ModelFamily::Ridge, 1.0, 0.3, 20, 0);
    let transition = LoopTransition::closed_loop(&ds, config).unwrap();
    let report = estimate_contraction(&ds, &transition, &HeldOutR2::default(), &ContractionConfig::new(151)).unwrap();
    close(report.a_hat.unwrap(), 0.6990305990602859);
    assert_eq!(report.pairs_discarded, 19);
    assert_eq!(report.outcome, ContractionOutcome::Contraction);
    assert!(report.contraction_detected);
}
