mod common;

use sflr::tuning::{tune, Criterion, TuningGrid};
use sflr::{BSplineBasis, SolverConfig};

fn one_null_grid(criterion: Criterion) -> TuningGrid {
    TuningGrid::new(
        [0.4, 0.5, 0.6, 0.7].iter().map(|v| v * 17.0).collect(),
        vec![1.5e-4, 1.5e-5],
        criterion,
    )
}

#[test]
fn bic_and_aic_select_the_same_pair() {
    let sim = common::one_null(450, 1, 20_240);
    let basis = BSplineBasis::new(1.0, 3, 30).unwrap();
    let config = SolverConfig::default();
    let bic = tune(&sim.train, &basis, &one_null_grid(Criterion::Bic), &config).unwrap();
    let aic = tune(&sim.train, &basis, &one_null_grid(Criterion::Aic), &config).unwrap();
    assert_eq!((bic.lambda, bic.gamma), (aic.lambda, aic.gamma));
}

#[test]
fn score_table_is_complete_and_minimal() {
    let sim = common::one_null(200, 1, 3);
    let basis = BSplineBasis::new(1.0, 3, 30).unwrap();
    for criterion in [Criterion::Bic, Criterion::Cv] {
        let r = tune(&sim.train, &basis, &one_null_grid(criterion), &SolverConfig::default()).unwrap();
        assert_eq!(r.table.len(), 8);
        let min = r.table.iter().map(|row| row.score).fold(f64::INFINITY, f64::min);
        assert_eq!(r.score, min);
        assert!(r.table.iter().any(|row| row.lambda == r.lambda && row.gamma == r.gamma && row.score == min));
        // λ-major grid order.
        assert_eq!(r.table[1].lambda, r.table[0].lambda);
        assert!(r.table[2].lambda > r.table[0].lambda);
    }
}

#[test]
fn single_point_and_duplicate_grids() {
    let sim = common::one_null(150, 1, 4);
    let basis = BSplineBasis::new(1.0, 3, 30).unwrap();
    let single = TuningGrid::new(vec![8.5], vec![1.5e-5], Criterion::Bic);
    let r = tune(&sim.train, &basis, &single, &SolverConfig::default()).unwrap();
    assert_eq!((r.lambda, r.gamma), (8.5, 1.5e-5));
    let dup = TuningGrid::new(vec![8.5, 8.5], vec![1.5e-5], Criterion::Bic);
    let r = tune(&sim.train, &basis, &dup, &SolverConfig::default()).unwrap();
    assert_eq!(r.table[0].score, r.table[1].score);
}

#[test]
fn cv_is_reproducible_for_a_seed() {
    let sim = common::one_null(150, 1, 5);
    let basis = BSplineBasis::new(1.0, 3, 30).unwrap();
    let grid = TuningGrid { seed: 99, ..one_null_grid(Criterion::Cv) };
    let a = tune(&sim.train, &basis, &grid, &SolverConfig::default()).unwrap();
    let b = tune(&sim.train, &basis, &grid, &SolverConfig::default()).unwrap();
    assert_eq!(a.table, b.table);
}
