//! Monte Carlo checks of the simulated sheet's Gaussian law.

use rayon::prelude::*;

use sheetqv_core::sheet::cell_increments;
use sheetqv_core::stats::{correlation, moment_with_se};
use sheetqv_core::{coarsen, generate_sheet, Grid, Moment, Sample, SeedSpec, SheetRole};

const MASTER: u64 = 77;

fn sample(values: Vec<f64>) -> Sample {
    Sample::new("mc", values).unwrap()
}

fn assert_within(label: &str, value: f64, target: f64, tol: f64) {
    assert!((value - target).abs() <= tol, "{label}: {value} vs {target} (tol {tol})");
}

#[test]
fn second_moments_at_probe_points() {
    let grid = Grid::new(8).unwrap();
    let rows: Vec<(f64, f64, f64)> = (0..100_000u64)
        .into_par_iter()
        .map(|k| {
            let w = generate_sheet(grid, SeedSpec::new(MASTER, k, SheetRole::DrivingW));
            let l = w.lattice();
            (l.at(8, 8), l.at(4, 8), l.at(8, 4))
        })
        .collect();
    let w11 = sample(rows.iter().map(|r| r.0 * r.0).collect());
    let cross = sample(rows.iter().map(|r| r.1 * r.2).collect());
    assert_within("E W(1,1)^2", w11.mean(), 1.0, 0.02);
    assert_within("E W(1/2,1) W(1,1/2)", cross.mean(), 0.25, 0.02);
}

#[test]
fn coarsened_increments_have_coarse_variance() {
    let (m, n) = (16, 4);
    let fine = Grid::new(m).unwrap();
    let values: Vec<f64> = (0..10_000u64)
        .into_par_iter()
        .flat_map_iter(|k| {
            let w = generate_sheet(fine, SeedSpec::new(MASTER, k, SheetRole::IndependentB));
            cell_increments(&coarsen(&w, n).unwrap())
        })
        .collect();
    let (var, se) = moment_with_se(&sample(values), Moment::Variance).unwrap();
    assert_within("coarse cell variance", var, 1.0 / 16.0, 3.0 * se);
}

#[test]
fn squared_increment_moments() {
    let n = 8;
    let grid = Grid::new(n).unwrap();
    let squares: Vec<f64> = (0..10_000u64)
        .into_par_iter()
        .flat_map_iter(|k| {
            let w = generate_sheet(grid, SeedSpec::new(MASTER + 1, k, SheetRole::DrivingW));
            w.increments().iter().map(|d| d * d).collect::<Vec<_>>()
        })
        .collect();
    let squares = sample(squares);
    let n2 = (n * n) as f64;
    let (mean, se_mean) = moment_with_se(&squares, Moment::Mean).unwrap();
    let (var, se_var) = moment_with_se(&squares, Moment::Variance).unwrap();
    assert_within("E|dW|^2", mean, 1.0 / n2, 3.0 * se_mean);
    assert_within("Var|dW|^2", var, 2.0 / (n2 * n2), 3.0 * se_var);
}

#[test]
fn disjoint_rectangle_increments_are_uncorrelated() {
    let grid = Grid::new(8).unwrap();
    let rows: Vec<(f64, f64, f64)> = (0..20_000u64)
        .into_par_iter()
        .map(|k| {
            let w = generate_sheet(grid, SeedSpec::new(MASTER + 2, k, SheetRole::DrivingW));
            let l = w.lattice();
            (
                l.block_increment(0, 4, 0, 4).unwrap(),
                l.block_increment(4, 8, 4, 8).unwrap(),
                l.block_increment(0, 4, 4, 8).unwrap(),
            )
        })
        .collect();
    let a = sample(rows.iter().map(|r| r.0).collect());
    let b = sample(rows.iter().map(|r| r.1).collect());
    let c = sample(rows.iter().map(|r| r.2).collect());
    let bound = 3.0 / (rows.len() as f64).sqrt();
    assert!(correlation(&a, &b).unwrap().abs() <= bound);
    assert!(correlation(&a, &c).unwrap().abs() <= bound);
    let (var, se) = moment_with_se(&a, Moment::Variance).unwrap();
    assert_within("Var of quarter-square increment", var, 0.25, 3.0 * se);
}

#[test]
fn roles_give_independent_sheets() {
    let grid = Grid::new(4).unwrap();
    let rows: Vec<(f64, f64)> = (0..20_000u64)
        .into_par_iter()
        .map(|k| {
            let w = generate_sheet(grid, SeedSpec::new(MASTER, k, SheetRole::DrivingW));
            let b = generate_sheet(grid, SeedSpec::new(MASTER, k, SheetRole::IndependentB));
            (w.lattice().at(4, 4), b.lattice().at(4, 4))
        })
        .collect();
    let w = sample(rows.iter().map(|r| r.0).collect());
    let b = sample(rows.iter().map(|r| r.1).collect());
    assert!(correlation(&w, &b).unwrap().abs() <= 3.0 / (rows.len() as f64).sqrt());
}
