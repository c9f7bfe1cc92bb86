use openmax_web::{compare, sweep};

#[test]
fn sweep_layout_and_ranges() {
    let out = sweep(10, 42, 10, 5).unwrap();
    assert_eq!(out.len(), 3 * 51);
    let (grid, rest) = out.split_at(51);
    assert_eq!(grid[0], 0.0);
    assert_eq!(grid[50], 1.0);
    assert!(rest.iter().all(|f| (0.0..=1.0).contains(f)));
    assert_eq!(sweep(10, 42, 10, 5).unwrap(), out);
}

#[test]
fn sweep_rejects_bad_settings() {
    assert!(sweep(1, 42, 10, 5).is_err());
    assert!(sweep(10, 42, 1, 5).is_err());
}

#[test]
fn compare_probabilities_are_distributions() {
    let av = [2.0, 3.5, -1.0, 0.5];
    let out = compare(&av, &[0.3, 1.2, 0.1, 2.0], 0.0, 1.5, 0.8, 2).unwrap();
    let (sm, om) = out.split_at(4);
    assert!((sm.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!((om.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(compare(&av, &[0.0; 4], 0.0, 1.0, 1.0, 5).is_err());
}
