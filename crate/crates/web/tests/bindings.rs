use eitnet_web::{align_skeletons, median_filter, noisy_frame, simulate_streams};

#[test]
fn median_removes_isolated_salt() {
    let mut px = vec![40u8; 25];
    px[12] = 255;
    assert_eq!(median_filter(&px, 5, 5, 3).unwrap(), vec![40u8; 25]);
    assert!(median_filter(&px, 5, 4, 3).is_err());
    assert!(median_filter(&px, 5, 5, 2).is_err());
}

#[test]
fn filtering_a_noisy_frame_moves_it_toward_the_clean_one() {
    let clean = noisy_frame(2, 24, 24, 0.0, 1).unwrap();
    let noisy = noisy_frame(2, 24, 24, 0.1, 1).unwrap();
    let filtered = median_filter(&noisy, 24, 24, 3).unwrap();
    let diff = |a: &[u8]| a.iter().zip(&clean).filter(|(x, y)| x != y).count();
    assert!(diff(&filtered) < diff(&noisy));
    assert!(noisy_frame(4, 8, 8, 0.0, 1).is_err());
}

#[test]
fn alignment_undoes_a_scaled_shift() {
    let truth = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0];
    let pred: Vec<f64> = truth.iter().enumerate().map(|(i, v)| 2.0 * v + [5.0, -1.0, 0.5][i % 3]).collect();
    let a = align_skeletons(&pred, &truth).unwrap();
    assert!(a.pa_mpjpe() < 1e-9);
    assert!(a.mpjpe() > 1.0);
    assert!((a.scale() - 0.5).abs() < 1e-9);
    assert_eq!(a.rotation().len(), 9);
    assert!(a.aligned().iter().zip(&truth).all(|(x, y)| (x - y).abs() < 1e-9));
    assert!(align_skeletons(&pred[..11], &truth).is_err());
}

#[test]
fn simulation_report_is_repeatable() {
    let a = simulate_streams(3, 500, 1_000.0, 0.05, 9).unwrap();
    assert!(a.starts_with("[counts]"));
    assert_eq!(a, simulate_streams(3, 500, 1_000.0, 0.05, 9).unwrap());
    assert!(simulate_streams(0, 500, 0.0, 0.0, 1).is_err());
}
