use koopman_demo::{
    kernel_width, kernel_width_json, quadratic_edmd, rotation_spectrum, rotation_spectrum_json,
};

#[test]
fn rotation_needs_depth_two() {
    let shallow = rotation_spectrum(0.4, 1, 64).unwrap();
    assert_eq!(shallow.eigenvalues.len(), 1);
    assert!(shallow.error.is_none());
    let deep = rotation_spectrum(0.4, 2, 64).unwrap();
    assert!(deep.error.unwrap() < 1e-9);
    assert_eq!(deep.signal.len(), 64);
}

#[test]
fn quadratic_forecast_tracks_truth() {
    let report = quadratic_edmd(2, 0.6, -0.3, 12).unwrap();
    assert!(report.recovery_error < 1e-9);
    assert_eq!(report.predicted.len(), 12);
    for (p, t) in report.predicted.iter().zip(&report.truth) {
        assert!((p[0] - t[0]).abs() < 1e-8 && (p[1] - t[1]).abs() < 1e-8);
    }
    let linear = quadratic_edmd(1, 0.6, -0.3, 12).unwrap();
    assert!(linear.lifted_residual > 1e-3);
}

#[test]
fn kernel_width_reports_rank() {
    let report = kernel_width(1.0).unwrap();
    assert!(report.rank > 0 && report.rank <= 36);
    assert!(report.prediction_error.is_finite());
}

#[test]
fn errors_come_back_as_json() {
    let bad: serde_json::Value = serde_json::from_str(&kernel_width_json(0.0)).unwrap();
    assert!(bad["error"].as_str().unwrap().contains("kernel width"));
    let ok: serde_json::Value = serde_json::from_str(&rotation_spectrum_json(0.3, 2, 40)).unwrap();
    assert_eq!(ok["eigenvalues"].as_array().unwrap().len(), 2);
}
