use cdlab_web::{geodesic_json, midpoint_json, profile_curve_json};
use serde_json::Value;

#[test]
fn profile_curve_endpoints() {
    let v: Value = serde_json::from_str(&profile_curve_json(0.05, 0.005, 101).unwrap()).unwrap();
    let f = v["f"].as_array().unwrap();
    assert_eq!(f.len(), 101);
    assert!((f[0].as_f64().unwrap() - 0.005).abs() < 1e-15);
    assert!((f[100].as_f64().unwrap() - 0.055).abs() < 1e-15);
    assert!(profile_curve_json(0.7, 0.0, 10).is_err());
}

#[test]
fn midpoint_halves_the_distance() {
    let v: Value = serde_json::from_str(&midpoint_json(0.05, 0.005, -0.3, 0.2, 0.4, 0.9).unwrap()).unwrap();
    let d = v["distance"].as_f64().unwrap();
    assert!((v["d0"].as_f64().unwrap() - d / 2.0).abs() < 1e-12);
    assert!((v["d1"].as_f64().unwrap() - d / 2.0).abs() < 1e-12);
    assert_eq!(v["class"], "H0");
    assert!(midpoint_json(0.05, 0.005, 1.5, 0.0, 0.0, 0.0).is_err());
}

#[test]
fn geodesic_snapshots_carry_all_mass() {
    let v: Value = serde_json::from_str(&geodesic_json(0.01, 10, 4, 2).unwrap()).unwrap();
    let snaps = v.as_array().unwrap();
    assert_eq!(snaps.len(), 5);
    for s in snaps {
        let total: f64 = s["atoms"].as_array().unwrap().iter().map(|a| a[2].as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
    assert!(snaps[0]["entropy"].as_f64().unwrap().is_finite());
}
