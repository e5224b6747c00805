use fit_web::{cavity_spectrum, microstrip_sweep, variant_stats};
use serde_json::Value;

fn json(s: Result<String, String>) -> Value {
    serde_json::from_str(&s.expect("call succeeds")).unwrap()
}

#[test]
fn cavity_modes_match_closed_form() {
    let v = json(cavity_spectrum(0.02, 0.01, 0.008, 6, 3, 3, 5));
    let modes = v["modes"].as_array().unwrap();
    assert_eq!(modes.len(), 5);
    for m in modes {
        let (c, e) = (m["computed_hz"].as_f64().unwrap(), m["expected_hz"].as_f64().unwrap());
        assert!((c - e).abs() < 1e-6 * e, "{c} vs {e}");
    }
    assert!(v["static_modes"].as_u64().unwrap() > 0);
}

#[test]
fn cavity_rejects_large_grids() {
    assert!(cavity_spectrum(1.0, 1.0, 1.0, 20, 20, 20, 3).is_err());
}

#[test]
fn microstrip_sweep_returns_converged_points() {
    let v = json(microstrip_sweep(12, 2.7, 1e9, 4e9, 4, "cg"));
    assert!(v["all_converged"].as_bool().unwrap());
    let pts = v["points"].as_array().unwrap();
    assert_eq!(pts.len(), 4);
    assert_eq!(pts[0]["freq_hz"].as_f64().unwrap(), 1e9);
    for p in pts {
        assert!(p["s21_db"].as_f64().unwrap() <= 1e-9);
        assert!(p["iterations"].as_u64().unwrap() > 0);
    }
    assert!(microstrip_sweep(12, 2.7, 1e9, 4e9, 4, "lu").is_err());
    assert!(microstrip_sweep(200, 2.7, 1e9, 4e9, 4, "cg").is_err());
}

#[test]
fn variant_stats_follow_cost_model() {
    let v = json(variant_stats(5000));
    let rows = v.as_array().unwrap();
    let per = [("e2s", 13, 164), ("e2t", 12, 80), ("e2tt", 9, 72)];
    for (row, (name, mults, bytes)) in rows.iter().zip(per) {
        let n = row["n_e"].as_u64().unwrap();
        assert_eq!(row["variant"], name);
        assert_eq!(row["mults_per_apply"].as_u64().unwrap(), mults * n);
        assert_eq!(row["memory_bytes"].as_u64().unwrap(), bytes * n);
    }
}
