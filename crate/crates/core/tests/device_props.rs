mod common;

use proptest::prelude::*;
use qorc_core::device::{
    generate_backend, registry_load, registry_save, setup_fleet, Fleet, GenParams, MAX_DEGREE,
};

fn gen_params() -> impl Strategy<Value = GenParams> {
    (2usize..=40, 0.0..=1.0f64, any::<u64>(), 0.0..0.5f64, 0.0..0.5f64).prop_map(|(n, p, seed, a, b)| {
        let mut g = GenParams::setup(n, p, seed);
        g.err2q_range = (a.min(b), a.max(b));
        g.err1q_range = (a.min(b) / 2.0, a.max(b) / 2.0);
        g
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn generated_devices_hold_invariants(p in gen_params()) {
        let b = generate_backend("x", &p).unwrap();
        prop_assert_eq!(b.num_qubits, p.num_qubits);
        prop_assert!(b.topology().is_connected());
        prop_assert!(b.degrees().iter().all(|&d| d <= MAX_DEGREE));
        prop_assert!(b.validate().is_ok());
        prop_assert!(b.err2q.values().all(|e| (p.err2q_range.0..=p.err2q_range.1).contains(e)));
        prop_assert!(b.err1q.iter().all(|e| (p.err1q_range.0..=p.err1q_range.1).contains(e)));
        prop_assert!(b.t1_us.iter().zip(&b.t2_us).all(|(t1, t2)| *t2 <= 2.0 * t1));
        prop_assert_eq!(generate_backend("x", &p).unwrap(), b);
    }
}

#[test]
fn dense_devices_saturate_degree() {
    for seed in 0..20 {
        for n in [15, 40, 100] {
            let b = generate_backend("d", &GenParams::setup(n, 0.98, seed)).unwrap();
            let full = b.degrees().iter().filter(|&&d| d == MAX_DEGREE).count();
            assert!(full * 5 >= n * 4, "n={n} seed={seed}: {full} at degree {MAX_DEGREE}");
        }
    }
}

#[test]
fn registry_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fleet.json");
    let fleet = setup_fleet(11);
    registry_save(&fleet, &path).unwrap();
    let back = registry_load(&path).unwrap();
    assert_eq!(back, fleet);
    assert_eq!(back.to_json(), fleet.to_json());
    assert_eq!(setup_fleet(11), fleet);
    assert_eq!(fleet.len(), 100);
}

#[test]
fn registry_errors_name_the_field() {
    let fleet = setup_fleet(2);
    let mut v: serde_json::Value = serde_json::from_str(&fleet.to_json()).unwrap();
    v["nodes"][3]["err1q"][0] = serde_json::json!(1.5);
    let err = Fleet::from_json(&v.to_string()).unwrap_err().to_string();
    assert!(err.contains("nodes[3]"), "{err}");
}
