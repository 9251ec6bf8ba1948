use malliavin_lab_demo::{bsde_profile_json, quotient_curve_json, shifted_paths_json, MAX_PATHS};

fn floats(v: &serde_json::Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn shifted_paths_move_by_eps_h() {
    let eps = 0.75;
    let out = shifted_paths_json(eps, "ramp", 5, 11).unwrap();
    let h = floats(&out["h"]);
    for (b, s) in out["base"].as_array().unwrap().iter().zip(out["shifted"].as_array().unwrap()) {
        for ((b, s), h) in floats(b).iter().zip(floats(s)).zip(&h) {
            assert!((s - b - eps * h).abs() < 1e-12);
        }
    }
    assert_eq!(floats(&out["weights"]).len(), 5);
}

#[test]
fn cameron_martin_weights_average_to_one() {
    let out = shifted_paths_json(1.0, "first-half", MAX_PATHS, 3).unwrap();
    let w = floats(&out["weights"]);
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (w.len() - 1) as f64;
    let se = (var / w.len() as f64).sqrt();
    assert!((mean - 1.0).abs() <= 4.0 * se, "mean {mean}, se {se}");
}

#[test]
fn quotients_of_a_smooth_functional_converge() {
    let out = quotient_curve_json("sin", 4000, 5, false).unwrap();
    assert_eq!(out["forward"]["passed"], true);
    let fwd = out["forward"]["slope"].as_f64().unwrap();
    let cen = out["central"]["slope"].as_f64().unwrap();
    assert!((fwd - 1.0).abs() < 0.2, "forward slope {fwd}");
    assert!((cen - 2.0).abs() < 0.3, "central slope {cen}");
}

#[test]
fn linear_functional_has_no_quotient_error() {
    let out = quotient_curve_json("linear", 2000, 5, false).unwrap();
    let errors = floats(&out["forward"]["errors"]);
    let floors = floats(&out["floors"]);
    assert!(errors.iter().zip(&floors).all(|(e, f)| e <= f), "{errors:?}");
}

#[test]
fn corrupted_target_fails() {
    let out = quotient_curve_json("square", 2000, 5, true).unwrap();
    assert_eq!(out["forward"]["passed"], false);
}

#[test]
fn bsde_profile_tracks_the_closed_form() {
    let out = bsde_profile_json(0.5, 10_000, 9).unwrap();
    let gap = floats(&out["rms_gap"]);
    assert!(gap.iter().all(|g| *g < 0.03), "{gap:?}");
    let (lo, mid, hi) = (floats(&out["y_q10"]), floats(&out["y_q50"]), floats(&out["y_q90"]));
    for i in 0..lo.len() {
        assert!(lo[i] <= mid[i] && mid[i] <= hi[i]);
    }
}

#[test]
fn bad_inputs_are_rejected() {
    assert!(shifted_paths_json(1.0, "spiral", 3, 1).is_err());
    assert!(quotient_curve_json("cubic", 100, 1, false).is_err());
    assert!(bsde_profile_json(0.5, MAX_PATHS + 1, 1).is_err());
    assert!(bsde_profile_json(f64::NAN, 100, 1).is_err());
}
