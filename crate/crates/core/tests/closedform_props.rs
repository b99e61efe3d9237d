use dynkin_core::closedform::{
    kstar_residual, perpetual_american_put, perpetual_cancellable_call, perpetual_cancellable_put,
    perpetual_cancellable_put_at, solve_kstar, PerpetualParams,
};
use dynkin_core::{MarketParams, OptionKind};
use proptest::prelude::*;

fn put() -> MarketParams {
    MarketParams::reference(OptionKind::Put, 100.0)
}

#[test]
fn reported_anchors() {
    let pp = PerpetualParams::new(&put()).unwrap();
    assert!((pp.gamma_exp - 0.875).abs() < 1e-15);
    assert!((pp.delta_star - 30.3).abs() < 0.05, "delta* = {}", pp.delta_star);
    let k = pp.k_star.unwrap();
    assert!((k - 69.9).abs() < 0.05, "k* = {k}");
    assert!(kstar_residual(&put(), k / 100.0).abs() <= 1e-9);
}

#[test]
fn call_continuity_at_strike() {
    let call = MarketParams::reference(OptionKind::Call, 100.0);
    let below = perpetual_cancellable_call(&call.with_s0(100.0 - 1e-9));
    let above = perpetual_cancellable_call(&call.with_s0(100.0 + 1e-9));
    assert!((below - 5.0).abs() < 1e-8 && (above - 5.0).abs() < 1e-8);
}

#[test]
fn put_branch_continuity() {
    let p = put();
    let k = solve_kstar(&p).unwrap();
    let eps = 1e-9;
    let left = perpetual_cancellable_put_at(&p, k).unwrap();
    let right = perpetual_cancellable_put_at(&p, k + eps).unwrap();
    assert!((left - (100.0 - k)).abs() <= 1e-8);
    assert!((right - (100.0 - k)).abs() <= 1e-8);
    let below_k = perpetual_cancellable_put_at(&p, 100.0 - eps).unwrap();
    let at_k = perpetual_cancellable_put_at(&p, 100.0).unwrap();
    assert!((below_k - at_k).abs() <= 1e-8);
    assert_eq!(at_k, 5.0);
}

#[test]
fn smooth_fit_at_kstar() {
    // the value meets K - s with slope -1 at k*
    let p = put();
    let k = solve_kstar(&p).unwrap();
    let h = 1e-5;
    let slope = (perpetual_cancellable_put_at(&p, k + 2.0 * h).unwrap()
        - perpetual_cancellable_put_at(&p, k + h).unwrap())
        / h;
    assert!((slope + 1.0).abs() < 1e-3, "slope {slope}");
}

#[test]
fn reference_spot_values() {
    assert_eq!(perpetual_cancellable_put(&put().with_s0(60.0)).unwrap(), 40.0);
    let v = perpetual_cancellable_put(&put().with_s0(140.0)).unwrap();
    assert!((v - 5.0 * 1.4f64.powf(-0.75)).abs() < 1e-12);
}

proptest! {
    #[test]
    fn cancellable_put_below_american_put(s in 1.0f64..400.0, delta in 0.5f64..60.0) {
        let p = put().with_penalty(delta);
        let v = perpetual_cancellable_put_at(&p, s).unwrap();
        let am = perpetual_american_put(&p, s);
        prop_assert!(v <= am + 1e-9);
        prop_assert!(v >= (100.0 - s).max(0.0) - 1e-9);
    }

    #[test]
    fn cancellable_put_increases_with_penalty(s in 1.0f64..400.0, d1 in 0.5f64..60.0, d2 in 0.5f64..60.0) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let a = perpetual_cancellable_put_at(&put().with_penalty(lo), s).unwrap();
        let b = perpetual_cancellable_put_at(&put().with_penalty(hi), s).unwrap();
        prop_assert!(a <= b + 1e-9);
        let pp = PerpetualParams::new(&put().with_penalty(hi)).unwrap();
        if hi >= pp.delta_star {
            prop_assert_eq!(b, perpetual_american_put(&put(), s));
        }
    }
}
