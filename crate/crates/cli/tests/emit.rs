use proptest::prelude::*;
use slowsde_cli::emit::{parse_csv, to_csv};
use slowsde_core::linalg::Vector;
use slowsde_core::optim::TrajectoryPoint;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![any::<f64>().prop_filter("finite", |x| x.is_finite()), Just(0.0), Just(-0.0), Just(f64::MIN_POSITIVE)]
}

fn point(d: usize) -> impl Strategy<Value = TrajectoryPoint<f64>> {
    (
        0usize..1_000_000,
        finite(),
        prop::collection::vec(finite(), d),
        prop::option::of(prop::collection::vec(finite(), d)),
        prop::option::of(finite()),
        finite(),
        prop::option::of(finite()),
    )
        .prop_map(|(s, t, theta, phi, dist, loss, tr_hess)| TrajectoryPoint {
            s,
            t,
            theta: Vector(theta),
            phi: phi.map(Vector),
            dist,
            loss,
            tr_hess,
        })
}

proptest! {
    #[test]
    fn csv_round_trip_is_bit_exact(
        (d, pts) in (1usize..5).prop_flat_map(|d| (Just(d), prop::collection::vec(point(d), 0..6)))
    ) {
        let (dd, back) = parse_csv(&to_csv(&pts, d)).unwrap();
        prop_assert_eq!(dd, d);
        prop_assert_eq!(back.len(), pts.len());
        let bits = |p: &TrajectoryPoint<f64>| {
            let mut v = vec![p.t.to_bits(), p.loss.to_bits()];
            v.extend(p.theta.iter().map(|x| x.to_bits()));
            v.extend(p.phi.iter().flat_map(|f| f.iter().map(|x| x.to_bits())));
            v.extend(p.dist.iter().chain(&p.tr_hess).map(|x| x.to_bits()));
            v
        };
        for (a, b) in back.iter().zip(&pts) {
            prop_assert_eq!(a.s, b.s);
            prop_assert_eq!(bits(a), bits(b));
        }
    }
}
