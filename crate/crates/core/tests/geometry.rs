use etc_rtl::Region;
use proptest::prelude::*;

fn unit(a: f64) -> [f64; 2] {
    [a.cos(), a.sin()]
}

fn arb_ball() -> impl Strategy<Value = Region> {
    (-2.0f64..2.0, -2.0f64..2.0, 0.2f64..2.0).prop_map(|(x, y, r)| Region::ball(vec![x, y], r).unwrap())
}

/// Polygon containing the origin: unit normals spread around the circle.
fn arb_polygon() -> impl Strategy<Value = (Vec<[f64; 2]>, Vec<f64>)> {
    (3usize..7, 0.0f64..1.0)
        .prop_flat_map(|(k, phase)| (prop::collection::vec((-0.3f64..0.3, 0.4f64..2.0), k), Just((k, phase))))
        .prop_map(|(jitter, (k, phase))| {
            let rows = (0..k)
                .map(|i| unit(std::f64::consts::TAU * (i as f64 + phase + jitter[i].0) / k as f64))
                .collect();
            let offsets = jitter.iter().map(|j| j.1).collect();
            (rows, offsets)
        })
}

fn region_of(p: &(Vec<[f64; 2]>, Vec<f64>)) -> Region {
    Region::polyhedron(p.0.iter().map(|r| r.to_vec()).collect(), p.1.clone()).unwrap()
}

fn arb_region() -> impl Strategy<Value = Region> {
    prop_oneof![arb_ball(), arb_polygon().prop_map(|p| region_of(&p))]
}

fn arb_point() -> impl Strategy<Value = [f64; 2]> {
    prop::array::uniform2(-4.0f64..4.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn contraction_keeps_inner_balls(r in arb_region(), eps in 0.01f64..0.3, x in arb_point()) {
        let Ok(c) = r.contract(eps) else { return Ok(()) };
        if c.contains(&x).unwrap() {
            for k in 0..100 {
                let d = unit(std::f64::consts::TAU * k as f64 / 100.0);
                let y = [x[0] + eps * d[0], x[1] + eps * d[1]];
                prop_assert!(r.signed_distance(&y).unwrap() <= 1e-12);
            }
        }
    }

    #[test]
    fn contract_expand_sandwich(r in arb_region(), eps in 0.01f64..0.3, x in arb_point()) {
        let inside = r.contains(&x).unwrap();
        let ce = r.expand(eps).unwrap().contract(eps).unwrap();
        if inside {
            prop_assert!(ce.contains(&x).unwrap());
        }
        if let Ok(c) = r.contract(eps) {
            let ec = c.expand(eps).unwrap();
            if ec.contains(&x).unwrap() {
                prop_assert!(r.signed_distance(&x).unwrap() <= 1e-12);
            }
        }
    }

    #[test]
    fn signed_distance_sign_matches_membership(r in arb_region(), eps in 0.0f64..0.5, x in arb_point()) {
        for region in [r.clone(), r.expand(eps).unwrap()] {
            let d = region.signed_distance(&x).unwrap();
            let inside = region.contains(&x).unwrap();
            if d.abs() > 1e-12 {
                prop_assert_eq!(inside, d <= 0.0);
            }
        }
    }

    #[test]
    fn polyhedron_contraction_is_row_shift(p in arb_polygon(), eps in 0.01f64..0.3, x in arb_point()) {
        let r = region_of(&p);
        let Ok(c) = r.contract(eps) else { return Ok(()) };
        let by_rows = p.0.iter().zip(&p.1).all(|(a, b)| a[0] * x[0] + a[1] * x[1] <= b - eps);
        prop_assert_eq!(c.contains(&x).unwrap(), by_rows);
    }

    #[test]
    fn box_exterior_distance_matches_clamp(
        lo in prop::array::uniform2(-2.0f64..0.0),
        size in prop::array::uniform2(0.1f64..3.0),
        x in arb_point(),
    ) {
        let hi = [lo[0] + size[0], lo[1] + size[1]];
        let r = Region::polyhedron(
            vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]],
            vec![hi[0], -lo[0], hi[1], -lo[1]],
        ).unwrap();
        let clamped = [x[0].clamp(lo[0], hi[0]), x[1].clamp(lo[1], hi[1])];
        let oracle = ((x[0] - clamped[0]).powi(2) + (x[1] - clamped[1]).powi(2)).sqrt();
        let d = r.signed_distance(&x).unwrap();
        if oracle > 0.0 {
            prop_assert!((d - oracle).abs() <= 1e-9, "distance {} vs {}", d, oracle);
        } else {
            prop_assert!(d <= 0.0);
        }
    }

    #[test]
    fn expanded_membership_matches_distance(p in arb_polygon(), eps in 0.01f64..1.0, x in arb_point()) {
        let r = region_of(&p);
        let d = r.signed_distance(&x).unwrap();
        if (d - eps).abs() > 1e-9 {
            prop_assert_eq!(r.expand(eps).unwrap().contains(&x).unwrap(), d <= eps);
        }
    }

    #[test]
    fn inner_radius_ball_fits(p in arb_polygon()) {
        let r = region_of(&p);
        let Ok(rho) = r.inner_radius() else { return Ok(()) };
        prop_assert!(rho > 0.0);
        let fit = r.contract(rho * 0.999);
        prop_assert!(fit.is_ok(), "{:?} rho {}", fit, rho);
        prop_assert!(r.contract(rho * 1.001).is_err());
    }
}
