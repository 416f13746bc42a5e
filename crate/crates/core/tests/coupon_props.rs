use proptest::prelude::*;

use gumbel_stein::coupon::{
    constants, density_ratio, exact_cdf_Tn, exact_exp_moment, identity_support_floor,
    main_identity_sides, normalize, sample_collector_time, sample_coupled, y_gn_l2_sq, z_diff_l1,
    z_diff_l1_bound, z_n_from, CollectorLaw, GrowthBound, IdentityMode,
};
use gumbel_stein::{Execution, RngStream};

/// `P(T_n <= k)` from the occupancy chain: after each draw the number of
/// distinct coupons seen goes from `j` to `j + 1` with probability `(n - j)/n`.
fn occupancy_cdf(n: u64, k: u64) -> f64 {
    let n_us = n as usize;
    let mut dist = vec![0.0; n_us + 1];
    dist[0] = 1.0;
    for _ in 0..k {
        let mut next = vec![0.0; n_us + 1];
        for j in 0..=n_us {
            let up = (n_us - j) as f64 / n as f64;
            next[j] += dist[j] * (1.0 - up);
            if j < n_us {
                next[j + 1] += dist[j] * up;
            }
        }
        dist = next;
    }
    dist[n_us]
}

/// `P(Geom(p) = k)` on `{1, 2, ...}`.
fn geom_pmf(p: f64, k: u64) -> f64 {
    p * (1.0 - p).powi(k as i32 - 1)
}

/// `P(T_n <= k)` by enumerating the waiting times `τ_2, ..., τ_n` (n <= 3).
fn enumerated_cdf(n: u64, k: u64) -> f64 {
    match n {
        1 => (k >= 1) as u8 as f64,
        2 => (1..k).map(|a| geom_pmf(0.5, a)).sum(),
        3 => {
            let mut s = 0.0;
            for a in 1..k {
                for b in 1..k {
                    if 1 + a + b <= k {
                        s += geom_pmf(2.0 / 3.0, a) * geom_pmf(1.0 / 3.0, b);
                    }
                }
            }
            s
        }
        _ => unreachable!(),
    }
}

#[test]
fn exact_cdf_matches_enumeration() {
    for n in 1..=3 {
        for k in 0..=40 {
            let e = enumerated_cdf(n, k);
            let v = exact_cdf_Tn(n, k);
            assert!((v - e).abs() < 1e-12, "n={n} k={k}: {v} vs {e}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_cdf_matches_occupancy_chain(n in 1u64..40, extra in 0u64..300) {
        let k = n + extra;
        prop_assert!((exact_cdf_Tn(n, k) - occupancy_cdf(n, k)).abs() < 1e-11);
    }

    #[test]
    fn exact_law_is_normalised(n in 2u64..300) {
        let law = CollectorLaw::exact(n, 1e-12).unwrap();
        let total: f64 = law.pmf().iter().sum::<f64>() + law.mass_below() + law.mass_above();
        prop_assert!((total - 1.0).abs() < 1e-10);
        prop_assert!(law.k_min() >= n);
    }

    #[test]
    fn coupling_dominates(n in 2u64..60, seed in any::<u64>()) {
        let mut rng = RngStream::new(seed, 0);
        for _ in 0..20 {
            let pair = sample_coupled(n, &mut rng).unwrap();
            prop_assert!(pair.is_dominated());
            prop_assert_eq!(pair.tau_curr.len() as u64, n);
            prop_assert_eq!(pair.tau_prev.len() as u64, n - 1);
        }
    }

    #[test]
    fn constants_chain(n in 2u64..2_000_000) {
        prop_assert!(constants(n).unwrap().chain_holds());
    }

    #[test]
    fn z_n_has_minimum(tau in prop::collection::vec(1u64..20, 1..30)) {
        let stat = z_n_from(&tau).unwrap();
        let n = tau.len() as f64;
        prop_assert!(stat.z_n >= 1.0 - n.ln() - 1e-12);
    }

    #[test]
    fn y_gn_below_inverse_square(n in 2u64..100_000) {
        let v = y_gn_l2_sq(n).unwrap();
        prop_assert!(v >= 0.0 && v <= 1.0 / (n * n) as f64);
    }
}

#[test]
fn y_gn_closed_form_and_monte_carlo() {
    // 2 - 1/n + 2(n-1) ln(1 - 1/n), evaluated where cancellation is mild.
    for n in [2u64, 3, 5, 10] {
        let nf = n as f64;
        let closed = 2.0 - 1.0 / nf + 2.0 * (nf - 1.0) * (-1.0 / nf).ln_1p();
        assert!((y_gn_l2_sq(n).unwrap() - closed).abs() < 1e-13);
    }
    let n = 5u64;
    let rate = -(-1.0 / n as f64).ln_1p();
    let mut rng = RngStream::new(8, 8);
    let m = 1_000_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..m {
        let y = rng.exponential();
        let g = (y / rate).ceil().max(1.0) / n as f64;
        let d = (y - g) * (y - g);
        s += d;
        s2 += d * d;
    }
    let mean = s / m as f64;
    let se = ((s2 / m as f64 - mean * mean) / m as f64).sqrt();
    assert!((mean - y_gn_l2_sq(n).unwrap()).abs() < 3.0 * se);
}

#[test]
fn coupling_joint_pmf_at_ones() {
    // τ_3^3 and τ_2^2 share Y_3: both equal 1 iff Y_3 <= ln(3/2).
    let mut rng = RngStream::new(99, 1);
    let m = 300_000;
    let hits = (0..m)
        .filter(|_| {
            let p = sample_coupled(3, &mut rng).unwrap();
            p.tau_curr[2] == 1 && p.tau_prev[1] == 1
        })
        .count();
    let freq = hits as f64 / m as f64;
    let se = (1.0 / 3.0 * 2.0 / 3.0 / m as f64).sqrt();
    assert!((freq - 1.0 / 3.0).abs() < 4.0 * se, "{freq}");
}

#[test]
fn geometric_marginal_of_coupling() {
    let mut rng = RngStream::new(3, 3);
    let m = 1_000_000;
    let mean = (0..m)
        .map(|_| sample_coupled(2, &mut rng).unwrap().tau_curr[1] as f64)
        .sum::<f64>()
        / m as f64;
    assert!((mean - 2.0).abs() < 0.01);
}

#[test]
fn density_ratio_resampling() {
    // Under n - 1 = 2 coupons (τ_1, τ_2) = (1, Geom(1/2)); under n = 3 the
    // first two waiting times are (1, Geom(2/3)).
    let mut norm = 0.0;
    for k in 1..=60u64 {
        let ratio = density_ratio(&[1, k], 3).unwrap();
        let reweighted = ratio * geom_pmf(0.5, k);
        assert!((reweighted - geom_pmf(2.0 / 3.0, k)).abs() < 1e-15);
        norm += reweighted;
    }
    // Truncation tail of Geom(2/3) beyond 60.
    assert!((norm - 1.0).abs() <= (1.0f64 / 3.0).powi(60) + 1e-15);
    assert!((density_ratio(&[1, 2], 3).unwrap() - 8.0 / 9.0).abs() < 1e-15);
    assert!(density_ratio(&[1], 3).is_err());
}

#[test]
fn exp_moment_is_bounded_in_n() {
    for lambda in [1.0, 2.0] {
        let mut ns: Vec<u64> = (1..=100).collect();
        ns.extend((0..=60).map(|i| (100.0 * 1000f64.powf(i as f64 / 60.0)) as u64));
        // The sequence rises towards the Gumbel Laplace transform Γ(1 + λ).
        let limit = if lambda == 1.0 { 1.0 } else { 2.0 };
        for &n in &ns {
            let v = exact_exp_moment(n, lambda).unwrap();
            assert!(v.is_finite() && v <= limit, "n={n} λ={lambda}: {v}");
        }
        let far = exact_exp_moment(1_000_000, lambda).unwrap();
        assert!((far - limit).abs() < 1e-3);
    }
}

#[test]
fn exp_moment_matches_enumeration() {
    let law = CollectorLaw::exact(4, 1e-15).unwrap();
    let e = law.expect(|z| (-0.7 * z).exp());
    assert!((e - exact_exp_moment(4, 0.7).unwrap()).abs() < 1e-12);
}

#[test]
fn z_diff_l1_at_two() {
    // Z_1 = 1 and T_2 = 1 + Geom(1/2).
    let exact: f64 = (2..200u64)
        .map(|k| (normalize(2, k) - 1.0).abs() * 0.5f64.powi(k as i32 - 1))
        .sum();
    assert!((exact - 0.596_573_590_3).abs() < 1e-9, "{exact}");
    let est = z_diff_l1(2, 1_000_000, 4, Execution::default()).unwrap();
    assert!((est.mean - exact).abs() < 3.0 * est.std_err);
    assert!(est.mean <= z_diff_l1_bound(2).unwrap());
}

#[test]
fn z_diff_l1_below_bound_at_hundred() {
    let est = z_diff_l1(100, 100_000, 5, Execution::default()).unwrap();
    let bound = z_diff_l1_bound(100).unwrap();
    assert!((bound - 0.1237).abs() < 1e-3);
    assert!(est.mean <= bound + 3.0 * est.std_err);
}

#[test]
fn collector_time_marginal() {
    let mut rng = RngStream::new(12, 0);
    let n = 10u64;
    let m = 200_000;
    let mut s = 0.0;
    for _ in 0..m {
        s += sample_collector_time(n, &mut rng).unwrap() as f64;
    }
    let h: f64 = (1..=n).map(|j| 1.0 / j as f64).sum();
    let var: f64 = (1..n)
        .map(|j| {
            let p = (n - j) as f64 / n as f64;
            (1.0 - p) / (p * p)
        })
        .sum();
    assert!((s / m as f64 - n as f64 * h).abs() < 4.0 * (var / m as f64).sqrt());
}

#[test]
fn identity_enumeration_at_three() {
    let s = main_identity_sides(
        3,
        |x: f64| (-x).exp(),
        GrowthBound::bounded((-identity_support_floor(3).unwrap()).exp()),
        IdentityMode::Enumerate {
            max_atoms: 1 << 22,
            tol: 1e-12,
        },
        Execution::Sequential,
    )
    .unwrap();
    assert!(s.difference() + s.truncation_bound < 1e-8);
    assert!(main_identity_sides(
        1,
        |_| 1.0,
        GrowthBound::bounded(1.0),
        IdentityMode::MonteCarlo {
            samples: 10,
            seed: 0
        },
        Execution::Sequential,
    )
    .is_err());
}
