use std::f64::consts::TAU;

use kgbohm::congruence::{crossing_report, launch, CongruenceConfig, Sampler};
use kgbohm::interference::{alpha, BeamSpec, Region, TwoFrequencyScenario, TwoFrequencySpec};
use kgbohm::scenario::ScenarioConfig;
use kgbohm::trajectory::{crossings, integrate, integrate_watching, EventKind};
use kgbohm::{
    make_two_mode, CurrentField, Exec, FourVector, Hypersurface, IntegratorConfig, PlaneWaveMode, Quadrature,
    SpatialBox, WaveFunction,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn arb_k() -> impl Strategy<Value = [f64; 3]> {
    prop::array::uniform3(-3.0f64..3.0)
}

fn arb_event() -> impl Strategy<Value = FourVector> {
    prop::array::uniform4(-3.0f64..3.0).prop_map(FourVector::from_array)
}

/// A ψ-type state of three modes with a common mass, normalized.
fn arb_state() -> impl Strategy<Value = WaveFunction> {
    (
        0.0f64..2.0,
        prop::collection::vec((arb_k(), -1.0f64..1.0, -1.0f64..1.0), 3),
    )
        .prop_filter_map("degenerate", |(m, modes)| {
            let ms = modes
                .into_iter()
                .map(|(k, re, im)| PlaneWaveMode::new(k, m, Complex64::new(re, im)))
                .collect::<Result<Vec<_>, _>>()
                .ok()?;
            let w = WaveFunction::klein_gordon(ms, 1.0).ok()?.merged_and_normalized();
            w.amplitudes().iter().any(|a| a.norm() > 1e-3).then_some(w)
        })
}

/// Normalized state on the periodic box of edge `l` from lattice indices.
fn lattice_state(l: f64, mass: f64, modes: &[([i64; 3], f64, f64)]) -> (SpatialBox, WaveFunction) {
    let bx = SpatialBox::new(&[l, l, l]).unwrap();
    let ms = modes
        .iter()
        .map(|(n, re, im)| PlaneWaveMode::new(bx.lattice_momentum(*n), mass, Complex64::new(*re, *im)).unwrap())
        .collect();
    let w = WaveFunction::klein_gordon(ms, bx.volume()).unwrap().merged_and_normalized();
    (bx, w)
}

fn arb_lattice_modes() -> impl Strategy<Value = Vec<([i64; 3], f64, f64)>> {
    prop::collection::vec((prop::array::uniform3(-2i64..=2), 0.1f64..1.0, -1.0f64..1.0), 1..4).prop_filter(
        "distinct nonzero momenta",
        |v| {
            let mut ns: Vec<_> = v.iter().map(|m| m.0).collect();
            ns.sort();
            ns.dedup();
            ns.len() == v.len() && ns.iter().all(|n| *n != [0, 0, 0])
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn modes_on_mass_shell(k in arb_k(), m in 0.0f64..3.0) {
        prop_assume!(k.iter().any(|c| c.abs() > 1e-6) || m > 1e-6);
        let mode = PlaneWaveMode::new(k, m, Complex64::new(1.0, 0.0)).unwrap();
        prop_assert!(mode.omega() > 0.0);
        let p = mode.four_momentum();
        prop_assert!((p.square() - m * m).abs() < 1e-12 * (1.0 + p.t * p.t));
    }

    #[test]
    fn gradient_matches_finite_differences(w in arb_state(), x in arb_event()) {
        let g = w.gradient(x);
        let h = 1e-5;
        let scale = g.iter().map(|c| c.norm()).fold(1e-3, f64::max);
        for mu in 0..4 {
            let mut e = [0.0; 4];
            e[mu] = h;
            let s = FourVector::from_array(e);
            let fd = (w.evaluate(x + s) - w.evaluate(x - s)) / (2.0 * h);
            prop_assert!((fd - g[mu]).norm() < 1e-6 * scale);
        }
    }

    #[test]
    fn current_is_divergence_free(w in arb_state(), x in arb_event()) {
        let cf = CurrentField::new(w).unwrap();
        let h = 1e-4;
        let div: f64 = (0..4).map(|mu| {
            let mut e = [0.0; 4];
            e[mu] = h;
            let s = FourVector::from_array(e);
            (cf.current(x + s).get(mu) - cf.current(x - s).get(mu)) / (2.0 * h)
        }).sum();
        prop_assert!(div.abs() < 1e-6 * cf.magnitude_bound());
    }

    #[test]
    fn charge_and_norms_constant_in_time(modes in arb_lattice_modes(), m in 0.0f64..2.0, t in -2.0f64..2.0) {
        let (bx, w) = lattice_state(2.0, m, &modes);
        let cf = CurrentField::new(w.clone()).unwrap();
        let quad = Quadrature::new(8);
        for s in [0.0, t] {
            let slice = Hypersurface::time_slice(s, &bx);
            let q = slice.integrate(quad, |x, ds| ds.dot(cf.current(x)));
            prop_assert!((q - 1.0).abs() < 1e-10);
            let ip = WaveFunction::kg_inner_product(&w, &w, &slice, quad).unwrap();
            prop_assert!((ip - 1.0).norm() < 1e-8);
        }
        let phi = w.with_kind(kgbohm::Normalization::Conventional);
        let n0 = phi.conventional_norm(0.0, &bx, quad);
        prop_assert!((phi.conventional_norm(t, &bx, quad) - n0).abs() < 1e-8 * n0);
    }

    #[test]
    fn anticollinear_minimum(eta in 0.05f64..20.0) {
        let cf = CurrentField::new(make_two_mode([1.0, 0.0, 0.0], [-eta, 0.0, 0.0], 0.0, 1.0).unwrap()).unwrap();
        let want = 1.0 - (1.0 + eta) / (2.0 * eta.sqrt());
        prop_assert!((cf.time_component_lower_bound() - want).abs() < 1e-9);
        // The extremum is attained where the phases oppose at t = 0.
        let x = std::f64::consts::PI / (1.0 + eta);
        prop_assert!((cf.time_component(FourVector::new(0.0, x, 0.0, 0.0)) - want).abs() < 1e-9);
        prop_assert_eq!(want < 0.0, (eta - 1.0).abs() > 1e-12);
    }

    #[test]
    fn collinear_massless_is_lightlike(w1 in 0.1f64..5.0, w2 in 0.1f64..5.0, x in arb_event()) {
        let cf = CurrentField::new(make_two_mode([w1, 0.0, 0.0], [w2, 0.0, 0.0], 0.0, 1.0).unwrap()).unwrap();
        let j = cf.current(x);
        prop_assert!((j.t - j.x).abs() < 1e-12 * (1.0 + j.t.abs()));
    }

    #[test]
    fn alpha_at_least_one(a in 0.01f64..50.0, b in 0.01f64..50.0) {
        prop_assert!(alpha(a, b) >= 1.0);
        prop_assert_eq!(alpha(a, b), alpha(b, a));
        prop_assert_eq!(alpha(a, a), 1.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn trajectory_invariants(w in arb_state(), x0 in arb_event()) {
        let cf = CurrentField::new(w).unwrap();
        let tr = integrate(&cf, x0, &IntegratorConfig { max_s: 1.0, ..Default::default() }).unwrap();
        prop_assert!(tr.events.windows(2).all(|e| e[0].s <= e[1].s));
        // Tangency at accepted samples.
        for p in &tr.samples {
            prop_assert!((p.j - cf.current(p.x)).euclidean_norm() <= 1e-12 * (1.0 + p.j.euclidean_norm()));
        }
        for pair in tr.samples.windows(2) {
            let ds = pair[1].s - pair[0].s;
            let mid = cf.current((pair[0].x + pair[1].x) * 0.5);
            let v = (pair[1].x - pair[0].x) * (1.0 / ds);
            let tol = 1e-2 * (mid.euclidean_norm() + cf.magnitude_bound() * ds.abs());
            prop_assert!((v - mid).euclidean_norm() <= tol);
        }
        // dt/ds keeps its sign between time reversals.
        let rev: Vec<f64> = tr.events.iter().filter(|e| e.kind == EventKind::TimeReversal).map(|e| e.s).collect();
        for p in tr.samples.windows(2) {
            if rev.iter().all(|r| *r < p[0].s.min(p[1].s) || *r > p[0].s.max(p[1].s)) && p[0].j.t.abs() > 1e-6 && p[1].j.t.abs() > 1e-6 {
                prop_assert_eq!(p[0].j.t > 0.0, p[1].j.t > 0.0);
            }
        }
    }

    #[test]
    fn reparametrization_keeps_the_curve(lambda in 0.25f64..4.0, x in 0.0f64..TAU) {
        let build = |c: f64| {
            let modes = vec![
                PlaneWaveMode::new([1.0, 0.0, 0.0], 0.5, Complex64::new(0.8 * c, 0.0)).unwrap(),
                PlaneWaveMode::new([-2.0, 0.0, 0.0], 0.5, Complex64::new(0.6 * c, 0.0)).unwrap(),
            ];
            CurrentField::new(WaveFunction::klein_gordon(modes, 1.0).unwrap()).unwrap()
        };
        let (a, b) = (build(1.0), build(lambda.sqrt()));
        let x0 = FourVector::new(0.0, 50.0 + x, 0.0, 0.0);
        let cfg = IntegratorConfig { max_s: 2.0, rtol: 1e-12, atol: 1e-14, ..Default::default() };
        let bx = SpatialBox::line(100.0).unwrap();
        let plane = Hypersurface::time_slice(0.3, &bx);
        let watch = [plane.clone()];
        let ta = integrate_watching(&a, x0, &cfg, &watch).unwrap();
        let tb = integrate_watching(&b, x0, &IntegratorConfig { max_s: 2.0 / lambda, ..cfg }, &watch).unwrap();
        let (ca, cb): (Vec<_>, Vec<_>) = (ta.watched_crossings(0).collect(), tb.watched_crossings(0).collect());
        // Sample interpolation agrees with the bisected events.
        prop_assert_eq!(crossings(&ta, &plane).len(), ca.len());
        prop_assert!(!ca.is_empty());
        prop_assert_eq!(ca.len(), cb.len());
        for (p, q) in ca.iter().zip(&cb) {
            prop_assert!((p.x - q.x).euclidean_norm() < 1e-8);
            prop_assert!((p.s - q.s * lambda).abs() < 1e-8);
        }
    }

    #[test]
    fn positive_density_never_reverses(c2 in 0.0f64..0.3, x in 0.0f64..1.0, t in -1.0f64..1.0) {
        let modes = vec![
            PlaneWaveMode::new([TAU, 0.0, 0.0], 3.0, Complex64::new((1.0 - c2 * c2).sqrt(), 0.0)).unwrap(),
            PlaneWaveMode::new([2.0 * TAU, 0.0, 0.0], 3.0, Complex64::new(0.0, c2)).unwrap(),
        ];
        let cf = CurrentField::new(WaveFunction::klein_gordon(modes, 1.0).unwrap()).unwrap();
        prop_assume!(cf.time_component_lower_bound() > 0.0);
        let tr = integrate(&cf, FourVector::new(t, x, 0.0, 0.0), &IntegratorConfig { max_s: 3.0, ..Default::default() }).unwrap();
        prop_assert_eq!(tr.time_reversals().count(), 0);
    }

    #[test]
    fn interference_decomposition(w1 in 0.5f64..5.0, w2 in 0.5f64..5.0, dir in -0.3f64..0.3, x in -1.0f64..1.0, y in -1.0f64..1.0, t in 0.0f64..3.0) {
        let sc = TwoFrequencyScenario::new(TwoFrequencySpec {
            omega1: w1,
            omega2: w2,
            mass: 0.0,
            beam1: BeamSpec { center: [0.0, -0.4], direction: dir, angular_width: 0.2, modes: 21 },
            beam2: BeamSpec { center: [0.0, 0.4], direction: -dir, angular_width: 0.2, modes: 21 },
            region: Region { x: [-15.0, 15.0], y: [-15.0, 15.0] },
            norm_points: 96,
        }).unwrap();
        let p = [x, y, 0.0];
        let d = sc.densities(p, t);
        let a = sc.alpha();
        prop_assert!((sc.conventional_density(p, t) - (d.classical + d.interference)).abs() < 1e-12);
        prop_assert!((sc.kg_density(p, t) - (d.classical + a * d.interference)).abs() < 1e-12);
        let cf = CurrentField::new(sc.to_wavefunction().unwrap()).unwrap();
        prop_assert!((cf.time_component(FourVector::new(t, x, y, 0.0)) - d.j0).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn congruence_flux_ordering(seed in 0u64..1000, eta in prop::sample::select(vec![2.0, 3.0, 4.0]), tq in 0.1f64..0.5) {
        let cf = CurrentField::new(make_two_mode([TAU, 0.0, 0.0], [-eta * TAU, 0.0, 0.0], 0.0, 1.0).unwrap()).unwrap();
        let bx = SpatialBox::line(1.0).unwrap();
        let launch_s = Hypersurface::periodic_time_slice(0.0, &bx);
        let query = Hypersurface::periodic_time_slice(tq, &bx);
        let cfg = CongruenceConfig {
            integrator: IntegratorConfig { max_s: 1.0, keep_samples: false, ..Default::default() },
            watch: vec![query.clone()],
            ..Default::default()
        };
        let c = launch(&cf, &launch_s, 400, Sampler::RejectionMonteCarlo, seed, &cfg, Exec::Parallel).unwrap();
        prop_assert!(c.members.iter().all(|m| m.weight >= 0.0 && m.density >= 0.0));
        for m in &c.members {
            prop_assert!((m.density - cf.time_component(m.launch).abs()).abs() < 1e-12);
        }
        let r = crossing_report(&c, &query).unwrap();
        prop_assert!(r.signed_flux.value <= r.unsigned_flux.value + 1e-12);
        let all_future = r.crossings.iter().all(|x| x.orientation == kgbohm::trajectory::Orientation::FutureWard);
        prop_assert_eq!(all_future, (r.signed_flux.value - r.unsigned_flux.value).abs() < 1e-12);
        prop_assert!(r.multiplicities.iter().all(|m| m % 2 == 1));
    }

    #[test]
    fn unknown_keys_are_rejected(key in "[a-z_]{3,12}") {
        prop_assume!(!["description", "claim", "seed", "outputs", "scenario"].contains(&key.as_str()));
        let text = format!(r#"{{"{key}": 1, "scenario": {{"kind": "single-trajectory",
            "wavefunction": {{"modes": [{{"k": [1, 0, 0], "re_c": 1}}], "V": 1}}, "starts": [[0, 0, 0, 0]]}}}}"#);
        prop_assert!(ScenarioConfig::from_json(&text).is_err());
    }
}
