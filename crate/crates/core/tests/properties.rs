mod common;

use auo::conic::{
    project_cone, residuals, solve_conic, ConeBlock, ConeSpec, SolveStatus, SolverSettings,
};
use auo::linalg::{mat_inf_norm, matvec, norm1, norm2, Matrix, Vector};
use auo::model::{gen_instance, gen_perturbation, DeltaSemantics, InstanceConfig, MatrixMode};
use auo::recovery::{auc_bound, recover, RecoveryMethod};
use auo::rng::stream;
use proptest::prelude::*;

use common::Lp;

fn vec_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, len)
}

fn pair(max_len: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_len).prop_flat_map(|n| (vec_strategy(n), vec_strategy(n)))
}

fn matrix_strategy() -> impl Strategy<Value = Matrix> {
    (1usize..8, 1usize..8).prop_flat_map(|(r, c)| {
        prop::collection::vec(-5.0f64..5.0, r * c).prop_map(move |d| Matrix::new(r, c, d).unwrap())
    })
}

fn cones_strategy() -> impl Strategy<Value = ConeSpec> {
    prop::collection::vec(
        prop_oneof![
            (1usize..4).prop_map(ConeBlock::Zero),
            (1usize..4).prop_map(ConeBlock::NonNeg),
            (1usize..5).prop_map(ConeBlock::SecondOrder),
        ],
        1..4,
    )
    .prop_map(|b| ConeSpec::new(b).unwrap())
}

fn cone_and_point() -> impl Strategy<Value = (ConeSpec, Vec<f64>)> {
    cones_strategy().prop_flat_map(|k| {
        let d = k.total_dim();
        (Just(k), vec_strategy(d))
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn holder_chain((v, t) in pair(12)) {
        let d: f64 = v.iter().zip(&t).map(|(a, b)| a * b).sum();
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let slack = 1e-12 * (1.0 + norm1(&v).unwrap() * norm1(&t).unwrap());
        prop_assert!(d.abs() <= vmax * norm1(&t).unwrap() + slack);
        prop_assert!(d.abs() <= norm1(&v).unwrap() * norm1(&t).unwrap() + slack);
    }

    #[test]
    fn norm_ordering(v in (1usize..20).prop_flat_map(vec_strategy)) {
        prop_assert!(norm2(&v).unwrap() <= norm1(&v).unwrap() * (1.0 + 1e-15));
    }

    #[test]
    fn inf_norm_is_max_row_l1(m in matrix_strategy()) {
        let expect = (0..m.rows()).map(|r| norm1(m.row(r)).unwrap()).fold(0.0f64, f64::max);
        prop_assert_eq!(mat_inf_norm(&m).unwrap(), expect);
    }

    #[test]
    fn matvec_linearity(
        (m, u, w) in matrix_strategy().prop_flat_map(|m| {
            let c = m.cols();
            (Just(m), vec_strategy(c), vec_strategy(c))
        }),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let combo: Vec<f64> = u.iter().zip(&w).map(|(x, y)| a * x + b * y).collect();
        let lhs = matvec(&m, &combo).unwrap();
        let mu = matvec(&m, &u).unwrap();
        let mw = matvec(&m, &w).unwrap();
        for i in 0..lhs.len() {
            let rhs = a * mu[i] + b * mw[i];
            let scale = 1.0 + a.abs() * mu[i].abs() + b.abs() * mw[i].abs() + lhs[i].abs();
            prop_assert!((lhs[i] - rhs).abs() <= 1e-12 * scale * 10.0);
        }
    }

    #[test]
    fn projection_is_idempotent((k, p) in cone_and_point()) {
        let once = project_cone(&Vector::new(p).unwrap(), &k).unwrap();
        let twice = project_cone(&once, &k).unwrap();
        prop_assert!(dist(&once, &twice) <= 1e-12 * (1.0 + norm2(&once).unwrap()));
    }

    #[test]
    fn projection_is_nearest((k, p) in cone_and_point(), q in (0usize..1).prop_flat_map(|_| vec_strategy(32))) {
        // Any point projected onto K is feasible; the projection of p is no
        // farther from p than it.
        let q = Vector::new(q[..k.total_dim()].to_vec()).unwrap();
        let feasible = project_cone(&q, &k).unwrap();
        let proj = project_cone(&Vector::new(p.clone()).unwrap(), &k).unwrap();
        prop_assert!(dist(&p, &proj) <= dist(&p, &feasible) + 1e-9);
    }

    #[test]
    fn moreau_decomposition(
        (k, p) in prop::collection::vec(
            prop_oneof![(1usize..4).prop_map(ConeBlock::NonNeg), (1usize..5).prop_map(ConeBlock::SecondOrder)],
            1..4,
        )
        .prop_map(|b| ConeSpec::new(b).unwrap())
        .prop_flat_map(|k| { let d = k.total_dim(); (Just(k), vec_strategy(d)) })
    ) {
        let plus = project_cone(&Vector::new(p.clone()).unwrap(), &k).unwrap();
        let neg: Vec<f64> = p.iter().map(|v| -v).collect();
        let minus = project_cone(&Vector::new(neg).unwrap(), &k).unwrap();
        for i in 0..p.len() {
            prop_assert!((p[i] - (plus[i] - minus[i])).abs() <= 1e-10);
        }
    }

    #[test]
    fn auc_chain(
        (rows, theta) in (1usize..8, 1usize..8).prop_flat_map(|(m, n)| {
            (prop::collection::vec(vec_strategy(n), m), vec_strategy(n))
        }),
    ) {
        let v = Matrix::from_rows(&rows).unwrap();
        let m = v.rows() as f64;
        let vt = matvec(&v, &theta).unwrap();
        let per_row: f64 = (0..v.rows())
            .map(|r| v.row(r).iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>().powi(2))
            .sum::<f64>()
            .sqrt();
        let lhs = norm2(&vt).unwrap();
        prop_assert!((lhs - per_row).abs() <= 1e-9 * (1.0 + lhs));
        let t1 = norm1(&theta).unwrap();
        for r in 0..v.rows() {
            let d: f64 = v.row(r).iter().zip(&theta).map(|(a, b)| a * b).sum();
            prop_assert!(d.abs() <= norm1(v.row(r)).unwrap() * t1 * (1.0 + 1e-12) + 1e-12);
        }
        let inf = mat_inf_norm(&v).unwrap();
        prop_assert!(lhs <= m.sqrt() * inf * t1 * (1.0 + 1e-12) + 1e-12);
        let bound = auc_bound(&v, &theta, inf).unwrap();
        prop_assert!(bound.holds || (bound.lhs - bound.rhs).abs() <= 1e-12 * (1.0 + bound.rhs));
    }

    #[test]
    fn perturbation_respects_bound(
        m in 1usize..10, n in 1usize..10, delta in 0.0f64..2.0, seed in any::<u64>(), rowl1 in any::<bool>(),
    ) {
        let semantics = if rowl1 { DeltaSemantics::RowL1 } else { DeltaSemantics::Elementwise };
        let v = gen_perturbation(m, n, delta, semantics, 0.5, &mut stream(seed)).unwrap();
        let max_abs = v.as_slice().iter().fold(0.0f64, |a, x| a.max(x.abs()));
        prop_assert!(max_abs <= delta);
        if rowl1 {
            prop_assert!(mat_inf_norm(&v).unwrap() <= delta);
        }
    }

    #[test]
    fn instances_satisfy_model(
        n in 2usize..20, seed in any::<u64>(), gaussian in any::<bool>(), delta in 0.0f64..1.0,
    ) {
        let cfg = InstanceConfig {
            n,
            m: 1 + (seed as usize) % n,
            k: 1 + (seed as usize / 7) % n,
            delta,
            matrix_mode: if gaussian { MatrixMode::Gaussian } else { MatrixMode::SubsampledIdentity },
            seed,
            ..Default::default()
        };
        let inst = gen_instance(&cfg).unwrap();
        prop_assert_eq!(inst.true_support().len(), cfg.k);
        let ay = matvec(&inst.a, &inst.theta_true).unwrap();
        prop_assert_eq!(ay.as_slice(), inst.y.as_slice());
        for i in 0..inst.b.as_slice().len() {
            prop_assert_eq!(inst.b.as_slice()[i], inst.a.as_slice()[i] + inst.v.as_slice()[i]);
        }
    }
}

/// Random bounded LPs: box constraints plus random cuts through a region
/// containing the origin, checked against vertex enumeration.
fn random_lp() -> impl Strategy<Value = Lp> {
    (1usize..=4).prop_flat_map(|n| {
        (
            vec_strategy(n),
            prop::collection::vec(vec_strategy(n), 0..=(8 - 2 * n).min(3)),
            prop::collection::vec(0.5f64..5.0, 3),
        )
            .prop_map(move |(c, cuts, rhs)| {
                let mut g = Vec::new();
                let mut h = Vec::new();
                for i in 0..n {
                    let mut up = vec![0.0; n];
                    up[i] = 1.0;
                    g.push(up.clone());
                    g.push(up.iter().map(|v| -v).collect());
                    h.extend([2.0, 2.0]);
                }
                for (cut, r) in cuts.into_iter().zip(rhs) {
                    g.push(cut);
                    h.push(r);
                }
                Lp {
                    name: "random",
                    c,
                    g,
                    h,
                    e: vec![],
                    f: vec![],
                }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn solver_matches_vertex_enumeration(lp in random_lp()) {
        let oracle = lp.vertex_optimum().unwrap();
        let problem = lp.to_conic();
        let sol = solve_conic(&problem, &SolverSettings::default()).unwrap();
        prop_assert_eq!(sol.status, SolveStatus::Optimal);
        prop_assert!((sol.objective(&problem) - oracle).abs() <= 1e-5 * (1.0 + oracle.abs()),
            "objective {} vs oracle {}", sol.objective(&problem), oracle);
        let r = residuals(&problem, &sol).unwrap();
        prop_assert!(r.primal <= 1e-6 && r.dual <= 1e-6 && r.gap <= 1e-6);
    }

    #[test]
    fn auo_output_is_feasible_and_tight(n in 2usize..12, seed in any::<u64>(), delta in 0.05f64..2.0) {
        let cfg = InstanceConfig {
            n,
            m: 1 + (seed as usize) % n,
            k: 1 + (seed as usize / 3) % n,
            delta: 0.3,
            matrix_mode: MatrixMode::Gaussian,
            seed,
            ..Default::default()
        };
        let inst = gen_instance(&cfg).unwrap();
        let r = recover(&inst.b, &inst.y, &RecoveryMethod::Auo { delta }, &SolverSettings::default(), 0.5).unwrap();
        prop_assume!(r.solver_status == SolveStatus::Optimal);
        let t = r.t_value.unwrap();
        let bt = matvec(&inst.b, &r.theta_hat).unwrap();
        let res: Vec<f64> = inst.y.iter().zip(bt.iter()).map(|(a, b)| a - b).collect();
        let scale = (inst.b.rows() as f64).sqrt() * delta;
        let res2 = norm2(&res).unwrap();
        let l1 = norm1(&r.theta_hat).unwrap();
        prop_assert!(res2 <= scale * t + 1e-5, "residual {} > {}", res2, scale * t);
        prop_assert!(l1 <= t + 1e-5, "l1 {} t {} status {:?} iters {} m {} k {}", l1, t, r.solver_status, r.iterations, inst.b.rows(), cfg.k);
        prop_assert!((t - l1.max(res2 / scale)).abs() <= 1e-5, "t {} vs {}", t, l1.max(res2 / scale));
    }
}

#[test]
fn bp_is_exact_on_square_systems() {
    let mut rng = stream(3);
    for _ in 0..10 {
        let b = Matrix::from_rows(&common::gaussian_matrix(&mut rng, 5, 5)).unwrap();
        let theta = [1.0, 0.0, -0.5, 0.0, 2.0];
        let y = matvec(&b, &theta).unwrap();
        let r = recover(&b, &y, &RecoveryMethod::Bp, &SolverSettings::default(), 0.5).unwrap();
        for (a, e) in r.theta_hat.iter().zip(&theta) {
            assert!((a - e).abs() <= 1e-6, "{:?}", r.theta_hat);
        }
    }
}
