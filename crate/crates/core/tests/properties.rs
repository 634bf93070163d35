mod common;

use common::*;
use param_lyap::dense::{cauchy_matrix, solve_lyap_dense};
use param_lyap::multiagent::{check_laplacian, laplacian_from_edges, perturbation_pair, perturbation_single_agent};
use param_lyap::optim::{nelder_mead, NelderMeadOptions};
use param_lyap::smw::NormCache;
use param_lyap::{RMat, C64};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn edge_lists_give_laplacians(m in 2usize..20, raw in prop::collection::vec((1usize..20, 1usize..20), 0..40)) {
        let edges: Vec<(usize, usize)> = raw.into_iter().map(|(i, j)| (1 + (i - 1) % m, 1 + (j - 1) % m)).filter(|(i, j)| i != j).collect();
        let l = laplacian_from_edges(m, &edges).unwrap();
        check_laplacian(&l).unwrap();
        prop_assert_eq!(&l, &l.transpose());
        for i in 0..m {
            prop_assert_eq!(l.row(i).sum(), 0.0);
        }
        prop_assert!(l.clone().symmetric_eigenvalues().min() >= -1e-10);
    }

    #[test]
    fn single_agent_update_is_local(m in 2usize..10, k0 in 0usize..10, v in prop::collection::vec(0.1f64..5.0, 3)) {
        let k = 1 + k0 % m;
        let pert = perturbation_single_agent(k, m, 2).unwrap();
        let u = pert.update(&v).unwrap();
        let lo = 2 * (k - 1);
        for i in 0..2 * m {
            for j in 0..2 * m {
                if !(lo..lo + 2).contains(&i) || !(lo..lo + 2).contains(&j) {
                    prop_assert_eq!(u[(i, j)], 0.0);
                }
            }
        }
        let block = u.view((lo, lo), (2, 2)).into_owned();
        prop_assert_eq!(&block, &block.transpose());
    }

    #[test]
    fn pair_update_is_local(half in 2usize..8, k0 in 0usize..8, v in prop::collection::vec(0.1f64..5.0, 4)) {
        let m = 2 * half;
        let k = 2 * (k0 % (m - 1)) + 1;
        let pert = perturbation_pair(k, m, 2).unwrap();
        let u = pert.update(&v[..pert.map.params()]).unwrap();
        let lo = k - 1;
        for i in 0..2 * m {
            for j in 0..2 * m {
                if !(lo..lo + 4).contains(&i) || !(lo..lo + 4).contains(&j) {
                    prop_assert_eq!(u[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn cauchy_hadamard_solves_diagonal_equations(re in prop::collection::vec(-5.0f64..-0.1, 1..12), im in prop::collection::vec(-3.0f64..3.0, 12)) {
        let lambda: Vec<C64> = re.iter().zip(&im).map(|(a, b)| C64::new(*a, *b)).collect();
        let l = cauchy_matrix(&lambda).unwrap();
        for i in 0..lambda.len() {
            for j in 0..lambda.len() {
                prop_assert!((l[(i, j)] * (lambda[i] + lambda[j]) - C64::new(1.0, 0.0)).norm() <= 1e-14);
            }
        }
    }

    #[test]
    fn norm_expansion_matches_dense(seed in 0u64..500, n in 3usize..25, k in 1usize..4) {
        let mut r = rng(seed);
        let pb = random_problem(n, k, &mut r);
        let v = random_params(k, &mut r);
        let dense = pb.a_of(&v).norm();
        prop_assert!((NormCache::new(&pb.a0, &pb.bl, &pb.br).norm_a_of(&v) - dense).abs() <= 1e-12 * dense);
    }

    #[test]
    fn dense_lyapunov_matches_kronecker(seed in 0u64..500, n in 1usize..14) {
        let mut r = rng(seed);
        let a = stable_matrix(n, &mut r);
        let g = random_matrix(n, n, &mut r);
        let q = &g * g.transpose() + RMat::identity(n, n);
        let x = solve_lyap_dense(&a, &q).unwrap();
        prop_assert!(rel_diff(&x, &kron_lyap(&a, &q)) <= 1e-10);
        prop_assert!(rel_diff(&x, &x.transpose()) <= 1e-12);
    }

    #[test]
    fn simplex_finds_quadratic_minimum(c0 in -5.0f64..5.0, c1 in -5.0f64..5.0, w in 0.5f64..4.0) {
        let f = |x: &[f64]| (x[0] - c0).powi(2) + w * (x[1] - c1).powi(2);
        let res = nelder_mead(f, &[1.0, 1.0], &NelderMeadOptions::with_tol(1e-10)).unwrap();
        prop_assert!((res.x[0] - c0).abs() <= 1e-4 && (res.x[1] - c1).abs() <= 1e-4);
        prop_assert!(res.f <= f(&[1.0, 1.0]));
    }
}
