mod common;

use std::collections::BTreeSet;

use common::*;
use param_lyap::multiagent::*;
use param_lyap::vibration::{Backend, SolverSettings};
use param_lyap::{LyapError, RMat};

fn assert_laplacian(l: &RMat) {
    let m = l.nrows();
    assert_eq!(l, &l.transpose());
    for i in 0..m {
        assert_eq!(l.row(i).sum(), 0.0);
        for j in 0..m {
            if i != j {
                assert!(l[(i, j)] <= 0.0);
            }
        }
    }
    assert!(l.clone().symmetric_eigenvalues().min() >= -1e-10);
}

#[test]
fn benchmark_topology_at_200() {
    // edge list written out with the index ranges evaluated by hand
    let m = 200;
    let mut edges = BTreeSet::new();
    for i in 1..=198 {
        edges.insert((i, i + 1));
        edges.insert((i, 200));
    }
    edges.insert((1, 199));
    edges.insert((199, 200));
    let cut: Vec<usize> = (14..=20).chain(60..=70).chain(112..=114).chain(122..=130).chain(180..=190).collect();
    for r in cut {
        edges.remove(&(r, r + 1));
    }
    let hub: Vec<usize> = (1..=10).chain(25..=30).chain(100..=110).chain([199]).collect();
    for h in hub {
        edges.remove(&(h, 200));
    }
    let mut expect = RMat::zeros(m, m);
    for &(i, j) in &edges {
        expect[(i - 1, j - 1)] = -1.0;
        expect[(j - 1, i - 1)] = -1.0;
    }
    for i in 0..m {
        expect[(i, i)] = edges.iter().filter(|&&(a, b)| a == i + 1 || b == i + 1).count() as f64;
    }
    let l = laplacian_alg2(m).unwrap();
    assert_eq!(l, expect);
    assert_laplacian(&l);
}

#[test]
fn benchmark_topology_sizes() {
    assert_laplacian(&laplacian_alg2(400).unwrap());
    for m in [30, 100, 250] {
        assert!(matches!(laplacian_alg2(m), Err(LyapError::IndivisibleSize { .. })));
    }
    assert_laplacian(&ring_laplacian(16).unwrap());
    let g = grid_laplacian(14, 14).unwrap();
    assert_laplacian(&g);
    assert_eq!(g.trace(), 2.0 * (2 * 14 * 13) as f64);
    check_laplacian(&g).unwrap();
    assert!(check_laplacian(&RMat::identity(3, 3)).is_err());
}

#[test]
fn two_agent_blocks() {
    let l = RMat::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
    let net = assemble_network(&l, &AgentSet::example(2)).unwrap();
    // B K C = [[0.5, -0.1], [-0.1, 0.5]]
    let a11 = RMat::from_row_slice(2, 2, &[-10.5, 5.1, 5.1, -8.5]);
    let a12 = RMat::from_row_slice(2, 2, &[0.5, -0.1, -0.1, 0.5]);
    assert!((net.a.view((0, 0), (2, 2)) - &a11).amax() < 1e-15);
    assert!((net.a.view((0, 2), (2, 2)) - &a12).amax() < 1e-15);
    assert!((net.a.view((2, 2), (2, 2)) - &a11).amax() < 1e-15);
    assert_eq!(net.c.view((0, 0), (2, 2)), RMat::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 1.0]));
}

#[test]
fn empty_graph_gives_block_diagonal() {
    let mut r = rng(101);
    let m = 4;
    let agents = AgentSet {
        a: (0..m).map(|_| random_matrix(3, 3, &mut r)).collect(),
        b: (0..m).map(|_| random_matrix(3, 2, &mut r)).collect(),
        c: (0..m).map(|_| random_matrix(2, 3, &mut r)).collect(),
        k: (0..m).map(|_| random_matrix(2, 2, &mut r)).collect(),
    };
    let net = assemble_network(&RMat::zeros(m, m), &agents).unwrap();
    for i in 0..m {
        for j in 0..m {
            let blk = net.a.view((3 * i, 3 * j), (3, 3)).into_owned();
            if i == j {
                assert_eq!(blk, agents.a[i]);
            } else {
                assert_eq!(blk, RMat::zeros(3, 3));
            }
        }
    }
}

#[test]
fn assembly_matches_kronecker_form() {
    let mut r = rng(103);
    let m = 5;
    let (n, p) = (3, 2);
    let agents = AgentSet {
        a: (0..m).map(|_| random_matrix(n, n, &mut r)).collect(),
        b: (0..m).map(|_| random_matrix(n, p, &mut r)).collect(),
        c: (0..m).map(|_| random_matrix(p, n, &mut r)).collect(),
        k: (0..m).map(|_| random_matrix(p, p, &mut r)).collect(),
    };
    let l = laplacian_from_edges(m, &[(1, 2), (2, 3), (3, 4), (4, 5), (1, 5), (2, 4)]).unwrap();
    let net = assemble_network(&l, &agents).unwrap();
    let blkdiag = |blocks: Vec<RMat>| {
        let (r0, c0) = blocks[0].shape();
        let mut out = RMat::zeros(r0 * blocks.len(), c0 * blocks.len());
        for (i, b) in blocks.iter().enumerate() {
            out.view_mut((r0 * i, c0 * i), (r0, c0)).copy_from(b);
        }
        out
    };
    let abig = blkdiag(agents.a.clone());
    let bk = blkdiag((0..m).map(|i| &agents.b[i] * &agents.k[i]).collect());
    let cbig = blkdiag(agents.c.clone());
    let expect = abig - bk * l.kronecker(&RMat::identity(p, p)) * &cbig;
    assert!((&net.a - &expect).amax() <= 1e-14 * expect.amax());
    assert_eq!(net.c, cbig);
}

#[test]
fn example_network_is_symmetric() {
    let net = assemble_network(&grid_laplacian(4, 4).unwrap(), &AgentSet::example(16)).unwrap();
    assert!((&net.a - net.a.transpose()).amax() <= 1e-14);
    assert!(is_stable(&net.a).unwrap());
}

#[test]
fn single_agent_update_pattern() {
    let m = 5;
    let p = perturbation_single_agent(1, m, 2).unwrap();
    let u = p.update(&[1.0, 2.0, 3.0]).unwrap();
    let mut expect = RMat::zeros(2 * m, 2 * m);
    expect.view_mut((0, 0), (2, 2)).copy_from_slice(&[1.0, 2.0, 2.0, 3.0]);
    assert_eq!(u, expect);

    let u3 = perturbation_single_agent(3, m, 2).unwrap().update(&[-1.5, 0.7, 4.0]).unwrap();
    let nz = |u: &RMat| -> BTreeSet<(usize, usize)> {
        (0..u.nrows()).flat_map(|i| (0..u.ncols()).map(move |j| (i, j))).filter(|&(i, j)| u[(i, j)] != 0.0).collect()
    };
    assert!(nz(&u).is_disjoint(&nz(&u3)));
    assert!(nz(&u3).iter().all(|&(i, j)| (4..6).contains(&i) && (4..6).contains(&j)));
    assert_eq!(u3[(4, 5)], u3[(5, 4)]);
}

#[test]
fn pair_update_pattern() {
    let m = 6;
    let (a, b) = (1.25, -3.5);
    let u = perturbation_pair(1, m, 2).unwrap().update(&[a, b]).unwrap();
    let mut expect = RMat::zeros(2 * m, 2 * m);
    expect[(0, 1)] = a;
    expect[(1, 0)] = a;
    expect[(2, 3)] = b;
    expect[(3, 2)] = b;
    assert_eq!(u, expect);
    let u5 = perturbation_pair(5, m, 2).unwrap().update(&[a, b]).unwrap();
    assert!(u5.view((0, 0), (4, 4)).iter().all(|&x| x == 0.0));
    assert_eq!(u5[(4, 5)], a);
    assert_eq!(u5[(7, 6)], b);
    assert_eq!(perturbation_pair(5, m, 2).unwrap().agents(), vec![3, 4]);
}

#[test]
fn hurwitz_construction_is_stable() {
    let mut r = rng(107);
    for _ in 0..10 {
        let g = random_matrix(12, 12, &mut r);
        let a = -(&g * g.transpose()) - RMat::identity(12, 12) * 1e-3;
        assert!(is_stable(&a).unwrap());
        let s = random_matrix(12, 12, &mut r);
        assert!(is_stable(&(&a + (&s - s.transpose()))).unwrap());
        assert!(!is_stable(&(-&a)).unwrap());
    }
}

#[test]
fn h2_of_identity() {
    let i2 = RMat::identity(2, 2);
    assert!((h2_sq(&(-&i2), &i2, &i2).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(h2_sq(&i2, &i2, &i2), Err(LyapError::Unstable));
}

#[test]
fn agent_disturbance_selects_diagonal_block() {
    let m = 6;
    let net = assemble_network(&ring_laplacian(m).unwrap(), &AgentSet::example(m)).unwrap();
    let x = kron_lyap(&net.a.transpose(), &(net.c.transpose() * &net.c));
    for k in 1..=m {
        let e = disturbance_matrix(&[k], m, 2).unwrap();
        let blk = x.view((2 * (k - 1), 2 * (k - 1)), (2, 2)).trace();
        assert!((h2_sq(&net.a, &e, &net.c).unwrap() - blk).abs() <= 1e-12 * blk);
    }
    let full = h2_sq(&net.a, &RMat::identity(2 * m, 2 * m), &net.c).unwrap();
    assert!((full - x.trace()).abs() <= 1e-12 * full);
}

#[test]
fn projected_output_restricts_the_gramian() {
    let m = 5;
    let net = assemble_network(&ring_laplacian(m).unwrap(), &AgentSet::example(m)).unwrap();
    let pc = project_output(&net.c, &[2, 4], m).unwrap();
    let mut p = RMat::zeros(m, m);
    p[(1, 1)] = 1.0;
    p[(3, 3)] = 1.0;
    assert_eq!(pc, p.kronecker(&RMat::identity(2, 2)) * &net.c);
    let e = RMat::identity(2 * m, 2 * m);
    let x = kron_lyap(&net.a.transpose(), &(pc.transpose() * &pc));
    assert!((h2_sq(&net.a, &e, &pc).unwrap() - x.trace()).abs() <= 1e-12 * x.trace());
}

fn desk_network(m: usize) -> NetworkModel {
    assemble_network(&ring_laplacian(m).unwrap(), &AgentSet::example(m)).unwrap()
}

#[test]
fn evaluator_matches_kronecker_oracle() {
    let m = 8;
    let net = desk_network(m);
    let pert = perturbation_single_agent(3, m, 2).unwrap();
    let e = disturbance_matrix(&[3], m, 2).unwrap();
    let settings = SolverSettings::default();
    let v = [2.1, -1.9, 0.6];
    let av = &net.a - pert.update(&v).unwrap();
    let x = kron_lyap(&av.transpose(), &(net.c.transpose() * &net.c));
    let oracle = (&e.transpose() * x * &e).trace();
    for backend in [Backend::Dense, Backend::Smw, Backend::Ek] {
        let mut ev = H2Evaluator::new(&net, &pert, &e, None, backend, &settings).unwrap();
        assert_eq!(ev.network_matrix(&v).unwrap(), av);
        let h = ev.evaluate(&v).unwrap().h2_sq;
        let tol = if backend == Backend::Dense { 1e-10 } else { 1e-8 };
        assert!((h - oracle).abs() <= tol * oracle, "{backend:?}: {h} vs {oracle}");
    }
}

#[test]
fn sweep_backends_agree_and_counts_match_brute_force() {
    let m = 10;
    let net = desk_network(m);
    let axis = desk_axis();
    let spec = SweepSpec {
        family: Family::SingleAgent,
        kset: vec![1, 4, 7],
        grid: cartesian(&[axis.clone(), axis.clone(), axis]),
        disturbance: Disturbance::Perturbed,
        output_agents: None,
    };
    let settings = SolverSettings::default();
    let dense = sweep_grid(&net, &spec, Backend::Dense, &settings).unwrap();

    let mut brute = 0;
    for &k in &spec.kset {
        let pert = perturbation_single_agent(k, m, 2).unwrap();
        for v in &spec.grid {
            let av = &net.a - pert.update(v).unwrap();
            let top = av.symmetric_eigenvalues().max();
            if top < 0.0 {
                brute += 1;
            }
        }
    }
    assert_eq!(dense.stable, brute);
    assert_eq!(dense.stable + dense.unstable, 3 * 125);
    assert!(dense.unstable > 0, "grid should reach unstable configurations");
    assert_eq!(dense.failed, 0);

    for backend in [Backend::Smw, Backend::Ek] {
        let other = sweep_grid(&net, &spec, backend, &settings).unwrap();
        assert_eq!(other.stable, dense.stable);
        assert_eq!(other.failed, 0, "{backend:?}");
        for (a, b) in dense.cells.iter().zip(&other.cells) {
            assert_eq!((a.k, &a.v, a.stable), (b.k, &b.v, b.stable));
            if let (Some(x), Some(y)) = (&a.record, &b.record) {
                assert!((x.h2_sq - y.h2_sq).abs() <= 1e-8 * x.h2_sq, "{backend:?} k={} v={:?}: {} vs {}", a.k, a.v, y.h2_sq, x.h2_sq);
            }
        }
        for (a, b) in dense.maxima.iter().zip(&other.maxima) {
            assert_eq!(a.k, b.k);
            assert!((a.h2_sq - b.h2_sq).abs() <= 1e-8 * a.h2_sq);
        }
    }
}

#[test]
fn sweep_rejects_zero_parameters() {
    let net = desk_network(4);
    let spec = SweepSpec { family: Family::Pair, kset: vec![1], grid: vec![vec![0.0, 1.0]], disturbance: Disturbance::All, output_agents: None };
    assert!(matches!(sweep_grid(&net, &spec, Backend::Dense, &SolverSettings::default()), Err(LyapError::Config(_))));
}

#[test]
fn pair_sweep_on_benchmark_topology() {
    let m = 200;
    let net = assemble_network(&laplacian_alg2(m).unwrap(), &AgentSet::example(m)).unwrap();
    let axis = pair_axis();
    let grid = vec![vec![axis[0], axis[39]], vec![axis[10], axis[20]], vec![axis[39], axis[39]]];
    let spec = SweepSpec { family: Family::Pair, kset: vec![PAIR_KSET_TEXT[0]], grid, disturbance: Disturbance::All, output_agents: None };
    let settings = SolverSettings::default();
    let dense = sweep_grid(&net, &spec, Backend::Dense, &settings).unwrap();
    let ek = sweep_grid(&net, &spec, Backend::Ek, &settings).unwrap();
    assert_eq!(dense.stable, ek.stable);
    for (a, b) in dense.cells.iter().zip(&ek.cells) {
        if let (Some(x), Some(y)) = (&a.record, &b.record) {
            assert!((x.h2_sq - y.h2_sq).abs() <= 1e-8 * x.h2_sq, "v={:?}: {} vs {}", a.v, y.h2_sq, x.h2_sq);
        }
    }
}

#[test]
fn sweep_rejects_wrong_parameter_count() {
    let net = desk_network(4);
    let spec = SweepSpec { family: Family::Pair, kset: vec![1], grid: vec![vec![1.0, 2.0, 3.0]], disturbance: Disturbance::All, output_agents: None };
    assert!(matches!(sweep_grid(&net, &spec, Backend::Dense, &SolverSettings::default()), Err(LyapError::Config(_))));
}
