mod common;

use common::{energy, golden, topology, u, U};
use mec_core::baselines;
use mec_core::model::Topology;
use mec_core::oracle::{energy_gradient_xq, energy_gradient_xt, solve_p2_oracle, solve_p5_oracle, OracleSettings};
use mec_core::solver::SolverSettings;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn mixed() -> Vec<U> {
    vec![
        u(2e-10, 5e5, 1e9, 0.5, 0),
        u(4e-11, 8e5, 2.2e9, 0.5, 0),
        u(9e-11, 3e5, 0.7e9, 0.5, 1),
        u(1.5e-11, 6e5, 1.8e9, 0.5, 1),
    ]
}

#[test]
fn symmetric_optimum_is_the_equal_split() {
    let users: Vec<_> = (0..4).map(|_| u(1e-10, 5e5, 1e9, 0.5, 0)).collect();
    let topo = topology(&users, &[1e11], 1e7);
    let o = solve_p2_oracle(&topo, &OracleSettings::default()).unwrap();
    let t = 0.5 - 1e9 * 4.0 / 1e11;
    let expect = 4.0 * energy(2.5e6, t, 5e5, 1e-10);
    assert!(rel(o.energy, expect) < 1e-9, "{} vs {expect}", o.energy);
    assert!(o.converged);
}

#[test]
fn two_users_match_nested_golden_search() {
    let users = [u(3e-10, 7e5, 1.5e9, 0.5, 0), u(2e-11, 4e5, 0.8e9, 0.4, 0)];
    let (b, c) = (3e6, 1e10);
    let topo = topology(&users, &[c], b);
    let e_at = |x: f64, q: f64| {
        let t1 = users[0].d - users[0].w / q;
        let t2 = users[1].d - users[1].w / (c - q);
        if t1 <= 0.0 || t2 <= 0.0 {
            return f64::INFINITY;
        }
        energy(x, t1, users[0].l, users[0].gain) + energy(b - x, t2, users[1].l, users[1].gain)
    };
    // the energy is jointly convex in (x, q), so its partial minimum in q is convex in x
    let q_lo = users[0].w / users[0].d;
    let q_hi = c - users[1].w / users[1].d;
    let inner = |x: f64| {
        let q = golden(|q| e_at(x, q), q_lo, q_hi, 150);
        e_at(x, q)
    };
    let x = golden(inner, 0.0, b, 150);
    let reference = inner(x);
    let o = solve_p2_oracle(&topo, &OracleSettings::default()).unwrap();
    assert!(rel(o.energy, reference) < 1e-8, "{} vs {reference}", o.energy);
    assert!(rel(o.allocation.bandwidth[0], x) < 1e-3);
}

#[test]
fn oracle_not_above_any_baseline() {
    let topo = topology(&mixed(), &[5e10, 5e10], 4e6);
    let o = solve_p2_oracle(&topo, &OracleSettings::default()).unwrap();
    let s = SolverSettings::default();
    let rivals = [
        baselines::fixed(&topo).unwrap().total_energy(),
        baselines::fixed_bandwidth(&topo, &s).unwrap().allocation.total_energy(),
        baselines::fixed_bandwidth_per_bs(&topo, &s).unwrap().allocation.total_energy(),
        baselines::fixed_computing(&topo, &s).unwrap().allocation.total_energy(),
    ];
    for r in rivals {
        assert!(o.energy <= r * (1.0 + 1e-12));
    }
}

#[test]
fn restarts_agree() {
    let topo = topology(&mixed(), &[5e10, 5e10], 4e6);
    let o = solve_p2_oracle(
        &topo,
        &OracleSettings {
            restarts: 5,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(o.restart_energies.len(), 5);
    for e in &o.restart_energies {
        assert!(rel(*e, o.energy) < 1e-6);
    }
}

#[test]
fn allocation_satisfies_budgets() {
    let topo = topology(&mixed(), &[5e10, 5e10], 4e6);
    let a = solve_p2_oracle(&topo, &OracleSettings::default()).unwrap().allocation;
    assert!(rel(a.bandwidth.iter().sum(), 4e6) < 1e-12);
    for st in topo.stations() {
        let q: f64 = st.users.iter().map(|&i| a.compute[i]).sum();
        assert!(rel(q, st.capacity) < 1e-9);
    }
}

#[test]
fn gradients_match_central_differences() {
    let topo = topology(&mixed(), &[5e10, 5e10], 4e6);
    for i in 0..4 {
        let task = topo.user(i).task;
        let h = topo.user(i).gain;
        for &(x, t) in &[(5e5, 0.2), (1.5e6, 0.35), (3e6, 0.45)] {
            let (gx, gt) = energy_gradient_xt(&topo, i, x, t);
            let (dx, dt) = (x * 1e-6, t * 1e-6);
            let fx = (energy(x + dx, t, task.data_bits, h) - energy(x - dx, t, task.data_bits, h)) / (2.0 * dx);
            let ft = (energy(x, t + dt, task.data_bits, h) - energy(x, t - dt, task.data_bits, h)) / (2.0 * dt);
            assert!(rel(gx, fx) < 1e-6, "{gx} {fx}");
            assert!(rel(gt, ft) < 1e-6, "{gt} {ft}");
            let q = task.cycles / (task.deadline - t);
            let (_, gq) = energy_gradient_xq(&topo, i, x, q);
            let dq = q * 1e-6;
            let e_q = |q: f64| energy(x, task.deadline - task.cycles / q, task.data_bits, h);
            let fq = (e_q(q + dq) - e_q(q - dq)) / (2.0 * dq);
            assert!(rel(gq, fq) < 1e-6, "{gq} {fq}");
        }
    }
}

#[test]
fn rejects_zero_data_users() {
    let topo = topology(&[u(1e-10, 0.0, 1e9, 0.5, 0), u(1e-10, 5e5, 1e9, 0.5, 0)], &[1e11], 1e7);
    assert!(solve_p2_oracle(&topo, &OracleSettings::default()).is_err());
}

fn station_subproblem(users: &[U], station: usize, cap: f64, band: f64) -> Topology {
    let mine: Vec<U> = users
        .iter()
        .filter(|x| x.station == station)
        .map(|x| u(x.gain, x.l, x.w, x.d, 0))
        .collect();
    topology(&mine, &[cap], band)
}

#[test]
fn singleton_groups_reproduce_the_shared_band() {
    let users = mixed();
    let topo = topology(&users, &[5e10, 5e10], 4e6);
    let p2 = solve_p2_oracle(&topo, &OracleSettings::default()).unwrap();
    let p5 = solve_p5_oracle(&topo, &[vec![0], vec![1]], &OracleSettings::default()).unwrap();
    assert!(rel(p5.energy, p2.energy) < 1e-7, "{} vs {}", p5.energy, p2.energy);
}

#[test]
fn single_group_gives_each_station_the_whole_band() {
    let users = mixed();
    let topo = topology(&users, &[5e10, 5e10], 4e6);
    let p5 = solve_p5_oracle(&topo, &[vec![0, 1]], &OracleSettings::default()).unwrap();
    assert_eq!(p5.budgets, vec![4e6]);
    let alone: f64 = (0..2)
        .map(|j| solve_p2_oracle(&station_subproblem(&users, j, 5e10, 4e6), &OracleSettings::default()).unwrap().energy)
        .sum();
    assert!(rel(p5.energy, alone) < 1e-9);
}

#[test]
fn mirror_groups_split_evenly_and_order_by_factor() {
    // stations 0,1 mirror stations 2,3
    let mut users = mixed();
    for x in mixed() {
        users.push(u(x.gain, x.l, x.w, x.d, x.station + 2));
    }
    let topo = topology(&users, &[5e10; 4], 4e6);
    let s = OracleSettings::default();
    let f2 = solve_p5_oracle(&topo, &[vec![0, 1], vec![2, 3]], &s).unwrap();
    for b in &f2.budgets {
        assert!(rel(*b, 2e6) < 1e-6, "{:?}", f2.budgets);
    }
    let f1 = solve_p5_oracle(&topo, &[vec![0, 1, 2, 3]], &s).unwrap();
    let p2 = solve_p2_oracle(&topo, &s).unwrap();
    assert!(f1.energy <= f2.energy && f2.energy <= p2.energy * (1.0 + 1e-9));
}
