//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! criterion fails.

use std::process::ExitCode;

use elastoph::dgrad::discrete_hamiltonian_gradient;
use elastoph::integrator::propagate;
use elastoph::{
    analyze, integrate, ConservationTolerances, DGradParams, ElasticElement, IntegratorParams,
    MechanicalSystem, Scheme, State, ViscousDamping, ZeroInput,
};
use elastoph_cli::config::PENDULUM_CONFIG;
use elastoph_cli::{parse_config, sweep};
use nalgebra::{DMatrix, DVector, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const G: f64 = 9.81;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn pendulum() -> MechanicalSystem {
    MechanicalSystem::new(
        vec![1.0],
        vec![ElasticElement::anchored(0, 1.0e4, 1.0).unwrap()],
        Vector3::new(0.0, 0.0, -G),
    )
    .unwrap()
}

fn pendulum_initial() -> State {
    State::new(
        DVector::from_vec(vec![1.1, 0.0, 0.0]),
        DVector::from_vec(vec![0.0, 1.0, 1.0]),
        DVector::from_vec(vec![1.21]),
    )
}

fn pendulum_params() -> IntegratorParams {
    IntegratorParams::new(1e-2, 0.0, 4.0).unwrap().with_newton_tol(1e-9)
}

fn max_increment(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max)
}

fn benchmark() -> (Outcome, Outcome, Outcome) {
    let sys = pendulum();
    let traj = integrate(&sys, &pendulum_initial(), &pendulum_params(), &ZeroInput).unwrap();
    let report = analyze(&sys, &traj, Vector3::z(), &ConservationTolerances::default()).unwrap();

    let dh = report.max_energy_increment;
    let c1 = outcome(
        traj.len() == 401 && dh <= 1e-8,
        format!("{} steps, max |H(n+1) - H(n)| = {dh:.3e}", traj.len() - 1),
    );

    let dl = max_increment(traj.diagnostics.iter().map(|d| d.angular_momentum[2]));
    let drift = traj
        .diagnostics
        .iter()
        .map(|d| (d.angular_momentum[2] - 1.1).abs())
        .fold(0.0, f64::max);
    let c2 = outcome(
        dl <= 1e-8 && drift <= 1e-6,
        format!("max |dL3| = {dl:.3e}, max |L3 - 1.1| = {drift:.3e}"),
    );

    let g = report.max_kinematic_residual;
    let c3 = outcome(g <= 1e-8, format!("max |C - C~(q)|_inf = {g:.3e}"));
    (c1, c2, c3)
}

fn random_triangle(rng: &mut StdRng) -> MechanicalSystem {
    let elements = [(0, 1), (1, 2), (0, 2)]
        .iter()
        .map(|&(a, b)| {
            ElasticElement::spring(a, b, rng.random_range(10.0..1.0e4), rng.random_range(0.5..2.0))
                .unwrap()
        })
        .collect();
    let masses = (0..3).map(|_| rng.random_range(0.5..2.0)).collect();
    let gravity = Vector3::from_fn(|_, _| rng.random_range(-10.0..10.0));
    MechanicalSystem::new(masses, elements, gravity).unwrap()
}

fn random_vec(rng: &mut StdRng, len: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(lo..hi))
}

fn random_state(rng: &mut StdRng) -> State {
    State::new(
        random_vec(rng, 9, -2.0, 2.0),
        random_vec(rng, 9, -3.0, 3.0),
        random_vec(rng, 3, 0.3, 3.0),
    )
}

fn directionality() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed_0004);
    let params = DGradParams::default();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let sys = random_triangle(&mut rng);
        let x0 = random_state(&mut rng);
        let x1 = random_state(&mut rng);
        let dg = discrete_hamiltonian_gradient(&sys, &x0, &x1, &params).unwrap();
        let h0 = sys.hamiltonian(&x0).unwrap();
        let h1 = sys.hamiltonian(&x1).unwrap();
        let lhs = dg.dot(&(x1.to_vector() - x0.to_vector()));
        worst = worst.max((lhs - (h1 - h0)).abs() / (1.0 + h0.abs() + h1.abs()));
    }
    outcome(worst <= 1e-11, format!("1000 pairs, worst scaled residual {worst:.3e}"))
}

fn central<F: Fn(&DVector<f64>) -> f64>(f: F, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let step = 1e-6 * (1.0 + x[i].abs());
        let (mut hi, mut lo) = (x.clone(), x.clone());
        hi[i] += step;
        lo[i] -= step;
        (f(&hi) - f(&lo)) / (2.0 * step)
    })
}

fn gradient_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed_0005);
    let (mut worst_z, mut worst_g): (f64, f64) = (0.0, 0.0);
    let mut done = 0;
    while done < 100 {
        let sys = random_triangle(&mut rng);
        let x = random_state(&mut rng);
        if sys.strain_map(&x.q).unwrap().min() < 0.05 {
            continue;
        }
        let z = sys.hamiltonian_gradient(&x).unwrap();
        let fd = central(|v| sys.hamiltonian(&State::from_vector(3, 3, v).unwrap()).unwrap(), &x.to_vector());
        worst_z = worst_z.max((fd - &z).amax() / (1.0 + z.amax()));

        let g = sys.strain_jacobian(&x.q).unwrap();
        let mut fd = DMatrix::zeros(3, 9);
        for i in 0..3 {
            fd.set_row(i, &central(|p| sys.strain_map(p).unwrap()[i], &x.q).transpose());
        }
        worst_g = worst_g.max((fd - &g).amax() / (1.0 + g.amax()));
        done += 1;
    }
    outcome(
        worst_z <= 1e-6 && worst_g <= 1e-6,
        format!("100 states, efforts {worst_z:.3e}, strain Jacobian {worst_g:.3e}"),
    )
}

fn baseline_contrast() -> Outcome {
    let sys = pendulum();
    let run = |scheme| {
        let p = pendulum_params().with_scheme(scheme);
        let t = integrate(&sys, &pendulum_initial(), &p, &ZeroInput).unwrap();
        max_increment(t.diagnostics.iter().map(|d| d.hamiltonian))
    };
    let dg = run(Scheme::DiscreteGradient);
    let mp = run(Scheme::ImplicitMidpoint);
    outcome(
        mp >= 100.0 * dg,
        format!("max |dH| midpoint {mp:.3e} vs discrete gradient {dg:.3e} (ratio {:.1e})", mp / dg),
    )
}

fn passivity() -> Outcome {
    let sys = pendulum();
    let traj = integrate(
        &sys,
        &pendulum_initial(),
        &pendulum_params(),
        &ViscousDamping { damping: 0.5 },
    )
    .unwrap();
    let mut max_rise: f64 = f64::NEG_INFINITY;
    let mut max_balance: f64 = 0.0;
    for w in traj.diagnostics.windows(2) {
        let dh = w[1].hamiltonian - w[0].hamiltonian;
        max_rise = max_rise.max(dh);
        max_balance = max_balance.max((dh - w[1].power_supplied).abs());
    }
    outcome(
        max_rise <= 1e-8 && max_balance <= 1e-8,
        format!("max dH = {max_rise:.3e}, max |dH - h y.u| = {max_balance:.3e}"),
    )
}

fn convergence() -> Outcome {
    let mut cfg = parse_config(PENDULUM_CONFIG).unwrap();
    cfg.integrator.t_end = 0.25;
    let table = sweep(&cfg, &[4e-3, 2e-3, 1e-3]).unwrap();
    let orders = table.orders();
    let pass = orders.len() == 2 && orders.iter().all(|p| (p - 2.0).abs() <= 0.2);
    let errors: Vec<String> = table.rows.iter().map(|r| format!("{:.3e}", r.error)).collect();
    outcome(
        pass,
        format!(
            "T = {}, h_ref = {:e}, errors [{}], orders {:?}",
            table.t_end,
            table.h_ref,
            errors.join(", "),
            orders.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>()
        ),
    )
}

fn equilibrium() -> Outcome {
    let (m, k) = (1.0, 1.0e4);
    let force = |c: f64| 0.5 * k * (1.0 - 1.0 / c) * c.sqrt() - m * G;
    let (mut lo, mut hi) = (1.0, 4.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if force(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let c_star = 0.5 * (lo + hi);
    let sys = pendulum();
    let x0 = sys
        .consistent_state(DVector::from_vec(vec![0.0, 0.0, -c_star.sqrt()]), DVector::zeros(3))
        .unwrap();
    let params = IntegratorParams::new(1e-2, 0.0, 1.0).unwrap();
    let traj = integrate(&sys, &x0, &params, &ZeroInput).unwrap();
    let drift = traj
        .states
        .iter()
        .map(|x| (x.to_vector() - x0.to_vector()).amax())
        .fold(0.0, f64::max);
    let end = propagate(&sys, &x0, &params, &ZeroInput).unwrap();
    outcome(
        traj.len() == 101 && drift <= 1e-9 && end == *traj.last().unwrap(),
        format!("C* = {c_star:.12}, max component drift over 100 steps {drift:.3e}"),
    )
}

fn main() -> ExitCode {
    let (c1, c2, c3) = benchmark();
    let results = [
        ("1 energy increments, pendulum benchmark", c1),
        ("2 axial angular momentum", c2),
        ("3 discrete kinematic condition", c3),
        ("4 directionality, random systems", directionality()),
        ("5 gradient oracle", gradient_oracle()),
        ("6 midpoint baseline contrast", baseline_contrast()),
        ("7 passivity under viscous input", passivity()),
        ("8 second-order convergence", convergence()),
        ("9 hanging equilibrium fixed point", equilibrium()),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
