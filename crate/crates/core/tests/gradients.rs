mod common;

use common::*;
use elastoph::dgrad::discrete_hamiltonian_gradient;
use elastoph::{DGradParams, State};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn central_gradient<F: Fn(&DVector<f64>) -> f64>(f: F, x: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let step = 1e-6 * (1.0 + x[i].abs());
        let mut hi = x.clone();
        let mut lo = x.clone();
        hi[i] += step;
        lo[i] -= step;
        (f(&hi) - f(&lo)) / (2.0 * step)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn hamiltonian_gradient_matches_central_differences(tri in triangle(), x in free_state()) {
        let sys = tri.build();
        let h = |v: &DVector<f64>| sys.hamiltonian(&State::from_vector(3, 3, v).unwrap()).unwrap();
        let fd = central_gradient(h, &x.to_vector());
        let exact = sys.hamiltonian_gradient(&x).unwrap();
        prop_assert!(rel_err(&fd, &exact) < 1e-6, "{fd} vs {exact}");
    }

    #[test]
    fn strain_jacobian_matches_central_differences(tri in triangle(), q in separated_positions()) {
        let sys = tri.build();
        let g = sys.strain_jacobian(&q).unwrap();
        let mut fd = DMatrix::zeros(3, 9);
        for i in 0..3 {
            let row = central_gradient(|p| sys.strain_map(p).unwrap()[i], &q);
            fd.row_mut(i).copy_from(&row.transpose());
        }
        let scale = 1.0 + g.amax();
        prop_assert!((fd - &g).amax() / scale < 1e-6);
    }

    #[test]
    fn discrete_gradient_is_directional(tri in triangle(), x0 in free_state(), x1 in free_state()) {
        let sys = tri.build();
        let dg = discrete_hamiltonian_gradient(&sys, &x0, &x1, &DGradParams::default()).unwrap();
        let h0 = sys.hamiltonian(&x0).unwrap();
        let h1 = sys.hamiltonian(&x1).unwrap();
        let lhs = dg.dot(&(x1.to_vector() - x0.to_vector()));
        prop_assert!((lhs - (h1 - h0)).abs() <= 1e-11 * (1.0 + h0.abs() + h1.abs()));
    }

    #[test]
    fn discrete_gradient_is_consistent(
        tri in triangle(),
        x in free_state(),
        d in vec_in(21, -1.0, 1.0),
    ) {
        let sys = tri.build();
        let x0v = x.to_vector();
        let x1v = &x0v + d * 1e-6;
        let x1 = State::from_vector(3, 3, &x1v).unwrap();
        let dg = discrete_hamiltonian_gradient(&sys, &x, &x1, &DGradParams::default()).unwrap();
        let mid = sys.hamiltonian_gradient(&x.midpoint(&x1)).unwrap();
        prop_assert!(rel_err(&dg, &mid) < 1e-5);
    }

    #[test]
    fn discrete_gradient_is_symmetric(tri in triangle(), x0 in free_state(), x1 in free_state()) {
        let sys = tri.build();
        let p = DGradParams::default();
        let a = discrete_hamiltonian_gradient(&sys, &x0, &x1, &p).unwrap();
        let b = discrete_hamiltonian_gradient(&sys, &x1, &x0, &p).unwrap();
        prop_assert!(rel_err(&a, &b) < 1e-10);
    }
}

#[test]
fn coincident_states_give_the_exact_gradient() {
    let sys = pendulum();
    let x = pendulum_initial();
    let dg = discrete_hamiltonian_gradient(&sys, &x, &x, &DGradParams::default()).unwrap();
    assert_eq!(dg, sys.hamiltonian_gradient(&x).unwrap());
}
