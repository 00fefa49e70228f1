//! Property tests for the structural invariants of the discrete operators.

use std::sync::OnceLock;

use nalgebra::DVector;
use proptest::prelude::*;

use nonlocal::assembly::{correlation_weight, Discretization};
use nonlocal::kernels::Kernel;
use nonlocal::mesh::{Domain, Mesh};
use nonlocal::quadrature::QuadConfig;
use nonlocal::solve::solve_poisson;
use nonlocal::verify::{difference_quotient_norm, DifferenceQuotient, Quantity};

fn log_interval() -> &'static Discretization {
    static DISC: OnceLock<Discretization> = OnceLock::new();
    DISC.get_or_init(|| {
        let k = Kernel::log_laplacian(1).unwrap();
        Discretization::new(&Domain::interval(-1.0, 1.0), &k, 40, &QuadConfig::default()).unwrap()
    })
}

fn log_ball() -> &'static Discretization {
    static DISC: OnceLock<Discretization> = OnceLock::new();
    DISC.get_or_init(|| {
        let k = Kernel::log_laplacian(2).unwrap();
        Discretization::new(&Domain::ball(vec![0.0, 0.0], 1.0), &k, 10, &QuadConfig::default()).unwrap()
    })
}

fn field(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pairwise_energy_identity(u in field(40)) {
        let form = &log_interval().form;
        let u = DVector::from_vec(u);
        let lhs = form.without_killing().energy(&u);
        let rhs = form.pairwise_energy(&u);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
    }

    #[test]
    fn energy_is_nonnegative_and_dominates_killing(u in field(40)) {
        let form = &log_interval().form;
        let u = DVector::from_vec(u);
        let killing: f64 = (0..form.n()).map(|i| form.kappa[i] * u[i] * u[i]).sum();
        prop_assert!(form.energy(&u) >= killing - 1e-12);
        prop_assert!(killing >= 0.0);
    }

    #[test]
    fn stiffness_is_a_symmetric_m_matrix(s in 0.05f64..0.45, n in 6usize..30) {
        let k = Kernel::fractional(1, s).unwrap();
        let disc = Discretization::new(&Domain::interval(-1.0, 1.0), &k, n, &QuadConfig::default()).unwrap();
        let a = disc.form.stiffness();
        for i in 0..a.nrows() {
            let row_sum: f64 = a.row(i).iter().sum();
            prop_assert!(row_sum >= -1e-12 * a[(i, i)]);
            for j in 0..a.ncols() {
                prop_assert_eq!(a[(i, j)], a[(j, i)]);
                if i != j {
                    prop_assert!(a[(i, j)] <= 0.0);
                }
            }
        }
    }

    #[test]
    fn correlation_weights_are_even_and_axis_symmetric(dx in -4i64..5, dy in -4i64..5) {
        let k = Kernel::log_laplacian(2).unwrap();
        let cfg = QuadConfig::default();
        prop_assume!(dx != 0 || dy != 0);
        let w = correlation_weight(&k, &[dx, dy], 0.1, &cfg).unwrap();
        let flipped = correlation_weight(&k, &[-dx, -dy], 0.1, &cfg).unwrap();
        let swapped = correlation_weight(&k, &[dy, dx], 0.1, &cfg).unwrap();
        prop_assert!(w >= 0.0);
        prop_assert!((w - flipped).abs() <= 1e-12 * w.max(1e-300));
        prop_assert!((w - swapped).abs() <= 1e-12 * w.max(1e-300));
    }

    #[test]
    fn poisson_solution_is_linear(f in field(40), g in field(40), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let form = &log_interval().form;
        let (f, g) = (DVector::from_vec(f), DVector::from_vec(g));
        let uf = solve_poisson(form, &f, 1e-13).unwrap().u;
        let ug = solve_poisson(form, &g, 1e-13).unwrap().u;
        let combo = solve_poisson(form, &(&f * a + &g * b), 1e-13).unwrap().u;
        let expect = uf * a + ug * b;
        prop_assert!((combo - &expect).amax() <= 1e-9 * (1.0 + expect.amax()));
    }

    #[test]
    fn nonnegative_load_gives_nonnegative_solution(f in prop::collection::vec(0.0f64..1.0, 40)) {
        let form = &log_interval().form;
        let u = solve_poisson(form, &DVector::from_vec(f), 1e-13).unwrap().u;
        prop_assert!(u.min() >= -1e-12 * u.amax().max(1e-300));
    }

    #[test]
    fn ball_energy_identity(u in field(log_ball().form.n())) {
        let form = &log_ball().form;
        let u = DVector::from_vec(u);
        let lhs = form.without_killing().energy(&u);
        let rhs = form.pairwise_energy(&u);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
    }

    #[test]
    fn affine_fields_have_vanishing_second_differences(c0 in -3.0f64..3.0, c1 in -3.0f64..3.0, step in 1usize..4) {
        let mesh = Mesh::build(&Domain::interval(-1.0, 1.0), 64).unwrap();
        let sub = mesh.select_subdomain(0.25).unwrap();
        let u = DVector::from_fn(mesh.n_dofs(), |d, _| c0 + c1 * mesh.dof_center(d)[0]);
        let dq = DifferenceQuotient { axis: 0, step, order: 2 };
        let norm = difference_quotient_norm(&u, &mesh, &dq, &sub).unwrap();
        prop_assert!(norm <= 1e-10 * (1.0 + c1.abs()));
    }

    #[test]
    fn dof_lattice_indexing_round_trips(n in 4usize..20) {
        let mesh = Mesh::build(&Domain::ball(vec![0.0, 0.0], 1.0), n).unwrap();
        for d in 0..mesh.n_dofs() {
            prop_assert_eq!(mesh.dof_at(&mesh.dof_index(d)), Some(d));
        }
    }

    #[test]
    fn quantities_round_trip_through_json(bits in any::<u64>()) {
        let q = Quantity(f64::from_bits(bits));
        let text = serde_json::to_string(&q).unwrap();
        let back: Quantity = serde_json::from_str(&text).unwrap();
        if q.0.is_nan() {
            prop_assert!(back.0.is_nan());
        } else {
            prop_assert_eq!(back.0.to_bits(), q.0.to_bits());
        }
    }
}
