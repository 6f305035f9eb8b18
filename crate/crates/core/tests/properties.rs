use jetcheck_core::algebra::{euler_test, span_solve};
use jetcheck_core::reduce::orient;
use jetcheck_core::{lie_apply, lie_bracket, total_derivative, Characteristic, Class, EquationSystem, Expr, Rational};
use proptest::prelude::*;

fn system() -> EquationSystem {
    let mut s = EquationSystem::new();
    s.add_variable("x").unwrap();
    s.add_variable("t").unwrap();
    s.add_dependent("u", Class::Scalar).unwrap();
    let a = s.add_dependent("A", Class::Matrix).unwrap();
    s.dependent_mut(&a).unwrap().invertible = true;
    s.add_dependent("B", Class::Matrix).unwrap();
    s
}

fn kdv() -> EquationSystem {
    let mut s = system();
    s.add_equation("kdv", "u_t - 6*u*u_x + u_xxx", "u_t").unwrap();
    s
}

fn scalar_text() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("u".to_string()),
        Just("u_x".to_string()),
        Just("u_t".to_string()),
        Just("u_xx".to_string()),
        Just("u_xt".to_string()),
        Just("x".to_string()),
        Just("t".to_string()),
        (-3i32..4).prop_map(|k| format!("({k})")),
        Just("1/3".to_string()),
        Just("sin(u)".to_string()),
        Just("exp(u_x)".to_string()),
    ];
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a})*({b})")),
            inner.prop_map(|a| format!("({a})^2")),
        ]
    })
}

fn matrix_text() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("A".to_string()),
        Just("A_x".to_string()),
        Just("inv(A)".to_string()),
        Just("B".to_string()),
        Just("B_t".to_string()),
        Just("tr(B)".to_string()),
        Just("I".to_string()),
        Just("u*A".to_string()),
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a})*({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("comm({a}, {b})")),
            inner.prop_map(|a| format!("tr({a})")),
        ]
    })
}

/// Polynomial in `x` and the `x`-derivatives of `u` up to second order.
fn x_density_text() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("u".to_string()),
        Just("u_x".to_string()),
        Just("u_xx".to_string()),
        Just("x".to_string()),
        Just("sin(u)".to_string()),
        (1i32..4).prop_map(|k| k.to_string()),
    ];
    leaf.prop_recursive(2, 8, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a})*({b})")),
        ]
    })
}

fn dx(s: &EquationSystem, e: &Expr) -> Expr {
    total_derivative(e, s.lookup("x").unwrap(), s).unwrap()
}

fn dt(s: &EquationSystem, e: &Expr) -> Expr {
    total_derivative(e, s.lookup("t").unwrap(), s).unwrap()
}

fn characteristic(s: &EquationSystem, text: &str) -> Characteristic {
    Characteristic::new(text, s.lookup("u").unwrap().clone(), s.parse(text).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn render_then_parse_round_trips(text in scalar_text()) {
        let s = system();
        let e = s.parse(&text).unwrap();
        prop_assert_eq!(s.parse(&s.render(&e)).unwrap(), e);
    }

    #[test]
    fn matrix_render_round_trips(text in matrix_text()) {
        let s = system();
        let e = s.parse(&text).unwrap();
        prop_assert_eq!(s.parse(&s.render(&e)).unwrap(), e);
    }

    #[test]
    fn normal_form_is_idempotent(a in scalar_text(), b in scalar_text()) {
        let s = system();
        let (ea, eb) = (s.parse(&a).unwrap(), s.parse(&b).unwrap());
        let sum = s.parse(&format!("({a}) + ({b})")).unwrap();
        prop_assert_eq!(&sum, &(&ea + &eb));
        prop_assert_eq!(&(&sum - &eb), &ea);
        prop_assert_eq!(s.parse(&format!("({a})*({b})")).unwrap(), &eb * &ea);
    }

    #[test]
    fn transpose_is_an_involution(text in matrix_text()) {
        let s = system();
        let e = s.parse(&text).unwrap();
        prop_assert_eq!(s.parse(&format!("tr(tr({text}))")).unwrap(), e);
    }

    #[test]
    fn total_derivatives_commute(text in scalar_text()) {
        let s = system();
        let e = s.parse(&text).unwrap();
        prop_assert_eq!(dx(&s, &dt(&s, &e)), dt(&s, &dx(&s, &e)));
    }

    #[test]
    fn matrix_derivatives_commute(text in matrix_text()) {
        let s = system();
        let e = s.parse(&text).unwrap();
        prop_assert_eq!(dx(&s, &dt(&s, &e)), dt(&s, &dx(&s, &e)));
    }

    #[test]
    fn leibniz_rule_keeps_factor_order(a in matrix_text(), b in matrix_text()) {
        let s = system();
        let (ea, eb) = (s.parse(&a).unwrap(), s.parse(&b).unwrap());
        let lhs = dx(&s, &(&ea * &eb));
        let rhs = dx(&s, &ea) * &eb + &ea * dx(&s, &eb);
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn lie_derivative_commutes_with_total_derivatives(q in scalar_text(), text in scalar_text()) {
        let s = system();
        let q = characteristic(&s, &q);
        let e = s.parse(&text).unwrap();
        prop_assert_eq!(lie_apply(&q, &dx(&s, &e), &s).unwrap(), dx(&s, &lie_apply(&q, &e, &s).unwrap()));
        prop_assert_eq!(lie_apply(&q, &dt(&s, &e), &s).unwrap(), dt(&s, &lie_apply(&q, &e, &s).unwrap()));
    }

    #[test]
    fn matrix_commutators_satisfy_jacobi(a in matrix_text(), b in matrix_text(), c in matrix_text()) {
        let s = system();
        let text = format!("comm(comm({a}, {b}), {c}) + comm(comm({b}, {c}), {a}) + comm(comm({c}, {a}), {b})");
        prop_assert!(s.parse(&text).unwrap().is_zero());
    }

    #[test]
    fn euler_operator_kills_total_derivatives(text in x_density_text()) {
        let s = system();
        let density = dx(&s, &s.parse(&text).unwrap());
        let (u, x) = (s.lookup("u").unwrap(), s.lookup("x").unwrap());
        prop_assert!(euler_test(&density, u, x, &s).unwrap().is_zero());
    }

    #[test]
    fn reduction_is_idempotent_and_complete(text in scalar_text()) {
        let s = kdv();
        let rules = orient(&s).unwrap();
        let e = s.parse(&format!("D[{text}; t]")).unwrap();
        let once = rules.reduce_expr(&e, &s).unwrap();
        prop_assert!(!rules.is_reducible(&once));
        prop_assert_eq!(rules.reduce_expr(&once, &s).unwrap(), once);
    }

    #[test]
    fn span_solve_recovers_coefficients(c in proptest::collection::vec((-20i64..20, 1i64..7), 4)) {
        let s = system();
        let basis: Vec<Expr> = ["u_x", "u*u_x", "x*u_t", "sin(u)"].iter().map(|b| s.parse(b).unwrap()).collect();
        let coeffs: Vec<Rational> = c.iter().map(|&(p, q)| Rational::new(p.into(), q.into())).collect();
        let mut target = Expr::zero();
        for (b, k) in basis.iter().zip(&coeffs) {
            target = target + b.scale(k);
        }
        prop_assert_eq!(span_solve(&target, &basis).unwrap(), coeffs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, ..ProptestConfig::default() })]

    #[test]
    fn brackets_satisfy_jacobi(a in scalar_text(), b in scalar_text(), c in scalar_text()) {
        let s = system();
        let (qa, qb, qc) = (characteristic(&s, &a), characteristic(&s, &b), characteristic(&s, &c));
        let br = |p: &Characteristic, q: &Characteristic| lie_bracket(p, q, &s).unwrap();
        let total = br(&br(&qa, &qb), &qc).expr + br(&br(&qb, &qc), &qa).expr + br(&br(&qc, &qa), &qb).expr;
        prop_assert!(total.is_zero(), "{}", s.render(&total));
    }
}
