use jetcheck::core::parse::parse_ast;
use jetcheck::core::{total_derivative, Class, EquationSystem, Rational};
use jetcheck::numeric::{ast_order, eval_ast, eval_expr, expr_order, random_env, Env};
use proptest::prelude::*;

fn system() -> EquationSystem {
    let mut s = EquationSystem::new();
    s.add_variable("x").unwrap();
    s.add_variable("t").unwrap();
    s.add_parameter("k").unwrap();
    s.add_dependent("u", Class::Scalar).unwrap();
    let a = s.add_dependent("A", Class::Matrix).unwrap();
    s.dependent_mut(&a).unwrap().invertible = true;
    s.add_dependent("B", Class::Matrix).unwrap();
    s
}

fn polynomial_text() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("u".to_string()),
        Just("u_x".to_string()),
        Just("u_xt".to_string()),
        Just("x".to_string()),
        Just("k".to_string()),
        (-3i32..4).prop_map(|n| format!("({n})")),
        Just("2/5".to_string()),
    ];
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a})*({b})")),
            inner.clone().prop_map(|a| format!("D[{a}; x]")),
            inner.prop_map(|a| format!("({a})^2")),
        ]
    })
}

fn transcendental_text() -> impl Strategy<Value = String> {
    polynomial_text().prop_flat_map(|p| {
        prop_oneof![
            Just(format!("sin({p})")),
            Just(format!("exp({p}/10)")),
            Just(format!("D[cos({p}); t]")),
            Just(format!("arctan({p})*u_x")),
        ]
    })
}

fn matrix_text() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("A".to_string()),
        Just("A_x".to_string()),
        Just("inv(A)".to_string()),
        Just("B".to_string()),
        Just("tr(B_t)".to_string()),
        Just("u*I".to_string()),
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a})*({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("comm({a}, {b})")),
            inner.clone().prop_map(|a| format!("D[{a}; t]")),
            inner.prop_map(|a| format!("tr({a})")),
        ]
    })
}

fn env<T: jetcheck::numeric::Field>(s: &EquationSystem, order: usize, seed: u64) -> Env<T> {
    random_env(s, order, 2, &mut jetcheck::rng(seed))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    /// The evaluator applied to the parse tree agrees exactly with the
    /// evaluator applied to the normal form.
    #[test]
    fn normal_form_preserves_exact_values(text in polynomial_text(), seed in any::<u64>()) {
        let s = system();
        let ast = parse_ast(&text).unwrap();
        let env = env::<Rational>(&s, ast_order(&ast, &s), seed);
        let raw = eval_ast(&ast, &s, &env).unwrap();
        let nf = eval_expr(&s.parse(&text).unwrap(), &s, &env).unwrap();
        prop_assert!(raw.sub(&nf).unwrap().is_exact_zero());
    }

    #[test]
    fn normal_form_preserves_matrix_values(text in matrix_text(), seed in any::<u64>()) {
        let s = system();
        let ast = parse_ast(&text).unwrap();
        let env = env::<Rational>(&s, ast_order(&ast, &s), seed);
        let raw = eval_ast(&ast, &s, &env).unwrap();
        let nf = eval_expr(&s.parse(&text).unwrap(), &s, &env).unwrap();
        prop_assert!(raw.sub(&nf).unwrap().is_exact_zero());
    }

    #[test]
    fn normal_form_preserves_float_values(text in transcendental_text(), seed in any::<u64>()) {
        let s = system();
        let ast = parse_ast(&text).unwrap();
        let env = env::<f64>(&s, ast_order(&ast, &s), seed);
        let raw = eval_ast(&ast, &s, &env).unwrap();
        let nf = eval_expr(&s.parse(&text).unwrap(), &s, &env).unwrap();
        let scale = raw.max_magnitude().max(1.0);
        prop_assert!(raw.sub(&nf).unwrap().max_magnitude() <= 1e-9 * scale);
    }

    /// Symbolic total derivatives agree with derivatives of the series.
    #[test]
    fn total_derivative_matches_series_derivative(text in matrix_text(), seed in any::<u64>()) {
        let s = system();
        let e = s.parse(&text).unwrap();
        let x = s.lookup("x").unwrap();
        let env = env::<Rational>(&s, expr_order(&e) + 1, seed);
        let symbolic = eval_expr(&total_derivative(&e, x, &s).unwrap(), &s, &env).unwrap();
        let series = eval_expr(&e, &s, &env).unwrap().derivative(0).unwrap();
        prop_assert!(symbolic.sub(&series).unwrap().is_exact_zero());
    }
}
