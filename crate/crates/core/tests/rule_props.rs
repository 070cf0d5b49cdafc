use lle_core::rule::{eval_formula, format_formula, parse_formula, Assignment, Formula, ParseError, TriBool};
use proptest::prelude::*;

const VARS: [&str; 3] = ["a", "b", "c"];

/// Truth degrees: F = 0, U = 1, T = 2. Kleene connectives are min/max.
fn degree(v: TriBool) -> u8 {
    match v {
        TriBool::False => 0,
        TriBool::Unknown => 1,
        TriBool::True => 2,
    }
}

fn from_degree(d: u8) -> TriBool {
    [TriBool::False, TriBool::Unknown, TriBool::True][d as usize]
}

fn oracle(f: &Formula, env: &Assignment) -> TriBool {
    let d = |f: &Formula| degree(oracle(f, env));
    from_degree(match f {
        Formula::Var(name) => degree(env.get(name).expect("bound")),
        Formula::Const(b) => degree(TriBool::from(*b)),
        Formula::Not(inner) => 2 - d(inner),
        Formula::And(l, r) => d(l).min(d(r)),
        Formula::Or(l, r) => d(l).max(d(r)),
        Formula::Implies(l, r) => (2 - d(l)).max(d(r)),
    })
}

fn all_assignments(vars: &[&str]) -> Vec<Assignment> {
    let mut out = vec![Assignment::new()];
    for v in vars {
        out = out
            .into_iter()
            .flat_map(|a| TriBool::ALL.map(|t| a.clone().with(*v, t)))
            .collect();
    }
    out
}

fn formulas_up_to_depth(depth: usize) -> Vec<Formula> {
    let mut level: Vec<Formula> = VARS.iter().map(|v| Formula::var(*v)).collect();
    level.push(Formula::Const(true));
    level.push(Formula::Const(false));
    for _ in 1..depth {
        let mut next = level.clone();
        for f in &level {
            next.push(Formula::not(f.clone()));
        }
        for l in &level {
            for r in &level {
                next.push(Formula::and(l.clone(), r.clone()));
                next.push(Formula::or(l.clone(), r.clone()));
                next.push(Formula::implies(l.clone(), r.clone()));
            }
        }
        level = next;
    }
    level
}

#[test]
fn exhaustive_depth_two_matches_oracle() {
    let formulas = formulas_up_to_depth(2);
    assert_eq!(formulas.len(), 85);
    let envs = all_assignments(&VARS);
    assert_eq!(envs.len(), 27);
    for f in &formulas {
        for env in &envs {
            assert_eq!(eval_formula(f, env).unwrap(), oracle(f, env), "{f}");
        }
    }
}

fn arb_formula(depth: u32) -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![
        4 => "[a-e][a-z0-9_]{0,3}".prop_filter("keyword", |s| {
            !matches!(s.as_str(), "and" | "or" | "not" | "true" | "false" | "implies")
        }).prop_map(Formula::Var),
        1 => any::<bool>().prop_map(Formula::Const),
    ];
    leaf.prop_recursive(depth, 64, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Formula::and(l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Formula::or(l, r)),
            (inner.clone(), inner).prop_map(|(l, r)| Formula::implies(l, r)),
        ]
    })
}

fn arb_small_formula() -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![
        4 => prop::sample::select(VARS.to_vec()).prop_map(Formula::var),
        1 => any::<bool>().prop_map(Formula::Const),
    ];
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Formula::and(l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Formula::or(l, r)),
            (inner.clone(), inner).prop_map(|(l, r)| Formula::implies(l, r)),
        ]
    })
}

fn arb_tribool() -> impl Strategy<Value = TriBool> {
    prop::sample::select(TriBool::ALL.to_vec())
}

fn arb_env() -> impl Strategy<Value = Assignment> {
    (arb_tribool(), arb_tribool(), arb_tribool())
        .prop_map(|(a, b, c)| Assignment::new().with("a", a).with("b", b).with("c", c))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn format_then_parse_round_trips(f in arb_formula(6)) {
        let text = format_formula(&f);
        prop_assert_eq!(parse_formula(&text).unwrap(), f);
    }

    #[test]
    fn format_is_a_fixed_point(f in arb_formula(6)) {
        let once = format_formula(&f);
        let twice = format_formula(&parse_formula(&once).unwrap());
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn keyword_case_does_not_matter(f in arb_formula(4)) {
        let text = format_formula(&f);
        let lowered = text
            .split(' ')
            .map(|w| match w {
                "AND" | "OR" | "NOT" | "IMPLIES" | "TRUE" | "FALSE" => w.to_lowercase(),
                _ => w.to_string(),
            })
            .collect::<Vec<_>>()
            .join(" ");
        prop_assert_eq!(parse_formula(&lowered).unwrap(), f);
    }

    #[test]
    fn eval_matches_oracle(f in arb_small_formula(), env in arb_env()) {
        prop_assert_eq!(eval_formula(&f, &env).unwrap(), oracle(&f, &env));
    }

    #[test]
    fn refining_unknowns_keeps_known_results(
        f in arb_small_formula(),
        env in arb_env(),
        refine in prop::collection::vec(any::<bool>(), 3),
    ) {
        let before = eval_formula(&f, &env).unwrap();
        let mut refined = env.clone();
        for (v, b) in VARS.iter().zip(&refine) {
            if env.get(v) == Some(TriBool::Unknown) {
                refined.bind(*v, TriBool::from(*b));
            }
        }
        let after = eval_formula(&f, &refined).unwrap();
        if before.is_known() {
            prop_assert_eq!(before, after);
        }
    }

    #[test]
    fn eval_is_deterministic(f in arb_small_formula(), env in arb_env()) {
        let first = eval_formula(&f, &env).unwrap();
        for _ in 0..3 {
            prop_assert_eq!(eval_formula(&f.clone(), &env.clone()).unwrap(), first);
        }
    }

    #[test]
    fn parse_errors_point_inside_input(text in "[a-z()! ]{0,24}|[A-Z ()]{0,24}") {
        if let Err(e) = parse_formula(&text) {
            prop_assert!(e.offset() <= text.len());
        }
    }
}

#[test]
fn malformed_input_reports_offsets() {
    let cases = [("", 0), ("a AND", 5), ("(a OR b", 7), ("a b", 2), ("NOT", 3), ("a AND OR b", 6)];
    for (text, offset) in cases {
        match parse_formula(text) {
            Err(ParseError::Syntax { offset: got, .. }) => assert_eq!(got, offset, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
}

#[test]
fn nesting_cap() {
    let ok = format!("{}a{}", "(".repeat(64), ")".repeat(64));
    assert!(parse_formula(&ok).is_ok());
    let deep = format!("{}a{}", "(".repeat(65), ")".repeat(65));
    assert!(matches!(parse_formula(&deep), Err(ParseError::DepthExceeded { limit: 64, .. })));
    let nots = format!("{}a", "NOT ".repeat(65));
    assert!(matches!(parse_formula(&nots), Err(ParseError::DepthExceeded { .. })));
}

#[test]
fn precedence_and_associativity() {
    let parsed = parse_formula("a OR b AND NOT c IMPLIES d IMPLIES e").unwrap();
    let expected = Formula::implies(
        Formula::or(Formula::var("a"), Formula::and(Formula::var("b"), Formula::not(Formula::var("c")))),
        Formula::implies(Formula::var("d"), Formula::var("e")),
    );
    assert_eq!(parsed, expected);
    assert_eq!(format_formula(&parsed), "a OR b AND NOT c IMPLIES d IMPLIES e");
    let left = parse_formula("(a IMPLIES b) IMPLIES c").unwrap();
    assert_eq!(format_formula(&left), "(a IMPLIES b) IMPLIES c");
    assert_eq!(format_formula(&parse_formula("a AND (b AND c)").unwrap()), "a AND (b AND c)");
    assert_eq!(format_formula(&parse_formula("((a AND b)) AND c").unwrap()), "a AND b AND c");
}
