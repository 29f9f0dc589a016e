use adalloc_core::targeting::{eligibility_signature, signatures};
use adalloc_core::{
    parse_predicate, Campaign, KpiKind, KpiSchema, KpiValue, KpiVector, Money, Subscriber,
};
use proptest::prelude::*;

const REGIONS: [&str; 4] = ["north", "south", "east", "west"];

/// Test-side predicate with its own evaluator and fully parenthesised text.
#[derive(Debug, Clone)]
enum P {
    True,
    Num(&'static str, f64),
    Cat(bool, &'static str),
    In(Vec<&'static str>),
    And(Box<P>, Box<P>),
    Or(Box<P>, Box<P>),
    Not(Box<P>),
}

impl P {
    fn eval(&self, x: f64, r: &str) -> bool {
        match self {
            P::True => true,
            P::Num(op, v) => match *op {
                "<" => x < *v,
                "<=" => x <= *v,
                ">" => x > *v,
                ">=" => x >= *v,
                "==" => x == *v,
                _ => x != *v,
            },
            P::Cat(eq, v) => (r == *v) == *eq,
            P::In(vs) => vs.contains(&r),
            P::And(a, b) => a.eval(x, r) && b.eval(x, r),
            P::Or(a, b) => a.eval(x, r) || b.eval(x, r),
            P::Not(a) => !a.eval(x, r),
        }
    }

    fn text(&self) -> String {
        match self {
            P::True => "TRUE".into(),
            P::Num(op, v) => format!("x {op} {v}"),
            P::Cat(eq, v) => format!("r {} \"{v}\"", if *eq { "==" } else { "!=" }),
            P::In(vs) => {
                let items: Vec<String> = vs.iter().map(|v| format!("\"{v}\"")).collect();
                format!("r IN {{{}}}", items.join(", "))
            }
            P::And(a, b) => format!("({} AND {})", a.text(), b.text()),
            P::Or(a, b) => format!("({} OR {})", a.text(), b.text()),
            P::Not(a) => format!("NOT ({})", a.text()),
        }
    }
}

fn leaf() -> impl Strategy<Value = P> {
    prop_oneof![
        Just(P::True),
        (
            prop::sample::select(vec!["<", "<=", ">", ">=", "==", "!="]),
            (-4i32..5).prop_map(|h| h as f64 / 2.0)
        )
            .prop_map(|(op, v)| P::Num(op, v)),
        (any::<bool>(), prop::sample::select(REGIONS.to_vec())).prop_map(|(eq, v)| P::Cat(eq, v)),
        prop::sample::subsequence(REGIONS.to_vec(), 1..=3).prop_map(P::In),
    ]
}

fn predicate() -> impl Strategy<Value = P> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| P::And(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| P::Or(Box::new(a), Box::new(b))),
            inner.prop_map(|a| P::Not(Box::new(a))),
        ]
    })
}

fn points() -> impl Strategy<Value = Vec<(f64, &'static str)>> {
    prop::collection::vec(
        (
            (-5i32..6).prop_map(|h| h as f64 / 2.0),
            prop::sample::select(REGIONS.to_vec()),
        ),
        1..12,
    )
}

/// Schema with `x` numeric and `r` categorical; only the first three regions
/// are interned, so "west" is a literal no subscriber carries.
fn schema() -> KpiSchema {
    let mut s = KpiSchema::from_pairs([("x", KpiKind::Numeric), ("r", KpiKind::Categorical)]);
    for r in &REGIONS[..3] {
        s.intern(r);
    }
    s
}

fn kpis(schema: &KpiSchema, x: f64, r: &str) -> Option<KpiVector> {
    let id = schema.categories().lookup(r)?;
    Some(KpiVector(vec![
        KpiValue::Numeric(x),
        KpiValue::Categorical(id),
    ]))
}

proptest! {
    #[test]
    fn parsed_predicate_agrees_with_reference(p in predicate(), pts in points()) {
        let s = schema();
        let parsed = parse_predicate(&p.text(), &s).unwrap();
        for (x, r) in pts {
            if let Some(k) = kpis(&s, x, r) {
                prop_assert_eq!(parsed.evaluate(&k), p.eval(x, r), "{} at x={} r={}", p.text(), x, r);
            }
        }
    }

    #[test]
    fn display_is_a_parse_fixpoint(p in predicate()) {
        let s = schema();
        let parsed = parse_predicate(&p.text(), &s).unwrap();
        let printed = parsed.to_string();
        let reparsed = parse_predicate(&printed, &s).unwrap();
        prop_assert_eq!(&reparsed, &parsed);
        prop_assert_eq!(reparsed.to_string(), printed);
    }

    #[test]
    fn not_is_complement(p in predicate(), pts in points()) {
        let s = schema();
        let parsed = parse_predicate(&p.text(), &s).unwrap();
        let negated = parse_predicate(&format!("NOT ({})", p.text()), &s).unwrap();
        for (x, r) in pts {
            if let Some(k) = kpis(&s, x, r) {
                prop_assert_eq!(negated.evaluate(&k), !parsed.evaluate(&k));
            }
        }
    }

    #[test]
    fn signature_bits_match_evaluation(ps in prop::collection::vec(predicate(), 1..6), pts in points()) {
        let s = schema();
        let campaigns: Vec<Campaign> = ps
            .iter()
            .enumerate()
            .map(|(j, p)| Campaign {
                id: format!("c{j}"),
                predicate: parse_predicate(&p.text(), &s).unwrap(),
                price: Money::from_units(1),
                frequency_cap: 1,
            })
            .collect();
        let subscribers: Vec<Subscriber> = pts
            .iter()
            .enumerate()
            .filter_map(|(i, &(x, r))| {
                Some(Subscriber { id: format!("s{i}"), kpis: kpis(&s, x, r)?, frequency_cap: 1 })
            })
            .collect();
        let all = signatures(&subscribers, &campaigns);
        for (sub, sig) in subscribers.iter().zip(&all) {
            prop_assert_eq!(sig, &eligibility_signature(sub, &campaigns));
            prop_assert_eq!(sig.width(), campaigns.len());
            for (j, c) in campaigns.iter().enumerate() {
                prop_assert_eq!(sig.get(j), c.predicate.evaluate(&sub.kpis));
            }
        }
    }
}

#[test]
fn unknown_category_literal_matches_nothing() {
    let s = schema();
    let k = kpis(&s, 0.0, "north").unwrap();
    assert!(!parse_predicate("r == \"west\"", &s).unwrap().evaluate(&k));
    assert!(parse_predicate("r != \"west\"", &s).unwrap().evaluate(&k));
}
