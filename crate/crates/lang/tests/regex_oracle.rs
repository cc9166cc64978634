//! The interruptible regex engine agrees with the `regex` crate on the
//! shared dialect (leftmost-first search, capture spans).

use proptest::prelude::*;
use rewardsmith_lang::regex::{Budget, Regex, DOTALL, IGNORECASE, MULTILINE};

fn atom() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("a".to_string()),
        Just("b".to_string()),
        Just("c".to_string()),
        Just("1".to_string()),
        Just(".".to_string()),
        Just(r"\d".to_string()),
        Just(r"\w".to_string()),
        Just(r"\s".to_string()),
        Just(r"\S".to_string()),
        Just("[ab]".to_string()),
        Just("[^a\n]".to_string()),
        Just("[a-c1]".to_string()),
        Just(r"\n".to_string()),
        Just(" ".to_string()),
    ]
}

fn pattern() -> impl Strategy<Value = String> {
    let leaf = atom();
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..4).prop_map(|v| v.concat()),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a}|{b}")),
            inner.clone().prop_map(|a| format!("({a})")),
            inner.clone().prop_map(|a| format!("(?:{a})")),
            (inner.clone(), prop::sample::select(vec!["*", "+", "?", "*?", "+?", "??", "{1,2}", "{2}", "{0,3}?"]))
                .prop_map(|(a, q)| format!("(?:{a}){q}")),
            inner.clone().prop_map(|a| format!("^{a}")),
            inner.prop_map(|a| format!(r"\b{a}")),
        ]
    })
}

fn hay() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!['a', 'b', 'c', '1', '2', ' ', '\n', 'A', 'B']), 0..16)
        .prop_map(|v| v.into_iter().collect())
}

fn flags() -> impl Strategy<Value = i64> {
    prop::sample::select(vec![0, DOTALL, IGNORECASE, MULTILINE, DOTALL | IGNORECASE])
}

fn oracle(pattern: &str, flags: i64) -> regex::Regex {
    let mut b = regex::RegexBuilder::new(pattern);
    b.dot_matches_new_line(flags & DOTALL != 0)
        .case_insensitive(flags & IGNORECASE != 0)
        .multi_line(flags & MULTILINE != 0);
    b.build().unwrap()
}

/// Byte offset to char index; the haystacks are ASCII so they coincide.
fn spans(caps: &regex::Captures<'_>) -> Vec<Option<(usize, usize)>> {
    caps.iter().map(|m| m.map(|m| (m.start(), m.end()))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn search_agrees_with_regex_crate(p in pattern(), h in hay(), f in flags()) {
        let ours = Regex::new(&p, f).unwrap();
        let theirs = oracle(&p, f);
        let chars: Vec<char> = h.chars().collect();
        let mut budget = Budget::unlimited();
        let got = ours.search(&chars, 0, false, &mut budget).unwrap();
        let want = theirs.captures(&h);
        match (got, want) {
            (None, None) => {}
            (Some(g), Some(w)) => {
                let g: Vec<_> = (0..g.len()).map(|i| g.get(i)).collect();
                let w = spans(&w);
                prop_assert_eq!(g[0], w[0], "overall span for /{}/ on {:?}", p, h);
                // capture spans inside repeated empty iterations are engine-specific
                if !p.contains('*') && !p.contains('?') && !p.contains("{0") {
                    prop_assert_eq!(g, w, "captures for /{}/ on {:?}", p, h);
                }
            }
            (g, w) => prop_assert!(false, "/{}/ on {:?}: ours {:?} theirs {:?}", p, h, g.map(|c| c.span()), w.map(|c| c.get(0).map(|m| m.range()))),
        }
    }

    #[test]
    fn fullmatch_agrees_with_anchored_oracle(p in pattern(), h in hay()) {
        let ours = Regex::new(&p, 0).unwrap();
        let theirs = oracle(&format!(r"\A(?:{p})\z"), 0);
        let chars: Vec<char> = h.chars().collect();
        let got = ours.fullmatch(&chars, &mut Budget::unlimited()).unwrap().is_some();
        prop_assert_eq!(got, theirs.is_match(&h), "/{}/ on {:?}", p, h);
    }
}
