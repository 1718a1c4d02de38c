//! Quick non-criterion summary of synthesis cost; see benches/synthesis.rs
//! for the statistical benchmark.

use std::collections::BTreeSet;
use std::time::Instant;

use enforcemint::prop::parse_property;
use enforcemint::trace::Action;
use enforcemint::{check_derivative_bound, GlobalProp, SynthContext};

const FACTORS: [&str; 4] = [
    "(s:x . (a:y . end + end) + a:y . end + end)*",
    "(s:x . (a:y . end + end) + end)*",
    "(s:x . a:y . end + end)*",
    "(s:x . a:y . end)*",
];

fn main() {
    let alphabet: BTreeSet<Action> =
        ["s:x", "a:y", "tick", "end"].iter().map(|s| Action::parse(s).unwrap()).collect();
    let ctx = SynthContext::new(alphabet);
    println!("inter_depth,prop_size,states,bound,micros");
    for depth in 0..FACTORS.len() {
        let e = FACTORS[..=depth]
            .iter()
            .map(|t| parse_property(t).unwrap())
            .reduce(GlobalProp::inter)
            .unwrap();
        let t = Instant::now();
        let (states, bound, within) = check_derivative_bound(&e, &ctx).unwrap();
        assert!(within);
        println!(
            "{depth},{},{states},{bound},{}",
            e.prop_size(),
            t.elapsed().as_micros()
        );
    }
}
