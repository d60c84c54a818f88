//! Small example programs with finite trace spaces, used by the test
//! suites and as CLI examples.

use crate::inference::{Clause, Kernel, Metaprogram, Strategy};
use crate::lang::{parse_program, Program};
use crate::Rational;

#[derive(Clone, Copy, Debug)]
pub struct Entry {
    pub name: &'static str,
    pub source: &'static str,
    /// Strategies of a two-clause Gibbs-style mixture, as JSON.
    pub gibbs: [&'static str; 2],
}

impl Entry {
    pub fn program(&self) -> Program {
        parse_program(self.source).unwrap_or_else(|e| panic!("corpus program {}: {e}", self.name))
    }

    pub fn gibbs_strategies(&self) -> [Strategy; 2] {
        self.gibbs.map(|s| {
            let v = serde_json::from_str(s).expect("corpus strategy JSON");
            crate::inference::strategy_from_json(&v).expect("corpus strategy")
        })
    }

    /// Equal-weight mixture of the Gibbs strategies with exact kernels.
    pub fn gibbs_metaprogram(&self) -> Metaprogram {
        let half = Rational::new(1.into(), 2.into());
        Metaprogram::Mix(
            self.gibbs_strategies()
                .into_iter()
                .map(|strategy| Clause {
                    weight: half.clone(),
                    strategy,
                    sub: Metaprogram::BlackBox(Kernel::EnumGibbs),
                })
                .collect(),
        )
    }
}

macro_rules! entry {
    ($name:literal, $a:literal, $b:literal) => {
        Entry { name: $name, source: include_str!(concat!("../corpus/", $name, ".ppl")), gibbs: [$a, $b] }
    };
}

pub const CORPUS: &[Entry] = &[
    entry!("fair_coin", r#"{"by-labels":["x"]}"#, r#""all-choices""#),
    entry!("deterministic", r#"{"by-labels":[]}"#, r#""all-choices""#),
    entry!("two_flip", r#"{"by-labels":["x"]}"#, r#""all-choices""#),
    entry!("product", r#"{"by-labels":["x"]}"#, r#"{"by-labels":["y"]}"#),
    entry!("xor", r#"{"by-labels":["x"]}"#, r#"{"by-labels":["x","y"]}"#),
    entry!("nested_dist", r#"{"by-labels":["x/1"]}"#, r#"{"by-labels":["x"]}"#),
    entry!("branch", r#"{"by-labels":["c"]}"#, r#"{"by-labels":["z"]}"#),
    entry!("branch_existence", r#"{"by-labels":["c"]}"#, r#"{"by-labels":["z"]}"#),
    entry!("functions", r#"{"single-site":"f"}"#, r#"{"by-labels":["f"]}"#),
    entry!("opaque", r#"{"by-labels":["s"]}"#, r#"{"by-labels":["t"]}"#),
    entry!("categorical", r#"{"by-labels":["w"]}"#, r#"{"by-labels":["k"]}"#),
    entry!("higher_order", r#"{"by-labels":["x"]}"#, r#""all-choices""#),
    entry!("closure", r#"{"by-labels":["x"]}"#, r#"{"by-labels":["y"]}"#),
    entry!("chain", r#"{"by-labels":["a","b"]}"#, r#"{"by-labels":["b","c"]}"#),
];

/// Looks up a corpus entry by name.
pub fn get(name: &str) -> Option<&'static Entry> {
    CORPUS.iter().find(|e| e.name == name)
}
