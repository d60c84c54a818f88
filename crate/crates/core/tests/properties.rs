use std::collections::BTreeSet;

use proptest::prelude::*;
use tracemeta_core::analysis::{
    build_kernel_matrix, check_reversible, check_stationary, decompose_by_strategy, enumerate_traces, posterior,
    AnalysisError, DEFAULT_CAP,
};
use tracemeta_core::depgraph::build_graph;
use tracemeta_core::exec::{
    enumerate_all, execute, revalidate, trace_equal_mod_ids, NodeId, RandomSource, Registry, Watermark,
};
use tracemeta_core::inference::{Clause, Engine, Kernel, Metaprogram, Strategy as Selection};
use tracemeta_core::lang::{parse_program, print_program, Program};
use tracemeta_core::transform::{density, equiv, extract_trace, stitch_trace};
use tracemeta_core::Rational;

const PROBS: [&str; 6] = ["0", "1/4", "1/3", "1/2", "2/3", "1"];

/// Shape of one generated assume: (kind, operand index, two probability
/// indices).
type Shape = (u8, usize, usize, usize);

fn render(shapes: &[Shape], observes: &[(usize, usize, usize)]) -> String {
    let mut src = String::new();
    let mut bools: Vec<String> = Vec::new();
    for (i, &(kind, k, a, b)) in shapes.iter().enumerate() {
        let name = format!("v{i}");
        let (p, q) = (PROBS[a], PROBS[b]);
        let prev = (!bools.is_empty()).then(|| bools[k % bools.len()].clone());
        let expr = match (kind, prev) {
            (1, Some(v)) => format!("(flip (if {v} {p} {q}))"),
            (2, _) => format!("((lambda (a) (flip a)) {p})"),
            (3, Some(v)) => format!("(if {v} (flip {p}) #f)"),
            (4, _) => format!("(dist uniform-int {})", 1 + a % 3),
            (5, _) => format!("((lambda (f) (f {p})) (lambda (q) (flip q)))"),
            _ => format!("(flip {p})"),
        };
        if kind != 4 {
            bools.push(name.clone());
        }
        src.push_str(&format!("(assume {name} {expr})\n"));
    }
    for &(k, a, b) in observes {
        if bools.is_empty() {
            break;
        }
        let v = &bools[k % bools.len()];
        // Keep observations informative but never impossible everywhere.
        let (p, q) = (PROBS[1 + a % 4], PROBS[1 + b % 4]);
        src.push_str(&format!("(observe (flip (if {v} {p} {q})) #t)\n"));
    }
    src
}

fn program_source() -> impl Strategy<Value = String> {
    (
        prop::collection::vec((0u8..6, 0usize..4, 0usize..6, 0usize..6), 1..=3),
        prop::collection::vec((0usize..4, 0usize..6, 0usize..6), 0..=2),
    )
        .prop_map(|(s, o)| render(&s, &o))
}

fn parse(src: &str) -> Program {
    parse_program(src).unwrap_or_else(|e| panic!("{e}\n{src}"))
}

fn subsets<T: Clone + Ord>(items: &[T]) -> Vec<BTreeSet<T>> {
    (0..1u32 << items.len())
        .map(|m| items.iter().enumerate().filter(|(i, _)| m & (1 << i) != 0).map(|(_, x)| x.clone()).collect())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn printing_then_parsing_is_identity(src in program_source()) {
        let p = parse(&src);
        let printed = print_program(&p);
        prop_assert_eq!(parse(&printed), p.clone());
        prop_assert_eq!(print_program(&parse(&printed)), printed);
    }

    #[test]
    fn executions_roll_back_and_revalidate(src in program_source(), seed in any::<u64>()) {
        let reg = Registry::builtin();
        let p = parse(&src);
        let t = execute(&p, &reg, &mut RandomSource::seed(seed)).unwrap();
        prop_assert_eq!(t.rollback(), p);
        prop_assert!(revalidate(&t, &reg).is_ok());
    }

    #[test]
    fn priors_sum_to_one_and_keys_are_distinct(src in program_source()) {
        let reg = Registry::builtin();
        let space = enumerate_traces(&parse(&src), &reg, DEFAULT_CAP).unwrap();
        let total: Rational = space.priors.iter().sum();
        prop_assert_eq!(total, Rational::from_integer(1.into()));
        let keys: BTreeSet<_> = space.keys.iter().collect();
        prop_assert_eq!(keys.len(), space.len());
    }

    #[test]
    fn canonical_keys_ignore_id_and_name_offsets(src in program_source(), id in 0u64..10_000, name in 0u64..100) {
        let reg = Registry::builtin();
        let p = parse(&src);
        let a = enumerate_all(&p, &reg, DEFAULT_CAP, Watermark::default()).unwrap();
        let b = enumerate_all(&p, &reg, DEFAULT_CAP, Watermark { next_id: id, next_name: name }).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.canonical_key(), y.canonical_key());
            prop_assert!(trace_equal_mod_ids(x, y));
        }
    }

    /// Extraction of every completed subproblem keeps the density, yields a
    /// valid trace of the subprogram, and stitching it back unchanged
    /// restores the original trace.
    #[test]
    fn extraction_round_trips(src in program_source()) {
        let reg = Registry::builtin();
        let space = enumerate_traces(&parse(&src), &reg, DEFAULT_CAP).unwrap();
        for t in &space.traces {
            let g = build_graph(t);
            for seeds in subsets(g.choices()) {
                let s = g.complete_subproblem(&seeds);
                prop_assert!(g.check_subproblem(&s.nodes).is_ok());
                prop_assert!(s.nodes.is_superset(&seeds));
                let ex = extract_trace(t, &s.nodes, &reg).unwrap();
                prop_assert!(revalidate(&ex.trace, &reg).is_ok());
                prop_assert_eq!(ex.trace.rollback(), ex.program.clone());
                prop_assert_eq!(density(&ex.trace, &reg).unwrap(), density(t, &reg).unwrap());
                let back = stitch_trace(t, &ex.trace, &s.nodes, &reg).unwrap();
                prop_assert!(trace_equal_mod_ids(&back, t));
                prop_assert!(equiv(&s.nodes, t, t));
            }
        }
    }

    /// Fixed label sets induce equivalence relations.
    #[test]
    fn fixed_label_strategies_are_reversible(src in program_source()) {
        let reg = Registry::builtin();
        let p = parse(&src);
        let space = enumerate_traces(&p, &reg, DEFAULT_CAP).unwrap();
        let names: Vec<String> = p.names().iter().filter(|n| n.starts_with('v')).map(|n| n.to_string()).collect();
        for labels in subsets(&names) {
            let d = decompose_by_strategy(&Selection::ByLabels(labels.clone()), &space);
            prop_assert!(check_reversible(&d).reversible, "labels {:?}", labels);
        }
    }

    /// Mixtures of exact Gibbs clauses and the prior independence sampler
    /// leave the posterior exactly invariant.
    #[test]
    fn kernels_are_exactly_stationary(src in program_source()) {
        let reg = Registry::builtin();
        let engine = Engine::new(&reg);
        let p = parse(&src);
        let space = enumerate_traces(&p, &reg, DEFAULT_CAP).unwrap();
        let post = match posterior(&space) {
            Ok(post) => post,
            Err(AnalysisError::ZeroMass) => return Ok(()),
            Err(e) => panic!("{e}"),
        };
        let names: Vec<String> = p.names().iter().filter(|n| n.starts_with('v')).map(|n| n.to_string()).collect();
        let w = Rational::new(1.into(), (names.len() as i64).into());
        let gibbs = Metaprogram::Mix(names.iter().map(|n| Clause {
            weight: w.clone(),
            strategy: Selection::by_labels([n.clone()]),
            sub: Metaprogram::BlackBox(Kernel::EnumGibbs),
        }).collect());
        let zero = Some(Rational::from_integer(0.into()));
        for mp in [gibbs, Metaprogram::BlackBox(Kernel::PriorMh), Metaprogram::clause(Selection::AllChoices, Metaprogram::BlackBox(Kernel::PriorMh))] {
            let k = build_kernel_matrix(&engine, &mp, &space).unwrap();
            prop_assert_eq!(k.max_row_deviation(), 0.0);
            prop_assert_eq!(&check_stationary(&k, &post).exact, &zero);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// The completed subproblem is the least valid superset of its seeds,
    /// checked against every subset of a small graph.
    #[test]
    fn completion_is_the_minimal_valid_superset(src in program_source(), seed in any::<u64>()) {
        let reg = Registry::builtin();
        let t = execute(&parse(&src), &reg, &mut RandomSource::seed(seed)).unwrap();
        let g = build_graph(&t);
        prop_assume!(g.node_count() <= 14);
        let nodes: Vec<NodeId> = g.nodes().map(|(id, _)| id).collect();
        let valid: Vec<BTreeSet<NodeId>> =
            subsets(&nodes).into_iter().filter(|s| g.check_subproblem(s).is_ok()).collect();
        for seeds in subsets(g.choices()) {
            let c = g.complete_subproblem(&seeds).nodes;
            prop_assert!(valid.contains(&c));
            for v in valid.iter().filter(|v| v.is_superset(&seeds)) {
                prop_assert!(v.is_superset(&c), "valid {:?} misses part of {:?}", v, c);
            }
        }
    }
}
