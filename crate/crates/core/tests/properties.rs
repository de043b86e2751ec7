use proptest::prelude::*;

use wrcouple::io::{format_significant, Table};
use wrcouple::linalg::rank;
use wrcouple::netlist::{build_incidence, parse_netlist, serialize_netlist};
use wrcouple::topology::{algebraic_criterion, analyze};
use wrcouple::Prediction;

/// (kind, from, to) triples forming a connected graph on `nodes` nodes,
/// node 0 being ground.
fn connected_branches() -> impl Strategy<Value = (usize, Vec<(usize, usize, usize)>)> {
    (3usize..=12).prop_flat_map(|nodes| {
        let tree = (1..nodes).map(|i| (0usize..6, 0..i, Just(i)).prop_map(|(k, j, i)| (k, i, j))).collect::<Vec<_>>();
        let extra = prop::collection::vec((0usize..6, 0..nodes, 0..nodes), 0..2 * nodes);
        (Just(nodes), tree, extra).prop_map(|(nodes, tree, extra)| {
            let mut all = tree;
            all.extend(extra.into_iter().filter(|(_, a, b)| a != b));
            (nodes, all)
        })
    })
}

fn netlist_text(branches: &[(usize, usize, usize)], values: &[f64]) -> String {
    let mut out = String::from(".source s 0.5 (1,2,0.25) (3,40,-1)\n.field F transformer-lite\n");
    let name = |i: usize| if i == 0 { "0".to_string() } else { format!("n{i}") };
    for (idx, &(kind, a, b)) in branches.iter().enumerate() {
        let (prefix, value) = match kind {
            0 => ('R', values[idx % values.len()].to_string()),
            1 => ('C', values[idx % values.len()].to_string()),
            2 => ('L', values[idx % values.len()].to_string()),
            3 => ('V', "s".to_string()),
            4 => ('I', "s".to_string()),
            _ => ('M', "F".to_string()),
        };
        out.push_str(&format!("{prefix}{idx} {} {} {value}\n", name(a), name(b)));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn incidence_columns_are_branches((_, branches) in connected_branches()) {
        let n = parse_netlist(&netlist_text(&branches, &[1.0])).unwrap();
        let inc = build_incidence(&n);
        for m in [&inc.a_c, &inc.a_r, &inc.a_l, &inc.a_v, &inc.a_i, &inc.a_m] {
            for c in m.column_iter() {
                let nonzeros = c.iter().filter(|v| **v != 0.0).count();
                prop_assert!(nonzeros <= 2);
                prop_assert!([-1.0, 0.0, 1.0].contains(&c.sum()));
            }
        }
    }

    #[test]
    fn connected_incidence_has_full_row_rank((nodes, branches) in connected_branches()) {
        let n = parse_netlist(&netlist_text(&branches, &[1.0])).unwrap();
        let stacked = build_incidence(&n).stacked();
        prop_assert_eq!(stacked.nrows(), nodes - 1);
        prop_assert_eq!(rank(&stacked), nodes - 1);
    }

    #[test]
    fn graph_and_rank_criteria_agree((_, branches) in connected_branches()) {
        let n = parse_netlist(&netlist_text(&branches, &[1.0])).unwrap();
        let graph = analyze(&n).unwrap().prediction == Prediction::GuaranteedConvergent;
        prop_assert_eq!(graph, algebraic_criterion(&build_incidence(&n)));
    }

    #[test]
    fn netlist_round_trip(
        (_, branches) in connected_branches(),
        values in prop::collection::vec(1e-6f64..1e6, 1..8),
    ) {
        let n = parse_netlist(&netlist_text(&branches, &values)).unwrap();
        let again = parse_netlist(&serialize_netlist(&n)).unwrap();
        prop_assert_eq!(again, n);
    }

    #[test]
    fn csv_round_trip_is_stable(cols in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 5), 1..5)) {
        let table = Table {
            headers: (0..cols.len()).map(|i| i.to_string()).collect(),
            columns: cols.clone(),
        };
        let csv = table.to_csv();
        let parsed = Table::from_csv(&csv).unwrap();
        prop_assert_eq!(parsed.to_csv(), csv);
        for (a, b) in cols.iter().flatten().zip(parsed.columns.iter().flatten()) {
            prop_assert!((a - b).abs() <= 5e-12 * a.abs());
        }
    }

    #[test]
    fn formatting_keeps_twelve_digits(v in prop::num::f64::NORMAL) {
        let s = format_significant(v, 12);
        prop_assert!(!s.contains('e'));
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - v).abs() <= 5e-12 * v.abs());
    }
}
