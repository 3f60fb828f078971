//! Graphviz emission for cell genotypes: two digraphs (normal, reduce) with
//! deterministic node ordering, suitable for `dot -Tpdf`.

use std::fmt::Write;

use super::genotype::{GenoPair, Genotype};

fn state_name(state: usize) -> String {
    match state {
        0 => "c_{k-2}".to_string(),
        1 => "c_{k-1}".to_string(),
        s => format!("{}", s - 2),
    }
}

fn write_cell(out: &mut String, name: &str, cell: &[[GenoPair; 2]], concat: &[usize]) {
    writeln!(out, "digraph {name} {{").unwrap();
    writeln!(out, "  rankdir=LR;").unwrap();
    writeln!(out, "  node [shape=box style=rounded];").unwrap();
    writeln!(out, "  \"c_{{k-2}}\" [shape=oval];").unwrap();
    writeln!(out, "  \"c_{{k-1}}\" [shape=oval];").unwrap();
    for p in 0..cell.len() {
        writeln!(out, "  \"{p}\";").unwrap();
    }
    writeln!(out, "  \"c_{{k}}\" [shape=oval];").unwrap();
    for (p, node) in cell.iter().enumerate() {
        for pair in node {
            writeln!(
                out,
                "  \"{}\" -> \"{}\" [label=\"{}\"];",
                state_name(pair.pred),
                p,
                pair.op.name()
            )
            .unwrap();
        }
    }
    for &s in concat {
        writeln!(out, "  \"{}\" -> \"c_{{k}}\";", state_name(s)).unwrap();
    }
    writeln!(out, "}}").unwrap();
}

/// Deterministic graphviz text for a genotype: bytes depend only on the
/// genotype value.
pub fn genotype_to_dot(genotype: &Genotype) -> String {
    let mut out = String::new();
    write_cell(&mut out, "normal", &genotype.normal, &genotype.concat);
    out.push('\n');
    write_cell(&mut out, "reduce", &genotype.reduce, &genotype.concat);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::genotype::sample_genotype;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Minimal dot reader for tests: extracts (src, dst, label) triples.
    fn parse_edges(dot: &str) -> Vec<(String, String, Option<String>)> {
        dot.lines()
            .filter(|l| l.contains("->"))
            .map(|l| {
                let l = l.trim().trim_end_matches(';');
                let (lhs, rhs) = l.split_once("->").unwrap();
                let src = lhs.trim().trim_matches('"').to_string();
                let (dst_part, label) = match rhs.split_once('[') {
                    Some((d, attr)) => {
                        let label = attr
                            .split_once("label=\"")
                            .map(|(_, rest)| rest.split('"').next().unwrap().to_string());
                        (d, label)
                    }
                    None => (rhs, None),
                };
                (src, dst_part.trim().trim_matches('"').to_string(), label)
            })
            .collect()
    }

    #[test]
    fn dot_roundtrips_the_edge_multiset() {
        let g = sample_genotype(&mut ChaCha8Rng::seed_from_u64(21), 4);
        let dot = genotype_to_dot(&g);
        let edges = parse_edges(&dot);
        // labeled edges = 2 per node per cell
        let labeled = edges.iter().filter(|e| e.2.is_some()).count();
        assert_eq!(labeled, 2 * 4 * 2);
        // every genotype pair appears with its op label
        for (cell_name, cell) in [("normal", &g.normal), ("reduce", &g.reduce)] {
            let section: Vec<_> = dot
                .split("digraph ")
                .find(|s| s.starts_with(cell_name))
                .unwrap()
                .lines()
                .collect();
            let _ = section;
            for (p, node) in cell.iter().enumerate() {
                for pair in node {
                    let needle = format!("-> \"{p}\" [label=\"{}\"]", pair.op.name());
                    assert!(dot.contains(&needle), "missing {needle}");
                }
            }
        }
    }

    #[test]
    fn dot_is_byte_identical_for_equal_genotypes() {
        let g1 = sample_genotype(&mut ChaCha8Rng::seed_from_u64(5), 2);
        let g2 = sample_genotype(&mut ChaCha8Rng::seed_from_u64(5), 2);
        assert_eq!(genotype_to_dot(&g1), genotype_to_dot(&g2));
    }

    #[test]
    fn edge_count_matches_genotype_invariant() {
        for seed in 0..20 {
            let g = sample_genotype(&mut ChaCha8Rng::seed_from_u64(seed), 3);
            let dot = genotype_to_dot(&g);
            let edges = parse_edges(&dot);
            let labeled = edges.iter().filter(|e| e.2.is_some()).count();
            assert_eq!(labeled, 2 * g.n_nodes() * 2);
            let concat_edges = edges.iter().filter(|e| e.1 == "c_{k}").count();
            assert_eq!(concat_edges, g.concat.len() * 2);
        }
    }
}
