//! Benchmark-style cell graphs: a small DAG with labeled vertices, stored as
//! an upper-triangular adjacency matrix. Vertex 0 is the input, the last
//! vertex the output. Limits (7 vertices, 9 edges, 3 interior op kinds) are
//! frozen here to match the public benchmark definition.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Error;

pub const MAX_VERTICES: usize = 7;
pub const MAX_EDGES: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexOp {
    Input,
    Output,
    Conv3x3,
    Conv1x1,
    Maxpool3x3,
}

impl VertexOp {
    pub const INTERIOR: [VertexOp; 3] = [VertexOp::Conv3x3, VertexOp::Conv1x1, VertexOp::Maxpool3x3];

    fn tag(&self) -> u8 {
        match self {
            VertexOp::Input => 0,
            VertexOp::Output => 1,
            VertexOp::Conv3x3 => 2,
            VertexOp::Conv1x1 => 3,
            VertexOp::Maxpool3x3 => 4,
        }
    }
}

/// Wire format: adjacency rows as 0/1 strings.
#[derive(Serialize, Deserialize)]
struct BenchGraphRepr {
    adj: Vec<String>,
    ops: Vec<VertexOp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BenchGraphRepr", into = "BenchGraphRepr")]
pub struct BenchGraph {
    adj: Vec<Vec<bool>>,
    ops: Vec<VertexOp>,
}

impl TryFrom<BenchGraphRepr> for BenchGraph {
    type Error = Error;

    fn try_from(repr: BenchGraphRepr) -> Result<Self, Error> {
        let n = repr.ops.len();
        if repr.adj.len() != n {
            return Err(Error::InvalidBenchGraph {
                reason: format!("{} adjacency rows for {} vertices", repr.adj.len(), n),
            });
        }
        let mut adj = vec![vec![false; n]; n];
        for (i, row) in repr.adj.iter().enumerate() {
            if row.len() != n || row.bytes().any(|b| b != b'0' && b != b'1') {
                return Err(Error::InvalidBenchGraph {
                    reason: format!("bad adjacency row {i:?}: {row:?}"),
                });
            }
            for (j, b) in row.bytes().enumerate() {
                if b == b'1' {
                    if j <= i {
                        return Err(Error::InvalidBenchGraph {
                            reason: format!("edge ({i}, {j}) below the diagonal"),
                        });
                    }
                    adj[i][j] = true;
                }
            }
        }
        Ok(BenchGraph {
            adj,
            ops: repr.ops,
        })
    }
}

impl From<BenchGraph> for BenchGraphRepr {
    fn from(g: BenchGraph) -> BenchGraphRepr {
        BenchGraphRepr {
            adj: g
                .adj
                .iter()
                .map(|row| row.iter().map(|&b| if b { '1' } else { '0' }).collect())
                .collect(),
            ops: g.ops,
        }
    }
}

impl BenchGraph {
    /// Build from an edge list; edges must point forward (`from < to`).
    pub fn new(ops: Vec<VertexOp>, edges: &[(usize, usize)]) -> Result<Self, Error> {
        let n = ops.len();
        let mut adj = vec![vec![false; n]; n];
        for &(a, b) in edges {
            if a >= b || b >= n {
                return Err(Error::InvalidBenchGraph {
                    reason: format!("edge ({a}, {b}) is not upper-triangular within {n} vertices"),
                });
            }
            adj[a][b] = true;
        }
        Ok(BenchGraph { adj, ops })
    }

    pub fn n_vertices(&self) -> usize {
        self.ops.len()
    }

    pub fn ops(&self) -> &[VertexOp] {
        &self.ops
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a][b]
    }

    pub fn edge_count(&self) -> usize {
        self.adj
            .iter()
            .map(|row| row.iter().filter(|&&b| b).count())
            .sum()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n_vertices();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.adj[i][j] {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Remove vertices that lie on no input-to-output path. Input and output
    /// are always retained; the result may be a bare 2-vertex graph with no
    /// edges when no path exists.
    pub fn pruned(&self) -> BenchGraph {
        let n = self.n_vertices();
        let mut fwd = vec![false; n];
        fwd[0] = true;
        for i in 0..n {
            if fwd[i] {
                for j in i + 1..n {
                    if self.adj[i][j] {
                        fwd[j] = true;
                    }
                }
            }
        }
        let mut bwd = vec![false; n];
        bwd[n - 1] = true;
        for j in (0..n).rev() {
            if bwd[j] {
                for i in 0..j {
                    if self.adj[i][j] {
                        bwd[i] = true;
                    }
                }
            }
        }
        let keep: Vec<usize> = (0..n)
            .filter(|&v| (fwd[v] && bwd[v]) || v == 0 || v == n - 1)
            .collect();
        let reindex: std::collections::HashMap<usize, usize> =
            keep.iter().enumerate().map(|(new, &old)| (old, new)).collect();
        let m = keep.len();
        let mut adj = vec![vec![false; m]; m];
        for &(a, b) in &self.edges() {
            if let (Some(&na), Some(&nb)) = (reindex.get(&a), reindex.get(&b)) {
                // drop edges touching pruned vertices; also drop edges that
                // only exist between input/output remnants of a path-free
                // graph when one endpoint was unreachable
                if fwd[a] && bwd[a] && fwd[b] && bwd[b] {
                    adj[na][nb] = true;
                }
            }
        }
        let ops = keep.iter().map(|&v| self.ops[v]).collect();
        BenchGraph { adj, ops }
    }

    fn has_path(&self) -> bool {
        let n = self.n_vertices();
        let mut reach = vec![false; n];
        reach[0] = true;
        for i in 0..n {
            if reach[i] {
                for j in i + 1..n {
                    if self.adj[i][j] {
                        reach[j] = true;
                    }
                }
            }
        }
        reach[n - 1]
    }

    /// All structural invariants: vertex/edge limits, role labels, and
    /// non-emptiness after pruning (i.e. an input-to-output path exists).
    pub fn is_valid(&self) -> bool {
        let n = self.n_vertices();
        if n < 2 || n > MAX_VERTICES || self.edge_count() > MAX_EDGES {
            return false;
        }
        if self.ops[0] != VertexOp::Input || self.ops[n - 1] != VertexOp::Output {
            return false;
        }
        if self.ops[1..n - 1]
            .iter()
            .any(|op| matches!(op, VertexOp::Input | VertexOp::Output))
        {
            return false;
        }
        self.has_path()
    }

    /// Canonical content hash, equal exactly for graphs that are isomorphic
    /// after pruning (vertex relabelings preserving the input/output roles).
    ///
    /// Vertices are first bucketed by iterative neighborhood-hash refinement;
    /// remaining ties fall back to exhaustive permutation of the tied
    /// interior vertices (at most 5! at the 7-vertex limit), taking the
    /// lexicographically least adjacency encoding.
    pub fn canonical_hash(&self) -> String {
        let g = self.pruned();
        let n = g.n_vertices();
        let colors = g.refine_colors();

        // order interior vertices by refined color; enumerate permutations
        // within tie groups only
        let mut interior: Vec<usize> = (1..n.saturating_sub(1)).collect();
        interior.sort_by_key(|&v| (colors[v], v));
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for &v in &interior {
            match groups.last_mut() {
                Some(last) if colors[*last.first().unwrap()] == colors[v] => last.push(v),
                _ => groups.push(vec![v]),
            }
        }

        let mut best: Option<Vec<u8>> = None;
        let mut assignment = vec![0usize; n];
        permute_groups(&groups, &mut Vec::new(), &mut |order| {
            // order maps canonical interior positions -> original vertices
            assignment[0] = 0;
            for (slot, &v) in order.iter().enumerate() {
                assignment[slot + 1] = v;
            }
            if n >= 2 {
                assignment[n - 1] = n - 1;
            }
            let enc = g.encode_under(&assignment);
            if best.as_ref().is_none_or(|b| enc < *b) {
                best = Some(enc);
            }
        });
        let canonical = best.unwrap_or_else(|| g.encode_under(&(0..n).collect::<Vec<_>>()));
        let mut hasher = Sha256::new();
        hasher.update(&canonical);
        hex_string(&hasher.finalize()[..16])
    }

    /// Iterative refinement: a vertex color summarizes its op label and the
    /// color multisets of its in- and out-neighborhoods.
    fn refine_colors(&self) -> Vec<u64> {
        let n = self.n_vertices();
        let mut colors: Vec<u64> = self.ops.iter().map(|op| op.tag() as u64).collect();
        for _ in 0..n {
            let mut next = Vec::with_capacity(n);
            for v in 0..n {
                let mut ins: Vec<u64> = (0..v).filter(|&u| self.adj[u][v]).map(|u| colors[u]).collect();
                let mut outs: Vec<u64> =
                    (v + 1..n).filter(|&w| self.adj[v][w]).map(|w| colors[w]).collect();
                ins.sort_unstable();
                outs.sort_unstable();
                let mut h = colors[v];
                for x in ins.iter().chain([u64::MAX].iter()).chain(outs.iter()) {
                    h = mix(h, *x);
                }
                next.push(h);
            }
            if next == colors {
                break;
            }
            colors = next;
        }
        colors
    }

    /// Byte encoding of the graph with vertices relabeled so that canonical
    /// position `i` holds original vertex `assignment[i]`.
    fn encode_under(&self, assignment: &[usize]) -> Vec<u8> {
        let n = assignment.len();
        let mut enc = Vec::with_capacity(1 + n + n * n);
        enc.push(n as u8);
        for &v in assignment {
            enc.push(self.ops[v].tag());
        }
        for &a in assignment {
            for &b in assignment {
                enc.push(u8::from(self.adj[a.min(b)][a.max(b)] && a < b));
            }
        }
        enc
    }
}

fn mix(a: u64, b: u64) -> u64 {
    // splitmix-style deterministic combiner
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Visit every interleaving that permutes vertices within each tie group
/// while keeping group order.
fn permute_groups<F: FnMut(&[usize])>(groups: &[Vec<usize>], prefix: &mut Vec<usize>, visit: &mut F) {
    match groups.split_first() {
        None => visit(prefix),
        Some((head, rest)) => {
            let mut perm = head.clone();
            permutations(&mut perm, 0, &mut |p| {
                prefix.extend_from_slice(p);
                permute_groups(rest, prefix, visit);
                prefix.truncate(prefix.len() - p.len());
            });
        }
    }
}

fn permutations<F: FnMut(&[usize])>(items: &mut Vec<usize>, k: usize, visit: &mut F) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permutations(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Rejection-sample a valid graph: uniform vertex count, Bernoulli(1/2)
/// upper-triangular edges, uniform interior ops; resample until valid.
pub fn sample_bench_graph<R: Rng>(rng: &mut R) -> BenchGraph {
    loop {
        let n = rng.gen_range(2..=MAX_VERTICES);
        let mut ops = Vec::with_capacity(n);
        ops.push(VertexOp::Input);
        for _ in 1..n - 1 {
            ops.push(VertexOp::INTERIOR[rng.gen_range(0..VertexOp::INTERIOR.len())]);
        }
        ops.push(VertexOp::Output);
        let mut adj = vec![vec![false; n]; n];
        for i in 0..n {
            for j in i + 1..n {
                adj[i][j] = rng.gen_bool(0.5);
            }
        }
        let g = BenchGraph { adj, ops };
        if g.is_valid() {
            return g;
        }
    }
}

/// Validity check exposed as a plain predicate.
pub fn bench_validate(graph: &BenchGraph) -> bool {
    graph.is_valid()
}
