//! Dependence trees, Chow-Liu structure selection, and the factorization
//! algebra that turns a tree into a density-ratio decomposition.
//!
//! Variable indices are 0-based throughout the library; the 1-based
//! convention appears only in file formats and CLI text.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::Functional;
use crate::kde::DensityFloor;

/// Rooted spanning tree over `d` variables.
///
/// Edges are stored as (min, max) pairs in lexicographic order. The root is
/// arbitrary and does not affect any ratio decomposition derived from the
/// tree, which depends only on the undirected edge set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorTree {
    d: usize,
    edges: Vec<(usize, usize)>,
    root: usize,
}

impl FactorTree {
    /// Validates that `edges` forms a spanning tree on `d` vertices.
    pub fn new(d: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        if d < 2 {
            return Err(Error::TooFewVariables { d });
        }
        if edges.len() != d - 1 {
            return Err(Error::InvalidTree(format!(
                "{} edges for {} vertices, expected {}",
                edges.len(),
                d,
                d - 1
            )));
        }
        let mut normalized: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
        let mut uf = UnionFind::new(d);
        for &(a, b) in &edges {
            if a == b || a >= d || b >= d {
                return Err(Error::InvalidTree(format!("bad edge ({a}, {b}) for d={d}")));
            }
            if !uf.union(a, b) {
                return Err(Error::InvalidTree(format!("edge ({a}, {b}) closes a cycle")));
            }
            normalized.push((a.min(b), a.max(b)));
        }
        normalized.sort_unstable();
        Ok(FactorTree {
            d,
            edges: normalized,
            root: 0,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == v || b == v).count()
    }

    /// Parses a 1-based edge list: one `i k` pair per line, or pairs
    /// separated by `;`.
    pub fn parse_edges(text: &str) -> Result<Vec<(usize, usize)>> {
        let mut edges = Vec::new();
        for part in text.split(|c| c == '\n' || c == ';') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let mut it = part.split_whitespace();
            let a: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::InvalidTree(format!("cannot parse edge {part:?}")))?;
            let b: usize = it
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::InvalidTree(format!("cannot parse edge {part:?}")))?;
            if it.next().is_some() {
                return Err(Error::InvalidTree(format!("extra tokens in edge {part:?}")));
            }
            if a == 0 || b == 0 {
                return Err(Error::InvalidTree("edge indices are 1-based".into()));
            }
            edges.push((a - 1, b - 1));
        }
        Ok(edges)
    }

    /// 1-based edge-list text, one `i k` pair per line.
    pub fn to_edge_text(&self) -> String {
        let mut out = String::new();
        for &(a, b) in &self.edges {
            out.push_str(&format!("{} {}\n", a + 1, b + 1));
        }
        out
    }
}

/// Symmetric matrix of pairwise dependence values.
#[derive(Debug, Clone)]
pub struct MiMatrix {
    d: usize,
    values: Vec<f64>,
    functional: Functional,
}

impl MiMatrix {
    pub fn new(d: usize, functional: Functional) -> Result<Self> {
        if d < 2 {
            return Err(Error::TooFewVariables { d });
        }
        Ok(MiMatrix {
            d,
            values: vec![functional.null_value(); d * d],
            functional,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn functional(&self) -> &Functional {
        &self.functional
    }

    /// Sets both (i, k) and (k, i).
    pub fn set(&mut self, i: usize, k: usize, value: f64) {
        self.values[i * self.d + k] = value;
        self.values[k * self.d + i] = value;
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.d + k]
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for i in 0..self.d {
            for k in (i + 1)..self.d {
                dev = dev.max((self.get(i, k) - self.get(k, i)).abs());
            }
        }
        dev
    }
}

/// How the edge weights of an [`MiMatrix`] relate to dependence strength.
///
/// Shannon MI grows with dependence; the Renyi-alpha integral equals 1
/// under independence and shrinks with dependence, so its spanning tree is
/// selected on negated values (order-equivalent to the `1 - G` dependence
/// score).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependenceDirection {
    LargerIsMoreDependent,
    SmallerIsMoreDependent,
}

impl DependenceDirection {
    /// Natural direction for a functional's pairwise values.
    pub fn for_functional(f: &Functional) -> Self {
        match f {
            Functional::Shannon => DependenceDirection::LargerIsMoreDependent,
            Functional::Renyi { .. } => DependenceDirection::SmallerIsMoreDependent,
        }
    }
}

/// Maximal-dependence spanning tree (Kruskal with deterministic ordering).
///
/// Ties break toward the lexicographically smallest edge. The root is
/// vertex 0.
pub fn chow_liu(mi: &MiMatrix, direction: DependenceDirection) -> Result<FactorTree> {
    let d = mi.d();
    if d < 2 {
        return Err(Error::TooFewVariables { d });
    }
    let dev = mi.max_asymmetry();
    if dev > 1e-12 {
        return Err(Error::AsymmetricMatrix { max_dev: dev });
    }
    let mut candidates: Vec<(usize, usize, f64)> = Vec::with_capacity(d * (d - 1) / 2);
    for i in 0..d {
        for k in (i + 1)..d {
            let v = mi.get(i, k);
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "non-finite dependence value at ({i}, {k})"
                )));
            }
            let score = match direction {
                DependenceDirection::LargerIsMoreDependent => v,
                DependenceDirection::SmallerIsMoreDependent => -v,
            };
            candidates.push((i, k, score));
        }
    }
    // Highest dependence first; lexicographic tie-break.
    candidates.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .unwrap()
            .then_with(|| a.0.cmp(&b.0))
            .then_with(|| a.1.cmp(&b.1))
    });
    let mut uf = UnionFind::new(d);
    let mut edges = Vec::with_capacity(d - 1);
    for (i, k, _) in candidates {
        if uf.union(i, k) {
            edges.push((i, k));
            if edges.len() == d - 1 {
                break;
            }
        }
    }
    FactorTree::new(d, edges)
}

/// Density-ratio decomposition: which KDE factors multiply into the
/// numerator and denominator of the estimated ratio.
///
/// For a model-fit target derived from a tree, the ratio is
/// `prod_{(i,k) in gamma} p_ik / (p_X * prod_{v in beta} p_v)`: every tree
/// edge contributes a pairwise joint to the numerator, the full joint
/// enters the denominator, and each vertex `v` contributes `degree(v) - 1`
/// marginal factors to the denominator.
///
/// For a pairwise target on `(i, k)` the orientation flips: the two
/// marginals form the numerator and the single pairwise joint the
/// denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioDecomposition {
    d: usize,
    gamma: Vec<(usize, usize)>,
    beta: Vec<usize>,
    includes_full_joint: bool,
}

impl RatioDecomposition {
    /// Decomposition of `p_tree / p` for a spanning tree.
    pub fn from_tree(tree: &FactorTree) -> Self {
        let gamma = tree.edges().to_vec();
        let mut beta = Vec::new();
        for v in 0..tree.d() {
            let deg = tree.degree(v);
            for _ in 1..deg {
                beta.push(v);
            }
        }
        RatioDecomposition {
            d: tree.d(),
            gamma,
            beta,
            includes_full_joint: true,
        }
    }

    /// Pairwise-MI target on variables `i` and `k` of a `d`-dimensional
    /// dataset.
    pub fn pairwise(i: usize, k: usize, d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::TooFewVariables { d });
        }
        if i == k || i >= d || k >= d {
            return Err(Error::InvalidConfig(format!(
                "invalid pair ({i}, {k}) for dimension {d}"
            )));
        }
        Ok(RatioDecomposition {
            d,
            gamma: vec![(i.min(k), i.max(k))],
            beta: Vec::new(),
            includes_full_joint: false,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn gamma(&self) -> &[(usize, usize)] {
        &self.gamma
    }

    pub fn beta(&self) -> &[usize] {
        &self.beta
    }

    pub fn includes_full_joint(&self) -> bool {
        self.includes_full_joint
    }

    pub fn is_pairwise(&self) -> bool {
        !self.includes_full_joint
    }

    /// Coordinate subsets whose leave-one-out KDEs feed
    /// [`combine_parts`](Self::combine_parts), in the order that function
    /// expects them.
    pub fn column_sets(&self) -> Vec<Vec<usize>> {
        let mut sets = Vec::new();
        if self.includes_full_joint {
            for &(i, k) in &self.gamma {
                sets.push(vec![i, k]);
            }
            sets.push((0..self.d).collect());
            for &v in &self.beta {
                sets.push(vec![v]);
            }
        } else {
            let (i, k) = self.gamma[0];
            sets.push(vec![i]);
            sets.push(vec![k]);
            sets.push(vec![i, k]);
        }
        sets
    }

    /// Combines the KDE factors (ordered as in [`column_sets`](Self::column_sets))
    /// into the density ratio, clamping every factor at the floor first.
    /// `one_hits[i]` is the one-kernel-hit value of factor `i`, used by
    /// resolution-scaled floors.
    #[inline]
    pub fn combine_parts(&self, parts: &[f64], one_hits: &[f64], floor: DensityFloor) -> f64 {
        if self.includes_full_joint {
            let g = self.gamma.len();
            let mut num = 1.0;
            for (&p, &oh) in parts[..g].iter().zip(&one_hits[..g]) {
                num *= floor.clamp(p, oh);
            }
            let mut den = floor.clamp(parts[g], one_hits[g]);
            for (&p, &oh) in parts[g + 1..].iter().zip(&one_hits[g + 1..]) {
                den *= floor.clamp(p, oh);
            }
            num / den
        } else {
            floor.clamp(parts[0], one_hits[0]) * floor.clamp(parts[1], one_hits[1])
                / floor.clamp(parts[2], one_hits[2])
        }
    }
}

/// Free-function form of [`RatioDecomposition::from_tree`].
pub fn ratio_decomposition(tree: &FactorTree) -> RatioDecomposition {
    RatioDecomposition::from_tree(tree)
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn root(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.root(a), self.root(b));
        if ra == rb {
            return false;
        }
        let (big, small) = if self.size[ra] >= self.size[rb] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        true
    }
}
