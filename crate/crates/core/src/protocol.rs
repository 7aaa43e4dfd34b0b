//! Two-party protocol trees.
//!
//! A private-coin protocol is a binary tree: every internal node is owned by
//! A (who holds `x`) or B (who holds `y`) and carries, for each value of its
//! owner's input, the probability of sending each bit. Leaves carry an output
//! bit and a distinct id. A public-coin protocol is a finite mixture of such
//! trees chosen up front; its transcript is `(branch, leaf)`.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::{self, Dist, JointDist, PairDist, TOLERANCE};
use crate::table::FuncTable;

/// Trees with more nodes than this are refused by the loader.
pub const MAX_NODES: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Owner {
    A,
    B,
}

/// Serialized node form: `{owner, p1, children: {"0": .., "1": ..}}` or `{output, id}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeSpec {
    Leaf(LeafSpec),
    Internal(InternalSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeafSpec {
    pub output: u8,
    pub id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InternalSpec {
    pub owner: Owner,
    /// Probability of sending 1, per value of the owner's input.
    pub p1: Vec<f64>,
    /// Explicit probability of sending 0; defaults to `1 - p1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<Vec<f64>>,
    pub children: ChildrenSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChildrenSpec {
    #[serde(rename = "0")]
    pub zero: Box<NodeSpec>,
    #[serde(rename = "1")]
    pub one: Box<NodeSpec>,
}

impl NodeSpec {
    pub fn leaf(output: u8, id: impl Into<String>) -> NodeSpec {
        NodeSpec::Leaf(LeafSpec {
            output,
            id: id.into(),
        })
    }

    pub fn node(owner: Owner, p1: Vec<f64>, zero: NodeSpec, one: NodeSpec) -> NodeSpec {
        NodeSpec::Internal(InternalSpec {
            owner,
            p1,
            p0: None,
            children: ChildrenSpec {
                zero: Box::new(zero),
                one: Box::new(one),
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Internal {
        owner: Owner,
        /// `probs[input] = [P(bit 0), P(bit 1)]`
        probs: Vec<[f64; 2]>,
        children: [usize; 2],
    },
    Leaf {
        output: u8,
        id: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum IssueKind {
    EmptyInputSpace,
    InputArity { expected: usize, got: usize },
    ProbabilityRange { input: usize, value: f64 },
    Normalization { input: usize, total: f64 },
    OutputNotBit { output: u8 },
    DuplicateLeafId { id: String },
}

/// One invariant violation, located by the bit path from the root.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreeIssue {
    pub path: String,
    pub kind: IssueKind,
}

impl fmt::Display for TreeIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = if self.path.is_empty() { "root" } else { &self.path };
        match &self.kind {
            IssueKind::EmptyInputSpace => write!(f, "input spaces must be nonempty"),
            IssueKind::InputArity { expected, got } => {
                write!(f, "node {at}: {got} probabilities for {expected} inputs")
            }
            IssueKind::ProbabilityRange { input, value } => {
                write!(f, "node {at}: probability {value} for input {input} outside [0, 1]")
            }
            IssueKind::Normalization { input, total } => {
                write!(f, "node {at}: child probabilities for input {input} sum to {total}")
            }
            IssueKind::OutputNotBit { output } => write!(f, "leaf {at}: output {output} is not a bit"),
            IssueKind::DuplicateLeafId { id } => write!(f, "leaf {at}: duplicate id `{id}`"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolTree {
    x_size: usize,
    y_size: usize,
    nodes: Vec<Node>,
    /// Node index of each leaf, depth-first with the 0-child first.
    leaves: Vec<usize>,
    /// Root-to-leaf `(node, bit)` steps for each leaf.
    paths: Vec<Vec<(usize, u8)>>,
}

impl ProtocolTree {
    /// Builds and validates.
    pub fn new(x_size: usize, y_size: usize, root: NodeSpec) -> Result<ProtocolTree> {
        let t = ProtocolTree::build(x_size, y_size, root)?;
        let issues = validate_tree(&t);
        if issues.is_empty() {
            Ok(t)
        } else {
            Err(Error::InvalidTree(issues))
        }
    }

    /// Builds without checking probability invariants; see [`validate_tree`].
    pub fn build(x_size: usize, y_size: usize, root: NodeSpec) -> Result<ProtocolTree> {
        let mut t = ProtocolTree {
            x_size,
            y_size,
            nodes: Vec::new(),
            leaves: Vec::new(),
            paths: Vec::new(),
        };
        let mut path = Vec::new();
        t.push(root, &mut path)?;
        Ok(t)
    }

    fn push(&mut self, spec: NodeSpec, path: &mut Vec<(usize, u8)>) -> Result<usize> {
        if self.nodes.len() >= MAX_NODES {
            return Err(Error::SizeCap(format!("protocol tree exceeds {MAX_NODES} nodes")));
        }
        let id = self.nodes.len();
        match spec {
            NodeSpec::Leaf(l) => {
                self.nodes.push(Node::Leaf {
                    output: l.output,
                    id: l.id,
                });
                self.leaves.push(id);
                self.paths.push(path.clone());
            }
            NodeSpec::Internal(n) => {
                let probs = match &n.p0 {
                    Some(p0) => p0.iter().zip(&n.p1).map(|(&a, &b)| [a, b]).collect(),
                    None => n.p1.iter().map(|&b| [1.0 - b, b]).collect(),
                };
                let mut probs: Vec<[f64; 2]> = probs;
                if let Some(p0) = &n.p0 {
                    if p0.len() != n.p1.len() {
                        // arity mismatch is reported by validation through a NaN pair
                        probs.resize(p0.len().max(n.p1.len()), [f64::NAN, f64::NAN]);
                    }
                }
                self.nodes.push(Node::Internal {
                    owner: n.owner,
                    probs,
                    children: [0, 0],
                });
                path.push((id, 0));
                let zero = self.push(*n.children.zero, path)?;
                path.pop();
                path.push((id, 1));
                let one = self.push(*n.children.one, path)?;
                path.pop();
                if let Node::Internal { children, .. } = &mut self.nodes[id] {
                    *children = [zero, one];
                }
            }
        }
        Ok(id)
    }

    pub fn x_size(&self) -> usize {
        self.x_size
    }

    pub fn y_size(&self) -> usize {
        self.y_size
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn leaf_output(&self, leaf: usize) -> u8 {
        match &self.nodes[self.leaves[leaf]] {
            Node::Leaf { output, .. } => *output,
            Node::Internal { .. } => unreachable!("leaf index points at a leaf"),
        }
    }

    pub fn leaf_id(&self, leaf: usize) -> &str {
        match &self.nodes[self.leaves[leaf]] {
            Node::Leaf { id, .. } => id,
            Node::Internal { .. } => unreachable!("leaf index points at a leaf"),
        }
    }

    /// Bits along the path to `leaf`.
    pub fn leaf_path(&self, leaf: usize) -> String {
        self.paths[leaf]
            .iter()
            .map(|&(_, b)| if b == 0 { '0' } else { '1' })
            .collect()
    }

    /// Maximum root-to-leaf length: the communication cost in bits.
    pub fn depth(&self) -> usize {
        self.paths.iter().map(Vec::len).max().unwrap_or(0)
    }

    fn step(&self, node: usize) -> (Owner, &[[f64; 2]]) {
        match &self.nodes[node] {
            Node::Internal { owner, probs, .. } => (*owner, probs),
            Node::Leaf { .. } => unreachable!("paths only step through internal nodes"),
        }
    }

    fn check_inputs(&self, x: usize, y: usize) -> Result<()> {
        if x >= self.x_size || y >= self.y_size {
            return Err(Error::OutOfRange(format!(
                "input ({x}, {y}) outside {}x{}",
                self.x_size, self.y_size
            )));
        }
        Ok(())
    }

    /// Product of the owner-A edge probabilities on the path to `leaf`, at input `x`.
    pub fn factor_a(&self, leaf: usize, x: usize) -> f64 {
        self.side_factor(leaf, Owner::A, x)
    }

    /// Product of the owner-B edge probabilities on the path to `leaf`, at input `y`.
    pub fn factor_b(&self, leaf: usize, y: usize) -> f64 {
        self.side_factor(leaf, Owner::B, y)
    }

    fn side_factor(&self, leaf: usize, side: Owner, input: usize) -> f64 {
        self.paths[leaf]
            .iter()
            .filter_map(|&(node, bit)| {
                let (owner, probs) = self.step(node);
                (owner == side).then(|| probs[input][bit as usize])
            })
            .product()
    }

    /// Leaf probabilities as a plain vector, without building a [`Dist`].
    pub fn leaf_probs(&self, x: usize, y: usize) -> Vec<f64> {
        (0..self.leaf_count())
            .map(|l| self.factor_a(l, x) * self.factor_b(l, y))
            .collect()
    }

    pub fn to_spec(&self) -> NodeSpec {
        self.spec_at(0)
    }

    fn spec_at(&self, node: usize) -> NodeSpec {
        match &self.nodes[node] {
            Node::Leaf { output, id } => NodeSpec::leaf(*output, id.clone()),
            Node::Internal {
                owner,
                probs,
                children,
            } => {
                let p1 = probs.iter().map(|p| p[1]).collect();
                let explicit = probs.iter().any(|p| p[0] != 1.0 - p[1]);
                NodeSpec::Internal(InternalSpec {
                    owner: *owner,
                    p1,
                    p0: explicit.then(|| probs.iter().map(|p| p[0]).collect()),
                    children: ChildrenSpec {
                        zero: Box::new(self.spec_at(children[0])),
                        one: Box::new(self.spec_at(children[1])),
                    },
                })
            }
        }
    }
}

/// Checks every tree invariant and reports each violation with its node path.
pub fn validate_tree(t: &ProtocolTree) -> Vec<TreeIssue> {
    let mut issues = Vec::new();
    if t.x_size == 0 || t.y_size == 0 {
        issues.push(TreeIssue {
            path: String::new(),
            kind: IssueKind::EmptyInputSpace,
        });
    }
    let mut stack = vec![(0usize, String::new())];
    let mut seen = HashSet::new();
    while let Some((node, path)) = stack.pop() {
        match &t.nodes[node] {
            Node::Leaf { output, id } => {
                if *output > 1 {
                    issues.push(TreeIssue {
                        path: path.clone(),
                        kind: IssueKind::OutputNotBit { output: *output },
                    });
                }
                if !seen.insert(id.clone()) {
                    issues.push(TreeIssue {
                        path,
                        kind: IssueKind::DuplicateLeafId { id: id.clone() },
                    });
                }
            }
            Node::Internal {
                owner,
                probs,
                children,
            } => {
                let expected = match owner {
                    Owner::A => t.x_size,
                    Owner::B => t.y_size,
                };
                if probs.len() != expected || probs.iter().any(|p| p[0].is_nan() || p[1].is_nan()) {
                    issues.push(TreeIssue {
                        path: path.clone(),
                        kind: IssueKind::InputArity {
                            expected,
                            got: probs.len(),
                        },
                    });
                } else {
                    for (input, p) in probs.iter().enumerate() {
                        if let Some(&value) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                            issues.push(TreeIssue {
                                path: path.clone(),
                                kind: IssueKind::ProbabilityRange { input, value },
                            });
                        } else if (p[0] + p[1] - 1.0).abs() > TOLERANCE {
                            issues.push(TreeIssue {
                                path: path.clone(),
                                kind: IssueKind::Normalization {
                                    input,
                                    total: p[0] + p[1],
                                },
                            });
                        }
                    }
                }
                stack.push((children[1], format!("{path}1")));
                stack.push((children[0], format!("{path}0")));
            }
        }
    }
    issues
}

/// Distribution over the leaves of `t` on inputs `(x, y)`.
pub fn transcript_distribution(t: &ProtocolTree, x: usize, y: usize) -> Result<Dist> {
    t.check_inputs(x, y)?;
    Dist::new(t.leaf_probs(x, y))
}

/// Per-leaf factors of the transcript distribution on `(x, y)`.
///
/// `p_x`, `p_y` are the products of each party's own edge probabilities.
/// `q_x` is A's estimate of B's part: the product over B-owned nodes of B's
/// next-bit probability averaged over A's posterior on `y` given `x` and the
/// path so far; `q_y` symmetrically.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafFactorization {
    pub p_x: Vec<f64>,
    pub q_x: Vec<f64>,
    pub p_y: Vec<f64>,
    pub q_y: Vec<f64>,
}

impl LeafFactorization {
    pub fn pi_xy(&self) -> Vec<f64> {
        self.p_x.iter().zip(&self.p_y).map(|(a, b)| a * b).collect()
    }

    pub fn pi_x(&self) -> Vec<f64> {
        self.p_x.iter().zip(&self.q_x).map(|(a, b)| a * b).collect()
    }

    pub fn pi_y(&self) -> Vec<f64> {
        self.p_y.iter().zip(&self.q_y).map(|(a, b)| a * b).collect()
    }
}

fn check_shape(t_x: usize, t_y: usize, mu: &PairDist) -> Result<()> {
    if mu.nx() != t_x || mu.ny() != t_y {
        return Err(Error::Dimension(format!(
            "protocol is {t_x}x{t_y} but distribution is {}x{}",
            mu.nx(),
            mu.ny()
        )));
    }
    Ok(())
}

pub fn leaf_factorization(
    t: &ProtocolTree,
    mu: &PairDist,
    x: usize,
    y: usize,
) -> Result<LeafFactorization> {
    check_shape(t.x_size, t.y_size, mu)?;
    t.check_inputs(x, y)?;
    let row: Vec<f64> = (0..t.y_size).map(|yy| mu.mass(x, yy)).collect();
    let col: Vec<f64> = (0..t.x_size).map(|xx| mu.mass(xx, y)).collect();
    if row.iter().sum::<f64>() <= 0.0 {
        return Err(Error::ZeroMass(format!("mu(x = {x}, .) is zero")));
    }
    if col.iter().sum::<f64>() <= 0.0 {
        return Err(Error::ZeroMass(format!("mu(., y = {y}) is zero")));
    }
    let n = t.leaf_count();
    let mut out = LeafFactorization {
        p_x: vec![0.0; n],
        q_x: vec![0.0; n],
        p_y: vec![0.0; n],
        q_y: vec![0.0; n],
    };
    let mut leaf = 0;
    descend(t, 0, x, y, 1.0, 1.0, 1.0, 1.0, row, col, &mut leaf, &mut out);
    Ok(out)
}

/// Averages `probs[input][bit]` under unnormalized `weights` and conditions them on `bit`.
fn posterior_step(weights: &mut [f64], probs: &[[f64; 2]], bit: usize) -> f64 {
    let total: f64 = weights.iter().sum();
    let mut kept = 0.0;
    for (w, p) in weights.iter_mut().zip(probs) {
        *w *= p[bit];
        kept += *w;
    }
    if total > 0.0 {
        (kept / total).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

#[allow(clippy::too_many_arguments)]
fn descend(
    t: &ProtocolTree,
    node: usize,
    x: usize,
    y: usize,
    p_x: f64,
    q_x: f64,
    p_y: f64,
    q_y: f64,
    post_y: Vec<f64>,
    post_x: Vec<f64>,
    leaf: &mut usize,
    out: &mut LeafFactorization,
) {
    match &t.nodes[node] {
        Node::Leaf { .. } => {
            out.p_x[*leaf] = p_x;
            out.q_x[*leaf] = q_x;
            out.p_y[*leaf] = p_y;
            out.q_y[*leaf] = q_y;
            *leaf += 1;
        }
        Node::Internal {
            owner,
            probs,
            children,
        } => {
            for bit in 0..2 {
                let mut post_y = post_y.clone();
                let mut post_x = post_x.clone();
                let (px, qx, py, qy) = match owner {
                    Owner::A => {
                        let qy = posterior_step(&mut post_x, probs, bit);
                        (p_x * probs[x][bit], q_x, p_y, q_y * qy)
                    }
                    Owner::B => {
                        let qx = posterior_step(&mut post_y, probs, bit);
                        (p_x, q_x * qx, p_y * probs[y][bit], q_y)
                    }
                };
                descend(
                    t,
                    children[bit],
                    x,
                    y,
                    px,
                    qx,
                    py,
                    qy,
                    post_y,
                    post_x,
                    leaf,
                    out,
                );
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub weight: f64,
    pub tree: ProtocolTree,
}

/// A finite mixture of private-coin trees over shared input spaces.
#[derive(Clone, Debug, PartialEq)]
pub struct PublicCoinProtocol {
    branches: Vec<Branch>,
    offsets: Vec<usize>,
}

impl PublicCoinProtocol {
    pub fn new(branches: Vec<(f64, ProtocolTree)>) -> Result<PublicCoinProtocol> {
        let first = branches
            .first()
            .ok_or_else(|| Error::Parameter("public-coin protocol needs a branch".into()))?;
        let (nx, ny) = (first.1.x_size, first.1.y_size);
        if branches.iter().any(|(_, t)| t.x_size != nx || t.y_size != ny) {
            return Err(Error::Dimension("branches disagree on input spaces".into()));
        }
        if branches.iter().any(|(w, _)| !(0.0..=1.0).contains(w)) {
            return Err(Error::Parameter("branch weights must lie in [0, 1]".into()));
        }
        let total: f64 = branches.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > TOLERANCE {
            return Err(Error::Normalization {
                total,
                deficit: 1.0 - total,
            });
        }
        for (_, t) in &branches {
            let issues = validate_tree(t);
            if !issues.is_empty() {
                return Err(Error::InvalidTree(issues));
            }
        }
        let mut offsets = Vec::with_capacity(branches.len());
        let mut acc = 0;
        for (_, t) in &branches {
            offsets.push(acc);
            acc += t.leaf_count();
        }
        Ok(PublicCoinProtocol {
            branches: branches
                .into_iter()
                .map(|(weight, tree)| Branch { weight, tree })
                .collect(),
            offsets,
        })
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn x_size(&self) -> usize {
        self.branches[0].tree.x_size
    }

    pub fn y_size(&self) -> usize {
        self.branches[0].tree.y_size
    }

    /// Number of `(branch, leaf)` transcripts.
    pub fn transcript_count(&self) -> usize {
        self.offsets.last().copied().unwrap_or(0)
            + self.branches.last().map_or(0, |b| b.tree.leaf_count())
    }

    /// Output bit of flat transcript index `i`.
    pub fn transcript_output(&self, i: usize) -> u8 {
        let r = self.offsets.partition_point(|&o| o <= i) - 1;
        self.branches[r].tree.leaf_output(i - self.offsets[r])
    }

    /// Transcript distribution over flat `(branch, leaf)` indices.
    pub fn transcript_probs(&self, x: usize, y: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.transcript_count());
        for b in &self.branches {
            out.extend(b.tree.leaf_probs(x, y).into_iter().map(|p| p * b.weight));
        }
        out
    }

    pub fn transcript_distribution(&self, x: usize, y: usize) -> Result<Dist> {
        self.branches[0].tree.check_inputs(x, y)?;
        Dist::new(self.transcript_probs(x, y))
    }

    pub fn single_tree(&self) -> Option<&ProtocolTree> {
        match self.branches.as_slice() {
            [b] => Some(&b.tree),
            _ => None,
        }
    }

    pub fn to_json(&self) -> String {
        let file = ProtocolFile {
            x_size: self.x_size(),
            y_size: self.y_size(),
            root: None,
            branches: Some(
                self.branches
                    .iter()
                    .map(|b| BranchSpec {
                        weight: b.weight,
                        root: b.tree.to_spec(),
                    })
                    .collect(),
            ),
        };
        serde_json::to_string(&file).expect("serializable")
    }

    /// Loads `{x_size, y_size, root}` or `{x_size, y_size, branches: [{weight, root}]}`.
    pub fn from_json(text: &str) -> Result<PublicCoinProtocol> {
        let file: ProtocolFile = serde_json::from_str(text)?;
        let branches = match (file.root, file.branches) {
            (Some(root), None) => vec![BranchSpec { weight: 1.0, root }],
            (None, Some(b)) => b,
            _ => {
                return Err(Error::Parameter(
                    "protocol file needs exactly one of `root` or `branches`".into(),
                ))
            }
        };
        let mut built = Vec::with_capacity(branches.len());
        let mut nodes = 0;
        for b in branches {
            let t = ProtocolTree::build(file.x_size, file.y_size, b.root)?;
            nodes += t.node_count();
            if nodes > MAX_NODES {
                return Err(Error::SizeCap(format!("protocol exceeds {MAX_NODES} nodes")));
            }
            built.push((b.weight, t));
        }
        PublicCoinProtocol::new(built)
    }
}

impl From<ProtocolTree> for PublicCoinProtocol {
    fn from(t: ProtocolTree) -> Self {
        let issues = validate_tree(&t);
        assert!(issues.is_empty(), "tree must be valid: {issues:?}");
        PublicCoinProtocol {
            branches: vec![Branch {
                weight: 1.0,
                tree: t,
            }],
            offsets: vec![0],
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProtocolFile {
    x_size: usize,
    y_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    root: Option<NodeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    branches: Option<Vec<BranchSpec>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchSpec {
    weight: f64,
    root: NodeSpec,
}

/// Information cost computed along two independent routes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InformationCost {
    /// `I(Pi; X | Y) + I(Pi; Y | X)` from the joint table of `(X, Y, coins, leaf)`.
    pub via_mi: f64,
    /// `E_{(x,y)~mu}[ D(pi_xy || pi_x) + D(pi_xy || pi_y) ]`.
    pub via_divergence: f64,
}

impl InformationCost {
    pub fn value(&self) -> f64 {
        self.via_divergence
    }
}

/// `(x, y, mass, D(pi_xy || pi_x), D(pi_xy || pi_y))`.
pub type PairDivergence = (usize, usize, f64, f64, f64);

/// Per-pair divergences `(D(pi_xy || pi_x), D(pi_xy || pi_y))` for every pair with positive mass.
pub fn pair_divergences(p: &PublicCoinProtocol, mu: &PairDist) -> Result<Vec<PairDivergence>> {
    check_shape(p.x_size(), p.y_size(), mu)?;
    let (nx, ny) = (mu.nx(), mu.ny());
    let transcripts: Vec<Vec<f64>> = (0..nx)
        .flat_map(|x| (0..ny).map(move |y| (x, y)))
        .map(|(x, y)| p.transcript_probs(x, y))
        .collect();
    let len = p.transcript_count();
    let row = mu.marginal_x();
    let col = mu.marginal_y();
    let mut given_x = vec![vec![0.0; len]; nx];
    let mut given_y = vec![vec![0.0; len]; ny];
    for (x, y, m) in mu.support() {
        for (k, &v) in transcripts[x * ny + y].iter().enumerate() {
            given_x[x][k] += m / row[x] * v;
            given_y[y][k] += m / col[y] * v;
        }
    }
    Ok(mu
        .support()
        .map(|(x, y, m)| {
            let pi = &transcripts[x * ny + y];
            let dx = info::divergence_of_masses(pi, &given_x[x]).to_f64();
            let dy = info::divergence_of_masses(pi, &given_y[y]).to_f64();
            (x, y, m, dx, dy)
        })
        .collect())
}

pub fn information_cost(p: &PublicCoinProtocol, mu: &PairDist) -> Result<InformationCost> {
    check_shape(p.x_size(), p.y_size(), mu)?;
    let coins = p.branches.len();
    let width = p.branches.iter().map(|b| b.tree.leaf_count()).max().unwrap_or(1);
    let leaf_tables: Vec<Vec<Vec<f64>>> = p
        .branches
        .iter()
        .map(|b| {
            (0..mu.nx())
                .flat_map(|x| (0..mu.ny()).map(move |y| (x, y)))
                .map(|(x, y)| b.tree.leaf_probs(x, y))
                .collect()
        })
        .collect();
    let ny = mu.ny();
    let joint = JointDist::from_fn(
        &[("x", mu.nx()), ("y", ny), ("coins", coins), ("leaf", width)],
        |i| {
            let (x, y, r, l) = (i[0], i[1], i[2], i[3]);
            let m = mu.mass(x, y);
            if m == 0.0 {
                return 0.0;
            }
            let probs = &leaf_tables[r][x * ny + y];
            probs.get(l).map_or(0.0, |v| m * p.branches[r].weight * v)
        },
    )?;
    let pi = ["coins", "leaf"];
    let via_mi = info::mutual_information(&joint, &pi, &["x"], &["y"])?
        + info::mutual_information(&joint, &pi, &["y"], &["x"])?;
    let via_divergence = pair_divergences(p, mu)?
        .into_iter()
        .map(|(_, _, m, dx, dy)| m * (dx + dy))
        .sum();
    Ok(InformationCost {
        via_mi,
        via_divergence,
    })
}

/// Probability over `mu`, the coins and the transcript that the output differs from `f`.
pub fn error_rate(p: &PublicCoinProtocol, mu: &PairDist, f: &FuncTable) -> Result<f64> {
    check_shape(p.x_size(), p.y_size(), mu)?;
    if f.nx() != mu.nx() || f.ny() != mu.ny() {
        return Err(Error::Dimension(format!(
            "function is {}x{} but distribution is {}x{}",
            f.nx(),
            f.ny(),
            mu.nx(),
            mu.ny()
        )));
    }
    Ok(mu
        .support()
        .map(|(x, y, m)| {
            let want = f.get(x, y);
            let wrong: f64 = p
                .transcript_probs(x, y)
                .iter()
                .enumerate()
                .filter(|&(i, _)| p.transcript_output(i) != want)
                .map(|(_, v)| v)
                .sum();
            m * wrong
        })
        .sum())
}

pub fn communication_cost(p: &PublicCoinProtocol) -> usize {
    p.branches.iter().map(|b| b.tree.depth()).max().unwrap_or(0)
}

/// Bits needed to name one of `size` values.
pub fn bits_for(size: usize) -> u32 {
    if size <= 1 {
        0
    } else {
        usize::BITS - (size - 1).leading_zeros()
    }
}

/// Sends `value`'s bits MSB-first from `owner`, then continues with `then(value)`.
fn send_bits(
    owner: Owner,
    size: usize,
    bits: u32,
    level: u32,
    prefix: usize,
    path: &str,
    then: &dyn Fn(usize, &str) -> NodeSpec,
) -> NodeSpec {
    if level == bits {
        return then(prefix, path);
    }
    let shift = bits - 1 - level;
    let p1 = (0..size).map(|v| ((v >> shift) & 1) as f64).collect();
    NodeSpec::node(
        owner,
        p1,
        send_bits(owner, size, bits, level + 1, prefix << 1, &format!("{path}0"), then),
        send_bits(owner, size, bits, level + 1, (prefix << 1) | 1, &format!("{path}1"), then),
    )
}

fn last_bit(path: &str) -> u8 {
    path.ends_with('1') as u8
}

pub fn single_leaf(x_size: usize, y_size: usize, output: u8) -> Result<ProtocolTree> {
    ProtocolTree::new(x_size, y_size, NodeSpec::leaf(output, ""))
}

/// A sends `x`; the output is the last bit sent.
pub fn send_x(x_size: usize, y_size: usize) -> Result<ProtocolTree> {
    let root = send_bits(Owner::A, x_size, bits_for(x_size), 0, 0, "", &|_, path| {
        NodeSpec::leaf(last_bit(path), path)
    });
    ProtocolTree::new(x_size, y_size, root)
}

/// A sends `x`, then B sends `y`; the output is the last bit sent.
pub fn send_xy(x_size: usize, y_size: usize) -> Result<ProtocolTree> {
    full_reveal_with(x_size, y_size, &|_, _, path| last_bit(path))
}

/// A sends `x`, then B sends `y`, and the leaf is labeled `f(x, y)`.
pub fn full_reveal(f: &FuncTable) -> Result<ProtocolTree> {
    full_reveal_with(f.nx(), f.ny(), &|x, y, _| {
        if x < f.nx() && y < f.ny() {
            f.get(x, y)
        } else {
            0
        }
    })
}

fn full_reveal_with(
    x_size: usize,
    y_size: usize,
    label: &dyn Fn(usize, usize, &str) -> u8,
) -> Result<ProtocolTree> {
    let bx = bits_for(x_size);
    let by = bits_for(y_size);
    let root = send_bits(Owner::A, x_size, bx, 0, 0, "", &|x, path| {
        send_bits(Owner::B, y_size, by, 0, 0, path, &|y, path| {
            NodeSpec::leaf(label(x, y, path), path)
        })
    });
    ProtocolTree::new(x_size, y_size, root)
}

/// One-bit `x` sent through a binary symmetric channel with crossover `flip`.
pub fn noisy_send_x(flip: f64, y_size: usize) -> Result<ProtocolTree> {
    if !(0.0..=1.0).contains(&flip) {
        return Err(Error::Parameter(format!("flip probability {flip} outside [0, 1]")));
    }
    ProtocolTree::new(
        2,
        y_size,
        NodeSpec::node(
            Owner::A,
            vec![flip, 1.0 - flip],
            NodeSpec::leaf(0, "0"),
            NodeSpec::leaf(1, "1"),
        ),
    )
}

/// A flips a fair private coin and outputs it.
pub fn coin_flip(x_size: usize, y_size: usize) -> Result<ProtocolTree> {
    ProtocolTree::new(
        x_size,
        y_size,
        NodeSpec::node(
            Owner::A,
            vec![0.5; x_size],
            NodeSpec::leaf(0, "0"),
            NodeSpec::leaf(1, "1"),
        ),
    )
}

/// Exact `GT_n`: bits are exchanged MSB-first until the first position where
/// they differ, which decides the comparison. Depth `2n`.
pub fn bisection_gt(n: u32) -> Result<ProtocolTree> {
    if n == 0 || n > crate::table::MAX_TABLE_BITS {
        return Err(Error::SizeCap(format!(
            "bisection_gt needs n in 1..={}",
            crate::table::MAX_TABLE_BITS
        )));
    }
    let size = 1usize << n;
    fn level(n: u32, size: usize, i: u32, path: String) -> NodeSpec {
        if i == n {
            return NodeSpec::leaf(0, path);
        }
        let shift = n - 1 - i;
        let p1: Vec<f64> = (0..size).map(|v| ((v >> shift) & 1) as f64).collect();
        let bob = |a: u8| {
            let path_a = format!("{path}{a}");
            let (zero, one) = if a == 0 {
                (level(n, size, i + 1, format!("{path_a}0")), NodeSpec::leaf(0, format!("{path_a}1")))
            } else {
                (NodeSpec::leaf(1, format!("{path_a}0")), level(n, size, i + 1, format!("{path_a}1")))
            };
            NodeSpec::node(Owner::B, p1.clone(), zero, one)
        };
        NodeSpec::node(Owner::A, p1.clone(), bob(0), bob(1))
    }
    ProtocolTree::new(size, size, level(n, size, 0, String::new()))
}

/// Parameters for [`builtin`]; unused fields are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuiltinParams {
    pub x_size: usize,
    pub y_size: usize,
    pub n: u32,
    pub flip: f64,
    pub output: u8,
}

impl Default for BuiltinParams {
    fn default() -> Self {
        BuiltinParams {
            x_size: 2,
            y_size: 2,
            n: 1,
            flip: 0.1,
            output: 0,
        }
    }
}

pub const BUILTIN_NAMES: &[&str] = &[
    "single_leaf",
    "send_x",
    "send_xy",
    "noisy_send_x",
    "coin_flip",
    "bisection_gt",
];

/// Named test-corpus protocols.
pub fn builtin(name: &str, params: &BuiltinParams) -> Result<PublicCoinProtocol> {
    let tree = match name {
        "single_leaf" => single_leaf(params.x_size, params.y_size, params.output)?,
        "send_x" => send_x(params.x_size, params.y_size)?,
        "send_xy" => send_xy(params.x_size, params.y_size)?,
        "noisy_send_x" => noisy_send_x(params.flip, params.y_size)?,
        "coin_flip" => coin_flip(params.x_size, params.y_size)?,
        "bisection_gt" => bisection_gt(params.n)?,
        other => return Err(Error::UnknownProtocol(other.to_string())),
    };
    Ok(tree.into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{constant_function, gt_function, ip_function};

    fn h(p: f64) -> f64 {
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }

    fn uniform(n: usize) -> PairDist {
        PairDist::uniform(n, n).unwrap()
    }

    fn diagonal(n: usize) -> PairDist {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|x| (0..n).map(|y| if x == y { 1.0 / n as f64 } else { 0.0 }).collect())
            .collect();
        PairDist::from_table(&rows).unwrap()
    }

    #[test]
    fn validation_reports_located_issues() {
        assert!(validate_tree(&send_x(2, 2).unwrap()).is_empty());

        let bad = NodeSpec::Internal(InternalSpec {
            owner: Owner::A,
            p1: vec![0.6, 1.0],
            p0: Some(vec![0.5, 0.0]),
            children: ChildrenSpec {
                zero: Box::new(NodeSpec::leaf(0, "0")),
                one: Box::new(NodeSpec::leaf(1, "1")),
            },
        });
        let t = ProtocolTree::build(2, 2, NodeSpec::node(Owner::B, vec![0.0, 1.0], bad, NodeSpec::leaf(0, "x")))
            .unwrap();
        let issues = validate_tree(&t);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].path, "0");
        assert!(matches!(issues[0].kind, IssueKind::Normalization { input: 0, .. }));

        let dup = ProtocolTree::build(
            2,
            2,
            NodeSpec::node(Owner::A, vec![0.0, 1.0], NodeSpec::leaf(0, "a"), NodeSpec::leaf(1, "a")),
        )
        .unwrap();
        let issues = validate_tree(&dup);
        assert!(matches!(&issues[..], [TreeIssue { kind: IssueKind::DuplicateLeafId { .. }, .. }]));
        assert!(matches!(ProtocolTree::new(2, 2, dup.to_spec()), Err(Error::InvalidTree(_))));

        let arity = ProtocolTree::build(
            3,
            2,
            NodeSpec::node(Owner::A, vec![0.0, 1.0], NodeSpec::leaf(0, "a"), NodeSpec::leaf(1, "b")),
        )
        .unwrap();
        assert!(matches!(
            validate_tree(&arity)[0].kind,
            IssueKind::InputArity { expected: 3, got: 2 }
        ));
    }

    #[test]
    fn transcript_examples() {
        let t = send_x(2, 2).unwrap();
        assert_eq!(transcript_distribution(&t, 1, 0).unwrap().masses(), &[0.0, 1.0]);
        let t = send_xy(2, 2).unwrap();
        let d = transcript_distribution(&t, 1, 1).unwrap();
        assert_eq!(d.mass(3), 1.0);
        assert_eq!(t.leaf_id(3), "11");
        let t = noisy_send_x(0.1, 2).unwrap();
        let d = transcript_distribution(&t, 0, 0).unwrap();
        assert!((d.mass(0) - 0.9).abs() < 1e-15 && (d.mass(1) - 0.1).abs() < 1e-15);
        assert!(matches!(transcript_distribution(&t, 2, 0), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn factorization_examples() {
        let t = send_xy(2, 2).unwrap();
        let mu = uniform(2);
        for x in 0..2 {
            for y in 0..2 {
                let f = leaf_factorization(&t, &mu, x, y).unwrap();
                for l in 0..4 {
                    let (a, b) = (l >> 1, l & 1);
                    assert_eq!(f.p_x[l], (a == x) as u8 as f64);
                    assert_eq!(f.p_y[l], (b == y) as u8 as f64);
                    assert_eq!(f.q_x[l], 0.5);
                }
                assert_eq!(f.pi_xy(), transcript_distribution(&t, x, y).unwrap().masses());
            }
        }
        let diag = diagonal(2);
        for x in 0..2 {
            let f = leaf_factorization(&t, &diag, x, x).unwrap();
            for l in 0..4 {
                assert_eq!(f.q_x[l], t.factor_b(l, x));
            }
        }
        let sparse = PairDist::from_table(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(leaf_factorization(&t, &sparse, 1, 0), Err(Error::ZeroMass(_))));
    }

    #[test]
    fn information_cost_examples() {
        let empty: PublicCoinProtocol = single_leaf(2, 2, 0).unwrap().into();
        let ic = information_cost(&empty, &uniform(2)).unwrap();
        assert!(ic.via_mi.abs() < 1e-12 && ic.via_divergence.abs() < 1e-12);

        let sx: PublicCoinProtocol = send_x(2, 2).unwrap().into();
        let ic = information_cost(&sx, &uniform(2)).unwrap();
        assert!((ic.via_mi - 1.0).abs() < 1e-12 && (ic.via_divergence - 1.0).abs() < 1e-12);

        let ic = information_cost(&sx, &diagonal(2)).unwrap();
        assert!(ic.via_mi.abs() < 1e-12 && ic.via_divergence.abs() < 1e-12);

        let noisy: PublicCoinProtocol = noisy_send_x(0.1, 2).unwrap().into();
        let ic = information_cost(&noisy, &uniform(2)).unwrap();
        assert!((ic.via_divergence - (1.0 - h(0.1))).abs() < 1e-12);
        assert!((ic.via_mi - (1.0 - h(0.1))).abs() < 1e-12);
    }

    #[test]
    fn error_rate_examples() {
        let ip = ip_function(1).unwrap();
        let full: PublicCoinProtocol = full_reveal(&ip).unwrap().into();
        assert_eq!(error_rate(&full, &uniform(2), &ip).unwrap(), 0.0);
        let zero: PublicCoinProtocol = single_leaf(2, 2, 0).unwrap().into();
        assert_eq!(error_rate(&zero, &uniform(2), &ip).unwrap(), 0.25);
        let coin: PublicCoinProtocol = coin_flip(2, 2).unwrap().into();
        let xor = crate::table::xor_function(1).unwrap();
        assert_eq!(error_rate(&coin, &uniform(2), &xor).unwrap(), 0.5);
        let wrong = constant_function(3, 2, false).unwrap();
        assert!(error_rate(&coin, &uniform(2), &wrong).is_err());
    }

    #[test]
    fn communication_cost_examples() {
        assert_eq!(communication_cost(&single_leaf(2, 2, 1).unwrap().into()), 0);
        assert_eq!(communication_cost(&send_xy(2, 2).unwrap().into()), 2);
        let mix = PublicCoinProtocol::new(vec![
            (0.5, coin_flip(4, 2).unwrap()),
            (0.5, send_xy(4, 2).unwrap()),
        ])
        .unwrap();
        assert_eq!(communication_cost(&mix), 3);
    }

    #[test]
    fn builtins() {
        let p = builtin("send_x", &BuiltinParams::default()).unwrap();
        assert_eq!(communication_cost(&p), 1);
        assert!(matches!(builtin("nope", &BuiltinParams::default()), Err(Error::UnknownProtocol(_))));

        for n in 1..=3 {
            let t = bisection_gt(n).unwrap();
            assert!(t.depth() <= 2 * n as usize);
            let gt = gt_function(n).unwrap();
            let size = 1 << n;
            for x in 0..size {
                for y in 0..size {
                    let d = transcript_distribution(&t, x, y).unwrap();
                    let (leaf, p) = d.support().next().unwrap();
                    assert_eq!(p, 1.0);
                    assert_eq!(t.leaf_output(leaf), gt.get(x, y), "n={n} x={x} y={y}");
                }
            }
        }
    }

    #[test]
    fn json_round_trip_and_loader_limits() {
        let mix = PublicCoinProtocol::new(vec![
            (0.25, noisy_send_x(0.2, 2).unwrap()),
            (0.75, send_xy(2, 2).unwrap()),
        ])
        .unwrap();
        let back = PublicCoinProtocol::from_json(&mix.to_json()).unwrap();
        assert_eq!(back, mix);
        let single = r#"{"x_size":2,"y_size":1,"root":{"owner":"A","p1":[0.0,1.0],
            "children":{"0":{"output":0,"id":"0"},"1":{"output":1,"id":"1"}}}}"#;
        let p = PublicCoinProtocol::from_json(single).unwrap();
        assert_eq!(p.transcript_count(), 2);
        let bad = r#"{"x_size":2,"y_size":1,"root":{"owner":"A","p1":[0.0,1.2],
            "children":{"0":{"output":0,"id":"0"},"1":{"output":1,"id":"1"}}}}"#;
        assert!(matches!(PublicCoinProtocol::from_json(bad), Err(Error::InvalidTree(_))));
    }
}
