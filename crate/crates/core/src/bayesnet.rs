//! Bayesian networks as parametric models.
//!
//! Each node `s` has one conditional row `p(x_s | x_pa(s))` per parent
//! configuration, parametrized by log-odds against the node's last state.
//! Parent configurations are enumerated row-major over the parents in the
//! order they are listed. Parameters are laid out node by node, and within
//! a node configuration by configuration.
//!
//! Joint states are enumerated row-major over the visible nodes (in node
//! order) followed by the hidden nodes, which matches the visible-major
//! layout of [`JointSpace`] when both groups are present.
//!
//! Jacobian columns belonging to different nodes are Fisher-orthogonal, so
//! the Fisher matrix is block diagonal with one block per node and the
//! natural gradient can be solved block by block.

use std::ops::Range;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::fibration::JointSpace;
use crate::linalg::Matrix;
use crate::model::{FisherMatrix, ParametricModel};
use crate::scalar::Real;
use crate::simplex::{fisher_inner_raw, Distribution, StateSpace, TangentVector};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Node {
    pub name: String,
    pub states: usize,
    pub parents: Vec<usize>,
}

/// A DAG whose node order is a topological order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dag {
    nodes: Vec<Node>,
}

impl Dag {
    pub fn new(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidGraph("no nodes".into()));
        }
        for (i, n) in nodes.iter().enumerate() {
            if n.states < 2 {
                return Err(Error::InvalidGraph(format!(
                    "node {i} ({}) has {} states, need at least 2",
                    n.name, n.states
                )));
            }
            for (k, &pa) in n.parents.iter().enumerate() {
                if pa >= i {
                    return Err(Error::InvalidGraph(format!(
                        "node {i} ({}) lists parent {pa}, which does not precede it",
                        n.name
                    )));
                }
                if n.parents[..k].contains(&pa) {
                    return Err(Error::InvalidGraph(format!(
                        "node {i} ({}) lists parent {pa} twice",
                        n.name
                    )));
                }
            }
        }
        Ok(Self { nodes })
    }

    /// Convenience constructor from `(states, parents)` pairs.
    pub fn from_edges(spec: &[(usize, &[usize])]) -> Result<Self> {
        Self::new(
            spec.iter()
                .enumerate()
                .map(|(i, (states, parents))| Node {
                    name: format!("n{i}"),
                    states: *states,
                    parents: parents.to_vec(),
                })
                .collect(),
        )
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn parent_configs(&self, s: usize) -> usize {
        self.nodes[s]
            .parents
            .iter()
            .map(|&pa| self.nodes[pa].states)
            .product()
    }

    /// Row-major index of the parent configuration of `s` in `assignment`.
    pub fn parent_config_index(&self, s: usize, assignment: &[usize]) -> usize {
        self.nodes[s]
            .parents
            .iter()
            .fold(0, |acc, &pa| acc * self.nodes[pa].states + assignment[pa])
    }
}

/// A Bayesian network over a [`Dag`] with a visible/hidden node partition.
#[derive(Clone, Debug)]
pub struct BayesNetModel {
    dag: Dag,
    visible: Vec<bool>,
    space: Arc<StateSpace>,
    joint: Option<JointSpace>,
    blocks: Vec<Range<usize>>,
    /// Node states for each flat joint index.
    assignments: Vec<Vec<usize>>,
    /// Parent-configuration index per flat joint index and node.
    configs: Vec<Vec<usize>>,
}

impl BayesNetModel {
    pub fn new(dag: Dag, visible: Vec<bool>) -> Result<Self> {
        check_dim(dag.len(), visible.len())?;
        let mut blocks = Vec::with_capacity(dag.len());
        let mut offset = 0;
        for (s, n) in dag.nodes().iter().enumerate() {
            let len = dag.parent_configs(s) * (n.states - 1);
            blocks.push(offset..offset + len);
            offset += len;
        }

        let vis: Vec<usize> = (0..dag.len()).filter(|&s| visible[s]).collect();
        let hid: Vec<usize> = (0..dag.len()).filter(|&s| !visible[s]).collect();
        let order: Vec<usize> = vis.iter().chain(&hid).copied().collect();
        let states = |set: &[usize]| -> usize { set.iter().map(|&s| dag.nodes()[s].states).product() };
        let total = states(&order);
        let space = StateSpace::new(total)?.shared();
        let joint = if !vis.is_empty() && !hid.is_empty() {
            Some(JointSpace::new(states(&vis), states(&hid))?)
        } else {
            None
        };

        let mut assignments = Vec::with_capacity(total);
        let mut configs = Vec::with_capacity(total);
        for flat in 0..total {
            let mut a = vec![0; dag.len()];
            let mut rest = flat;
            for &s in order.iter().rev() {
                let k = dag.nodes()[s].states;
                a[s] = rest % k;
                rest /= k;
            }
            configs.push((0..dag.len()).map(|s| dag.parent_config_index(s, &a)).collect());
            assignments.push(a);
        }

        Ok(Self {
            dag,
            visible,
            space,
            joint,
            blocks,
            assignments,
            configs,
        })
    }

    /// Every node visible.
    pub fn fully_visible(dag: Dag) -> Result<Self> {
        let n = dag.len();
        Self::new(dag, vec![true; n])
    }

    /// Two-node chain `V -> H`.
    pub fn visible_hidden_chain(n_visible: usize, n_hidden: usize) -> Result<Self> {
        let dag = Dag::new(vec![
            Node {
                name: "v".into(),
                states: n_visible,
                parents: vec![],
            },
            Node {
                name: "h".into(),
                states: n_hidden,
                parents: vec![0],
            },
        ])?;
        Self::new(dag, vec![true, false])
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn visible_flags(&self) -> &[bool] {
        &self.visible
    }

    /// Parameter index range of each node.
    pub fn node_blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    /// Node states of the flat joint index `i`.
    pub fn assignment(&self, i: usize) -> &[usize] {
        &self.assignments[i]
    }

    /// Conditional rows `p(x_s | c)` for every node and parent configuration.
    pub fn conditional_rows<T: Real>(&self, theta: &[T]) -> Result<Vec<Vec<Vec<T>>>> {
        check_dim(self.dim_params(), theta.len())?;
        Ok(self
            .dag
            .nodes()
            .iter()
            .enumerate()
            .map(|(s, n)| {
                let k = n.states;
                let block = &theta[self.blocks[s].clone()];
                block
                    .chunks(k - 1)
                    .map(|logits| {
                        let top = logits.iter().copied().fold(T::zero(), T::max);
                        let mut e: Vec<T> = logits.iter().map(|&l| (l - top).exp()).collect();
                        e.push((-top).exp());
                        let z: T = e.iter().copied().sum();
                        e.into_iter().map(|x| x / z).collect()
                    })
                    .collect()
            })
            .collect())
    }

    fn dim_params(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.end)
    }

    fn eval_from_rows<T: Real>(&self, rows: &[Vec<Vec<T>>]) -> Result<Distribution<T>> {
        let raw: Vec<T> = self
            .assignments
            .iter()
            .zip(&self.configs)
            .map(|(a, c)| {
                (0..self.dag.len()).fold(T::one(), |acc, s| acc * rows[s][c[s]][a[s]])
            })
            .collect();
        Distribution::normalized(self.space.clone(), &raw)
    }

    /// Jacobian columns of node `s` only.
    pub fn node_jacobian<T: Real>(
        &self,
        p: &Distribution<T>,
        rows: &[Vec<Vec<T>>],
        s: usize,
    ) -> Vec<TangentVector<T>> {
        let k = self.dag.nodes()[s].states;
        let mut out = Vec::with_capacity(self.blocks[s].len());
        for (cfg, row) in rows[s].iter().enumerate() {
            for (j, &rj) in row.iter().enumerate().take(k - 1) {
                let coords = p
                    .probs()
                    .iter()
                    .enumerate()
                    .map(|(i, &px)| {
                        if self.configs[i][s] != cfg {
                            return T::zero();
                        }
                        let xs = self.assignments[i][s];
                        let ind = if xs == j { T::one() } else { T::zero() };
                        px * (ind - rj)
                    })
                    .collect();
                out.push(TangentVector::from_parts(self.space.clone(), Some(p.clone()), coords));
            }
        }
        out
    }
}

/// `p(x) = prod_s p(x_s | x_pa(s))`.
pub fn joint_eval<T: Real>(bn: &BayesNetModel, theta: &[T]) -> Result<Distribution<T>> {
    let rows = bn.conditional_rows(theta)?;
    bn.eval_from_rows(&rows)
}

/// `d p / d theta_{s,k} = p(x) d ln p(x_s | x_pa(s)) / d theta_{s,k}`.
pub fn bn_jacobian<T: Real>(bn: &BayesNetModel, theta: &[T]) -> Result<Vec<TangentVector<T>>> {
    let rows = bn.conditional_rows(theta)?;
    let p = bn.eval_from_rows(&rows)?;
    Ok((0..bn.dag.len())
        .flat_map(|s| bn.node_jacobian(&p, &rows, s))
        .collect())
}

impl<T: Real> ParametricModel<T> for BayesNetModel {
    fn dim(&self) -> usize {
        self.dim_params()
    }

    fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    fn joint_space(&self) -> Option<&JointSpace> {
        self.joint.as_ref()
    }

    fn eval(&self, theta: &[T]) -> Result<Distribution<T>> {
        joint_eval(self, theta)
    }

    fn jacobian(&self, theta: &[T]) -> Result<Vec<TangentVector<T>>> {
        bn_jacobian(self, theta)
    }
}

/// Largest cross-node Fisher entry against the diagonal scale.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthogonalityAudit<T> {
    pub max_cross: T,
    pub max_diagonal: T,
}

impl<T: Real> OrthogonalityAudit<T> {
    /// `max_cross / max_diagonal` (0 when there is no diagonal).
    pub fn relative(&self) -> T {
        if self.max_diagonal > T::zero() {
            self.max_cross / self.max_diagonal
        } else {
            T::zero()
        }
    }
}

/// Measures `max |G_{(s,k),(t,l)}|` over pairs with `s != t`.
///
/// Audited in the (topological) node order of the DAG.
pub fn orthogonality_audit<T: Real>(bn: &BayesNetModel, theta: &[T]) -> Result<OrthogonalityAudit<T>> {
    let g = crate::model::fisher_matrix(bn, theta)?;
    let owner: Vec<usize> = bn
        .blocks
        .iter()
        .enumerate()
        .flat_map(|(s, r)| r.clone().map(move |_| s))
        .collect();
    let d = owner.len();
    let mut max_cross = T::zero();
    let mut max_diagonal = T::zero();
    for i in 0..d {
        max_diagonal = max_diagonal.max(g.entries[(i, i)].abs());
        for j in 0..i {
            if owner[i] != owner[j] {
                max_cross = max_cross.max(g.entries[(i, j)].abs());
            }
        }
    }
    Ok(OrthogonalityAudit {
        max_cross,
        max_diagonal,
    })
}

/// Natural gradient together with solver operation counts.
#[derive(Clone, Debug)]
pub struct BlockSolve<T> {
    pub solution: Vec<T>,
    /// Cholesky factor + triangular solve flops summed over node blocks.
    pub block_flops: u64,
    /// Flops the same solve would take on the dense `d x d` system.
    pub dense_flops: u64,
}

/// Flops of a Cholesky factorization and two triangular solves of size `n`.
pub fn cholesky_solve_flops(n: usize) -> u64 {
    let n = n as u64;
    n * n * n / 3 + 2 * n * n
}

/// Solves `G u = grad` one node block at a time.
pub fn block_natural_gradient<T: Real>(
    bn: &BayesNetModel,
    theta: &[T],
    euclidean_param_grad: &[T],
) -> Result<Vec<T>> {
    block_natural_gradient_with_stats(bn, theta, euclidean_param_grad).map(|b| b.solution)
}

pub fn block_natural_gradient_with_stats<T: Real>(
    bn: &BayesNetModel,
    theta: &[T],
    euclidean_param_grad: &[T],
) -> Result<BlockSolve<T>> {
    let d = bn.dim_params();
    check_dim(d, euclidean_param_grad.len())?;
    let rows = bn.conditional_rows(theta)?;
    let p = bn.eval_from_rows(&rows)?;
    let mut solution = vec![T::zero(); d];
    let mut block_flops = 0;
    for (s, range) in bn.blocks.iter().enumerate() {
        let cols = bn.node_jacobian(&p, &rows, s);
        let block = FisherMatrix::from_jacobian(&p, &cols, &theta[range.clone()], T::default_rank_tol())
            .map_err(|e| match e {
                Error::SingularPoint {
                    singular_value,
                    threshold,
                    ..
                } => Error::SingularPoint {
                    singular_value,
                    threshold,
                    node: Some(s),
                },
                other => other,
            })?;
        let u = block.solve(&euclidean_param_grad[range.clone()])?;
        solution[range.clone()].copy_from_slice(&u);
        block_flops += cholesky_solve_flops(range.len());
    }
    Ok(BlockSolve {
        solution,
        block_flops,
        dense_flops: cholesky_solve_flops(d),
    })
}

/// Fisher block of a single node (dense, same-node entries are generally nonzero).
pub fn node_fisher_block<T: Real>(bn: &BayesNetModel, theta: &[T], s: usize) -> Result<Matrix<T>> {
    let rows = bn.conditional_rows(theta)?;
    let p = bn.eval_from_rows(&rows)?;
    let cols = bn.node_jacobian(&p, &rows, s);
    let n = cols.len();
    Ok(Matrix::from_fn(n, n, |i, j| {
        fisher_inner_raw(p.probs(), cols[i].coords(), cols[j].coords())
    }))
}

// ---------------------------------------------------------------------------
// Network description files

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ParentRef {
    Index(usize),
    Name(String),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NodeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub states: usize,
    #[serde(default)]
    pub parents: Vec<ParentRef>,
    #[serde(default = "default_visible")]
    pub visible: bool,
}

fn default_visible() -> bool {
    true
}

/// JSON network description: `{"nodes": [...], "theta0": [...]}`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct NetworkFile {
    pub nodes: Vec<NodeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
}

impl NetworkFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("network file: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Builds the model and checks `theta0` length when present.
    pub fn build(&self) -> Result<(BayesNetModel, Option<Vec<f64>>)> {
        let names: Vec<String> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| n.name.clone().unwrap_or_else(|| format!("n{i}")))
            .collect();
        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (i, spec) in self.nodes.iter().enumerate() {
            let parents = spec
                .parents
                .iter()
                .map(|p| match p {
                    ParentRef::Index(k) => Ok(*k),
                    ParentRef::Name(n) => names
                        .iter()
                        .position(|x| x == n)
                        .ok_or_else(|| Error::InvalidGraph(format!("unknown parent {n:?} of node {i}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            nodes.push(Node {
                name: names[i].clone(),
                states: spec.states,
                parents,
            });
        }
        let dag = Dag::new(nodes)?;
        let bn = BayesNetModel::new(dag, self.nodes.iter().map(|n| n.visible).collect())?;
        if let Some(t) = &self.theta0 {
            check_dim(ParametricModel::<f64>::dim(&bn), t.len())?;
        }
        Ok((bn, self.theta0.clone()))
    }
}

/// Standard small topologies used in tests and the CLI.
pub mod topologies {
    use super::*;

    /// `0 -> 1 -> ... -> n-1`.
    pub fn chain(states: &[usize]) -> Result<Dag> {
        let spec: Vec<(usize, Vec<usize>)> = states
            .iter()
            .enumerate()
            .map(|(i, &k)| (k, if i == 0 { vec![] } else { vec![i - 1] }))
            .collect();
        build(&spec)
    }

    /// `0 -> 1, 0 -> 2, ...`.
    pub fn fork(states: &[usize]) -> Result<Dag> {
        let spec: Vec<(usize, Vec<usize>)> = states
            .iter()
            .enumerate()
            .map(|(i, &k)| (k, if i == 0 { vec![] } else { vec![0] }))
            .collect();
        build(&spec)
    }

    /// All but the last node are roots and parents of the last.
    pub fn collider(states: &[usize]) -> Result<Dag> {
        let n = states.len();
        let spec: Vec<(usize, Vec<usize>)> = states
            .iter()
            .enumerate()
            .map(|(i, &k)| (k, if i + 1 == n { (0..n - 1).collect() } else { vec![] }))
            .collect();
        build(&spec)
    }

    /// `0 -> 1, 0 -> 2, {1, 2} -> 3`.
    pub fn diamond(states: [usize; 4]) -> Result<Dag> {
        build(&[
            (states[0], vec![]),
            (states[1], vec![0]),
            (states[2], vec![0]),
            (states[3], vec![1, 2]),
        ])
    }

    fn build(spec: &[(usize, Vec<usize>)]) -> Result<Dag> {
        let borrowed: Vec<(usize, &[usize])> = spec.iter().map(|(k, p)| (*k, p.as_slice())).collect();
        Dag::from_edges(&borrowed)
    }
}
