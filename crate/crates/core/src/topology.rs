//! Directed interconnection graphs of one leader (vertex 0) and `n` followers.
//!
//! Arc `(i, j)` carries information from agent `j` to agent `i`, so
//! `adjacency[i][j] == 1` means follower `i` measures follower `j`, and
//! `leader_links[i] == 1` means follower `i` measures the leader.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectedTopology {
    n: usize,
    adjacency: Vec<Vec<u8>>,
    leader_links: Vec<u8>,
}

/// Degree, Laplacian, leader and coupling matrices derived from a topology.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrices {
    pub degree: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
    pub leader: DMatrix<f64>,
    pub coupling: DMatrix<f64>,
}

impl DirectedTopology {
    /// Validates and builds a topology. Entries must be 0 or 1 and the
    /// diagonal of `adjacency` must be zero.
    pub fn new(adjacency: Vec<Vec<u8>>, leader_links: Vec<u8>) -> Result<Self> {
        let n = leader_links.len();
        if n == 0 {
            return Err(Error::InvalidTopology("at least one follower is required".into()));
        }
        if adjacency.len() != n {
            return Err(Error::InvalidTopology(format!(
                "adjacency has {} rows but leader_links has {} entries",
                adjacency.len(),
                n
            )));
        }
        for (i, row) in adjacency.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidTopology(format!(
                    "adjacency row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &a) in row.iter().enumerate() {
                if a > 1 {
                    return Err(Error::InvalidTopology(format!(
                        "adjacency[{i}][{j}] = {a} is not in {{0,1}}"
                    )));
                }
                if i == j && a != 0 {
                    return Err(Error::InvalidTopology(format!(
                        "adjacency[{i}][{i}] = {a}: self-loops are not allowed"
                    )));
                }
            }
        }
        for (i, &b) in leader_links.iter().enumerate() {
            if b > 1 {
                return Err(Error::InvalidTopology(format!(
                    "leader_links[{i}] = {b} is not in {{0,1}}"
                )));
            }
        }
        Ok(Self { n, adjacency, leader_links })
    }

    /// Follower graph with no arcs and no leader links.
    pub fn empty(n: usize) -> Result<Self> {
        Self::new(vec![vec![0; n]; n], vec![0; n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn adjacency(&self) -> &[Vec<u8>] {
        &self.adjacency
    }

    pub fn leader_links(&self) -> &[u8] {
        &self.leader_links
    }

    pub fn arc(&self, i: usize, j: usize) -> bool {
        self.adjacency[i][j] == 1
    }

    pub fn leader_link(&self, i: usize) -> bool {
        self.leader_links[i] == 1
    }

    /// Returns a copy with arc `(i, j)` present. `j == i` is rejected.
    pub fn with_arc(&self, i: usize, j: usize) -> Result<Self> {
        let mut adjacency = self.adjacency.clone();
        adjacency[i][j] = 1;
        Self::new(adjacency, self.leader_links.clone())
    }

    pub fn with_leader_link(&self, i: usize) -> Self {
        let mut out = self.clone();
        out.leader_links[i] = 1;
        out
    }

    /// All topologies on `n` followers: every zero-diagonal binary adjacency
    /// combined with every binary leader-link vector, `2^(n²-n) · 2^n` in total.
    pub fn enumerate_all(n: usize) -> impl Iterator<Item = DirectedTopology> {
        let off_diag: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        let bits = off_diag.len() + n;
        assert!(bits < 32, "enumeration limited to small n");
        (0u32..(1u32 << bits)).map(move |mask| {
            let mut adjacency = vec![vec![0u8; n]; n];
            for (b, &(i, j)) in off_diag.iter().enumerate() {
                adjacency[i][j] = ((mask >> b) & 1) as u8;
            }
            let leader_links = (0..n)
                .map(|i| ((mask >> (off_diag.len() + i)) & 1) as u8)
                .collect();
            DirectedTopology { n, adjacency, leader_links }
        })
    }
}

/// Builds `D`, `L = D - A`, `B` and `H = L + B`. Degrees are accumulated in
/// integers, so every row of `L` sums to exactly zero.
pub fn build_coupling(topo: &DirectedTopology) -> CouplingMatrices {
    let n = topo.n;
    let mut degree = DMatrix::zeros(n, n);
    let mut laplacian = DMatrix::zeros(n, n);
    let mut leader = DMatrix::zeros(n, n);
    for i in 0..n {
        let d: u32 = topo.adjacency[i].iter().map(|&a| a as u32).sum();
        degree[(i, i)] = d as f64;
        for j in 0..n {
            let a = topo.adjacency[i][j] as i64;
            let l = if i == j { d as i64 - a } else { -a };
            laplacian[(i, j)] = l as f64;
        }
        leader[(i, i)] = topo.leader_links[i] as f64;
    }
    let coupling = &laplacian + &leader;
    CouplingMatrices { degree, laplacian, leader, coupling }
}

/// True iff every follower has a directed path to the leader.
///
/// Breadth-first search from vertex 0 over reversed arcs: a follower `i`
/// joins the reached set when it links to the leader or to an already
/// reached follower.
pub fn is_globally_reachable(topo: &DirectedTopology) -> bool {
    let n = topo.n;
    let mut reached = vec![false; n];
    let mut queue = VecDeque::new();
    for i in 0..n {
        if topo.leader_link(i) {
            reached[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(j) = queue.pop_front() {
        for i in 0..n {
            if !reached[i] && topo.arc(i, j) {
                reached[i] = true;
                queue.push_back(i);
            }
        }
    }
    reached.into_iter().all(|r| r)
}

/// True iff the follower subgraph is balanced (row sums of `A` equal column
/// sums). Leader links are ignored.
pub fn is_balanced(topo: &DirectedTopology) -> bool {
    (0..topo.n).all(|i| {
        let out: u32 = topo.adjacency[i].iter().map(|&a| a as u32).sum();
        let inn: u32 = topo.adjacency.iter().map(|row| row[i] as u32).sum();
        out == inn
    })
}
