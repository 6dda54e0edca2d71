//! Sparse random directed network graphs.
//!
//! Ordinary units are numbered `1..=N`. Unit 0 is the always-activated bias
//! unit: it feeds every unit and is never listed in `in_edges`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::ModelKind;
use crate::error::{GlnnError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TopologyRecord", into = "TopologyRecord")]
pub struct NetworkTopology {
    n_units: usize,
    connectivity: usize,
    /// `in_edges[j - 1]`: sorted ordinary sources of unit `j`.
    in_edges: Vec<Vec<usize>>,
    /// `incoming[j - 1]`: `[0]` followed by `in_edges[j - 1]`.
    incoming: Vec<Vec<usize>>,
    /// Position of `j` inside `incoming[j - 1]`.
    self_slot: Vec<usize>,
}

/// JSON adjacency-list form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyRecord {
    pub n_units: usize,
    pub connectivity: usize,
    pub in_edges: Vec<Vec<usize>>,
}

impl TryFrom<TopologyRecord> for NetworkTopology {
    type Error = GlnnError;

    fn try_from(r: TopologyRecord) -> Result<Self> {
        NetworkTopology::from_in_edges(r.n_units, r.connectivity, r.in_edges)
    }
}

impl From<NetworkTopology> for TopologyRecord {
    fn from(t: NetworkTopology) -> Self {
        TopologyRecord {
            n_units: t.n_units,
            connectivity: t.connectivity,
            in_edges: t.in_edges,
        }
    }
}

impl NetworkTopology {
    pub fn from_in_edges(
        n_units: usize,
        connectivity: usize,
        mut in_edges: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if n_units == 0 {
            return Err(GlnnError::InvalidTopology("no units".into()));
        }
        if in_edges.len() != n_units {
            return Err(GlnnError::InvalidTopology(format!(
                "{} in-edge lists for {} units",
                in_edges.len(),
                n_units
            )));
        }
        let mut incoming = Vec::with_capacity(n_units);
        let mut self_slot = Vec::with_capacity(n_units);
        for (idx, sources) in in_edges.iter_mut().enumerate() {
            let j = idx + 1;
            sources.sort_unstable();
            if sources.windows(2).any(|w| w[0] == w[1]) {
                return Err(GlnnError::InvalidTopology(format!(
                    "duplicate source into unit {j}"
                )));
            }
            if sources.iter().any(|&i| i == 0 || i > n_units) {
                return Err(GlnnError::InvalidTopology(format!(
                    "source out of range into unit {j}"
                )));
            }
            let pos = sources
                .iter()
                .position(|&i| i == j)
                .ok_or_else(|| GlnnError::InvalidTopology(format!("unit {j} has no self-loop")))?;
            let mut inc = Vec::with_capacity(sources.len() + 1);
            inc.push(0);
            inc.extend_from_slice(sources);
            incoming.push(inc);
            self_slot.push(pos + 1);
        }
        Ok(Self {
            n_units,
            connectivity,
            in_edges,
            incoming,
            self_slot,
        })
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn connectivity(&self) -> usize {
        self.connectivity
    }

    /// Ordinary sources of unit `j` (1-based), self-loop included.
    pub fn in_edges(&self, j: usize) -> &[usize] {
        &self.in_edges[j - 1]
    }

    /// Sources of unit `j` including the bias unit 0 in first position.
    #[inline]
    pub fn incoming(&self, j: usize) -> &[usize] {
        &self.incoming[j - 1]
    }

    #[inline]
    pub fn self_slot(&self, j: usize) -> usize {
        self.self_slot[j - 1]
    }

    pub fn edge_count(&self) -> usize {
        self.in_edges.iter().map(Vec::len).sum()
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.in_edges.iter().filter(|s| s.contains(&i)).count()
    }

    pub fn max_in_degree(&self) -> usize {
        self.in_edges.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn fully_connected(n_units: usize) -> Result<Self> {
        let all: Vec<usize> = (1..=n_units).collect();
        Self::from_in_edges(n_units, n_units, vec![all; n_units])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Each unit gets `d` distinct outgoing edges: the loop `i -> i` plus `d - 1`
/// targets drawn uniformly without replacement among the other units.
pub fn build_random_graph(n_units: usize, d: usize, seed: u64) -> Result<NetworkTopology> {
    if n_units == 0 || d == 0 || d > n_units {
        return Err(GlnnError::InvalidConnectivity { d, n: n_units });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_edges = vec![Vec::with_capacity(d); n_units];
    for i in 1..=n_units {
        in_edges[i - 1].push(i);
        // others: units != i, mapped from 0..n_units-1
        for k in sample(&mut rng, n_units - 1, d - 1).into_iter() {
            let target = if k + 1 >= i { k + 2 } else { k + 1 };
            in_edges[target - 1].push(i);
        }
    }
    NetworkTopology::from_in_edges(n_units, d, in_edges)
}

/// Connectivity that balances the metric cost against the output cost:
/// `round(sqrt(2A))` for gated models, `A` for RNNs.
pub fn semi_sparse_connectivity(kind: ModelKind, alphabet_size: usize) -> usize {
    match kind {
        ModelKind::Rnn => alphabet_size,
        ModelKind::Gnn | ModelKind::Glnn => ((2.0 * alphabet_size as f64).sqrt().round() as usize).max(1),
    }
}

/// Sparse (`d = 3`), semi-sparse, fully connected, or an explicit degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Connectivity {
    Sparse,
    Semi,
    Full,
    Fixed(usize),
}

impl Connectivity {
    pub const SPARSE_DEGREE: usize = 3;

    /// Degree clamped to `[1, N]`.
    pub fn degree(self, kind: ModelKind, alphabet_size: usize, n_units: usize) -> usize {
        let d = match self {
            Connectivity::Sparse => Self::SPARSE_DEGREE,
            Connectivity::Semi => semi_sparse_connectivity(kind, alphabet_size),
            Connectivity::Full => n_units,
            Connectivity::Fixed(d) => d,
        };
        d.clamp(1, n_units.max(1))
    }
}
