//! Link-level network model with BPR cost functions.
//!
//! A [`Network`] is a directed multigraph over 1-based node ids with one BPR
//! cost function per link: `t(q) = t0 · (1 + b · (q/c)^power)`. Zones are the
//! first `zone_count` node ids; nodes below `first_through_node` are centroid
//! connect points that paths may start or end at but never pass through —
//! the standard TNTP convention.

use thiserror::Error;

use crate::tntp::RawNetworkFile;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("link {index}: {detail}")]
    InvalidLink { index: usize, detail: String },
    #[error("inconsistent counts: {detail}")]
    InvalidCounts { detail: String },
}

/// One directed link with its BPR parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub tail: u32,
    pub head: u32,
    pub capacity: f64,
    pub free_flow_time: f64,
    pub b: f64,
    pub power: f64,
}

impl Link {
    /// BPR travel time at flow `q`.
    #[inline]
    pub fn time(&self, q: f64) -> f64 {
        self.free_flow_time * (1.0 + self.b * (q / self.capacity).powf(self.power))
    }

    /// Marginal travel time `d(q·t(q))/dq = t0·(1 + b·(1+power)·(q/c)^power)`.
    ///
    /// A user equilibrium computed on marginal times is a system optimum of
    /// the true times.
    #[inline]
    pub fn marginal_time(&self, q: f64) -> f64 {
        self.free_flow_time
            * (1.0 + self.b * (1.0 + self.power) * (q / self.capacity).powf(self.power))
    }

    /// Integral of the BPR time from 0 to `q` (the Beckmann summand):
    /// `t0·q + t0·b·c/(power+1)·(q/c)^(power+1)`.
    #[inline]
    pub fn time_integral(&self, q: f64) -> f64 {
        self.free_flow_time
            * (q + self.b * self.capacity / (self.power + 1.0)
                * (q / self.capacity).powf(self.power + 1.0))
    }
}

/// Directed network with a forward-star adjacency index.
#[derive(Debug, Clone)]
pub struct Network {
    pub node_count: u32,
    pub zone_count: u32,
    pub first_through_node: u32,
    links: Vec<Link>,
    /// `out_links[out_offsets[n] .. out_offsets[n+1]]` are the link indices
    /// leaving node id `n+1`, in ascending link index order.
    out_offsets: Vec<usize>,
    out_links: Vec<u32>,
}

impl Network {
    pub fn from_raw(raw: &RawNetworkFile) -> Result<Self, NetworkError> {
        if raw.zone_count == 0 || raw.zone_count > raw.node_count {
            return Err(NetworkError::InvalidCounts {
                detail: format!(
                    "{} nodes, {} zones (need nodes ≥ zones ≥ 1)",
                    raw.node_count, raw.zone_count
                ),
            });
        }
        let mut links = Vec::with_capacity(raw.links.len());
        for (index, l) in raw.links.iter().enumerate() {
            if l.capacity <= 0.0 || l.capacity.is_nan() {
                return Err(NetworkError::InvalidLink {
                    index,
                    detail: format!("capacity {} must be positive", l.capacity),
                });
            }
            if l.free_flow_time < 0.0 || l.b < 0.0 || l.power < 0.0 {
                return Err(NetworkError::InvalidLink {
                    index,
                    detail: "free_flow_time, b and power must be nonnegative".into(),
                });
            }
            if l.init_node < 1
                || l.init_node > raw.node_count
                || l.term_node < 1
                || l.term_node > raw.node_count
            {
                return Err(NetworkError::InvalidLink {
                    index,
                    detail: format!(
                        "endpoints ({}, {}) outside [1, {}]",
                        l.init_node, l.term_node, raw.node_count
                    ),
                });
            }
            links.push(Link {
                tail: l.init_node,
                head: l.term_node,
                capacity: l.capacity,
                free_flow_time: l.free_flow_time,
                b: l.b,
                power: l.power,
            });
        }

        let n = raw.node_count as usize;
        let mut counts = vec![0usize; n + 1];
        for l in &links {
            counts[l.tail as usize] += 1;
        }
        let mut out_offsets = vec![0usize; n + 1];
        for node in 1..=n {
            out_offsets[node] = out_offsets[node - 1] + counts[node];
        }
        let mut cursor = out_offsets.clone();
        let mut out_links = vec![0u32; links.len()];
        for (idx, l) in links.iter().enumerate() {
            let slot = cursor[l.tail as usize - 1];
            out_links[slot] = idx as u32;
            cursor[l.tail as usize - 1] += 1;
        }

        Ok(Network {
            node_count: raw.node_count,
            zone_count: raw.zone_count,
            first_through_node: raw.first_through_node,
            links,
            out_offsets,
            out_links,
        })
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn link(&self, index: usize) -> &Link {
        &self.links[index]
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    /// Link indices leaving `node` (1-based id).
    pub fn outgoing(&self, node: u32) -> &[u32] {
        let n = node as usize;
        &self.out_links[self.out_offsets[n - 1]..self.out_offsets[n]]
    }

    /// True if paths may traverse `node` as an intermediate stop.
    pub fn is_through_node(&self, node: u32) -> bool {
        node >= self.first_through_node
    }

    /// BPR times for a full flow vector.
    pub fn times_for(&self, flows: &[f64]) -> Vec<f64> {
        assert_eq!(flows.len(), self.links.len());
        self.links
            .iter()
            .zip(flows)
            .map(|(l, &q)| l.time(q))
            .collect()
    }
}

/// Converged flows and the BPR times they induce.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkState {
    pub flows: Vec<f64>,
    pub times: Vec<f64>,
}

impl LinkState {
    pub fn from_flows(net: &Network, flows: Vec<f64>) -> Self {
        let times = net.times_for(&flows);
        LinkState { flows, times }
    }

    /// Largest absolute difference between stored times and recomputed BPR
    /// times; exactly zero for states built by [`LinkState::from_flows`].
    pub fn consistency_error(&self, net: &Network) -> f64 {
        net.times_for(&self.flows)
            .iter()
            .zip(&self.times)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Total system travel time Σ flow·time in minutes.
pub fn total_system_time(net: &Network, state: &LinkState) -> f64 {
    assert_eq!(state.flows.len(), net.link_count());
    assert_eq!(state.times.len(), net.link_count());
    state
        .flows
        .iter()
        .zip(&state.times)
        .map(|(q, t)| q * t)
        .sum()
}
