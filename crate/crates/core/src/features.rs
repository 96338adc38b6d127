//! Relational state and action features.
//!
//! Nothing here depends on device or packet identity: every value is a
//! distance, a queue length, a degree or a TTL, normalized as
//! `(raw + 1) / (max + 1)` so real features are strictly positive.
//!
//! State layout (18 values):
//!
//! ```text
//! [ttl, queue_pos | dist, qlen, qlen_dest, degree | dist_min, dist_mean, dist_max,
//!  qlen_min, qlen_mean, qlen_max, qlen_dest_min, .., degree_max]
//! ```
//!
//! The action for a candidate next hop `u` is `u`'s own 4 device features.

use crate::sim::NetworkView;
use crate::topology::DeviceId;
use crate::traffic::Packet;

pub const PACKET_LEN: usize = 2;
pub const DEVICE_LEN: usize = 4;
pub const STATE_LEN: usize = PACKET_LEN + DEVICE_LEN + 3 * DEVICE_LEN;
pub const ACTION_LEN: usize = DEVICE_LEN;
pub const INPUT_LEN: usize = STATE_LEN + ACTION_LEN;

/// Aggregate slots when a device has no up neighbors.
pub const EMPTY_NEIGHBOR_SENTINEL: f64 = 0.0;

pub type StateFeatures = [f64; STATE_LEN];
pub type ActionFeatures = [f64; ACTION_LEN];

/// Normalization maxima.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureCaps {
    /// Device count; caps distance and degree.
    pub n_devices: u32,
    /// Queue capacity; caps queue length and queue position.
    pub queue_capacity: u32,
    /// Initial TTL.
    pub ttl: u32,
}

impl FeatureCaps {
    pub fn from_view(view: &NetworkView<'_>) -> Self {
        FeatureCaps {
            n_devices: view.n_devices() as u32,
            queue_capacity: view.params.queue_capacity as u32,
            ttl: view.params.ttl,
        }
    }

    fn device_maxima(&self) -> [f64; DEVICE_LEN] {
        let n = self.n_devices as f64;
        let b = self.queue_capacity as f64;
        [n, b, b, n]
    }
}

/// `(raw + 1) / (max + 1)`, with `raw` clamped into `[0, max]`.
pub fn normalize(raw: f64, max: f64) -> f64 {
    (raw.clamp(0.0, max) + 1.0) / (max + 1.0)
}

/// Raw `[distance to dst(p), queue length, queue length toward dst(p), degree]`
/// of device `u`.
pub fn device_features(view: &NetworkView<'_>, u: DeviceId, packet: &Packet) -> [f64; DEVICE_LEN] {
    [
        view.distances.distance(u, packet.dst) as f64,
        view.queues[u].len() as f64,
        view.queues[u].count_for(packet.dst) as f64,
        view.degree(u) as f64,
    ]
}

fn normalize_device(raw: &[f64; DEVICE_LEN], caps: &FeatureCaps) -> [f64; DEVICE_LEN] {
    let max = caps.device_maxima();
    std::array::from_fn(|i| normalize(raw[i], max[i]))
}

/// Raw state features; the neighbor aggregates are `None` without up
/// neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct RawState {
    pub packet: [f64; PACKET_LEN],
    pub device: [f64; DEVICE_LEN],
    /// Per device feature: `[min, mean, max]` over up neighbors.
    pub neighbors: Option<[[f64; 3]; DEVICE_LEN]>,
}

fn aggregate(rows: &[[f64; DEVICE_LEN]]) -> Option<[[f64; 3]; DEVICE_LEN]> {
    if rows.is_empty() {
        return None;
    }
    Some(std::array::from_fn(|i| {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for r in rows {
            lo = lo.min(r[i]);
            hi = hi.max(r[i]);
            sum += r[i];
        }
        [lo, sum / rows.len() as f64, hi]
    }))
}

/// Raw state for the packet at `queue_pos` of device `v`'s queue.
pub fn raw_state(view: &NetworkView<'_>, v: DeviceId, packet: &Packet, queue_pos: usize) -> RawState {
    let nbr: Vec<[f64; DEVICE_LEN]> = view
        .neighbors(v)
        .map(|u| device_features(view, u, packet))
        .collect();
    RawState {
        packet: [packet.ttl as f64, queue_pos as f64],
        device: device_features(view, v, packet),
        neighbors: aggregate(&nbr),
    }
}

pub fn normalize_state(raw: &RawState, caps: &FeatureCaps) -> StateFeatures {
    let mut out = [EMPTY_NEIGHBOR_SENTINEL; STATE_LEN];
    out[0] = normalize(raw.packet[0], caps.ttl as f64);
    out[1] = normalize(raw.packet[1], caps.queue_capacity as f64);
    out[2..6].copy_from_slice(&normalize_device(&raw.device, caps));
    if let Some(agg) = raw.neighbors {
        let max = caps.device_maxima();
        for (i, triple) in agg.iter().enumerate() {
            for (j, &x) in triple.iter().enumerate() {
                out[6 + 3 * i + j] = normalize(x, max[i]);
            }
        }
    }
    out
}

/// Normalized state features for the packet at `queue_pos` of `v`'s queue.
pub fn state_features(view: &NetworkView<'_>, v: DeviceId, packet: &Packet, queue_pos: usize) -> StateFeatures {
    normalize_state(&raw_state(view, v, packet, queue_pos), &FeatureCaps::from_view(view))
}

/// Normalized action features of candidate `u` (may equal the current
/// device, meaning stay).
pub fn action_features(view: &NetworkView<'_>, u: DeviceId, packet: &Packet) -> ActionFeatures {
    normalize_device(&device_features(view, u, packet), &FeatureCaps::from_view(view))
}

/// Features for one routing decision of the head packet at `v`: the shared
/// state and one action vector per candidate. Candidates are the up
/// neighbors in ascending order followed by `v` itself (stay).
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionFeatures {
    pub state: StateFeatures,
    pub candidates: Vec<DeviceId>,
    pub actions: Vec<ActionFeatures>,
}

impl DecisionFeatures {
    pub fn compute(view: &NetworkView<'_>, v: DeviceId, packet: &Packet, queue_pos: usize) -> Self {
        let caps = FeatureCaps::from_view(view);
        let mut candidates: Vec<DeviceId> = view.neighbors(v).collect();
        let nbr_raw: Vec<[f64; DEVICE_LEN]> = candidates
            .iter()
            .map(|&u| device_features(view, u, packet))
            .collect();
        let own_raw = device_features(view, v, packet);
        let raw = RawState {
            packet: [packet.ttl as f64, queue_pos as f64],
            device: own_raw,
            neighbors: aggregate(&nbr_raw),
        };
        let mut actions: Vec<ActionFeatures> =
            nbr_raw.iter().map(|r| normalize_device(r, &caps)).collect();
        candidates.push(v);
        actions.push(normalize_device(&own_raw, &caps));
        DecisionFeatures {
            state: normalize_state(&raw, &caps),
            candidates,
            actions,
        }
    }

    /// Network input for candidate `i`: state followed by action.
    pub fn input(&self, i: usize) -> [f64; INPUT_LEN] {
        join(&self.state, &self.actions[i])
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

pub fn join(state: &StateFeatures, action: &ActionFeatures) -> [f64; INPUT_LEN] {
    let mut x = [0.0; INPUT_LEN];
    x[..STATE_LEN].copy_from_slice(state);
    x[STATE_LEN..].copy_from_slice(action);
    x
}
