//! Flow demands, directed node–link incidence and flow-conservation residuals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constellation::Topology;
use crate::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrafficError {
    #[error("need at least two satellites to form a flow, got {0}")]
    TooFewSatellites(usize),
    #[error("need at least one flow")]
    NoFlows,
    #[error("traffic intensity must be positive, got {0}")]
    Intensity(f64),
    #[error("weight table has {got} entries, expected {expected}")]
    WeightTable { got: usize, expected: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Flow<T> {
    pub id: usize,
    pub source: usize,
    pub sink: usize,
    /// Per-slot rate requirement in bits/s.
    pub demand: T,
}

impl<T: Real> Flow<T> {
    /// `[b^ω]_m`: +d at the source, −d at the sink.
    pub fn balance(&self, m: usize) -> T {
        if m == self.source {
            self.demand
        } else if m == self.sink {
            -self.demand
        } else {
            T::zero()
        }
    }
}

/// Flows with uniform source/sink pairs. Demands are drawn with random relative weights
/// and rescaled so `Σ d = intensity · num_flows · hop_capacity`.
pub fn generate_flows<T: Real>(
    seed: u64,
    num_satellites: usize,
    num_flows: usize,
    intensity: T,
    hop_capacity: T,
) -> Result<Vec<Flow<T>>, TrafficError> {
    generate_weighted_flows(seed, num_satellites, num_flows, intensity, hop_capacity, None)
}

/// As [`generate_flows`], with optional per-satellite endpoint weights.
pub fn generate_weighted_flows<T: Real>(
    seed: u64,
    num_satellites: usize,
    num_flows: usize,
    intensity: T,
    hop_capacity: T,
    endpoint_weights: Option<&[f64]>,
) -> Result<Vec<Flow<T>>, TrafficError> {
    if num_satellites < 2 {
        return Err(TrafficError::TooFewSatellites(num_satellites));
    }
    if num_flows == 0 {
        return Err(TrafficError::NoFlows);
    }
    if !(intensity > T::zero()) {
        return Err(TrafficError::Intensity(intensity.to_f64_lossy()));
    }
    if let Some(w) = endpoint_weights {
        if w.len() != num_satellites {
            return Err(TrafficError::WeightTable { got: w.len(), expected: num_satellites });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = |rng: &mut ChaCha8Rng, exclude: Option<usize>| -> usize {
        match endpoint_weights {
            None => loop {
                let c = rng.random_range(0..num_satellites);
                if Some(c) != exclude {
                    return c;
                }
            },
            Some(w) => {
                let total: f64 = w.iter().enumerate().filter(|(i, _)| Some(*i) != exclude).map(|(_, x)| *x).sum();
                let mut u = rng.random::<f64>() * total;
                let mut last = 0;
                for (i, x) in w.iter().enumerate() {
                    if Some(i) == exclude {
                        continue;
                    }
                    last = i;
                    if u < *x {
                        return i;
                    }
                    u -= *x;
                }
                last
            }
        }
    };
    let mut raw = Vec::with_capacity(num_flows);
    for id in 0..num_flows {
        let source = pick(&mut rng, None);
        let sink = pick(&mut rng, Some(source));
        let weight = 0.5 + rng.random::<f64>();
        raw.push((id, source, sink, weight));
    }
    let wsum: f64 = raw.iter().map(|r| r.3).sum();
    let total = intensity * T::from_usize_lossy(num_flows) * hop_capacity;
    Ok(raw
        .into_iter()
        .map(|(id, source, sink, w)| Flow { id, source, sink, demand: total * T::lit(w / wsum) })
        .collect())
}

/// Directed links of one slot. Satellite `m` owns the contiguous edge range `out_range(m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSet {
    pub num_nodes: usize,
    pub from: Vec<usize>,
    pub to: Vec<usize>,
    out_start: Vec<usize>,
    /// Incoming edge ids per node, ascending.
    pub incoming: Vec<Vec<usize>>,
}

impl LinkSet {
    pub fn from_topology(topo: &Topology) -> Self {
        let n = topo.num_satellites;
        let mut from = Vec::new();
        let mut to = Vec::new();
        let mut out_start = Vec::with_capacity(n + 1);
        let mut incoming = vec![Vec::new(); n];
        for m in 0..n {
            out_start.push(from.len());
            for &k in &topo.neighbors[m] {
                incoming[k].push(from.len());
                from.push(m);
                to.push(k);
            }
        }
        out_start.push(from.len());
        LinkSet { num_nodes: n, from, to, out_start, incoming }
    }

    pub fn num_edges(&self) -> usize {
        self.from.len()
    }

    pub fn out_range(&self, m: usize) -> std::ops::Range<usize> {
        self.out_start[m]..self.out_start[m + 1]
    }

    /// Number of satellites whose incidence rows touch node `l`: its degree plus itself.
    pub fn coupling_count(&self, l: usize) -> usize {
        self.out_range(l).len() + 1
    }

    pub fn edge(&self, m: usize, n: usize) -> Option<usize> {
        self.out_range(m).find(|&e| self.to[e] == n)
    }
}

/// Per-flow, per-directed-edge rates `Y^ω_{m,n}`, row-major `[flow][edge]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowAllocation<T> {
    pub num_flows: usize,
    pub num_edges: usize,
    pub y: Vec<T>,
}

impl<T: Real> FlowAllocation<T> {
    pub fn zeros(num_flows: usize, num_edges: usize) -> Self {
        FlowAllocation { num_flows, num_edges, y: vec![T::zero(); num_flows * num_edges] }
    }

    #[inline]
    pub fn get(&self, flow: usize, edge: usize) -> T {
        self.y[flow * self.num_edges + edge]
    }

    #[inline]
    pub fn set(&mut self, flow: usize, edge: usize, v: T) {
        self.y[flow * self.num_edges + edge] = v;
    }

    /// `R_{m,n} = Σ_ω Y^ω_{m,n}`.
    pub fn link_rate(&self, edge: usize) -> T {
        (0..self.num_flows).map(|w| self.get(w, edge)).sum()
    }

    pub fn link_rates(&self) -> Vec<T> {
        (0..self.num_edges).map(|e| self.link_rate(e)).collect()
    }
}

/// `outflow − inflow − [b^ω]_m`, row-major `[flow][node]`.
pub fn conservation_residual<T: Real>(alloc: &FlowAllocation<T>, flows: &[Flow<T>], links: &LinkSet) -> Vec<T> {
    let n = links.num_nodes;
    let mut r = vec![T::zero(); flows.len() * n];
    for (w, flow) in flows.iter().enumerate() {
        let row = &mut r[w * n..(w + 1) * n];
        node_residuals(alloc, w, flow, links, row);
    }
    r
}

pub(crate) fn node_residuals<T: Real>(alloc: &FlowAllocation<T>, w: usize, flow: &Flow<T>, links: &LinkSet, row: &mut [T]) {
    for (l, slot) in row.iter_mut().enumerate() {
        let out: T = links.out_range(l).map(|e| alloc.get(w, e)).sum();
        let inn: T = links.incoming[l].iter().map(|&e| alloc.get(w, e)).sum();
        *slot = out - inn - flow.balance(l);
    }
}

/// Net absorption at each flow's sink, `inflow − outflow`.
pub fn delivered<T: Real>(alloc: &FlowAllocation<T>, flows: &[Flow<T>], links: &LinkSet) -> Vec<T> {
    flows
        .iter()
        .enumerate()
        .map(|(w, f)| {
            let inn: T = links.incoming[f.sink].iter().map(|&e| alloc.get(w, e)).sum();
            let out: T = links.out_range(f.sink).map(|e| alloc.get(w, e)).sum();
            inn - out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> LinkSet {
        let topo = Topology { num_satellites: 3, neighbors: vec![vec![1], vec![0, 2], vec![1]] };
        LinkSet::from_topology(&topo)
    }

    #[test]
    fn determinism_and_scaling() {
        let a = generate_flows::<f64>(7, 20, 6, 0.65, 1e9).unwrap();
        let b = generate_flows::<f64>(7, 20, 6, 0.65, 1e9).unwrap();
        assert_eq!(a, b);
        let total: f64 = a.iter().map(|f| f.demand).sum();
        assert!((total / (6.0 * 1e9) - 0.65).abs() < 1e-6);
        for f in &a {
            assert_ne!(f.source, f.sink);
            let s: f64 = (0..20).map(|m| f.balance(m)).sum();
            assert_eq!(s, 0.0);
        }
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(generate_flows::<f64>(0, 1, 3, 0.5, 1.0).is_err());
        assert!(generate_flows::<f64>(0, 4, 0, 0.5, 1.0).is_err());
        assert!(generate_flows::<f64>(0, 4, 2, 0.0, 1.0).is_err());
    }

    #[test]
    fn residual_examples() {
        let links = path3();
        let zero = FlowAllocation::<f64>::zeros(1, links.num_edges());
        let f0 = Flow { id: 0, source: 0, sink: 2, demand: 0.0 };
        assert!(conservation_residual(&zero, &[f0], &links).iter().all(|&r| r == 0.0));

        let flow = Flow { id: 0, source: 0, sink: 2, demand: 10.0 };
        let mut y = FlowAllocation::zeros(1, links.num_edges());
        y.set(0, links.edge(0, 1).unwrap(), 10.0);
        y.set(0, links.edge(1, 2).unwrap(), 10.0);
        let r = conservation_residual(&y, std::slice::from_ref(&flow), &links);
        assert!(r.iter().all(|&x| x == 0.0));
        assert_eq!(delivered(&y, std::slice::from_ref(&flow), &links), vec![10.0]);

        let mut y = FlowAllocation::zeros(1, links.num_edges());
        y.set(0, links.edge(0, 1).unwrap(), 6.0);
        let r = conservation_residual(&y, std::slice::from_ref(&flow), &links);
        assert_eq!(r[0], -4.0);
    }

    #[test]
    fn weighted_endpoints_respect_table() {
        let mut w = vec![0.0; 5];
        w[1] = 1.0;
        w[3] = 1.0;
        let f = generate_weighted_flows::<f64>(1, 5, 10, 0.5, 1.0, Some(&w)).unwrap();
        for fl in f {
            assert!([1, 3].contains(&fl.source) && [1, 3].contains(&fl.sink));
        }
    }
}
