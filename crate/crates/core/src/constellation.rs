//! Circular-orbit Walker-style constellation: phases, eclipse schedule,
//! positions and the per-slot +Grid adjacency.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConstellationError {
    #[error("eclipse fraction {0} outside [0, 1]")]
    EclipseFraction(f64),
    #[error("{satellites} satellites not divisible into {planes} planes")]
    PlaneSplit { satellites: usize, planes: usize },
    #[error("invalid constellation parameter: {0}")]
    Invalid(&'static str),
    #[error("distance between a satellite and itself is undefined (index {0})")]
    SameSatellite(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstellationConfig<T> {
    pub num_satellites: usize,
    pub num_planes: usize,
    pub altitude: T,
    pub inclination: T,
    pub orbit_period: T,
    pub eclipse_fraction: T,
    pub slot_duration: T,
    pub num_slots: usize,
    pub earth_radius: T,
}

impl<T: Real> ConstellationConfig<T> {
    pub fn validate(&self) -> Result<(), ConstellationError> {
        let theta = self.eclipse_fraction;
        if !(theta >= T::zero() && theta <= T::one()) {
            return Err(ConstellationError::EclipseFraction(theta.to_f64_lossy()));
        }
        if self.num_planes == 0 || self.num_satellites % self.num_planes != 0 {
            return Err(ConstellationError::PlaneSplit {
                satellites: self.num_satellites,
                planes: self.num_planes,
            });
        }
        if self.num_satellites == 0 {
            return Err(ConstellationError::Invalid("num_satellites must be positive"));
        }
        if !(self.slot_duration > T::zero()) {
            return Err(ConstellationError::Invalid("slot_duration must be positive"));
        }
        if !(self.orbit_period > T::zero()) {
            return Err(ConstellationError::Invalid("orbit_period must be positive"));
        }
        if self.num_slots == 0 {
            return Err(ConstellationError::Invalid("num_slots must be at least 1"));
        }
        Ok(())
    }

    pub fn per_plane(&self) -> usize {
        self.num_satellites / self.num_planes
    }

    pub fn orbit_radius(&self) -> T {
        self.earth_radius + self.altitude
    }

    pub fn eclipse_duration(&self) -> T {
        self.eclipse_fraction * self.orbit_period
    }
}

/// Per-satellite, per-slot orbital state. All vectors are row-major `[slot][satellite]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ephemeris<T> {
    pub num_satellites: usize,
    pub num_slots: usize,
    pub per_plane: usize,
    pub position: Vec<[T; 3]>,
    pub phase: Vec<T>,
    pub illuminated: Vec<bool>,
    pub panel_angle: Vec<T>,
    /// Time to the end of the current eclipse when dark, the next eclipse's duration when lit.
    pub remaining_eclipse: Vec<T>,
}

impl<T: Real> Ephemeris<T> {
    #[inline]
    fn idx(&self, m: usize, t: usize) -> usize {
        t * self.num_satellites + m
    }

    pub fn position(&self, m: usize, t: usize) -> [T; 3] {
        self.position[self.idx(m, t)]
    }

    pub fn illuminated(&self, m: usize, t: usize) -> bool {
        self.illuminated[self.idx(m, t)]
    }

    pub fn panel_angle(&self, m: usize, t: usize) -> T {
        self.panel_angle[self.idx(m, t)]
    }

    pub fn remaining_eclipse(&self, m: usize, t: usize) -> T {
        self.remaining_eclipse[self.idx(m, t)]
    }

    pub fn plane_of(&self, m: usize) -> usize {
        m / self.per_plane
    }

    pub fn distance(&self, m: usize, n: usize, t: usize) -> Result<T, ConstellationError> {
        if m == n {
            return Err(ConstellationError::SameSatellite(m));
        }
        Ok(euclid(self.position(m, t), self.position(n, t)))
    }
}

fn euclid<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

fn wrap_2pi<T: Real>(x: T) -> T {
    let tau = T::TAU();
    let r = x % tau;
    if r < T::zero() { r + tau } else { r }
}

/// Start angle of plane `p`'s eclipse arc, measured in orbital phase.
fn eclipse_anchor<T: Real>(cfg: &ConstellationConfig<T>, p: usize) -> T {
    let stagger = T::TAU() * T::from_usize_lossy(p) / T::from_usize_lossy(cfg.num_satellites);
    T::PI() * (T::one() - cfg.eclipse_fraction) + stagger
}

/// Deterministic circular-orbit propagation. The seed only sets the common epoch phase.
pub fn propagate<T: Real>(cfg: &ConstellationConfig<T>, seed: u64) -> Result<Ephemeris<T>, ConstellationError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let epoch = T::lit(rng.random::<f64>()) * T::TAU();
    let m_total = cfg.num_satellites;
    let s = cfg.per_plane();
    let n_planes = cfg.num_planes;
    let r = cfg.orbit_radius();
    let theta = cfg.eclipse_fraction;
    let arc = T::TAU() * theta;
    let lit_arc = T::TAU() - arc;
    let (si, ci) = cfg.inclination.sin_cos();

    let cap = m_total * cfg.num_slots;
    let mut eph = Ephemeris {
        num_satellites: m_total,
        num_slots: cfg.num_slots,
        per_plane: s,
        position: Vec::with_capacity(cap),
        phase: Vec::with_capacity(cap),
        illuminated: Vec::with_capacity(cap),
        panel_angle: Vec::with_capacity(cap),
        remaining_eclipse: Vec::with_capacity(cap),
    };
    let rate = T::TAU() / cfg.orbit_period;
    for t in 0..cfg.num_slots {
        let time = T::from_usize_lossy(t) * cfg.slot_duration;
        for m in 0..m_total {
            let p = m / s;
            let i = m % s;
            let raan = T::TAU() * T::from_usize_lossy(p) / T::from_usize_lossy(n_planes);
            let u = wrap_2pi(T::TAU() * T::from_usize_lossy(i) / T::from_usize_lossy(s) + epoch + rate * time);
            let (su, cu) = u.sin_cos();
            let (so, co) = raan.sin_cos();
            eph.position.push([
                r * (cu * co - su * ci * so),
                r * (cu * so + su * ci * co),
                r * (su * si),
            ]);
            eph.phase.push(u);

            let rel = wrap_2pi(u - eclipse_anchor(cfg, p));
            let dark = theta > T::zero() && (theta >= T::one() || rel < arc);
            eph.illuminated.push(!dark);
            if dark {
                eph.panel_angle.push(T::zero());
                let left = (arc - rel).max(T::zero()) / rate;
                // Exactly at the arc start the full eclipse lies ahead.
                eph.remaining_eclipse.push(if left > T::zero() { left } else { cfg.eclipse_duration() });
            } else {
                let sfrac = (rel - arc) / lit_arc;
                eph.panel_angle.push(T::PI() * sfrac.max(T::zero()).min(T::one()));
                let next = cfg.eclipse_duration();
                eph.remaining_eclipse.push(if next > T::zero() { next } else { cfg.slot_duration });
            }
        }
    }
    Ok(eph)
}

/// Undirected +Grid adjacency for one slot. Neighbor lists are sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    pub num_satellites: usize,
    pub neighbors: Vec<Vec<usize>>,
}

impl Topology {
    pub fn is_adjacent(&self, m: usize, n: usize) -> bool {
        self.neighbors[m].binary_search(&n).is_ok()
    }

    pub fn degree(&self, m: usize) -> usize {
        self.neighbors[m].len()
    }

    pub fn adjacency_matrix(&self) -> Vec<Vec<bool>> {
        let mut a = vec![vec![false; self.num_satellites]; self.num_satellites];
        for (m, ns) in self.neighbors.iter().enumerate() {
            for &n in ns {
                a[m][n] = true;
            }
        }
        a
    }

    fn link(&mut self, m: usize, n: usize) {
        if m == n {
            return;
        }
        if let Err(pos) = self.neighbors[m].binary_search(&n) {
            self.neighbors[m].insert(pos, n);
        }
        if let Err(pos) = self.neighbors[n].binary_search(&m) {
            self.neighbors[n].insert(pos, m);
        }
    }
}

/// Ring links inside each plane plus one shift-matching between each pair of adjacent
/// planes. The matching shift minimizes total pair distance; ties go to the smaller shift.
pub fn build_topology<T: Real>(eph: &Ephemeris<T>, t: usize) -> Topology {
    let m_total = eph.num_satellites;
    let s = eph.per_plane;
    let n_planes = m_total / s;
    let mut topo = Topology { num_satellites: m_total, neighbors: vec![Vec::new(); m_total] };
    for p in 0..n_planes {
        for i in 0..s {
            if s >= 2 {
                topo.link(p * s + i, p * s + (i + 1) % s);
            }
        }
    }
    let pairs: Vec<(usize, usize)> = match n_planes {
        0 | 1 => Vec::new(),
        2 => vec![(0, 1)],
        n => (0..n).map(|p| (p, (p + 1) % n)).collect(),
    };
    for (p, q) in pairs {
        let mut costs: Vec<(T, usize)> = (0..s)
            .map(|k| {
                let total: T = (0..s)
                    .map(|i| euclid(eph.position(p * s + i, t), eph.position(q * s + (i + k) % s, t)))
                    .sum();
                (total, k)
            })
            .collect();
        costs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
        // Two planes only: the second-best shift stands in for the missing wrap-around neighbor.
        let shifts = if n_planes == 2 { costs.iter().take(2).map(|c| c.1).collect::<Vec<_>>() } else { vec![costs[0].1] };
        for k in shifts {
            for i in 0..s {
                topo.link(p * s + i, q * s + (i + k) % s);
            }
        }
    }
    topo
}
