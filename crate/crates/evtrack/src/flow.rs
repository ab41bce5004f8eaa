//! Sparse event-based optical flow: triplet matching inside grid cells and
//! spatio-temporal registration of the candidate flows.

use crate::config::Config;
use crate::types::Event;
use nalgebra::Vector2;
use std::collections::BTreeMap;
use std::collections::VecDeque;

/// One flow estimate for a grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowVector {
    /// RoI anchor (centroid of the contributing events), pixels.
    pub u: f64,
    pub v: f64,
    /// Flow, pixels per second.
    pub fu: f64,
    pub fv: f64,
    /// Time of the estimate, seconds.
    pub t: f64,
    /// Number of candidate flows agreeing with the selected one.
    pub support: usize,
}

/// A matched event triplet, indices into the cell buffer, time-ordered.
pub type Triplet = [usize; 3];

fn px(e: &Event) -> Vector2<f64> {
    Vector2::new(e.x as f64, e.y as f64)
}

/// All ordered triples (t_i < t_j < t_k) consistent with constant image
/// velocity: a time slack tau' with |tau'| <= tau must make the two
/// displacement rates equal, and the displacements must be collinear within
/// `collinearity_tol` pixels.
pub fn find_triplets(cell_events: &[Event], tau: f64, collinearity_tol: f64) -> Vec<Triplet> {
    let n = cell_events.len();
    let mut out = Vec::new();
    if n < 3 {
        return out;
    }
    // displacement inside one cell is bounded by its diagonal; used to cut
    // the k scan short once t_k is too late for any consistent velocity
    let max_disp = 64.0;
    // intervals much shorter than the tolerance carry no velocity
    // information: the slack term can then reconcile any spacing, so
    // near-simultaneous events (e.g. a whole edge segment triggering one
    // column at once) would otherwise spawn arbitrarily fast candidates
    let min_dt = 0.5 * tau;
    for i in 0..n {
        for j in (i + 1)..n {
            let dt1 = cell_events[j].t - cell_events[i].t;
            if dt1 <= 0.0 || dt1 < min_dt {
                continue;
            }
            let d1 = px(&cell_events[j]) - px(&cell_events[i]);
            let v1 = d1 / dt1;
            let speed = v1.norm();
            let t_cut = if speed > 1e-9 {
                cell_events[j].t + max_disp / speed + tau
            } else {
                f64::INFINITY
            };
            for k in (j + 1)..n {
                let ek = &cell_events[k];
                if ek.t > t_cut {
                    break;
                }
                let dt2 = ek.t - cell_events[j].t;
                if dt2 <= 0.0 || dt2 < min_dt {
                    continue;
                }
                let d2 = px(ek) - px(&cell_events[j]);
                if speed <= 1e-9 {
                    // stationary first pair: consistent only if the third
                    // event is at the same place
                    if d2.norm() <= collinearity_tol {
                        out.push([i, j, k]);
                    }
                    continue;
                }
                // best time slack making the rates equal along v1
                let slack = d2.dot(&v1) / (speed * speed) - dt2;
                if slack.abs() > tau {
                    continue;
                }
                let residual = d2 - v1 * (dt2 + slack);
                if residual.norm() <= collinearity_tol {
                    out.push([i, j, k]);
                }
            }
        }
    }
    out
}

/// Candidate flow from a triplet's endpoints: (x_k - x_i) / (t_k - t_i).
pub fn triplet_flow(e_i: &Event, e_k: &Event) -> Option<Vector2<f64>> {
    let dt = e_k.t - e_i.t;
    if dt <= 0.0 {
        return None;
    }
    Some((px(e_k) - px(e_i)) / dt)
}

/// Registration result: the winning candidate with its cost and support.
#[derive(Debug, Clone, Copy)]
pub struct Registration {
    pub index: usize,
    pub flow: Vector2<f64>,
    pub cost: f64,
    pub support: usize,
}

/// Select the candidate flow minimizing the summed per-event nearest-candidate
/// distance. `associations[c]` lists the event indices of candidate `c`'s
/// triplet. Ties break by larger support (count of near-identical candidates),
/// then by earliest candidate.
pub fn register_roi(
    candidates: &[Vector2<f64>],
    associations: &[Vec<usize>],
    n_events: usize,
) -> Option<Registration> {
    if candidates.is_empty() {
        return None;
    }
    // per-event candidate subsets M_i
    let mut per_event: Vec<Vec<usize>> = vec![Vec::new(); n_events];
    for (c, evs) in associations.iter().enumerate() {
        for &e in evs {
            per_event[e].push(c);
        }
    }
    let cost_of = |f: &Vector2<f64>| -> f64 {
        per_event
            .iter()
            .filter(|m| !m.is_empty())
            .map(|m| {
                m.iter()
                    .map(|&c| (f - candidates[c]).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    };
    let support_of = |f: &Vector2<f64>| -> usize {
        candidates.iter().filter(|c| (*c - f).norm() <= 1e-6).count()
    };
    let mut best: Option<Registration> = None;
    for (idx, cand) in candidates.iter().enumerate() {
        let cost = cost_of(cand);
        let better = match &best {
            None => true,
            Some(b) => {
                if cost < b.cost - 1e-12 {
                    true
                } else if cost <= b.cost + 1e-12 {
                    let s = support_of(cand);
                    s > b.support // equal support keeps the earlier candidate
                } else {
                    false
                }
            }
        };
        if better {
            best = Some(Registration { index: idx, flow: *cand, cost, support: support_of(cand) });
        }
    }
    best
}

/// Per-cell event buffers over a sliding time window.
#[derive(Debug, Clone)]
pub struct RoiGrid {
    cell_size: u32,
    window: f64,
    max_per_cell: usize,
    min_events: usize,
    tau: f64,
    collinearity_tol: f64,
    cells: BTreeMap<(u32, u32), VecDeque<Event>>,
}

impl RoiGrid {
    pub fn new(config: &Config) -> Self {
        Self {
            cell_size: config.flow_cell_size,
            window: config.flow_window,
            max_per_cell: config.flow_max_events_per_cell,
            min_events: config.flow_min_events,
            tau: config.flow_tau,
            collinearity_tol: config.flow_collinearity_tol,
            cells: BTreeMap::new(),
        }
    }

    /// Ingest a cycle's events, evict stale ones, and run triplet matching +
    /// registration per cell. Returns one FlowVector per successful cell.
    pub fn step(&mut self, new_events: &[Event], now: f64) -> Vec<FlowVector> {
        let mut touched = std::collections::BTreeSet::new();
        for e in new_events {
            let key = (e.x / self.cell_size, e.y / self.cell_size);
            let buf = self.cells.entry(key).or_default();
            buf.push_back(*e);
            if buf.len() > self.max_per_cell {
                buf.pop_front();
            }
            touched.insert(key);
        }
        let horizon = now - self.window;
        self.cells.retain(|_, buf| {
            while buf.front().is_some_and(|e| e.t < horizon) {
                buf.pop_front();
            }
            !buf.is_empty()
        });

        let mut flows = Vec::new();
        // only cells that received events this cycle produce a measurement:
        // re-running registration on an untouched buffer would replay the
        // previous cycle's flow as if it were fresh, independent evidence
        for key in &touched {
            let Some(buf) = self.cells.get(key) else { continue };
            if buf.len() < self.min_events {
                continue;
            }
            let events: Vec<Event> = buf.iter().copied().collect();
            let triplets = find_triplets(&events, self.tau, self.collinearity_tol);
            // merge near-identical candidates before registration: straight
            // edges under uniform motion can emit thousands of triplets with
            // (almost) the same flow, and the registration cost is quadratic
            // in the number of distinct candidates
            const QUANTUM: f64 = 2.0; // px/s
            let mut keyed: Vec<((i64, i64), [usize; 3], Vector2<f64>)> =
                Vec::with_capacity(triplets.len());
            for t in &triplets {
                if let Some(f) = triplet_flow(&events[t[0]], &events[t[2]]) {
                    let key = ((f.x / QUANTUM).round() as i64, (f.y / QUANTUM).round() as i64);
                    keyed.push((key, *t, f));
                }
            }
            keyed.sort_unstable_by_key(|e| e.0);
            let mut bins: Vec<(Vector2<f64>, Vec<usize>, usize)> = Vec::new();
            let mut i = 0usize;
            while i < keyed.len() {
                let key = keyed[i].0;
                let mut assoc = Vec::new();
                let mut count = 0usize;
                let flow = keyed[i].2;
                while i < keyed.len() && keyed[i].0 == key {
                    assoc.extend_from_slice(&keyed[i].1);
                    count += 1;
                    i += 1;
                }
                assoc.sort_unstable();
                assoc.dedup();
                bins.push((flow, assoc, count));
            }
            // keep the highest-multiplicity bins: the registration cost is
            // O(candidates x associations) and the Eq. 3 minimizer is a
            // consensus flow, so low-multiplicity outliers never win
            const MAX_CANDIDATES: usize = 64;
            if bins.len() > MAX_CANDIDATES {
                bins.sort_by(|a, b| b.2.cmp(&a.2));
                bins.truncate(MAX_CANDIDATES);
            }
            let mut candidates = Vec::with_capacity(bins.len());
            let mut associations = Vec::with_capacity(bins.len());
            let mut multiplicity = Vec::with_capacity(bins.len());
            for (f, assoc, count) in bins {
                candidates.push(f);
                associations.push(assoc);
                multiplicity.push(count);
            }
            if let Some(mut reg) = register_roi(&candidates, &associations, events.len()) {
                // support counts every triplet consistent with the registered
                // flow, not only the exact winning bin: timestamp jitter
                // spreads one physical motion across neighbouring bins, and
                // the spread-out copies corroborate the same measurement
                let tol = 4.0 + 0.02 * reg.flow.norm();
                reg.support = candidates
                    .iter()
                    .zip(&multiplicity)
                    .filter(|(f, _)| (*f - reg.flow).norm() <= tol)
                    .map(|(_, m)| m)
                    .sum();
                let n = events.len() as f64;
                let cu = events.iter().map(|e| e.x as f64).sum::<f64>() / n;
                let cv = events.iter().map(|e| e.y as f64).sum::<f64>() / n;
                flows.push(FlowVector {
                    u: cu,
                    v: cv,
                    fu: reg.flow.x,
                    fv: reg.flow.y,
                    t: now,
                    support: reg.support,
                });
            }
        }
        flows
    }

    pub fn active_cells(&self) -> usize {
        self.cells.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(x: u32, y: u32, t: f64) -> Event {
        Event { t, x, y, polarity: 1 }
    }

    #[test]
    fn uniform_motion_makes_one_triplet() {
        let events = [ev(10, 10, 0.000), ev(11, 10, 0.001), ev(12, 10, 0.002)];
        let triplets = find_triplets(&events, 0.0005, 1.0);
        assert_eq!(triplets, vec![[0, 1, 2]]);
        let f = triplet_flow(&events[0], &events[2]).unwrap();
        assert_eq!((f.x, f.y), (1000.0, 0.0));
    }

    #[test]
    fn velocity_mismatch_rejected() {
        let events = [ev(10, 10, 0.000), ev(11, 10, 0.001), ev(20, 10, 0.002)];
        assert!(find_triplets(&events, 0.0005, 1.0).is_empty());
    }

    #[test]
    fn five_collinear_events_give_all_ten_triples() {
        let events: Vec<Event> = (0..5).map(|i| ev(10 + i, 10, i as f64 * 0.001)).collect();
        let triplets = find_triplets(&events, 0.0005, 1.0);
        assert_eq!(triplets.len(), 10); // C(5,3)

        // brute-force oracle: enumerate all ordered triples and check the
        // constraint directly
        let mut oracle = 0;
        for i in 0..5 {
            for j in (i + 1)..5 {
                for k in (j + 1)..5 {
                    let d1 = px(&events[j]) - px(&events[i]);
                    let dt1 = events[j].t - events[i].t;
                    let d2 = px(&events[k]) - px(&events[j]);
                    let dt2 = events[k].t - events[j].t;
                    let v1 = d1 / dt1;
                    let slack = d2.dot(&v1) / v1.norm_squared() - dt2;
                    if slack.abs() <= 0.0005 && (d2 - v1 * (dt2 + slack)).norm() <= 1.0 {
                        oracle += 1;
                    }
                }
            }
        }
        assert_eq!(oracle, 10);
    }

    #[test]
    fn triplet_flow_examples() {
        let f = triplet_flow(&ev(10, 10, 0.000), &ev(12, 10, 0.002)).unwrap();
        assert_eq!((f.x, f.y), (1000.0, 0.0));
        let f = triplet_flow(&ev(10, 10, 0.000), &ev(10, 10, 0.002)).unwrap();
        assert_eq!((f.x, f.y), (0.0, 0.0));
        let f = triplet_flow(&ev(10, 10, 0.000), &ev(11, 12, 0.001)).unwrap();
        assert_eq!((f.x, f.y), (1000.0, 2000.0));
        assert!(triplet_flow(&ev(10, 10, 0.001), &ev(11, 10, 0.001)).is_none());
    }

    #[test]
    fn register_singleton() {
        let cands = vec![Vector2::new(1000.0, 0.0)];
        let assoc = vec![vec![0, 1, 2]];
        let reg = register_roi(&cands, &assoc, 3).unwrap();
        assert_eq!(reg.flow, Vector2::new(1000.0, 0.0));
        assert_eq!(reg.cost, 0.0);
    }

    #[test]
    fn register_outlier_suppressed() {
        // 9 identical candidates spread over 10 events, 1 outlier
        let mut cands = Vec::new();
        let mut assoc = Vec::new();
        for i in 0..9usize {
            cands.push(Vector2::new(1000.0, 0.0));
            assoc.push(vec![i % 10, (i + 1) % 10, (i + 2) % 10]);
        }
        cands.push(Vector2::new(5000.0, 5000.0));
        assoc.push(vec![0, 4, 9]);
        let reg = register_roi(&cands, &assoc, 10).unwrap();
        assert_eq!(reg.flow, Vector2::new(1000.0, 0.0));
        assert_eq!(reg.support, 9);
    }

    #[test]
    fn register_tie_breaks_by_support_then_order() {
        // two symmetric candidates with identical costs; duplicate the second
        // so it has larger support
        let cands = vec![
            Vector2::new(100.0, 0.0),
            Vector2::new(-100.0, 0.0),
            Vector2::new(-100.0, 0.0),
        ];
        let assoc = vec![vec![0], vec![1], vec![2]];
        // costs: each candidate is 0 from its own M_i entries and 200 from the
        // others -> cand0: 0+200+200=400, cand1/2: 200+0+0=200 -> no tie here.
        let reg = register_roi(&cands, &assoc, 3).unwrap();
        assert_eq!(reg.flow, Vector2::new(-100.0, 0.0));
        assert_eq!(reg.support, 2);

        // true tie: two single candidates associated to disjoint events
        let cands = vec![Vector2::new(100.0, 0.0), Vector2::new(-100.0, 0.0)];
        let assoc = vec![vec![0], vec![1]];
        let reg = register_roi(&cands, &assoc, 2).unwrap();
        assert_eq!(reg.index, 0, "equal cost and support resolves to earliest");
    }

    #[test]
    fn step_empty_and_min_count() {
        let mut grid = RoiGrid::new(&Config::default());
        assert!(grid.step(&[], 0.002).is_empty());
        // below min event count: no flow
        let evs: Vec<Event> = (0..4).map(|i| ev(10 + i, 10, i as f64 * 0.001)).collect();
        assert!(grid.step(&evs, 0.004).is_empty());
    }

    #[test]
    fn step_constant_motion_recovers_flow() {
        let mut grid = RoiGrid::new(&Config::default());
        // a point moving at 500 px/s through one cell: 1 event per 2 ms
        let evs: Vec<Event> = (0..8).map(|i| ev(2 + i, 10, i as f64 * 0.002)).collect();
        let flows = grid.step(&evs, 0.016);
        assert_eq!(flows.len(), 1);
        let f = &flows[0];
        assert!((f.fu - 500.0).abs() < 1.0, "fu = {}", f.fu);
        assert!(f.fv.abs() < 1.0);
        assert!(f.support >= 1);
    }

    #[test]
    fn step_evicts_old_events() {
        let mut grid = RoiGrid::new(&Config::default());
        let evs: Vec<Event> = (0..8).map(|i| ev(2 + i, 10, i as f64 * 0.002)).collect();
        grid.step(&evs, 0.016);
        assert_eq!(grid.active_cells(), 1);
        // advance beyond the window with no new events
        grid.step(&[], 1.0);
        assert_eq!(grid.active_cells(), 0);
    }

    #[test]
    fn translation_equivariance() {
        let cfg = Config::default();
        let base: Vec<Event> = (0..8).map(|i| ev(2 + i, 10, i as f64 * 0.002)).collect();
        let shifted: Vec<Event> =
            base.iter().map(|e| ev(e.x + 100, e.y + 60, e.t)).collect();
        let fa = RoiGrid::new(&cfg).step(&base, 0.016);
        let fb = RoiGrid::new(&cfg).step(&shifted, 0.016);
        assert_eq!(fa.len(), 1);
        assert_eq!(fb.len(), 1);
        assert_eq!((fa[0].fu, fa[0].fv), (fb[0].fu, fb[0].fv));
        assert_eq!(fb[0].u - fa[0].u, 100.0);
        assert_eq!(fb[0].v - fa[0].v, 60.0);
    }

    #[test]
    fn time_scaling_covariance() {
        let mut cfg = Config::default();
        let base: Vec<Event> = (0..8).map(|i| ev(2 + i, 10, i as f64 * 0.002)).collect();
        let fa = RoiGrid::new(&cfg).step(&base, 0.016);
        // scale all timestamps by 2, tau and window likewise
        let slowed: Vec<Event> = base.iter().map(|e| ev(e.x, e.y, e.t * 2.0)).collect();
        cfg.flow_tau *= 2.0;
        cfg.flow_window *= 2.0;
        let fb = RoiGrid::new(&cfg).step(&slowed, 0.032);
        assert_eq!(fa.len(), 1);
        assert_eq!(fb.len(), 1);
        assert!((fb[0].fu - fa[0].fu / 2.0).abs() < 1e-9);
        assert!((fb[0].fv - fa[0].fv / 2.0).abs() < 1e-9);
    }

    proptest::proptest! {
        /// Eq. 3 optimality: the registered flow never has higher cost than
        /// any other candidate (brute-force re-evaluation).
        #[test]
        fn registration_is_brute_force_optimal(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n_events = rng.random_range(3..20usize);
            let n_cands = rng.random_range(1..30usize);
            let mut cands = Vec::new();
            let mut assoc = Vec::new();
            for _ in 0..n_cands {
                cands.push(Vector2::new(
                    rng.random_range(-2000.0..2000.0),
                    rng.random_range(-2000.0..2000.0),
                ));
                let mut evs = Vec::new();
                for _ in 0..3 {
                    evs.push(rng.random_range(0..n_events));
                }
                assoc.push(evs);
            }
            let reg = register_roi(&cands, &assoc, n_events).unwrap();
            // independent brute force
            let mut per_event: Vec<Vec<usize>> = vec![Vec::new(); n_events];
            for (c, evs) in assoc.iter().enumerate() {
                for &e in evs {
                    per_event[e].push(c);
                }
            }
            let brute = |f: &Vector2<f64>| -> f64 {
                let mut total = 0.0;
                for m in &per_event {
                    if m.is_empty() { continue; }
                    let mut best = f64::INFINITY;
                    for &c in m {
                        best = best.min((f - cands[c]).norm());
                    }
                    total += best;
                }
                total
            };
            let chosen = brute(&reg.flow);
            for c in &cands {
                proptest::prop_assert!(chosen <= brute(c) + 1e-9);
            }
        }
    }
}
