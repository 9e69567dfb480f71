use std::collections::BTreeSet;

use super::{Scenario, SinkPlacement, SourceRule, Topology};
use crate::engine::{Purpose, RngStream};
use crate::error::{invalid, Error, Result};
use crate::protocol::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub positions: Vec<(f64, f64)>,
    pub sink: NodeId,
    pub sources: Vec<NodeId>,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn distance(&self, a: NodeId, b: NodeId) -> f64 {
        let (ax, ay) = self.positions[a.index()];
        let (bx, by) = self.positions[b.index()];
        ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
    }
}

fn nearest(positions: &[(f64, f64)], x: f64, y: f64) -> usize {
    let d = |i: usize| (positions[i].0 - x).powi(2) + (positions[i].1 - y).powi(2);
    (0..positions.len()).fold(0, |best, i| if d(i) < d(best) { i } else { best })
}

/// Node positions, sink and sources for `scenario` under `seed`. Grid
/// layouts ignore the seed; random layouts draw from the topology stream
/// and redraw any node landing on an occupied centimetre cell.
pub fn build_topology(scenario: &Scenario, seed: u64) -> Result<Layout> {
    let (positions, width, height) = match scenario.topology {
        Topology::Grid {
            rows,
            cols,
            spacing_m,
        } => {
            let mut p = Vec::with_capacity(rows as usize * cols as usize);
            for r in 0..rows {
                for c in 0..cols {
                    p.push((c as f64 * spacing_m, r as f64 * spacing_m));
                }
            }
            let w = cols.saturating_sub(1) as f64 * spacing_m;
            let h = rows.saturating_sub(1) as f64 * spacing_m;
            (p, w, h)
        }
        Topology::Random {
            n,
            width_m,
            height_m,
        } => {
            let mut rng = RngStream::global(seed, Purpose::Topology);
            let mut taken = BTreeSet::new();
            let mut p = Vec::with_capacity(n as usize);
            while p.len() < n as usize {
                let x = rng.uniform() * width_m;
                let y = rng.uniform() * height_m;
                let cell = ((x * 100.0).round() as i64, (y * 100.0).round() as i64);
                if taken.insert(cell) {
                    p.push((x, y));
                }
            }
            (p, width_m, height_m)
        }
    };
    if positions.is_empty() {
        return Err(Error::NoNodes);
    }

    let pl = &scenario.placement;
    let sink = match pl.sink {
        SinkPlacement::Corner => nearest(&positions, 0.0, 0.0),
        SinkPlacement::Center => nearest(&positions, width / 2.0, height / 2.0),
        SinkPlacement::Explicit => {
            let [x, y] = pl
                .sink_xy
                .ok_or_else(|| invalid("explicit sink placement needs sink_xy"))?;
            nearest(&positions, x, y)
        }
    };

    let dist = |i: usize| {
        let (sx, sy) = positions[sink];
        ((positions[i].0 - sx).powi(2) + (positions[i].1 - sy).powi(2)).sqrt()
    };
    let sources: Vec<usize> = match pl.sources {
        SourceRule::All => (0..positions.len()).filter(|&i| i != sink).collect(),
        SourceRule::Extreme => {
            let mut others: Vec<usize> = (0..positions.len()).filter(|&i| i != sink).collect();
            others.sort_by(|&a, &b| dist(b).total_cmp(&dist(a)).then(a.cmp(&b)));
            others.truncate(pl.source_count as usize);
            others.sort_unstable();
            others
        }
        SourceRule::Explicit => {
            let mut ids: Vec<usize> = pl.source_ids.iter().map(|&i| i as usize).collect();
            ids.sort_unstable();
            ids.dedup();
            if let Some(&bad) = ids.iter().find(|&&i| i >= positions.len()) {
                return Err(invalid(format!("source id {bad} does not exist")));
            }
            if ids.contains(&sink) {
                return Err(invalid("the sink cannot also be a source"));
            }
            ids
        }
    };

    Ok(Layout {
        positions,
        sink: NodeId(sink as u16),
        sources: sources.into_iter().map(|i| NodeId(i as u16)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: u16, cols: u16) -> Scenario {
        Scenario {
            topology: Topology::Grid {
                rows,
                cols,
                spacing_m: 10.0,
            },
            ..Default::default()
        }
    }

    #[test]
    fn grid_121_spans_field() {
        let l = build_topology(&grid(11, 11), 1).unwrap();
        assert_eq!(l.len(), 121);
        assert_eq!(l.positions[120], (100.0, 100.0));
        assert_eq!(l.sink, NodeId(0));
        assert_eq!(l.sources.len(), 4);
        assert!(l.sources.contains(&NodeId(120)));
        let nearest_source = l
            .sources
            .iter()
            .map(|s| l.distance(l.sink, *s))
            .fold(f64::MAX, f64::min);
        for i in 0..121u16 {
            if !l.sources.contains(&NodeId(i)) {
                assert!(l.distance(l.sink, NodeId(i)) <= nearest_source + 1e-9);
            }
        }
    }

    #[test]
    fn small_grid_corner_sink() {
        let mut sc = grid(2, 2);
        sc.placement.sources = SourceRule::All;
        let l = build_topology(&sc, 1).unwrap();
        assert_eq!(l.sink, NodeId(0));
        assert_eq!(l.sources, vec![NodeId(1), NodeId(2), NodeId(3)]);
    }

    #[test]
    fn center_sink() {
        let mut sc = grid(5, 5);
        sc.placement.sink = SinkPlacement::Center;
        assert_eq!(build_topology(&sc, 1).unwrap().sink, NodeId(12));
    }

    #[test]
    fn random_is_seeded() {
        let sc = Scenario {
            topology: Topology::Random {
                n: 50,
                width_m: 100.0,
                height_m: 100.0,
            },
            ..Default::default()
        };
        let a = build_topology(&sc, 9).unwrap();
        assert_eq!(a, build_topology(&sc, 9).unwrap());
        assert_ne!(a, build_topology(&sc, 10).unwrap());
        assert!(a
            .positions
            .iter()
            .all(|&(x, y)| (0.0..=100.0).contains(&x) && (0.0..=100.0).contains(&y)));
    }

    #[test]
    fn empty_topology_is_rejected() {
        let sc = Scenario {
            topology: Topology::Random {
                n: 0,
                width_m: 10.0,
                height_m: 10.0,
            },
            ..Default::default()
        };
        assert_eq!(build_topology(&sc, 1), Err(Error::NoNodes));
    }
}
