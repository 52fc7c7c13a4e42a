//! Circle-model collision detection with a longitudinal sort-and-sweep.

use serde::{Deserialize, Serialize};

use super::WorldState;
use crate::dynamics::VehicleState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionPair {
    pub a: u32,
    pub b: u32,
    pub distance: f64,
}

/// Every pair of vehicles whose centre distance is below the sum of their
/// radii plus `buffer`. Pairs are reported with `a < b`, sorted.
pub fn overlapping_pairs(states: &[&VehicleState], buffer: f64) -> Vec<CollisionPair> {
    let mut order: Vec<usize> = (0..states.len()).collect();
    order.sort_by(|&i, &j| states[i].s.total_cmp(&states[j].s).then(states[i].id.cmp(&states[j].id)));
    let max_radius = states.iter().map(|s| s.radius()).fold(0.0, f64::max);

    let mut pairs = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        let a = states[i];
        let reach = a.radius() + max_radius + buffer;
        for &j in &order[k + 1..] {
            let b = states[j];
            if b.s - a.s >= reach {
                break;
            }
            let distance = (b.s - a.s).hypot(b.y - a.y);
            if distance < a.radius() + b.radius() + buffer {
                pairs.push(CollisionPair {
                    a: a.id.min(b.id),
                    b: a.id.max(b.id),
                    distance,
                });
            }
        }
    }
    pairs.sort_by_key(|x| (x.a, x.b));
    pairs
}

pub fn detect_collisions(world: &WorldState) -> Vec<CollisionPair> {
    let states: Vec<&VehicleState> = world.vehicles.iter().map(|v| &v.state).collect();
    overlapping_pairs(&states, 0.0)
}
