// Copyright 2026 The spinreg Contributors
// SPDX-License-Identifier: Apache-2.0

//! Helpers shared by integration targets.

use std::collections::{HashMap, VecDeque};

use spinreg::model::{Occupancy, RegisterSpec, TrapArray};
use spinreg::rearrange::{validate_plan, Move, MovePlan};

pub fn occupancy_from_mask(array: &TrapArray, mask: u32) -> Occupancy {
    let sites: Vec<usize> = (0..array.len()).filter(|&s| mask >> s & 1 == 1).collect();
    Occupancy::from_sites(array, &sites)
}

fn legal(array: &TrapArray, occ: &Occupancy, from: usize, to: usize) -> bool {
    let plan = MovePlan {
        moves: vec![Move::new(array, from, to, false).unwrap()],
    };
    validate_plan(array, occ, &plan).is_empty()
}

/// Fewest legal single moves from every state to any state with the target filled.
pub fn optimal_moves(array: &TrapArray, reg: &RegisterSpec) -> HashMap<u32, usize> {
    let n = array.len();
    let target: u32 = reg.target_sites(array).iter().map(|&s| 1u32 << s).sum();
    // Moves are reversible whenever they are legal, so search backwards from
    // the filled states.
    let mut dist = HashMap::new();
    let mut queue = VecDeque::new();
    for mask in 0u32..1 << n {
        if mask & target == target {
            dist.insert(mask, 0);
            queue.push_back(mask);
        }
    }
    while let Some(mask) = queue.pop_front() {
        let d = dist[&mask];
        let occ = occupancy_from_mask(array, mask);
        for from in (0..n).filter(|&s| mask >> s & 1 == 1) {
            for to in (0..n).filter(|&s| mask >> s & 1 == 0) {
                if !legal(array, &occ, from, to) {
                    continue;
                }
                let prev = mask & !(1 << from) | 1 << to;
                if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(prev) {
                    e.insert(d + 1);
                    queue.push_back(prev);
                }
            }
        }
    }
    dist
}
