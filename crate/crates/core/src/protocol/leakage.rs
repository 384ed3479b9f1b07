//! Transcript scanner for private values reaching the wrong party.
//!
//! A needle is the little-endian raw data of one private tensor. Messages
//! delivered to P1 are searched for every `x_i`, `y_i` and unmixed block-A
//! activation; messages delivered to P2 for every weight tensor of `θ_A` and
//! `θ_C`. Proof messages are exempt: the transparent audit backend reveals
//! the audited leaves by design. Needles with fewer than [`MIN_NONZERO`]
//! nonzero bytes (one-hot labels, mostly-zero rows) are skipped, since they
//! match ordinary length and shape fields.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AliceInputs, BobInputs};
use super::message::{MessageKind, Transcript};
use super::PartyId;
use crate::numerics::{FixedTensor, Model};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageFinding {
    pub seq: u64,
    pub viewer: PartyId,
    /// Which secret, e.g. `x[17]` or `theta_a.layer[0].w[1]`.
    pub secret: String,
    pub offset: usize,
}

const WINDOW: usize = 8;
pub const MIN_NONZERO: usize = 4;

struct Needles {
    items: Vec<(String, Vec<u8>)>,
    index: HashMap<[u8; WINDOW], Vec<usize>>,
}

fn raw_bytes(t: &FixedTensor) -> Vec<u8> {
    t.raw().flat_map(i32::to_le_bytes).collect()
}

impl Needles {
    fn new(items: Vec<(String, Vec<u8>)>) -> Self {
        let items: Vec<_> = items
            .into_iter()
            .filter(|(_, b)| b.len() >= WINDOW && b.iter().filter(|&&x| x != 0).count() >= MIN_NONZERO)
            .collect();
        let mut index: HashMap<[u8; WINDOW], Vec<usize>> = HashMap::new();
        for (i, (_, b)) in items.iter().enumerate() {
            index.entry(b[..WINDOW].try_into().unwrap()).or_default().push(i);
        }
        Self { items, index }
    }

    fn find(&self, hay: &[u8]) -> Vec<(usize, usize)> {
        if hay.len() < WINDOW {
            return vec![];
        }
        let mut hits = Vec::new();
        for off in 0..=hay.len() - WINDOW {
            let key: [u8; WINDOW] = hay[off..off + WINDOW].try_into().unwrap();
            if let Some(ids) = self.index.get(&key) {
                for &id in ids {
                    if hay[off..].starts_with(&self.items[id].1) {
                        hits.push((id, off));
                    }
                }
            }
        }
        hits
    }
}

fn model_needles(name: &str, model: &Model) -> Vec<(String, Vec<u8>)> {
    model
        .layers
        .iter()
        .enumerate()
        .flat_map(|(l, layer)| {
            layer
                .weights
                .iter()
                .enumerate()
                .map(move |(w, t)| (format!("{name}.layer[{l}].w[{w}]"), raw_bytes(t)))
        })
        .collect()
}

/// Block A without its trailing mixer, i.e. the activation before mixing.
fn unmixed(a: &Model) -> Model {
    let mut m = a.clone();
    m.layers.pop();
    m
}

pub fn scan_leakage(transcript: &Transcript, alice: &AliceInputs, bob: &BobInputs) -> Vec<LeakageFinding> {
    let ds = &bob.dataset;
    let pre_mix = unmixed(&alice.model.a);
    let mut for_p1: Vec<(String, Vec<u8>)> = Vec::new();
    for (i, (x, y)) in ds.xs.iter().zip(&ds.ys).enumerate() {
        for_p1.push((format!("x[{i}]"), raw_bytes(x)));
        for_p1.push((format!("y[{i}]"), raw_bytes(y)));
    }
    let acts: Vec<(String, Vec<u8>)> = ds
        .xs
        .par_iter()
        .enumerate()
        .filter_map(|(i, x)| pre_mix.forward(x).ok().map(|a| (format!("A(x[{i}])"), raw_bytes(&a))))
        .collect();
    for_p1.extend(acts);
    let mut for_p2 = model_needles("theta_a", &alice.model.a);
    for_p2.extend(model_needles("theta_c", &alice.model.c));

    let needles = [(PartyId::P1, Needles::new(for_p1)), (PartyId::P2, Needles::new(for_p2))];
    let mut findings = Vec::new();
    for m in &transcript.messages {
        if m.kind == MessageKind::Proof {
            continue;
        }
        for (viewer, set) in &needles {
            if m.recipient != *viewer {
                continue;
            }
            for (id, offset) in set.find(&m.body) {
                findings.push(LeakageFinding {
                    seq: m.seq,
                    viewer: *viewer,
                    secret: set.items[id].0.clone(),
                    offset,
                });
            }
        }
    }
    findings
}
