//! Chunked, reproducible Monte Carlo averaging.
//!
//! Work is split into fixed-size chunks; chunk `i` draws from
//! `rng.derive(i)` and chunk statistics are merged in index order, so results
//! depend only on `(seed, stream, chunk_size)` and not on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::Rng;
use crate::math::MeanVar;

pub const DEFAULT_CHUNK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McLayout {
    pub chunk_size: u64,
}

impl Default for McLayout {
    fn default() -> Self {
        Self {
            chunk_size: DEFAULT_CHUNK,
        }
    }
}

/// Mean and variance of `draw(rng)` over `samples` draws.
pub fn run<F>(samples: u64, rng: &Rng, layout: McLayout, draw: F) -> MeanVar
where
    F: Fn(&mut Rng) -> f64 + Sync,
{
    run_multi::<1, _>(samples, rng, layout, |r| [draw(r)])[0]
}

/// Like [`run`] for a fixed number of statistics computed from the same draw.
pub fn run_multi<const K: usize, F>(
    samples: u64,
    rng: &Rng,
    layout: McLayout,
    draw: F,
) -> [MeanVar; K]
where
    F: Fn(&mut Rng) -> [f64; K] + Sync,
{
    let chunk = layout.chunk_size.max(1);
    let n_chunks = samples.div_ceil(chunk);
    let parts: Vec<[MeanVar; K]> = (0..n_chunks)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.derive(i);
            let count = chunk.min(samples - i * chunk);
            let mut acc = [MeanVar::new(); K];
            for _ in 0..count {
                let v = draw(&mut r);
                for (a, x) in acc.iter_mut().zip(v) {
                    a.push(x);
                }
            }
            acc
        })
        .collect();
    parts.iter().fold([MeanVar::new(); K], |mut tot, p| {
        for (t, x) in tot.iter_mut().zip(p) {
            *t = t.merge(x);
        }
        tot
    })
}

/// Number of draws needed to bring the standard error to `target_se`, given a
/// per-draw standard deviation, never fewer than `min`.
pub fn samples_for_target(per_draw_sd: f64, target_se: f64, min: u64) -> u64 {
    let need = (per_draw_sd / target_se).powi(2).ceil();
    if need.is_finite() {
        (need as u64).max(min)
    } else {
        min
    }
}
