//! Seeded, platform-stable random streams.
//!
//! Every random draw comes from a ChaCha20 stream keyed by the user seed and
//! selected by a 64-bit stream id, so independent pieces of work (one probe
//! of one sweep point, one bootstrap resample) never share state and results
//! do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution};

pub type StreamRng = ChaCha20Rng;

/// Stream id for `(domain, index, lane)`.
pub fn stream_id(domain: u8, index: u32, lane: u8) -> u64 {
    ((domain as u64) << 56) | ((index as u64) << 8) | lane as u64
}

pub fn stream(seed: u64, id: u64) -> StreamRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Exact binomial draw: inversion for small mean, BTPE otherwise.
pub fn binomial<R: rand::Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if p <= 0.0 || n == 0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p)
        .expect("probability checked to lie in (0, 1)")
        .sample(rng)
}

/// Multinomial draw by sequential conditional binomials.
pub fn multinomial<R: rand::Rng + ?Sized>(rng: &mut R, n: u64, probs: &[f64]) -> Vec<u64> {
    let mut out = vec![0u64; probs.len()];
    let mut remaining = n;
    let mut mass: f64 = probs.iter().sum();
    for (slot, &p) in out.iter_mut().zip(probs) {
        if remaining == 0 {
            break;
        }
        let cond = if mass > 0.0 { (p / mass).min(1.0) } else { 0.0 };
        let k = binomial(rng, remaining, cond);
        *slot = k;
        remaining -= k;
        mass -= p;
    }
    if remaining > 0 {
        // rounding left mass unassigned; give it to the last populated bin
        if let Some(i) = probs.iter().rposition(|&p| p > 0.0) {
            out[i] += remaining;
        }
    }
    out
}
