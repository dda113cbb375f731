use crate::error::{Error, Result};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

// Each channel consumes two u64 draws (four 32-bit words) per step, whether or
// not both are needed, so positions can be computed directly from the step.
const WORDS_PER_CHANNEL: u128 = 4;

/// Counter-based source of Wiener increments.
///
/// The ChaCha stream is selected by the trajectory index and the word
/// position by the step index, so any `(seed, trajectory, step)` triple maps
/// to the same increments regardless of evaluation order or thread.
#[derive(Clone, Debug, PartialEq)]
pub struct WienerBundle {
    channels: usize,
    dt: f64,
    seed: u64,
}

impl WienerBundle {
    pub fn new(channels: usize, dt: f64, seed: u64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidTimeStep(dt));
        }
        Ok(Self { channels, dt, seed })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn rng(&self, trajectory: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(trajectory);
        rng.set_word_pos(0);
        rng
    }

    /// Increments of every channel at `(trajectory, step)`.
    pub fn increments(&self, trajectory: u64, step: u64, out: &mut [f64]) {
        let mut s = self.stream(trajectory);
        s.seek(step);
        s.next_into(out);
    }

    /// Sequential reader starting at step 0.
    pub fn stream(&self, trajectory: u64) -> WienerStream {
        WienerStream { rng: self.rng(trajectory), channels: self.channels, sqrt_dt: libm::sqrt(self.dt), step: 0 }
    }
}

/// Sequential view of one trajectory's increments.
pub struct WienerStream {
    rng: ChaCha8Rng,
    channels: usize,
    sqrt_dt: f64,
    step: u64,
}

impl WienerStream {
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn seek(&mut self, step: u64) {
        self.rng.set_word_pos(step as u128 * self.channels as u128 * WORDS_PER_CHANNEL);
        self.step = step;
    }

    /// Fills `out` with the next step's increments and advances one step.
    pub fn next_into(&mut self, out: &mut [f64]) {
        assert_eq!(out.len(), self.channels, "increment buffer has the wrong channel count");
        for o in out.iter_mut() {
            let u1 = self.rng.next_u64();
            let u2 = self.rng.next_u64();
            *o = self.sqrt_dt * standard_normal(u1, u2);
        }
        self.step += 1;
    }
}

/// Box–Muller transform of two uniform 64-bit words (cosine branch only).
fn standard_normal(a: u64, b: u64) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let u1 = ((a >> 11) as f64 + 1.0) * SCALE; // (0, 1]
    let u2 = (b >> 11) as f64 * SCALE; // [0, 1)
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}
