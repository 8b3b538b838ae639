//! Deterministic counter-derived random streams.
//!
//! Every stochastic routine in this crate draws from a [`StreamRng`] keyed by
//! `(seed, tag, index)`. The key is hashed through SplitMix64 into the state
//! and increment of a PCG-XSH-RR 64/32 generator, so stream `i` of a run is
//! the same whether trajectories execute serially or on a thread pool.

/// FNV-1a, used to fold a subcommand tag into the stream key.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// PCG-XSH-RR 64/32 stream generator.
#[derive(Debug, Clone)]
pub struct StreamRng {
    state: u64,
    inc: u64,
}

impl StreamRng {
    /// Derive the stream for `(seed, tag, index)`.
    pub fn new(seed: u64, tag: &str, index: u64) -> Self {
        let mut key = seed ^ fnv1a(tag.as_bytes());
        let a = splitmix64(&mut key);
        key ^= index.wrapping_mul(0x9e3779b97f4a7c15);
        let b = splitmix64(&mut key);
        let mut rng = StreamRng {
            state: a,
            inc: b | 1,
        };
        rng.next_u32();
        rng
    }

    pub fn next_u32(&mut self) -> u32 {
        let old = self.state;
        self.state = old
            .wrapping_mul(6364136223846793005)
            .wrapping_add(self.inc);
        let xorshifted = (((old >> 18) ^ old) >> 27) as u32;
        let rot = (old >> 59) as u32;
        xorshifted.rotate_right(rot)
    }

    pub fn next_u64(&mut self) -> u64 {
        ((self.next_u32() as u64) << 32) | self.next_u32() as u64
    }

    /// Uniform in [0, 1) with 53-bit resolution.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = loop {
            let u = self.uniform();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Poisson sample; Knuth's product method for small means, normal
    /// approximation beyond, where the error is far below counting noise.
    pub fn poisson(&mut self, lambda: f64) -> u32 {
        if lambda <= 0.0 {
            return 0;
        }
        if lambda < 48.0 {
            let limit = (-lambda).exp();
            let mut k = 0u32;
            let mut prod = 1.0;
            loop {
                prod *= self.uniform();
                if prod <= limit {
                    return k;
                }
                k += 1;
            }
        }
        let g = lambda + lambda.sqrt() * self.normal();
        g.round().max(0.0) as u32
    }
}
