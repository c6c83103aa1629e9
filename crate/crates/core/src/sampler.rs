//! Seedable, order-independent random variates.
//!
//! Every draw is addressed by a stream coordinate
//! `(master_seed, column, row_or_category, k)`. The coordinate is hashed to a
//! 64-bit key and the key seeds a SplitMix64 generator, so a draw depends only
//! on its coordinate and never on iteration order or thread count.
//!
//! Bit-exact definitions (all arithmetic is wrapping `u64`):
//!
//! ```text
//! GOLDEN = 0x9E37_79B9_7F4A_7C15
//! mix(z):  z = (z ^ (z >> 30)) * 0xBF58_476D_1CE4_E5B9
//!          z = (z ^ (z >> 27)) * 0x94D0_49BB_1331_11EB
//!          z ^ (z >> 31)
//! key = mix(seed + GOLDEN)
//! for c in [column, row_or_category, k]: key = mix((key + GOLDEN) ^ c)
//! next_u64: state += GOLDEN; mix(state)       (state starts at key)
//! uniform [0, 1): (next_u64 >> 11) * 2^-53
//! uniform (0, 1): ((next_u64 >> 11) + 0.5) * 2^-53
//! ```
//!
//! `mix` is a bijection, so two coordinates that differ only in their last
//! component always map to different keys.
//!
//! Normals use Box-Muller (both outputs consumed in order), Gamma variates use
//! Marsaglia-Tsang with the `U^(1/shape)` boost for `shape < 1`.

use serde::{Deserialize, Serialize};

use crate::conjugate::{ConjugateParams, NormalGammaParams, Task};
use crate::error::{Error, Result};

pub const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines a seed with a sub-stream label, e.g. a fold or tree index.
#[inline]
pub fn mix_seed(seed: u64, label: u64) -> u64 {
    mix(mix64(seed.wrapping_add(GOLDEN)), label)
}

#[inline]
fn mix(key: u64, coordinate: u64) -> u64 {
    mix64(key.wrapping_add(GOLDEN) ^ coordinate)
}

/// Address of one random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedContext {
    pub master_seed: u64,
    pub column: u64,
    pub row: u64,
    pub draw: u64,
    key: u64,
}

impl SeedContext {
    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn rng(&self) -> StreamRng {
        StreamRng::from_key(self.key)
    }
}

pub fn derive_stream(master_seed: u64, column: u64, row: u64, draw: u64) -> SeedContext {
    let mut key = mix64(master_seed.wrapping_add(GOLDEN));
    for c in [column, row, draw] {
        key = mix(key, c);
    }
    SeedContext {
        master_seed,
        column,
        row,
        draw,
        key,
    }
}

/// SplitMix64 generator plus the continuous variates the encoder needs.
#[derive(Clone, Debug)]
pub struct StreamRng {
    state: u64,
    spare_normal: Option<f64>,
}

impl StreamRng {
    pub fn from_key(key: u64) -> Self {
        Self {
            state: key,
            spare_normal: None,
        }
    }

    pub fn seed_from(seed: u64, label: u64) -> Self {
        Self::from_key(mix_seed(seed, label))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on the open interval `(0, 1)`.
    #[inline]
    pub fn uniform_open(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n` (Lemire's multiply-shift with rejection).
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let threshold = n.wrapping_neg() % n;
        loop {
            let m = u128::from(self.next_u64()) * u128::from(n);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform_open();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        self.spare_normal = Some(r * s);
        r * c
    }

    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }

    /// Gamma(shape, scale = 1).
    pub fn gamma(&mut self, shape: f64) -> f64 {
        debug_assert!(shape > 0.0);
        if shape < 1.0 {
            let boost = self.uniform_open().powf(1.0 / shape);
            return self.gamma_large(shape + 1.0) * boost;
        }
        self.gamma_large(shape)
    }

    fn gamma_large(&mut self, shape: f64) -> f64 {
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let (x, v) = loop {
                let x = self.standard_normal();
                let v = 1.0 + c * x;
                if v > 0.0 {
                    break (x, v * v * v);
                }
            };
            let u = self.uniform_open();
            let x2 = x * x;
            if u < 1.0 - 0.0331 * x2 * x2 {
                return d * v;
            }
            if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
                return d * v;
            }
        }
    }

    /// Beta(alpha, beta) as `X / (X + Y)` with independent Gamma variates.
    pub fn beta(&mut self, alpha: f64, beta: f64) -> f64 {
        let x = self.gamma(alpha);
        let y = self.gamma(beta);
        let total = x + y;
        if total > 0.0 {
            x / total
        } else {
            // Both variates underflowed; only reachable for tiny shapes.
            alpha / (alpha + beta)
        }
    }

    pub fn dirichlet(&mut self, alphas: &[f64]) -> Vec<f64> {
        let mut draws: Vec<f64> = alphas.iter().map(|&a| self.gamma(a)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            draws.iter_mut().for_each(|g| *g /= total);
        } else {
            let a0: f64 = alphas.iter().sum();
            draws = alphas.iter().map(|a| a / a0).collect();
        }
        draws
    }

    /// `tau ~ Gamma(alpha, rate = beta)`, `mu ~ Normal(mu0, 1 / (nu tau))`.
    pub fn normal_gamma(&mut self, p: &NormalGammaParams) -> (f64, f64) {
        let tau = self.gamma(p.alpha) / p.beta;
        let mu = self.normal(p.mu0, 1.0 / (p.nu * tau).sqrt());
        (mu, tau)
    }
}

/// One realisation of a category's posterior parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorDraw {
    Binary { p: f64 },
    Multiclass { pi: Vec<f64> },
    Regression { mu: f64, tau: f64 },
}

impl PosteriorDraw {
    /// The draw as a flat parameter vector, matching
    /// [`ConjugateParams::mean`]'s layout.
    pub fn theta(&self) -> Vec<f64> {
        match self {
            PosteriorDraw::Binary { p } => vec![*p],
            PosteriorDraw::Multiclass { pi } => pi.clone(),
            PosteriorDraw::Regression { mu, tau } => vec![*mu, *tau],
        }
    }

    /// Inverse of [`PosteriorDraw::theta`].
    pub fn from_theta(task: Task, theta: &[f64]) -> Result<Self> {
        let expected = match task {
            Task::Binary => 1,
            Task::Multiclass => theta.len().max(2),
            Task::Regression => 2,
        };
        if theta.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: theta.len(),
            });
        }
        Ok(match task {
            Task::Binary => PosteriorDraw::Binary { p: theta[0] },
            Task::Multiclass => PosteriorDraw::Multiclass { pi: theta.to_vec() },
            Task::Regression => PosteriorDraw::Regression {
                mu: theta[0],
                tau: theta[1],
            },
        })
    }

    /// Point-mass "draw" at the posterior mean.
    pub fn at_mean(params: &ConjugateParams) -> Result<Self> {
        let m = params.mean()?;
        Ok(match params {
            ConjugateParams::Beta(_) => PosteriorDraw::Binary { p: m[0] },
            ConjugateParams::Dirichlet(_) => PosteriorDraw::Multiclass { pi: m },
            ConjugateParams::NormalGamma(_) => PosteriorDraw::Regression { mu: m[0], tau: m[1] },
        })
    }
}

/// Draws `theta` from `params` on the stream addressed by `ctx`.
pub fn draw(params: &ConjugateParams, ctx: &SeedContext) -> Result<PosteriorDraw> {
    draw_with(params, &mut ctx.rng())
}

pub fn draw_with(params: &ConjugateParams, rng: &mut StreamRng) -> Result<PosteriorDraw> {
    if !params.is_proper() {
        return Err(Error::ImproperDistribution(format!("{params:?}")));
    }
    Ok(match params {
        ConjugateParams::Beta(b) => PosteriorDraw::Binary {
            p: rng.beta(b.alpha, b.beta),
        },
        ConjugateParams::Dirichlet(d) => PosteriorDraw::Multiclass {
            pi: rng.dirichlet(&d.alphas),
        },
        ConjugateParams::NormalGamma(ng) => {
            let (mu, tau) = rng.normal_gamma(ng);
            PosteriorDraw::Regression { mu, tau }
        }
    })
}
