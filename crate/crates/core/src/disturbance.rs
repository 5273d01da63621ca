//! Seeded link disturbances, held constant over each integration step.
//!
//! Stream contract: edge `k` draws from `ChaCha8Rng::seed_from_u64(seed)`
//! with `set_stream(stream)`, where a network-wide spec assigns
//! `stream = k` (edge index in lexicographic order). Uniforms are
//! `rng.random::<f64>()` in [0, 1), turned into standard normals by the
//! Marsaglia polar method; both deviates of each accepted pair are used, the
//! first one first. The held value is `scale * z`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceKind {
    #[default]
    Zero,
    /// `w_k(t) = scale`
    Constant,
    /// White Gaussian, sample-and-hold per step, standard deviation `scale`.
    Gaussian,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSpec {
    pub kind: DisturbanceKind,
    #[serde(default)]
    pub scale: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
}

impl DisturbanceSpec {
    pub fn zero() -> Self {
        DisturbanceSpec::default()
    }

    pub fn gaussian(scale: f64, seed: u64, stream: u64) -> Self {
        DisturbanceSpec { kind: DisturbanceKind::Gaussian, scale, seed, stream }
    }

    /// One spec per edge sharing `seed`, with `stream = k` on edge `k`.
    pub fn per_edge(kind: DisturbanceKind, scale: f64, seed: u64, edges: usize) -> Vec<Self> {
        (0..edges as u64).map(|k| DisturbanceSpec { kind, scale, seed, stream: k }).collect()
    }
}

/// Standard normal source using the Marsaglia polar method.
#[derive(Debug, Clone)]
pub struct PolarGaussian {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl PolarGaussian {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        PolarGaussian { rng, spare: None }
    }

    pub fn next_standard(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.rng.random::<f64>() - 1.0;
            let v = 2.0 * self.rng.random::<f64>() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let f = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
enum Source {
    Zero,
    Constant(f64),
    Gaussian { scale: f64, gen: PolarGaussian },
}

/// Per-edge disturbance generators for one run.
#[derive(Debug, Clone)]
pub struct DisturbanceSource {
    sources: Vec<Source>,
}

impl DisturbanceSource {
    pub fn new(specs: &[DisturbanceSpec]) -> Self {
        let sources = specs
            .iter()
            .map(|s| match s.kind {
                DisturbanceKind::Zero => Source::Zero,
                DisturbanceKind::Constant => Source::Constant(s.scale),
                DisturbanceKind::Gaussian => {
                    Source::Gaussian { scale: s.scale, gen: PolarGaussian::new(s.seed, s.stream) }
                }
            })
            .collect();
        DisturbanceSource { sources }
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    /// Draws the values held over the next step.
    pub fn next_step(&mut self, out: &mut [f64]) {
        for (w, src) in out.iter_mut().zip(&mut self.sources) {
            *w = match src {
                Source::Zero => 0.0,
                Source::Constant(c) => *c,
                Source::Gaussian { scale, gen } => *scale * gen.next_standard(),
            };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = PolarGaussian::new(7, 3);
        let mut b = PolarGaussian::new(7, 3);
        for _ in 0..100 {
            assert_eq!(a.next_standard().to_bits(), b.next_standard().to_bits());
        }
        let mut c = PolarGaussian::new(7, 4);
        let mut a = PolarGaussian::new(7, 3);
        assert_ne!(a.next_standard(), c.next_standard());
    }

    #[test]
    fn moments_are_standard() {
        let mut g = PolarGaussian::new(2024, 0);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| g.next_standard()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn kinds() {
        let specs = [
            DisturbanceSpec::zero(),
            DisturbanceSpec { kind: DisturbanceKind::Constant, scale: 0.5, seed: 0, stream: 0 },
            DisturbanceSpec::gaussian(0.3, 1, 2),
        ];
        let mut src = DisturbanceSource::new(&specs);
        let mut w = [f64::NAN; 3];
        src.next_step(&mut w);
        assert_eq!(w[0], 0.0);
        assert_eq!(w[1], 0.5);
        let mut g = PolarGaussian::new(1, 2);
        assert_eq!(w[2], 0.3 * g.next_standard());
    }

    #[test]
    fn per_edge_streams_are_indexed() {
        let specs = DisturbanceSpec::per_edge(DisturbanceKind::Gaussian, 0.3, 9, 4);
        assert_eq!(specs.iter().map(|s| s.stream).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
    }
}
