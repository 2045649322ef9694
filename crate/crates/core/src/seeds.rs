//! Named initial-condition generators.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{MeanField, StateVector};
use crate::error::{Error, Result};
use crate::lattice::UnitCell;
use crate::scalar::{lit, Real};
use crate::steady;

/// Population split used by the biased patterns.
pub const BIAS_HIGH: f64 = 0.8;
pub const BIAS_LOW: f64 = 0.2;
/// Chain-antisymmetric population kick applied on top of the AF₂ root.
pub const AF2_KICK: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedKind {
    Ground,
    RandomBloch,
    /// Uniform random populations with zero coherence.
    RandomPopulation,
    AfBiased,
    Af2Biased,
}

impl SeedKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SeedKind::Ground => "ground",
            SeedKind::RandomBloch => "random-bloch",
            SeedKind::RandomPopulation => "random-population",
            SeedKind::AfBiased => "af",
            SeedKind::Af2Biased => "af2",
        }
    }

    pub fn is_random(self) -> bool {
        matches!(self, SeedKind::RandomBloch | SeedKind::RandomPopulation)
    }
}

impl fmt::Display for SeedKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SeedKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "ground" | "zero" => SeedKind::Ground,
            "random-bloch" | "random" | "bloch" => SeedKind::RandomBloch,
            "random-population" | "random-pop" => SeedKind::RandomPopulation,
            "af" | "af-biased" => SeedKind::AfBiased,
            "af2" | "af2-biased" => SeedKind::Af2Biased,
            other => return Err(Error::InvalidArgument(format!("unknown seed kind '{other}'"))),
        })
    }
}

/// Independent stream `k` of the generator seeded with `seed`.
pub fn stream_rng(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

/// Uniform sample of the Bloch ball per site.
pub fn random_bloch<T: Real, R: Rng + ?Sized>(sites: usize, rng: &mut R) -> StateVector<T> {
    let mut s = StateVector::zeros(sites);
    for i in 0..sites {
        let v = loop {
            let v: [f64; 3] = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
            if v.iter().map(|a| a * a).sum::<f64>() <= 1.0 {
                break v;
            }
        };
        s.set_site(i, lit(0.5 * (v[2] + 1.0)), lit(0.5 * v[0]), lit(0.5 * v[1]));
    }
    s
}

pub fn random_populations<T: Real, R: Rng + ?Sized>(sites: usize, rng: &mut R) -> StateVector<T> {
    let mut s = StateVector::zeros(sites);
    for i in 0..sites {
        s.set_site(i, lit(rng.gen_range(0.0..1.0)), T::zero(), T::zero());
    }
    s
}

/// Populations from `(r + c) mod 2`.
pub fn checkerboard<T: Real>(cell: &UnitCell, even: T, odd: T) -> Vec<T> {
    (0..cell.sites())
        .map(|i| {
            let (r, c) = cell.row_col(i);
            if (r + c) % 2 == 0 {
                even
            } else {
                odd
            }
        })
        .collect()
}

/// Populations from `c mod 2`, equal across chains.
pub fn column_pattern<T: Real>(cell: &UnitCell, even: T, odd: T) -> Vec<T> {
    (0..cell.sites())
        .map(|i| if cell.row_col(i).1 % 2 == 0 { even } else { odd })
        .collect()
}

/// Full state whose `n` and `x` equations vanish for the given populations.
pub fn lift<T: Real>(model: &MeanField<T>, pops: &[T]) -> StateVector<T> {
    let p = &model.params;
    let two: T = lit(2.0);
    let mut s = StateVector::zeros(pops.len());
    for (i, &n) in pops.iter().enumerate() {
        s.set_site(i, n, T::zero(), T::zero());
    }
    if p.omega == T::zero() {
        return s;
    }
    let mut d = vec![T::zero(); pops.len()];
    for (i, di) in d.iter_mut().enumerate() {
        *di = model.table.row(i).iter().zip(pops).map(|(&w, &n)| w * n).sum();
    }
    for (i, &n) in pops.iter().enumerate() {
        let y = p.gamma * n / p.omega;
        let x = two * (p.delta - d[i]) * y / p.gamma;
        s.set_site(i, n, x, y);
    }
    s
}

/// Adds `amp·(−1)^row` to every population.
pub fn chain_kick<T: Real>(model: &MeanField<T>, state: &mut StateVector<T>, amp: T) {
    for i in 0..state.sites() {
        let (r, _) = model.cell.row_col(i);
        let sign = if r % 2 == 0 { T::one() } else { -T::one() };
        state.0[3 * i] += sign * amp;
    }
}

/// Builds a seed of the given kind; `k` selects the random stream.
pub fn generate<T: Real>(kind: SeedKind, model: &MeanField<T>, rng_seed: u64, k: u64) -> Result<StateVector<T>> {
    let sites = model.sites();
    let hi: T = lit(BIAS_HIGH);
    let lo: T = lit(BIAS_LOW);
    Ok(match kind {
        SeedKind::Ground => StateVector::zeros(sites),
        SeedKind::RandomBloch => random_bloch(sites, &mut stream_rng(rng_seed, k)),
        SeedKind::RandomPopulation => random_populations(sites, &mut stream_rng(rng_seed, k)),
        SeedKind::AfBiased => StateVector::from_sites(
            &checkerboard(&model.cell, hi, lo)
                .into_iter()
                .map(|n| (n, T::zero(), T::zero()))
                .collect::<Vec<_>>(),
        ),
        SeedKind::Af2Biased => {
            let mut s = match steady::af2_root(model) {
                Some(fp) => fp.state,
                None => StateVector::from_sites(
                    &column_pattern(&model.cell, hi, lo)
                        .into_iter()
                        .map(|n| (n, T::zero(), T::zero()))
                        .collect::<Vec<_>>(),
                ),
            };
            chain_kick(model, &mut s, lit(AF2_KICK));
            s
        }
    })
}
