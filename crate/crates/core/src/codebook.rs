//! Constellations, codeword sampling and the warden's noisy observations.

use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::channel::{normalize_angle, ChannelParams, CodebookSpec, ComplexSample, Rng};
use crate::error::{Error, Result};

/// One reflected symbol. A negative amplitude stands for the symbol
/// `(β, phase + π)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Symbol {
    pub amplitude: f64,
    pub phase: f64,
}

impl Symbol {
    pub fn coefficient(&self) -> Complex64 {
        Complex64::from_polar(self.amplitude, self.phase)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Codeword {
    pub symbols: Vec<Symbol>,
    /// Pair angle drawn once for the whole codeword (shared-angle codebooks only).
    pub shared_angle: Option<f64>,
}

impl Codeword {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::NegativeBeta(beta));
    }
    Ok(())
}

/// All distinct symbol values the codebook can emit at amplitude `beta`.
///
/// Points come in `±βe^{iφ}` pairs, ordered by pair angle.
pub fn constellation(c: &CodebookSpec, beta: f64) -> Result<Vec<Complex64>> {
    c.validate()?;
    check_beta(beta)?;
    Ok(c.pair_angles()
        .into_iter()
        .flat_map(|phi| {
            let z = Complex64::from_polar(beta, phi);
            [z, -z]
        })
        .collect())
}

/// Draws an `n`-symbol codeword according to the codebook's law.
///
/// Per-symbol choices use a single uniform integer over `2 × pairs` so the
/// sign and pair index are exactly equiprobable.
pub fn sample_codeword(c: &CodebookSpec, beta: f64, n: usize, rng: &mut Rng) -> Result<Codeword> {
    c.validate()?;
    check_beta(beta)?;
    if n == 0 {
        return Err(Error::ZeroBlockLength);
    }
    let angles = c.pair_angles();
    let k = angles.len() as u32;
    let signed = |sign_bit: bool| if sign_bit { -beta } else { beta };

    if c.shares_angle() {
        let phase = angles[rng.random_range(0..k) as usize];
        let symbols = (0..n)
            .map(|_| Symbol {
                amplitude: signed(rng.random::<bool>()),
                phase,
            })
            .collect();
        Ok(Codeword {
            symbols,
            shared_angle: Some(phase),
        })
    } else {
        let symbols = (0..n)
            .map(|_| {
                let u = rng.random_range(0..2 * k);
                Symbol {
                    amplitude: signed(u % 2 == 1),
                    phase: angles[(u / 2) as usize],
                }
            })
            .collect();
        Ok(Codeword {
            symbols,
            shared_angle: None,
        })
    }
}

/// Noisy samples `A e^{iθ₀} c_i + z_i` seen by the warden.
pub fn willie_observation(
    codeword: &Codeword,
    p: &ChannelParams,
    rng: &mut Rng,
) -> Vec<ComplexSample> {
    let gain = Complex64::from_polar(p.amplitude(), p.phase());
    codeword
        .symbols
        .iter()
        .map(|s| {
            let mean = gain * s.coefficient();
            ComplexSample::new(
                mean.re + p.sigma() * rng.sample::<f64, _>(StandardNormal),
                mean.im + p.sigma() * rng.sample::<f64, _>(StandardNormal),
            )
        })
        .collect()
}

/// Pure-noise observations (the no-transmission hypothesis).
pub fn noise_observation(n: usize, p: &ChannelParams, rng: &mut Rng) -> Vec<ComplexSample> {
    (0..n)
        .map(|_| {
            ComplexSample::new(
                p.sigma() * rng.sample::<f64, _>(StandardNormal),
                p.sigma() * rng.sample::<f64, _>(StandardNormal),
            )
        })
        .collect()
}

/// Index of a symbol within `constellation(c, β)`, for `β > 0`.
pub fn constellation_index(c: &CodebookSpec, s: &Symbol) -> Option<usize> {
    let phase = normalize_angle(s.phase);
    c.pair_angles()
        .iter()
        .position(|&a| (normalize_angle(a) - phase).abs() < 1e-12)
        .map(|i| 2 * i + usize::from(s.amplitude < 0.0))
}
