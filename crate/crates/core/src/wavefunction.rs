//! Positive-frequency solutions of the free Klein-Gordon equation as finite
//! box-normalized plane-wave sums.
//!
//! A mode with momentum **k**, mass m and coefficient c contributes
//! `c · e^{−i(ωt − k·x)} · N` with `ω = √(k² + m²)` and
//! `N = 1/√(2ωV)` for Klein-Gordon normalization or `N = 1/√V` for the
//! conventional one. On a box lattice `k = 2πn/L` distinct modes are
//! orthogonal, so `Σ|c|² = 1` gives unit norm of either kind.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FourVector, Hypersurface, Quadrature, SpatialBox};

/// Which norm the wave function is normalized in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// ψ-type: unit Klein-Gordon scalar product.
    KleinGordon,
    /// φ-type: unit `∫|φ|² d³x`.
    Conventional,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneWaveMode {
    k: [f64; 3],
    mass: f64,
    coeff: Complex64,
    omega: f64,
}

impl PlaneWaveMode {
    pub fn new(k: [f64; 3], mass: f64, coeff: Complex64) -> Result<Self> {
        if !(mass >= 0.0) || k.iter().any(|c| !c.is_finite()) || !mass.is_finite() {
            return Err(Error::InvalidInput(format!("bad mode k = {k:?}, m = {mass}")));
        }
        let omega = (k[0] * k[0] + k[1] * k[1] + k[2] * k[2] + mass * mass).sqrt();
        if omega == 0.0 {
            return Err(Error::ZeroFrequencyMode);
        }
        Ok(Self { k, mass, coeff, omega })
    }

    /// A negative-frequency mode `e^{+i(ωt + k·x)}`-type partner, only
    /// meant as a fixture for checking that positivity of frequency matters.
    pub fn negative_frequency(k: [f64; 3], mass: f64, coeff: Complex64) -> Result<Self> {
        let mut m = Self::new(k, mass, coeff)?;
        m.omega = -m.omega;
        Ok(m)
    }

    pub fn momentum(&self) -> [f64; 3] {
        self.k
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn coeff(&self) -> Complex64 {
        self.coeff
    }

    /// Signed frequency; negative only for fixture modes.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn is_positive_frequency(&self) -> bool {
        self.omega > 0.0
    }

    /// Contravariant four-momentum `(ω, k)`.
    pub fn four_momentum(&self) -> FourVector {
        FourVector::event(self.omega, self.k)
    }

    /// `(∂^μ∂_μ + m²)` acting on the mode, divided by the mode: `m² − k·k`.
    pub fn mass_shell_residual(&self) -> f64 {
        self.mass * self.mass - self.four_momentum().square()
    }

    fn with_coeff(mut self, coeff: Complex64) -> Self {
        self.coeff = coeff;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    modes: Vec<PlaneWaveMode>,
    volume: f64,
    kind: Normalization,
    /// Per-mode `c · N`, cached.
    amps: Vec<Complex64>,
}

impl WaveFunction {
    pub fn new(modes: Vec<PlaneWaveMode>, volume: f64, kind: Normalization) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidInput("wave function needs at least one mode".into()));
        }
        if !(volume.is_finite() && volume > 0.0) {
            return Err(Error::InvalidInput(format!("volume must be positive, got {volume}")));
        }
        let m0 = modes[0].mass;
        if modes.iter().any(|m| (m.mass - m0).abs() > 1e-12 * (1.0 + m0)) {
            return Err(Error::InvalidInput("all modes of one wave function must share the mass".into()));
        }
        let amps = modes
            .iter()
            .map(|m| {
                let n = match kind {
                    Normalization::KleinGordon => 1.0 / (2.0 * m.omega.abs() * volume).sqrt(),
                    Normalization::Conventional => 1.0 / volume.sqrt(),
                };
                m.coeff * n
            })
            .collect();
        Ok(Self { modes, volume, kind, amps })
    }

    pub fn klein_gordon(modes: Vec<PlaneWaveMode>, volume: f64) -> Result<Self> {
        Self::new(modes, volume, Normalization::KleinGordon)
    }

    pub fn conventional(modes: Vec<PlaneWaveMode>, volume: f64) -> Result<Self> {
        Self::new(modes, volume, Normalization::Conventional)
    }

    pub fn modes(&self) -> &[PlaneWaveMode] {
        &self.modes
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn kind(&self) -> Normalization {
        self.kind
    }

    /// `c · N` per mode, i.e. the value of each term at the origin.
    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn is_positive_frequency(&self) -> bool {
        self.modes.iter().all(|m| m.is_positive_frequency())
    }

    /// Same coefficients under the other normalization.
    pub fn with_kind(&self, kind: Normalization) -> Self {
        Self::new(self.modes.clone(), self.volume, kind).expect("already validated")
    }

    /// Merges modes with identical momentum, mass and frequency sign, then
    /// rescales so that `Σ|c|² = 1`.
    pub fn merged_and_normalized(&self) -> Self {
        let mut out: Vec<PlaneWaveMode> = Vec::with_capacity(self.modes.len());
        for m in &self.modes {
            match out
                .iter_mut()
                .find(|o| o.k == m.k && o.mass == m.mass && o.omega == m.omega)
            {
                Some(o) => o.coeff += m.coeff,
                None => out.push(*m),
            }
        }
        out.retain(|m| m.coeff.norm_sqr() > 0.0);
        let total: f64 = out.iter().map(|m| m.coeff.norm_sqr()).sum();
        let scale = 1.0 / total.sqrt();
        let out = out.into_iter().map(|m| m.with_coeff(m.coeff * scale)).collect();
        Self::new(out, self.volume, self.kind).expect("non-empty after merge")
    }

    /// Per-mode terms `A_a(x) = c_a N_a e^{−i k_a·x}` at `x`.
    pub fn terms_into(&self, x: FourVector, out: &mut Vec<Complex64>) {
        out.clear();
        out.extend(self.modes.iter().zip(&self.amps).map(|(m, a)| {
            let phase = m.omega * x.t - (m.k[0] * x.x + m.k[1] * x.y + m.k[2] * x.z);
            let (s, c) = phase.sin_cos();
            a * Complex64::new(c, -s)
        }));
    }

    pub fn evaluate(&self, x: FourVector) -> Complex64 {
        let mut terms = Vec::with_capacity(self.modes.len());
        self.terms_into(x, &mut terms);
        terms.iter().sum()
    }

    /// Covariant partial derivatives `[∂_t ψ, ∂_x ψ, ∂_y ψ, ∂_z ψ]`, each
    /// mode contributing `−i k_μ A_a` with `k_μ = (ω, −k)`.
    pub fn gradient(&self, x: FourVector) -> [Complex64; 4] {
        let mut terms = Vec::with_capacity(self.modes.len());
        self.terms_into(x, &mut terms);
        let mut g = [Complex64::new(0.0, 0.0); 4];
        for (m, a) in self.modes.iter().zip(&terms) {
            let kl = m.four_momentum().lowered();
            for mu in 0..4 {
                g[mu] += Complex64::new(0.0, -kl[mu]) * a;
            }
        }
        g
    }

    /// Klein-Gordon scalar product `i ∫ dS^μ a* ∂↔_μ b` over a spacelike
    /// surface by midpoint quadrature.
    pub fn kg_inner_product(
        a: &WaveFunction,
        b: &WaveFunction,
        surface: &Hypersurface,
        quad: Quadrature,
    ) -> Result<Complex64> {
        if !surface.is_spacelike() {
            return Err(Error::InvalidSurface(
                "Klein-Gordon scalar product needs a spacelike surface".into(),
            ));
        }
        let (mut re, mut im) = (0.0, 0.0);
        for p in surface.patches() {
            p.for_each_cell(surface.dims(), quad, |x, ds| {
                let va = a.evaluate(x);
                let vb = b.evaluate(x);
                let ga = a.gradient(x);
                let gb = b.gradient(x);
                let dsa = ds.to_array();
                let mut acc = Complex64::new(0.0, 0.0);
                for mu in 0..4 {
                    acc += (va.conj() * gb[mu] - vb * ga[mu].conj()) * dsa[mu];
                }
                let v = Complex64::new(0.0, 1.0) * acc;
                re += v.re;
                im += v.im;
            });
        }
        Ok(Complex64::new(re, im))
    }

    /// `∫ |φ|² d³x` over the box at time `t`.
    pub fn conventional_norm(&self, t: f64, bx: &SpatialBox, quad: Quadrature) -> f64 {
        let slice = Hypersurface::time_slice(t, bx);
        slice.integrate(quad, |x, ds| self.evaluate(x).norm_sqr() * ds.t)
    }
}

/// Two equally weighted modes `(|k₁⟩ + |k₂⟩)/√2` in Klein-Gordon
/// normalization. Coinciding momenta collapse into one unit mode.
pub fn make_two_mode(k1: [f64; 3], k2: [f64; 3], mass: f64, volume: f64) -> Result<WaveFunction> {
    let c = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let modes = vec![PlaneWaveMode::new(k1, mass, c)?, PlaneWaveMode::new(k2, mass, c)?];
    let w = WaveFunction::klein_gordon(modes, volume)?;
    if k1 == k2 {
        Ok(w.merged_and_normalized())
    } else {
        Ok(w)
    }
}
