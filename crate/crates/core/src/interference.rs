//! Two-frequency interference: conventional density `ρ = C + I` against
//! the Klein-Gordon time component `j₀ = C + αI`.
//!
//! Each branch profile `φ_a` is a Gaussian beam built as a sum of plane
//! waves in the (x, y) plane whose momenta all lie on the mass shell of
//! `ω_a`. Every branch is therefore an exact single-frequency solution and
//! the decomposition holds pointwise, not only for narrow bands.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::wavefunction::{PlaneWaveMode, WaveFunction};

/// `α = (ω₁+ω₂)/(2√(ω₁ω₂))`.
pub fn alpha(omega1: f64, omega2: f64) -> f64 {
    if omega1 == omega2 {
        return 1.0;
    }
    (omega1 + omega2) / (2.0 * (omega1 * omega2).sqrt())
}

/// Relative amplitude below which angular-spectrum terms are dropped.
pub const TRUNCATION: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamSpec {
    /// Focus in the (x, y) plane.
    pub center: [f64; 2],
    /// Carrier direction, radians from the x axis.
    pub direction: f64,
    /// Standard deviation of the Gaussian angular spectrum, radians.
    pub angular_width: f64,
    #[serde(default = "default_beam_modes")]
    pub modes: usize,
}

fn default_beam_modes() -> usize {
    41
}

/// Rectangle in the (x, y) plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Region {
    pub fn area(&self) -> f64 {
        (self.x[1] - self.x[0]) * (self.y[1] - self.y[0])
    }
}

/// Node grid over a region, `nx × ny` points including the edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid2 {
    pub region: Region,
    pub nx: usize,
    pub ny: usize,
}

impl Grid2 {
    pub fn spacing(&self) -> [f64; 2] {
        let r = &self.region;
        [
            (r.x[1] - r.x[0]) / (self.nx.max(2) - 1) as f64,
            (r.y[1] - r.y[0]) / (self.ny.max(2) - 1) as f64,
        ]
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point `i` in row-major order (x fastest).
    pub fn point(&self, i: usize) -> [f64; 3] {
        let [dx, dy] = self.spacing();
        let (ix, iy) = (i % self.nx, i / self.nx);
        [self.region.x[0] + ix as f64 * dx, self.region.y[0] + iy as f64 * dy, 0.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoFrequencySpec {
    pub omega1: f64,
    pub omega2: f64,
    #[serde(default)]
    pub mass: f64,
    pub beam1: BeamSpec,
    pub beam2: BeamSpec,
    /// Region over which each profile is normalized to `∫|φ|² = 1`.
    pub region: Region,
    #[serde(default = "default_norm_points")]
    pub norm_points: usize,
}

fn default_norm_points() -> usize {
    256
}

/// Profile as `Σ d_n e^{i k_n·x}` with on-shell `k_n`.
#[derive(Debug, Clone, PartialEq)]
struct Profile {
    k: Vec<[f64; 2]>,
    d: Vec<Complex64>,
}

impl Profile {
    fn at(&self, x: [f64; 3]) -> Complex64 {
        self.k
            .iter()
            .zip(&self.d)
            .map(|(k, d)| {
                let (s, c) = (k[0] * x[0] + k[1] * x[1]).sin_cos();
                d * Complex64::new(c, s)
            })
            .sum()
    }
}

fn build_profile(beam: &BeamSpec, kappa: f64) -> Result<Profile> {
    if !(beam.angular_width.is_finite() && beam.angular_width > 0.0) {
        return Err(Error::InvalidInput("beam angular width must be positive".into()));
    }
    if beam.modes == 0 {
        return Err(Error::InvalidInput("beam needs at least one mode".into()));
    }
    if kappa == 0.0 {
        return Ok(Profile { k: vec![[0.0, 0.0]], d: vec![Complex64::new(1.0, 0.0)] });
    }
    let sigma = beam.angular_width;
    let reach = sigma * (-2.0 * TRUNCATION.ln()).sqrt();
    let n = beam.modes;
    let mut k = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    for i in 0..n {
        let u = if n == 1 { 0.0 } else { -reach + 2.0 * reach * i as f64 / (n - 1) as f64 };
        let w = (-0.5 * (u / sigma).powi(2)).exp();
        if w < TRUNCATION {
            continue;
        }
        let th = beam.direction + u;
        let kn = [kappa * th.cos(), kappa * th.sin()];
        // Focus the beam on its center.
        let ph = -(kn[0] * beam.center[0] + kn[1] * beam.center[1]);
        k.push(kn);
        d.push(Complex64::from_polar(w, ph));
    }
    Ok(Profile { k, d })
}

fn normalize(p: &mut Profile, region: Region, pts: usize) -> Result<()> {
    let hx = (region.x[1] - region.x[0]) / pts as f64;
    let hy = (region.y[1] - region.y[0]) / pts as f64;
    let mut acc = 0.0;
    for iy in 0..pts {
        for ix in 0..pts {
            let x = [region.x[0] + (ix as f64 + 0.5) * hx, region.y[0] + (iy as f64 + 0.5) * hy, 0.0];
            acc += p.at(x).norm_sqr();
        }
    }
    let norm = acc * hx * hy;
    if !(norm > 0.0) {
        return Err(Error::ZeroDensity);
    }
    let s = 1.0 / norm.sqrt();
    p.d.iter_mut().for_each(|d| *d *= s);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DensityKind {
    Conventional,
    Kg,
    AbsKg,
}

/// Pointwise values of the two densities and their decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointDensities {
    pub classical: f64,
    pub interference: f64,
    pub rho: f64,
    pub j0: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoFrequencyScenario {
    spec: TwoFrequencySpec,
    p1: Profile,
    p2: Profile,
}

impl TwoFrequencyScenario {
    pub fn new(spec: TwoFrequencySpec) -> Result<Self> {
        let (w1, w2, m) = (spec.omega1, spec.omega2, spec.mass);
        if !(w1.is_finite() && w2.is_finite() && w1 > 0.0 && w2 > 0.0) {
            return Err(Error::InvalidInput("frequencies must be positive".into()));
        }
        if !(m >= 0.0) || w1 < m || w2 < m {
            return Err(Error::InvalidInput(format!("frequencies must be at least the mass {m}")));
        }
        if !(spec.region.area() > 0.0) || spec.norm_points == 0 {
            return Err(Error::InvalidInput("normalization region must have positive area".into()));
        }
        let mut p1 = build_profile(&spec.beam1, (w1 * w1 - m * m).sqrt())?;
        let mut p2 = build_profile(&spec.beam2, (w2 * w2 - m * m).sqrt())?;
        normalize(&mut p1, spec.region, spec.norm_points)?;
        normalize(&mut p2, spec.region, spec.norm_points)?;
        Ok(Self { spec, p1, p2 })
    }

    pub fn spec(&self) -> &TwoFrequencySpec {
        &self.spec
    }

    pub fn omegas(&self) -> (f64, f64) {
        (self.spec.omega1, self.spec.omega2)
    }

    pub fn alpha(&self) -> f64 {
        alpha(self.spec.omega1, self.spec.omega2)
    }

    pub fn eta(&self) -> f64 {
        self.spec.omega2 / self.spec.omega1
    }

    /// `|ω₁ − ω₂|`.
    pub fn beat(&self) -> f64 {
        (self.spec.omega1 - self.spec.omega2).abs()
    }

    /// `φ₁(x), φ₂(x)`.
    pub fn profiles(&self, x: [f64; 3]) -> (Complex64, Complex64) {
        (self.p1.at(x), self.p2.at(x))
    }

    /// `C(x) = (|φ₁|² + |φ₂|²)/2`.
    pub fn classical(&self, x: [f64; 3]) -> f64 {
        let (a, b) = self.profiles(x);
        0.5 * (a.norm_sqr() + b.norm_sqr())
    }

    /// `I(x, t) = Re(e^{−i(ω₁−ω₂)t} φ₁ φ₂*)`.
    pub fn interference(&self, x: [f64; 3], t: f64) -> f64 {
        let (a, b) = self.profiles(x);
        interference_term(a, b, (self.spec.omega1 - self.spec.omega2) * t)
    }

    /// `|φ(x, t)|²` for `φ = (e^{−iω₁t}φ₁ + e^{−iω₂t}φ₂)/√2`.
    pub fn conventional_density(&self, x: [f64; 3], t: f64) -> f64 {
        let (a, b) = self.profiles(x);
        self.rho_from(a, b, t)
    }

    /// Time component of the Klein-Gordon current of
    /// `ψ = (e^{−iω₁t}φ₁/√(2ω₁) + e^{−iω₂t}φ₂/√(2ω₂))/√2`.
    pub fn kg_density(&self, x: [f64; 3], t: f64) -> f64 {
        let (a, b) = self.profiles(x);
        self.j0_from(a, b, t)
    }

    pub fn densities(&self, x: [f64; 3], t: f64) -> PointDensities {
        let (a, b) = self.profiles(x);
        PointDensities {
            classical: 0.5 * (a.norm_sqr() + b.norm_sqr()),
            interference: interference_term(a, b, (self.spec.omega1 - self.spec.omega2) * t),
            rho: self.rho_from(a, b, t),
            j0: self.j0_from(a, b, t),
        }
    }

    fn branches(&self, a: Complex64, b: Complex64, t: f64) -> (Complex64, Complex64) {
        let (w1, w2) = self.omegas();
        (a * Complex64::from_polar(1.0, -w1 * t), b * Complex64::from_polar(1.0, -w2 * t))
    }

    fn rho_from(&self, a: Complex64, b: Complex64, t: f64) -> f64 {
        let (u, v) = self.branches(a, b, t);
        0.5 * (u + v).norm_sqr()
    }

    fn j0_from(&self, a: Complex64, b: Complex64, t: f64) -> f64 {
        let (w1, w2) = self.omegas();
        let (u, v) = self.branches(a, b, t);
        let (u, v) = (u / (2.0 * w1).sqrt(), v / (2.0 * w2).sqrt());
        // j₀ = −2 Im(ψ* ∂ₜψ) with ∂ₜψ = −i(ω₁u + ω₂v)/√2.
        let psi = (u + v) * std::f64::consts::FRAC_1_SQRT_2;
        let omega_psi = (u * w1 + v * w2) * std::f64::consts::FRAC_1_SQRT_2;
        2.0 * (psi.conj() * omega_psi).re
    }

    fn density_from(&self, kind: DensityKind, a: Complex64, b: Complex64, t: f64) -> f64 {
        match kind {
            DensityKind::Conventional => self.rho_from(a, b, t),
            DensityKind::Kg => self.j0_from(a, b, t),
            DensityKind::AbsKg => self.j0_from(a, b, t).abs(),
        }
    }

    /// Default midpoint node count for a window: 64 per beat period, at
    /// least 256.
    pub fn default_nodes(&self, window: f64) -> usize {
        let periods = window * self.beat() / std::f64::consts::TAU;
        ((64.0 * periods).ceil() as usize).max(256)
    }

    /// `(1/T) ∫₀ᵀ density dt` by the midpoint rule.
    pub fn time_average(&self, kind: DensityKind, x: [f64; 3], window: f64) -> Result<f64> {
        self.time_average_with_nodes(kind, x, window, self.default_nodes(window))
    }

    pub fn time_average_with_nodes(&self, kind: DensityKind, x: [f64; 3], window: f64, nodes: usize) -> Result<f64> {
        check_window(window)?;
        let (a, b) = self.profiles(x);
        Ok(self.average_from(kind, a, b, window, nodes))
    }

    fn average_from(&self, kind: DensityKind, a: Complex64, b: Complex64, window: f64, nodes: usize) -> f64 {
        let h = window / nodes as f64;
        let sum: f64 = (0..nodes).map(|i| self.density_from(kind, a, b, (i as f64 + 0.5) * h)).sum();
        sum / nodes as f64
    }

    /// `⟨|j₀|⟩_T − ⟨ρ⟩_T` on a grid. Over whole beat periods `⟨ρ⟩_T = C`;
    /// shorter windows keep the instantaneous fringe phase.
    pub fn deviation_map(&self, grid: &Grid2, window: f64, exec: Exec) -> Result<DeviationMap> {
        check_window(window)?;
        let beat = self.beat();
        let reference_length = (beat > 0.0).then(|| 1.0 / beat);
        if let Some(len) = reference_length {
            let limit = len / 8.0;
            let spacing = grid.spacing();
            let worst = spacing[0].max(if grid.ny > 1 { spacing[1] } else { 0.0 });
            if worst > limit {
                return Err(Error::UnderResolved { spacing: worst, limit });
            }
        }
        if grid.nx == 0 || grid.ny == 0 {
            return Err(Error::InvalidInput("grid must be non-empty".into()));
        }
        let nodes = self.default_nodes(window);
        let values = exec.map(grid.len(), |i| {
            let (a, b) = self.profiles(grid.point(i));
            self.average_from(DensityKind::AbsKg, a, b, window, nodes)
                - self.average_from(DensityKind::Conventional, a, b, window, nodes)
        });
        let correlation_length = correlation_length(&values, *grid);
        Ok(DeviationMap { grid: *grid, window, values, correlation_length, reference_length })
    }

    /// Grid export rows at time `t`, with `⟨|j₀|⟩` over `[0, window]`.
    pub fn grid_rows(&self, grid: &Grid2, t: f64, window: f64, exec: Exec) -> Result<Vec<GridRow>> {
        check_window(window)?;
        let nodes = self.default_nodes(window);
        Ok(exec.map(grid.len(), |i| {
            let x = grid.point(i);
            let (a, b) = self.profiles(x);
            GridRow {
                x: x[0],
                y: x[1],
                classical: 0.5 * (a.norm_sqr() + b.norm_sqr()),
                interference: interference_term(a, b, (self.spec.omega1 - self.spec.omega2) * t),
                rho: self.rho_from(a, b, t),
                j0: self.j0_from(a, b, t),
                abs_j0_avg: self.average_from(DensityKind::AbsKg, a, b, window, nodes),
            }
        }))
    }

    /// The same state as a Klein-Gordon mode sum (unit volume, `z`
    /// momentum zero) for use with [`crate::current::CurrentField`].
    pub fn to_wavefunction(&self) -> Result<WaveFunction> {
        let m = self.spec.mass;
        let mut modes = Vec::new();
        for p in [&self.p1, &self.p2] {
            for (k, d) in p.k.iter().zip(&p.d) {
                // Amplitude d/(2√ω) = c/√(2ωV) with V = 1.
                modes.push(PlaneWaveMode::new([k[0], k[1], 0.0], m, d * std::f64::consts::FRAC_1_SQRT_2)?);
            }
        }
        WaveFunction::klein_gordon(modes, 1.0)
    }
}

fn interference_term(a: Complex64, b: Complex64, phase: f64) -> f64 {
    (Complex64::from_polar(1.0, -phase) * a * b.conj()).re
}

fn check_window(window: f64) -> Result<()> {
    if !(window.is_finite() && window > 0.0) {
        return Err(Error::InvalidInput(format!("averaging window must be positive, got {window}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridRow {
    pub x: f64,
    pub y: f64,
    pub classical: f64,
    pub interference: f64,
    pub rho: f64,
    pub j0: f64,
    pub abs_j0_avg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationMap {
    pub grid: Grid2,
    pub window: f64,
    /// Row-major, x fastest.
    pub values: Vec<f64>,
    /// First zero of the mean-removed autocorrelation, smallest over axes.
    pub correlation_length: Option<f64>,
    /// `|ω₁ − ω₂|⁻¹`, absent when the frequencies coincide.
    pub reference_length: Option<f64>,
}

impl DeviationMap {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// First zero crossing of the lag autocorrelation along each axis,
/// linearly interpolated; the smaller length wins.
pub fn correlation_length(values: &[f64], grid: Grid2) -> Option<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let d: Vec<f64> = values.iter().map(|v| v - mean).collect();
    if d.iter().all(|v| v.abs() < 1e-300) {
        return None;
    }
    let [hx, hy] = grid.spacing();
    let (nx, ny) = (grid.nx, grid.ny);
    let along_x = first_zero(nx, |lag| {
        let mut acc = 0.0;
        for iy in 0..ny {
            for ix in 0..nx - lag {
                acc += d[iy * nx + ix] * d[iy * nx + ix + lag];
            }
        }
        acc / ((nx - lag) * ny) as f64
    })
    .map(|l| l * hx);
    let along_y = first_zero(ny, |lag| {
        let mut acc = 0.0;
        for iy in 0..ny - lag {
            for ix in 0..nx {
                acc += d[iy * nx + ix] * d[(iy + lag) * nx + ix];
            }
        }
        acc / ((ny - lag) * nx) as f64
    })
    .map(|l| l * hy);
    match (along_x, along_y) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

fn first_zero(n: usize, r: impl Fn(usize) -> f64) -> Option<f64> {
    if n < 2 {
        return None;
    }
    let mut prev = r(0);
    for lag in 1..n / 2 {
        let cur = r(lag);
        if cur <= 0.0 {
            return Some(lag as f64 - 1.0 + prev / (prev - cur));
        }
        prev = cur;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::current::CurrentField;
    use crate::geometry::FourVector;
    use proptest::prelude::*;

    pub(crate) fn two_slit(omega1: f64, omega2: f64) -> TwoFrequencyScenario {
        TwoFrequencyScenario::new(TwoFrequencySpec {
            omega1,
            omega2,
            mass: 0.0,
            beam1: BeamSpec { center: [0.0, -0.5], direction: 0.15, angular_width: 0.2, modes: 41 },
            beam2: BeamSpec { center: [0.0, 0.5], direction: -0.15, angular_width: 0.2, modes: 41 },
            region: Region { x: [-12.0, 12.0], y: [-12.0, 12.0] },
            norm_points: 200,
        })
        .unwrap()
    }

    #[test]
    fn alpha_values() {
        assert_eq!(alpha(1.0, 4.0), 1.25);
        assert_eq!(alpha(3.0, 3.0), 1.0);
    }

    proptest! {
        #[test]
        fn alpha_symmetric_and_at_least_one(a in 0.01f64..100.0, b in 0.01f64..100.0) {
            prop_assert_eq!(alpha(a, b), alpha(b, a));
            prop_assert!(alpha(a, b) >= 1.0);
            prop_assert_eq!(alpha(a, a), 1.0);
        }
    }

    #[test]
    fn profiles_unit_normalized() {
        let sc = two_slit(1.0, 4.0);
        let r = sc.spec().region;
        // Independent check on a finer, offset grid.
        let pts = 300;
        let hx = (r.x[1] - r.x[0]) / pts as f64;
        let (mut n1, mut n2) = (0.0, 0.0);
        for iy in 0..pts {
            for ix in 0..pts {
                let x = [r.x[0] + (ix as f64 + 0.5) * hx, r.y[0] + (iy as f64 + 0.5) * hx, 0.0];
                let (a, b) = sc.profiles(x);
                n1 += a.norm_sqr();
                n2 += b.norm_sqr();
            }
        }
        assert!((n1 * hx * hx - 1.0).abs() < 1e-3, "{}", n1 * hx * hx);
        assert!((n2 * hx * hx - 1.0).abs() < 1e-3, "{}", n2 * hx * hx);
    }

    #[test]
    fn decomposition_exact() {
        let sc = two_slit(1.0, 4.0);
        for i in 0..200 {
            let x = [-2.0 + 0.021 * i as f64, 1.3 - 0.017 * i as f64, 0.0];
            let t = 0.037 * i as f64;
            let d = sc.densities(x, t);
            assert!((d.rho - (d.classical + d.interference)).abs() < 1e-12);
            assert!((d.j0 - (d.classical + 1.25 * d.interference)).abs() < 1e-12);
            assert!((d.j0 - d.rho - 0.25 * d.interference).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_frequencies_coincide() {
        let sc = two_slit(2.0, 2.0);
        for i in 0..100 {
            let x = [-1.0 + 0.02 * i as f64, 0.3, 0.0];
            let t = 0.1 * i as f64;
            assert!((sc.conventional_density(x, t) - sc.kg_density(x, t)).abs() < 1e-12);
            // Stationary.
            assert!((sc.conventional_density(x, t) - sc.conventional_density(x, 0.0)).abs() < 1e-12);
            let avg = sc.time_average(DensityKind::Kg, x, 3.0).unwrap();
            assert!((avg - sc.kg_density(x, 0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn full_period_average_is_classical() {
        let sc = two_slit(1.0, 4.0);
        let period = std::f64::consts::TAU / 3.0;
        for x in [[0.0, 0.0, 0.0], [1.2, -0.4, 0.0], [3.0, 0.8, 0.0]] {
            let c = sc.classical(x);
            let rho = sc.time_average(DensityKind::Conventional, x, 5.0 * period).unwrap();
            let j0 = sc.time_average(DensityKind::Kg, x, 5.0 * period).unwrap();
            assert!((rho - c).abs() < 1e-12 * (1.0 + c));
            assert!((j0 - c).abs() < 1e-12 * (1.0 + c));
        }
    }

    #[test]
    fn far_from_second_beam() {
        let sc = two_slit(1.0, 4.0);
        let x = [0.0, -9.0, 0.0];
        let (a, b) = sc.profiles(x);
        let rho = sc.conventional_density(x, 0.3);
        let bound = a.norm() * b.norm() + 0.5 * b.norm_sqr();
        assert!((rho - 0.5 * a.norm_sqr()).abs() <= bound + 1e-15);
    }

    #[test]
    fn matches_current_module() {
        let sc = two_slit(1.0, 4.0);
        let cf = CurrentField::new(sc.to_wavefunction().unwrap()).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..300 {
            let x = [-3.0 + 0.02 * i as f64, 2.0 - 0.013 * i as f64, 0.0];
            let t = 0.05 * i as f64;
            let j = cf.current(FourVector::new(t, x[0], x[1], x[2]));
            worst = worst.max((j.t - sc.kg_density(x, t)).abs());
        }
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn abs_average_exceeds_classical_where_sign_flips() {
        let sc = two_slit(1.0, 4.0);
        let period = std::f64::consts::TAU / 3.0;
        let mut found = 0;
        for i in 0..60 {
            let x = [-1.5 + 0.05 * i as f64, 0.1, 0.0];
            let (a, b) = sc.profiles(x);
            let c = 0.5 * (a.norm_sqr() + b.norm_sqr());
            let flips = c - sc.alpha() * a.norm() * b.norm() < 0.0;
            // Dense oracle: 20000-point average of |C + α|P| cos|.
            let p = a.norm() * b.norm();
            let m = 20_000;
            let oracle: f64 = (0..m)
                .map(|q| (c + sc.alpha() * p * (std::f64::consts::TAU * (q as f64 + 0.5) / m as f64).cos()).abs())
                .sum::<f64>()
                / m as f64;
            let avg = sc.time_average(DensityKind::AbsKg, x, period).unwrap();
            assert!((avg - oracle).abs() < 1e-3 * oracle);
            if flips {
                found += 1;
                assert!(avg > c * (1.0 + 1e-6));
            } else {
                assert!((avg - c).abs() < 1e-9 * (1.0 + c));
            }
        }
        assert!(found > 0);
    }

    #[test]
    fn deviation_map_zero_cases() {
        let grid = Grid2 { region: Region { x: [-1.0, 1.0], y: [-1.0, 1.0] }, nx: 21, ny: 21 };
        let eq = two_slit(2.0, 2.0);
        let m = eq.deviation_map(&grid, 1.0, Exec::Sequential).unwrap();
        assert!(m.max_abs() < 1e-12);
        assert!(m.reference_length.is_none());

        // Beams far apart: no overlap inside the grid. Dense angular
        // sampling keeps the transverse aliases outside as well.
        let far = TwoFrequencyScenario::new(TwoFrequencySpec {
            omega1: 4.0,
            omega2: 16.0,
            mass: 0.0,
            beam1: BeamSpec { center: [0.0, -8.0], direction: 0.0, angular_width: 0.25, modes: 201 },
            beam2: BeamSpec { center: [0.0, 8.0], direction: 0.0, angular_width: 0.25, modes: 201 },
            region: Region { x: [-20.0, 20.0], y: [-20.0, 20.0] },
            norm_points: 300,
        })
        .unwrap();
        let g = Grid2 { region: Region { x: [-0.3, 0.3], y: [-8.3, -7.7] }, nx: 61, ny: 61 };
        let m = far.deviation_map(&g, 0.5, Exec::Sequential).unwrap();
        let mut overlap: f64 = 0.0;
        let mut c_max: f64 = 0.0;
        for i in 0..g.len() {
            let (a, b) = far.profiles(g.point(i));
            overlap = overlap.max(a.norm() * b.norm());
            c_max = c_max.max(far.classical(g.point(i)));
        }
        assert!(overlap < 1e-6 * c_max, "overlap {overlap} c_max {c_max}");
        // |⟨|j₀|⟩ − ⟨ρ⟩| ≤ (α + 1)|φ₁||φ₂| pointwise.
        assert!(m.max_abs() <= (far.alpha() + 1.0) * overlap + 1e-15);
    }

    #[test]
    fn deviation_scale_tracks_beat() {
        let sc = two_slit(1.0, 4.0);
        let grid = Grid2 { region: Region { x: [-2.0, 2.0], y: [-2.0, 2.0] }, nx: 97, ny: 97 };
        let period = std::f64::consts::TAU / sc.beat();
        for window in [period, 0.25 * period] {
            let m = sc.deviation_map(&grid, window, Exec::Parallel).unwrap();
            let r = m.correlation_length.unwrap() / m.reference_length.unwrap();
            assert!((0.5..=2.0).contains(&r), "window {window}: ratio {r}");
        }
    }

    #[test]
    fn under_resolved_grid_rejected() {
        let sc = two_slit(1.0, 4.0);
        let grid = Grid2 { region: Region { x: [-1.0, 1.0], y: [-1.0, 1.0] }, nx: 11, ny: 11 };
        assert!(matches!(sc.deviation_map(&grid, 0.5, Exec::Sequential), Err(Error::UnderResolved { .. })));
    }

    #[test]
    fn correlation_length_of_cosine() {
        let grid = Grid2 { region: Region { x: [0.0, 20.0], y: [0.0, 1.0] }, nx: 401, ny: 3 };
        let k = 2.0;
        let values: Vec<f64> = (0..grid.len()).map(|i| (k * grid.point(i)[0]).cos()).collect();
        let l = correlation_length(&values, grid).unwrap();
        assert!((l - std::f64::consts::FRAC_PI_2 / k).abs() < 0.02, "{l}");
    }

    #[test]
    fn invalid_inputs() {
        let mut spec = two_slit(1.0, 4.0).spec().clone();
        spec.omega1 = 0.0;
        assert!(TwoFrequencyScenario::new(spec.clone()).is_err());
        spec.omega1 = 1.0;
        spec.mass = 2.0;
        assert!(TwoFrequencyScenario::new(spec).is_err());
        assert!(two_slit(1.0, 4.0).time_average(DensityKind::Kg, [0.0; 3], 0.0).is_err());
    }
}
