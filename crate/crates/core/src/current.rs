//! The conserved Klein-Gordon current `j_μ = i ψ* ∂↔_μ ψ`, its
//! surface-contracted density, and the n-particle generalization with a
//! preferred foliation.
//!
//! For a mode sum `ψ = Σ_a A_a(x)` with `A_a = c_a N_a e^{−ik_a·x}` the
//! current is the bilinear form
//!
//! ```text
//! j^μ(x) = Σ_{a,b} Re(A_a* A_b) (k_a + k_b)^μ = 2 Σ_a k_a^μ Re(A_a* ψ)
//! ```
//!
//! and the n-particle tensor is the same sum over product terms with one
//! factor `(k_{T,a} + k_{T',a})_{μ_a}` per particle.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{Foliation, FourVector, UniformFoliation, UNIT_NORMAL_TOL};
use crate::wavefunction::{Normalization, WaveFunction};

/// Allowed spread of leaf times for points "on the same leaf".
pub const LEAF_TOL: f64 = 1e-9;

/// Closed-form current of a single-particle Klein-Gordon state.
#[derive(Debug, Clone)]
pub struct CurrentField {
    wf: WaveFunction,
    momenta: Vec<FourVector>,
}

impl CurrentField {
    pub fn new(wf: WaveFunction) -> Result<Self> {
        if wf.kind() != Normalization::KleinGordon {
            return Err(Error::InvalidInput(
                "the conserved current is defined for Klein-Gordon normalized states".into(),
            ));
        }
        let momenta = wf.modes().iter().map(|m| m.four_momentum()).collect();
        Ok(Self { wf, momenta })
    }

    pub fn wavefunction(&self) -> &WaveFunction {
        &self.wf
    }

    /// Contravariant `j^μ(x)`, computed in one pass as
    /// `2 Re(conj(Σ_a k_a^μ A_a) ψ)`.
    pub fn current(&self, x: FourVector) -> FourVector {
        let mut psi = Complex64::new(0.0, 0.0);
        let mut p = [Complex64::new(0.0, 0.0); 4];
        for ((m, amp), k) in self.wf.modes().iter().zip(self.wf.amplitudes()).zip(&self.momenta) {
            let r = m.momentum();
            let phase = m.omega() * x.t - (r[0] * x.x + r[1] * x.y + r[2] * x.z);
            let (s, c) = phase.sin_cos();
            let a = amp * Complex64::new(c, -s);
            psi += a;
            let kc = k.to_array();
            for mu in 0..4 {
                p[mu] += a * kc[mu];
            }
        }
        let j = |mu: usize| 2.0 * (p[mu].conj() * psi).re;
        FourVector::new(j(0), j(1), j(2), j(3))
    }

    /// Explicit pair expansion: diagonal terms `2|A_a|² k_a` plus
    /// `2|A_a||A_b| cos(φ_b − φ_a) (k_a + k_b)` per unordered pair.
    pub fn current_pairwise(&self, x: FourVector) -> FourVector {
        let mut terms = Vec::with_capacity(self.momenta.len());
        self.wf.terms_into(x, &mut terms);
        let mut j = FourVector::ZERO;
        for a in 0..terms.len() {
            j = j + self.momenta[a] * (2.0 * terms[a].norm_sqr());
            for b in a + 1..terms.len() {
                let w = 2.0 * (terms[a].conj() * terms[b]).re;
                j = j + (self.momenta[a] + self.momenta[b]) * w;
            }
        }
        j
    }

    /// `i(ψ*∂_μψ − ψ∂_μψ*) = −2 Im(ψ*∂_μψ)` from the analytic gradient,
    /// raised to contravariant form.
    pub fn current_via_gradient(&self, x: FourVector) -> FourVector {
        let psi = self.wf.evaluate(x);
        let g = self.wf.gradient(x);
        let lower: Vec<f64> = g.iter().map(|d| -2.0 * (psi.conj() * d).im).collect();
        FourVector::new(lower[0], -lower[1], -lower[2], -lower[3])
    }

    /// Signed `j⁰(x)`.
    pub fn time_component(&self, x: FourVector) -> f64 {
        self.current(x).t
    }

    /// `p̃ = |metric · n^μ j_μ|` for a future unit timelike normal.
    pub fn density(&self, x: FourVector, normal: FourVector, metric_factor: f64) -> Result<f64> {
        check_normal(normal)?;
        Ok((metric_factor * normal.dot(self.current(x))).abs())
    }

    /// Upper bound on `|n·j|` from the triangle inequality over mode pairs.
    pub fn flux_bound(&self, normal: FourVector) -> f64 {
        let amps = self.wf.amplitudes();
        let mut bound = 0.0;
        for a in 0..amps.len() {
            for b in 0..amps.len() {
                let k = self.momenta[a] + self.momenta[b];
                bound += amps[a].norm() * amps[b].norm() * normal.dot(k).abs();
            }
        }
        bound
    }

    /// Upper bound on the Euclidean norm of `j`.
    pub fn magnitude_bound(&self) -> f64 {
        let amps = self.wf.amplitudes();
        let mut bound = 0.0;
        for a in 0..amps.len() {
            for b in 0..amps.len() {
                let k = self.momenta[a] + self.momenta[b];
                bound += amps[a].norm() * amps[b].norm() * k.euclidean_norm();
            }
        }
        bound
    }

    /// Lower bound on `j⁰` with every pair phase at its worst; attained
    /// exactly for two distinct modes.
    pub fn time_component_lower_bound(&self) -> f64 {
        let amps = self.wf.amplitudes();
        let mut v = 0.0;
        for a in 0..amps.len() {
            v += 2.0 * amps[a].norm_sqr() * self.momenta[a].t;
            for b in a + 1..amps.len() {
                v -= 2.0 * amps[a].norm() * amps[b].norm() * (self.momenta[a].t + self.momenta[b].t).abs();
            }
        }
        v
    }
}

fn check_normal(normal: FourVector) -> Result<()> {
    if !(normal.t > 0.0) || (normal.square() - 1.0).abs() > 1e3 * UNIT_NORMAL_TOL {
        return Err(Error::BadNormal(normal.to_string()));
    }
    Ok(())
}

/// One product term `c ∏_a e^{−ik_a·x_a}/√(2ω_a V)` of an n-particle state.
#[derive(Debug, Clone, PartialEq)]
struct ProductTerm {
    amp: Complex64,
    momenta: Vec<FourVector>,
}

/// n-particle wave function as a finite sum of products of plane waves.
#[derive(Debug, Clone, PartialEq)]
pub struct NParticleWaveFunction {
    n: usize,
    terms: Vec<ProductTerm>,
}

impl NParticleWaveFunction {
    /// `ψ_1(x₁)⋯ψ_n(x_n)`, expanded into products of modes.
    pub fn product(factors: &[&WaveFunction]) -> Result<Self> {
        Self::check_factors(factors)?;
        let mut terms = vec![ProductTerm { amp: Complex64::new(1.0, 0.0), momenta: Vec::new() }];
        for f in factors {
            let mut next = Vec::with_capacity(terms.len() * f.modes().len());
            for t in &terms {
                for (m, a) in f.modes().iter().zip(f.amplitudes()) {
                    let mut momenta = t.momenta.clone();
                    momenta.push(m.four_momentum());
                    next.push(ProductTerm { amp: t.amp * a, momenta });
                }
            }
            terms = next;
        }
        Ok(Self { n: factors.len(), terms })
    }

    /// Bosonic symmetrization `Σ_perm ψ_{σ1}(x₁)⋯ψ_{σn}(x_n) / √(n!)`.
    pub fn symmetrized_product(factors: &[&WaveFunction]) -> Result<Self> {
        Self::check_factors(factors)?;
        let m0 = factors[0].modes()[0].mass();
        if factors.iter().any(|f| (f.modes()[0].mass() - m0).abs() > 1e-12 * (1.0 + m0)) {
            return Err(Error::InvalidInput("symmetrized factors must share the mass".into()));
        }
        let n = factors.len();
        let perms = permutations(n);
        let norm = 1.0 / (perms.len() as f64).sqrt();
        let mut terms = Vec::new();
        for p in &perms {
            let ordered: Vec<&WaveFunction> = p.iter().map(|&i| factors[i]).collect();
            let part = Self::product(&ordered)?;
            terms.extend(part.terms.into_iter().map(|mut t| {
                t.amp *= norm;
                t
            }));
        }
        Ok(Self { n, terms })
    }

    fn check_factors(factors: &[&WaveFunction]) -> Result<()> {
        if factors.is_empty() {
            return Err(Error::InvalidInput("need at least one particle".into()));
        }
        if factors.iter().any(|f| f.kind() != Normalization::KleinGordon) {
            return Err(Error::InvalidInput("n-particle factors must be Klein-Gordon normalized".into()));
        }
        Ok(())
    }

    pub fn particles(&self) -> usize {
        self.n
    }

    fn term_values(&self, points: &[FourVector]) -> Vec<Complex64> {
        self.terms
            .iter()
            .map(|t| {
                let phase: f64 = t.momenta.iter().zip(points).map(|(k, x)| k.dot(*x)).sum();
                t.amp * Complex64::from_polar(1.0, -phase)
            })
            .collect()
    }

    pub fn evaluate(&self, points: &[FourVector]) -> Complex64 {
        self.term_values(points).iter().sum()
    }

    /// Covariant `∂ψ/∂x_a^μ`.
    pub fn gradient(&self, a: usize, points: &[FourVector]) -> [Complex64; 4] {
        let vals = self.term_values(points);
        let mut g = [Complex64::new(0.0, 0.0); 4];
        for (t, v) in self.terms.iter().zip(vals) {
            let kl = t.momenta[a].lowered();
            for mu in 0..4 {
                g[mu] += Complex64::new(0.0, -kl[mu]) * v;
            }
        }
        g
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Current of an n-particle state with a preferred foliation.
#[derive(Clone)]
pub struct NParticleCurrent {
    wf: NParticleWaveFunction,
    foliation: Arc<dyn Foliation>,
}

impl std::fmt::Debug for NParticleCurrent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NParticleCurrent").field("wf", &self.wf).finish_non_exhaustive()
    }
}

impl NParticleCurrent {
    pub fn new(wf: NParticleWaveFunction, foliation: Arc<dyn Foliation>) -> Self {
        Self { wf, foliation }
    }

    /// With the default foliation `N = (1,0,0,0)`.
    pub fn with_time_foliation(wf: NParticleWaveFunction) -> Self {
        Self::new(wf, Arc::new(UniformFoliation::default()))
    }

    pub fn particles(&self) -> usize {
        self.wf.n
    }

    pub fn wavefunction(&self) -> &NParticleWaveFunction {
        &self.wf
    }

    pub fn foliation(&self) -> &dyn Foliation {
        self.foliation.as_ref()
    }

    fn check_points(&self, points: &[FourVector]) -> Result<()> {
        if points.len() != self.wf.n {
            return Err(Error::InvalidInput(format!(
                "expected {} points, got {}",
                self.wf.n,
                points.len()
            )));
        }
        Ok(())
    }

    /// Errors unless all points share a leaf within [`LEAF_TOL`].
    pub fn check_leaf(&self, points: &[FourVector]) -> Result<()> {
        let times: Vec<f64> = points.iter().map(|x| self.foliation.leaf_time(*x)).collect();
        let lo = times.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let spread = hi - lo;
        if spread > LEAF_TOL {
            return Err(Error::NotOnLeaf { spread });
        }
        Ok(())
    }

    fn pair_weights(&self, points: &[FourVector]) -> Vec<Complex64> {
        self.wf.term_values(points)
    }

    /// The real rank-n tensor `j_{μ₁…μ_n}` with lower indices, flattened
    /// with `μ₁` varying fastest.
    pub fn tensor(&self, points: &[FourVector]) -> Result<Vec<f64>> {
        self.check_points(points)?;
        self.check_leaf(points)?;
        let n = self.wf.n;
        let size = 4usize.pow(n as u32);
        let mut out = vec![0.0; size];
        let vals = self.pair_weights(points);
        let terms = &self.wf.terms;
        let mut factors = vec![[0.0; 4]; n];
        for (t, vt) in terms.iter().zip(&vals) {
            for (u, vu) in terms.iter().zip(&vals) {
                let w = (vt.conj() * vu).re;
                if w == 0.0 {
                    continue;
                }
                for a in 0..n {
                    factors[a] = (t.momenta[a] + u.momenta[a]).lowered();
                }
                for (idx, slot) in out.iter_mut().enumerate() {
                    let mut prod = w;
                    let mut rem = idx;
                    for f in &factors {
                        prod *= f[rem % 4];
                        rem /= 4;
                    }
                    *slot += prod;
                }
            }
        }
        Ok(out)
    }

    /// Contravariant current of particle `a`: the tensor contracted with
    /// `N(x_b)` in every other slot.
    pub fn contracted(&self, a: usize, points: &[FourVector]) -> Result<FourVector> {
        self.check_points(points)?;
        if a >= self.wf.n {
            return Err(Error::ParticleIndex { index: a, n: self.wf.n });
        }
        self.check_leaf(points)?;
        Ok(self.contracted_unchecked(a, points))
    }

    /// As [`contracted`](Self::contracted) without the leaf check; used
    /// when integrating, where the configuration moves off the start leaf
    /// only by integration error.
    pub fn contracted_unchecked(&self, a: usize, points: &[FourVector]) -> FourVector {
        let normals: Vec<FourVector> = points.iter().map(|x| self.foliation.normal(*x)).collect();
        let vals = self.pair_weights(points);
        let terms = &self.wf.terms;
        let mut j = FourVector::ZERO;
        for (t, vt) in terms.iter().zip(&vals) {
            for (u, vu) in terms.iter().zip(&vals) {
                let mut w = (vt.conj() * vu).re;
                for b in 0..self.wf.n {
                    if b != a {
                        w *= normals[b].dot(t.momenta[b] + u.momenta[b]);
                    }
                }
                j = j + (t.momenta[a] + u.momenta[a]) * w;
            }
        }
        j
    }

    /// Per-particle current `i ψ* ∂↔_a ψ` without foliation, contravariant.
    pub fn particle_current(&self, a: usize, points: &[FourVector]) -> Result<FourVector> {
        self.check_points(points)?;
        if a >= self.wf.n {
            return Err(Error::ParticleIndex { index: a, n: self.wf.n });
        }
        let vals = self.pair_weights(points);
        let psi: Complex64 = vals.iter().sum();
        let mut j = FourVector::ZERO;
        for (t, v) in self.wf.terms.iter().zip(&vals) {
            j = j + t.momenta[a] * (2.0 * (v.conj() * psi).re);
        }
        Ok(j)
    }

    /// `|Ñ^{μ₁}(x₁)⋯Ñ^{μ_n}(x_n) j_{μ₁…μ_n}|` with unit metric factors.
    pub fn density(&self, points: &[FourVector]) -> Result<f64> {
        self.density_with_metric(points, &vec![1.0; points.len()])
    }

    pub fn density_with_metric(&self, points: &[FourVector], metric: &[f64]) -> Result<f64> {
        self.check_points(points)?;
        self.check_leaf(points)?;
        if metric.len() != points.len() {
            return Err(Error::InvalidInput("one metric factor per particle".into()));
        }
        let normals: Vec<FourVector> = points
            .iter()
            .zip(metric)
            .map(|(x, g)| self.foliation.normal(*x) * *g)
            .collect();
        let vals = self.pair_weights(points);
        let terms = &self.wf.terms;
        let mut total = 0.0;
        for (t, vt) in terms.iter().zip(&vals) {
            for (u, vu) in terms.iter().zip(&vals) {
                let mut w = (vt.conj() * vu).re;
                for b in 0..self.wf.n {
                    w *= normals[b].dot(t.momenta[b] + u.momenta[b]);
                }
                total += w;
            }
        }
        Ok(total.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Hypersurface, Quadrature, SpatialBox};
    use crate::wavefunction::{make_two_mode, PlaneWaveMode};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn collinear() -> CurrentField {
        CurrentField::new(make_two_mode([1.0, 0.0, 0.0], [4.0, 0.0, 0.0], 0.0, 1.0).unwrap()).unwrap()
    }

    fn anticollinear(eta: f64) -> CurrentField {
        CurrentField::new(make_two_mode([1.0, 0.0, 0.0], [-eta, 0.0, 0.0], 0.0, 1.0).unwrap()).unwrap()
    }

    fn random_state(rng: &mut ChaCha8Rng, modes: usize) -> WaveFunction {
        let mass = rng.random_range(0.0..2.0);
        random_state_with_mass(rng, modes, mass)
    }

    fn random_state_with_mass(rng: &mut ChaCha8Rng, modes: usize, mass: f64) -> WaveFunction {
        let ms: Vec<_> = (0..modes)
            .map(|_| {
                let k = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
                PlaneWaveMode::new(k, mass, c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).unwrap()
            })
            .collect();
        WaveFunction::klein_gordon(ms, 1.0).unwrap()
    }

    #[test]
    fn collinear_at_origin() {
        let j = collinear().current(FourVector::ZERO);
        assert!((j.t - 2.25).abs() < 1e-14);
        assert!((j.x - 2.25).abs() < 1e-14);
    }

    #[test]
    fn collinear_lightlike_everywhere() {
        let cf = collinear();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = FourVector::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), 0.0, 0.0);
            let j = cf.current(x);
            assert!((j.t - j.x).abs() < 1e-12);
        }
    }

    #[test]
    fn anticollinear_minimum() {
        let cf = anticollinear(4.0);
        assert!((cf.time_component_lower_bound() - (-0.25)).abs() < 1e-14);
        // cos = −1 at t = 0 when 5x = π.
        let x = FourVector::new(0.0, std::f64::consts::PI / 5.0, 0.0, 0.0);
        assert!((cf.time_component(x) + 0.25).abs() < 1e-12);
        assert!((cf.density(x, FourVector::TIME, 1.0).unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn single_mode_current_is_constant() {
        let m = PlaneWaveMode::new([0.5, 1.0, 0.0], 2.0, c(1.0, 0.0)).unwrap();
        let v = 3.0;
        let cf = CurrentField::new(WaveFunction::klein_gordon(vec![m], v).unwrap()).unwrap();
        let want = m.four_momentum() * (1.0 / (v * m.omega()));
        for x in [FourVector::ZERO, FourVector::new(1.0, 2.0, -3.0, 0.5)] {
            assert!((cf.current(x) - want).euclidean_norm() < 1e-14);
        }
        assert!(cf.time_component(FourVector::ZERO) > 0.0);
    }

    #[test]
    fn stationary_density_is_profile_squared() {
        // ψ = e^{−iωt} φ(x)/√(2ω) with φ a standing wave.
        let m = 0.8;
        let modes = vec![
            PlaneWaveMode::new([1.5, 0.0, 0.0], m, c(0.8, 0.0)).unwrap(),
            PlaneWaveMode::new([-1.5, 0.0, 0.0], m, c(0.6, 0.0)).unwrap(),
        ];
        let wf = WaveFunction::klein_gordon(modes, 1.0).unwrap();
        let phi = wf.with_kind(Normalization::Conventional);
        let cf = CurrentField::new(wf).unwrap();
        for i in 0..50 {
            let x = FourVector::new(0.1 * i as f64, 0.37 * i as f64, 0.0, 0.0);
            let p = cf.density(x, FourVector::TIME, 1.0).unwrap();
            assert!((p - phi.evaluate(x).norm_sqr()).abs() < 1e-13);
            assert!(cf.time_component(x) >= 0.0);
        }
    }

    #[test]
    fn density_zero_and_bad_normal() {
        let cf = anticollinear(4.0);
        // j⁰ = 1 + 1.25 cos θ vanishes at cos θ = −0.8.
        let theta = (-0.8f64).acos();
        let x = FourVector::new(0.0, theta / 5.0, 0.0, 0.0);
        assert!(cf.density(x, FourVector::TIME, 1.0).unwrap() < 1e-14);
        assert!(cf.density(x, FourVector::new(-1.0, 0.0, 0.0, 0.0), 1.0).is_err());
        assert!(cf.density(x, FourVector::new(0.0, 1.0, 0.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn three_routes_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let cf = CurrentField::new(random_state(&mut rng, 5)).unwrap();
            for _ in 0..20 {
                let x = FourVector::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                let a = cf.current(x);
                let scale = cf.magnitude_bound();
                assert!((a - cf.current_pairwise(x)).euclidean_norm() < 1e-12 * scale);
                assert!((a - cf.current_via_gradient(x)).euclidean_norm() < 1e-12 * scale);
            }
        }
    }

    #[test]
    fn two_mode_closed_form() {
        // (1/2V)[k₁/ω₁ + k₂/ω₂ + (k₁+k₂)/√(ω₁ω₂) cos((k₁−k₂)·x)]
        let (k1, k2, m, v) = ([1.0, 0.5, 0.0], [-2.0, 0.3, 1.0], 0.7, 2.5);
        let cf = CurrentField::new(make_two_mode(k1, k2, m, v).unwrap()).unwrap();
        let p1 = cf.wavefunction().modes()[0].four_momentum();
        let p2 = cf.wavefunction().modes()[1].four_momentum();
        let x = FourVector::new(0.4, -1.2, 0.9, 2.0);
        let closed = (p1 * (1.0 / p1.t) + p2 * (1.0 / p2.t) + (p1 + p2) * ((p1 - p2).dot(x).cos() / (p1.t * p2.t).sqrt())) * (0.5 / v);
        assert!((cf.current(x) - closed).euclidean_norm() < 1e-12);
    }

    #[test]
    fn continuity_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-4;
        for _ in 0..5 {
            let cf = CurrentField::new(random_state(&mut rng, 5)).unwrap();
            let scale = cf.magnitude_bound();
            for _ in 0..100 {
                let x = FourVector::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
                let mut div = 0.0;
                for mu in 0..4 {
                    let mut e = [0.0; 4];
                    e[mu] = h;
                    let s = FourVector::from_array(e);
                    div += (cf.current(x + s).get(mu) - cf.current(x - s).get(mu)) / (2.0 * h);
                }
                assert!(div.abs() < 1e-6 * scale, "divergence {div}");
            }
        }
    }

    #[test]
    fn global_charge_is_one() {
        let bx = SpatialBox::line(1.0).unwrap();
        let modes: Vec<_> = [(1, 0.5, 0.1), (-2, 0.3, -0.4), (4, 0.2, 0.6)]
            .iter()
            .map(|&(n, re, im)| PlaneWaveMode::new(bx.lattice_momentum([n, 0, 0]), 0.9, c(re, im)).unwrap())
            .collect();
        let wf = WaveFunction::klein_gordon(modes, 1.0).unwrap().merged_and_normalized();
        let cf = CurrentField::new(wf).unwrap();
        for t in [0.0, 0.7, 1.3] {
            let q = Hypersurface::time_slice(t, &bx).integrate(Quadrature::default_for(1), |x, ds| ds.dot(cf.current(x)));
            assert!((q - 1.0).abs() < 1e-12, "charge {q} at t = {t}");
        }
    }

    #[test]
    fn requires_klein_gordon_kind() {
        let wf = make_two_mode([1.0, 0.0, 0.0], [2.0, 0.0, 0.0], 0.0, 1.0).unwrap();
        assert!(CurrentField::new(wf.with_kind(Normalization::Conventional)).is_err());
    }

    fn pair(rng: &mut ChaCha8Rng) -> (WaveFunction, WaveFunction) {
        let mass = rng.random_range(0.0..2.0);
        (random_state_with_mass(rng, 3, mass), random_state_with_mass(rng, 2, mass))
    }

    #[test]
    fn one_particle_reduces_to_single_current() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = random_state(&mut rng, 4);
        let cf = CurrentField::new(w.clone()).unwrap();
        let npc = NParticleCurrent::with_time_foliation(NParticleWaveFunction::product(&[&w]).unwrap());
        for _ in 0..20 {
            let x = FourVector::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), 0.0);
            let j = cf.current(x);
            let t = npc.tensor(&[x]).unwrap();
            let jl = j.lowered();
            for mu in 0..4 {
                assert!((t[mu] - jl[mu]).abs() < 1e-12);
            }
            assert!((npc.contracted(0, &[x]).unwrap() - j).euclidean_norm() < 1e-12);
            assert!((npc.density(&[x]).unwrap() - cf.density(x, FourVector::TIME, 1.0).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn product_state_factorizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (wa, wb) = pair(&mut rng);
        let (ca, cb) = (CurrentField::new(wa.clone()).unwrap(), CurrentField::new(wb.clone()).unwrap());
        let npc = NParticleCurrent::with_time_foliation(NParticleWaveFunction::product(&[&wa, &wb]).unwrap());
        for _ in 0..20 {
            let t = rng.random_range(-1.0..1.0);
            let x1 = FourVector::new(t, rng.random_range(-2.0..2.0), 0.3, 0.0);
            let x2 = FourVector::new(t, rng.random_range(-2.0..2.0), -0.1, 0.2);
            let (ja, jb) = (ca.current(x1), cb.current(x2));
            let tensor = npc.tensor(&[x1, x2]).unwrap();
            let (la, lb) = (ja.lowered(), jb.lowered());
            for m1 in 0..4 {
                for m2 in 0..4 {
                    assert!((tensor[m1 + 4 * m2] - la[m1] * lb[m2]).abs() < 1e-9);
                }
            }
            let j1 = npc.contracted(0, &[x1, x2]).unwrap();
            assert!((j1 - ja * jb.t).euclidean_norm() < 1e-9);
            let j2 = npc.contracted(1, &[x1, x2]).unwrap();
            assert!((j2 - jb * ja.t).euclidean_norm() < 1e-9);
        }
    }

    #[test]
    fn product_of_stationary_states_density() {
        let m = 0.5;
        let mk = |k: f64, a: f64, b: f64| {
            WaveFunction::klein_gordon(
                vec![PlaneWaveMode::new([k, 0.0, 0.0], m, c(a, 0.0)).unwrap(), PlaneWaveMode::new([-k, 0.0, 0.0], m, c(b, 0.0)).unwrap()],
                1.0,
            )
            .unwrap()
        };
        let (wa, wb) = (mk(1.0, 0.8, 0.6), mk(2.0, 0.6, 0.8));
        let (pa, pb) = (wa.with_kind(Normalization::Conventional), wb.with_kind(Normalization::Conventional));
        let npc = NParticleCurrent::with_time_foliation(NParticleWaveFunction::product(&[&wa, &wb]).unwrap());
        let x1 = FourVector::new(0.3, 0.2, 0.0, 0.0);
        let x2 = FourVector::new(0.3, 1.1, 0.0, 0.0);
        let want = pa.evaluate(x1).norm_sqr() * pb.evaluate(x2).norm_sqr();
        assert!((npc.density(&[x1, x2]).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn symmetric_state_exchange() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (wa, wb) = pair(&mut rng);
        let npc = NParticleCurrent::with_time_foliation(NParticleWaveFunction::symmetrized_product(&[&wa, &wb]).unwrap());
        let x1 = FourVector::new(0.2, 0.4, -0.3, 0.0);
        let x2 = FourVector::new(0.2, -1.0, 0.8, 0.1);
        let a = npc.tensor(&[x1, x2]).unwrap();
        let b = npc.tensor(&[x2, x1]).unwrap();
        for m1 in 0..4 {
            for m2 in 0..4 {
                assert!((a[m1 + 4 * m2] - b[m2 + 4 * m1]).abs() < 1e-12);
            }
        }
        let s = npc.tensor(&[x1, x1]).unwrap();
        for m1 in 0..4 {
            for m2 in 0..4 {
                assert!((s[m1 + 4 * m2] - s[m2 + 4 * m1]).abs() < 1e-12);
            }
        }
        let j1 = npc.contracted(0, &[x1, x2]).unwrap();
        let j2 = npc.contracted(1, &[x2, x1]).unwrap();
        assert!((j1 - j2).euclidean_norm() < 1e-12);
    }

    #[test]
    fn leaf_and_index_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (wa, wb) = pair(&mut rng);
        let npc = NParticleCurrent::with_time_foliation(NParticleWaveFunction::product(&[&wa, &wb]).unwrap());
        let x1 = FourVector::new(0.0, 0.0, 0.0, 0.0);
        let x2 = FourVector::new(0.1, 0.0, 0.0, 0.0);
        assert!(matches!(npc.tensor(&[x1, x2]), Err(Error::NotOnLeaf { .. })));
        assert!(matches!(npc.contracted(2, &[x1, x1]), Err(Error::ParticleIndex { .. })));
        assert!(npc.density(&[x1, x2]).is_err());
    }

    #[test]
    fn per_argument_continuity() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (wa, wb) = pair(&mut rng);
        let npc = NParticleCurrent::with_time_foliation(NParticleWaveFunction::symmetrized_product(&[&wa, &wb]).unwrap());
        let h = 1e-4;
        for _ in 0..50 {
            let t = rng.random_range(-1.0..1.0);
            let pts = [
                FourVector::new(t, rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), 0.0),
                FourVector::new(t, rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), 0.0),
            ];
            for a in 0..2 {
                let scale = npc.contracted_unchecked(a, &pts).euclidean_norm().max(1e-3);
                let mut div = 0.0;
                for mu in 0..4 {
                    let mut e = [0.0; 4];
                    e[mu] = h;
                    let s = FourVector::from_array(e);
                    let (mut p, mut m) = (pts, pts);
                    p[a] = p[a] + s;
                    m[a] = m[a] - s;
                    div += (npc.contracted_unchecked(a, &p).get(mu) - npc.contracted_unchecked(a, &m).get(mu)) / (2.0 * h);
                }
                assert!(div.abs() < 1e-6 * scale.max(1.0), "div {div}");
            }
        }
    }
}
