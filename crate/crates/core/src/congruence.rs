//! Families of trajectories launched from a spacelike surface, crossing
//! statistics against query surfaces, and complete surfaces `Σ′`.
//!
//! Launch points are drawn with density `p̃ = |n·j|` on the launch surface.
//! A trajectory that crosses the launch surface `m₀` times is `m₀` times as
//! likely to be drawn, so its probability weight is its launch weight
//! divided by `m₀`. With that convention the weights of all trajectories
//! sum to one whether or not the launch surface is complete, and a
//! surface's unsigned flux is `Σ w · multiplicity`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::current::CurrentField;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{FourVector, Hypersurface, Quadrature};
use crate::stats::{batch_means, Estimate};
use crate::trajectory::{crossings, integrate_watching, Crossing, IntegratorConfig, Orientation, Status, Trajectory};

/// Launch crossings closer than this to `s = 0` are the launch itself.
const LAUNCH_S_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    /// Midpoint grid on each patch, weights `p̃ ΔS`.
    WeightedGrid,
    /// Rejection sampling against the analytic bound of `|n·j|`.
    RejectionMonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CongruenceConfig {
    pub integrator: IntegratorConfig,
    /// Query surfaces to record during integration, besides the launch.
    #[serde(skip)]
    pub watch: Vec<Hypersurface>,
    pub batches: usize,
    /// Quadrature for the launch mass `∫ p̃ dS`; per-dimension default
    /// when absent.
    pub quadrature_points: Option<usize>,
}

impl Default for CongruenceConfig {
    fn default() -> Self {
        Self {
            integrator: IntegratorConfig { keep_samples: false, ..Default::default() },
            watch: Vec::new(),
            batches: 32,
            quadrature_points: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Member {
    pub launch: FourVector,
    pub patch: usize,
    /// `p̃` at the launch point.
    pub density: f64,
    /// Launch weight before dividing by the launch multiplicity.
    pub base_weight: f64,
    /// Number of times the full curve crosses the launch surface.
    pub launch_multiplicity: usize,
    /// Probability weight of the trajectory.
    pub weight: f64,
    #[serde(skip)]
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone)]
pub struct Congruence {
    pub members: Vec<Member>,
    pub launch_surface: Hypersurface,
    /// Index 0 is the launch surface, then the configured watch list.
    pub watched: Vec<Hypersurface>,
    pub sampler: Sampler,
    pub seed: u64,
    /// `∫ p̃ dS` over the launch surface.
    pub launch_mass: f64,
    pub batches: usize,
    /// Whether trajectories kept their samples.
    pub kept_samples: bool,
}

impl Congruence {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.members.iter().map(|m| m.weight).sum()
    }

    /// Per-member contributions `N w f`, so that their mean is `Σ w f`.
    fn estimate(&self, f: impl Fn(usize, &Member) -> f64) -> Estimate {
        let n = self.members.len() as f64;
        let y: Vec<f64> = self.members.iter().enumerate().map(|(i, m)| n * m.weight * f(i, m)).collect();
        batch_means(&y, self.batches)
    }

    /// Crossings of `query` for every member, from the watched record when
    /// available and from kept samples otherwise.
    pub fn crossings_of(&self, query: &Hypersurface) -> Result<Vec<Vec<Crossing>>> {
        if let Some(idx) = self.watched.iter().position(|w| w == query) {
            return Ok(self
                .members
                .iter()
                .map(|m| m.trajectory.watched_crossings(idx).copied().collect())
                .collect());
        }
        if !self.kept_samples {
            return Err(Error::SurfaceNotWatched);
        }
        Ok(self.members.iter().map(|m| crossings(&m.trajectory, query)).collect())
    }
}

fn draw_point(
    surface: &Hypersurface,
    rng: &mut ChaCha8Rng,
    areas: &[f64],
    total_area: f64,
) -> (usize, FourVector) {
    let mut r = rng.random::<f64>() * total_area;
    let mut pi = areas.len() - 1;
    for (i, a) in areas.iter().enumerate() {
        if r < *a {
            pi = i;
            break;
        }
        r -= a;
    }
    let p = &surface.patches()[pi];
    let mut u = [0.0; 3];
    for (i, ui) in u.iter_mut().enumerate().take(surface.dims()) {
        *ui = p.lo[i] + rng.random::<f64>() * (p.hi[i] - p.lo[i]);
    }
    (pi, p.point(u))
}

struct LaunchPoint {
    patch: usize,
    x: FourVector,
    density: f64,
    base_weight: f64,
}

/// Launches `n_samples` trajectories from `surface`.
pub fn launch(
    cf: &CurrentField,
    surface: &Hypersurface,
    n_samples: usize,
    sampler: Sampler,
    seed: u64,
    cfg: &CongruenceConfig,
    exec: Exec,
) -> Result<Congruence> {
    if !surface.is_spacelike() {
        return Err(Error::InvalidSurface("launch surface must be spacelike".into()));
    }
    if n_samples == 0 {
        return Err(Error::InvalidInput("n_samples must be positive".into()));
    }
    cfg.integrator.validate()?;
    let dims = surface.dims();
    let quad = cfg.quadrature_points.map(Quadrature::new).unwrap_or_else(|| Quadrature::default_for(dims));
    // |n·j| per unit area; p̃ per coordinate cell adds the metric factor.
    let flux = |pi: usize, x: FourVector| surface.patches()[pi].normal.dot(cf.current(x)).abs();

    let launch_mass = surface
        .patches()
        .iter()
        .enumerate()
        .map(|(pi, p)| {
            let mut acc = 0.0;
            p.for_each_cell(dims, quad, |x, ds| acc += flux(pi, x) * ds.t / p.normal.t);
            acc
        })
        .sum::<f64>();
    if !(launch_mass > 0.0) {
        return Err(Error::ZeroDensity);
    }

    let points: Vec<LaunchPoint> = match sampler {
        Sampler::RejectionMonteCarlo => {
            let areas: Vec<f64> = surface.patches().iter().map(|p| p.area(dims)).collect();
            let total_area: f64 = areas.iter().sum();
            // Density per unit area is |n·j|; the bound covers every patch.
            let bound = surface.patches().iter().map(|p| cf.flux_bound(p.normal)).fold(0.0, f64::max);
            if !(bound > 0.0) {
                return Err(Error::ZeroDensity);
            }
            exec.map(n_samples, |i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                loop {
                    let (pi, x) = draw_point(surface, &mut rng, &areas, total_area);
                    let f = flux(pi, x);
                    if rng.random::<f64>() * bound <= f {
                        let density = f * surface.patches()[pi].metric_factor;
                        return LaunchPoint { patch: pi, x, density, base_weight: launch_mass / n_samples as f64 };
                    }
                }
            })
        }
        Sampler::WeightedGrid => {
            let per_patch = n_samples.div_ceil(surface.patches().len());
            let g = ((per_patch as f64).powf(1.0 / dims as f64).ceil() as usize).max(1);
            let mut pts = Vec::new();
            for (pi, p) in surface.patches().iter().enumerate() {
                let mut h = [0.0; 3];
                let mut cell = p.metric_factor;
                for i in 0..dims {
                    h[i] = (p.hi[i] - p.lo[i]) / g as f64;
                    cell *= h[i];
                }
                for idx in 0..g.pow(dims as u32) {
                    let mut u = [0.0; 3];
                    let mut rem = idx;
                    for i in 0..dims {
                        u[i] = p.lo[i] + ((rem % g) as f64 + 0.5) * h[i];
                        rem /= g;
                    }
                    let x = p.point(u);
                    let f = flux(pi, x);
                    if f > 0.0 {
                        pts.push(LaunchPoint { patch: pi, x, density: f * p.metric_factor, base_weight: f * cell });
                    }
                }
            }
            pts
        }
    };

    let mut watched = vec![surface.clone()];
    watched.extend(cfg.watch.iter().cloned());
    let eps = cfg
        .integrator
        .stagnation_threshold
        .unwrap_or(crate::trajectory::DEFAULT_STAGNATION_FRACTION * cf.magnitude_bound());
    let icfg = IntegratorConfig { stagnation_threshold: Some(eps), ..cfg.integrator.clone() };

    let results = exec.map(points.len(), |i| integrate_watching(cf, points[i].x, &icfg, &watched));
    let mut members = Vec::with_capacity(points.len());
    for (lp, tr) in points.into_iter().zip(results) {
        let tr = tr?;
        let recrossings = tr.watched_crossings(0).filter(|c| c.s.abs() > LAUNCH_S_TOL).count();
        let m0 = 1 + recrossings;
        members.push(Member {
            launch: lp.x,
            patch: lp.patch,
            density: lp.density,
            base_weight: lp.base_weight,
            launch_multiplicity: m0,
            weight: lp.base_weight / m0 as f64,
            trajectory: tr,
        });
    }

    Ok(Congruence {
        members,
        launch_surface: surface.clone(),
        watched,
        sampler,
        seed,
        launch_mass,
        batches: cfg.batches,
        kept_samples: icfg.keep_samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBin {
    pub multiplicity: usize,
    pub count: usize,
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossingRow {
    pub trajectory: usize,
    pub s: f64,
    pub x: FourVector,
    pub orientation: Orientation,
    pub grazing: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossingReport {
    pub multiplicities: Vec<usize>,
    pub histogram: Vec<HistogramBin>,
    /// `Σ w · Σ orientation signs`.
    pub signed_flux: Estimate,
    /// `Σ w · multiplicity`.
    pub unsigned_flux: Estimate,
    /// `Σ w` over trajectories that cross at least once.
    pub first_crossing_mass: Estimate,
    pub never_crossing: usize,
    pub never_crossing_mass: f64,
    /// Never-crossing trajectories that left the domain.
    pub never_crossing_left_domain: usize,
    pub grazing: usize,
    #[serde(skip)]
    pub crossings: Vec<CrossingRow>,
}

impl CrossingReport {
    pub fn max_multiplicity(&self) -> usize {
        self.multiplicities.iter().copied().max().unwrap_or(0)
    }
}

pub fn crossing_report(c: &Congruence, query: &Hypersurface) -> Result<CrossingReport> {
    let per = c.crossings_of(query)?;
    let multiplicities: Vec<usize> = per.iter().map(|v| v.len()).collect();
    let signed = |v: &Vec<Crossing>| v.iter().map(|c| c.orientation.sign()).sum::<f64>();

    let mut hist: Vec<HistogramBin> = Vec::new();
    for (m, mem) in multiplicities.iter().zip(&c.members) {
        match hist.iter_mut().find(|b| b.multiplicity == *m) {
            Some(b) => {
                b.count += 1;
                b.mass += mem.weight;
            }
            None => hist.push(HistogramBin { multiplicity: *m, count: 1, mass: mem.weight }),
        }
    }
    hist.sort_by_key(|b| b.multiplicity);

    let never: Vec<usize> = (0..per.len()).filter(|&i| per[i].is_empty()).collect();
    let crossings = per
        .iter()
        .enumerate()
        .flat_map(|(i, v)| {
            v.iter().map(move |c| CrossingRow { trajectory: i, s: c.s, x: c.x, orientation: c.orientation, grazing: c.grazing })
        })
        .collect::<Vec<_>>();
    Ok(CrossingReport {
        signed_flux: c.estimate(|i, _| signed(&per[i])),
        unsigned_flux: c.estimate(|i, _| per[i].len() as f64),
        first_crossing_mass: c.estimate(|i, _| if per[i].is_empty() { 0.0 } else { 1.0 }),
        never_crossing: never.len(),
        never_crossing_mass: never.iter().map(|&i| c.members[i].weight).sum(),
        never_crossing_left_domain: never
            .iter()
            .filter(|&&i| c.members[i].trajectory.status() == Status::LeftDomain)
            .count(),
        grazing: crossings.iter().filter(|r| r.grazing).count(),
        multiplicities,
        histogram: hist,
        crossings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompletionStrategy {
    FirstCrossingSelection,
    ConnectedConstantSignPatches,
}

#[derive(Debug, Clone, Serialize)]
pub struct SignRegion {
    pub patch: usize,
    /// +1 or −1: the sign of `n·j` on the region.
    pub sign: i8,
    pub cells: usize,
    /// `Σ w · (crossings inside the region)`.
    pub mass: Estimate,
    /// `∫_R |n·j| dS` by quadrature on the region's cells.
    pub quadrature_mass: f64,
    /// Trajectories crossing the region more than once.
    pub recrossings: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CompleteSurface {
    pub strategy: CompletionStrategy,
    /// Patches covering the selected crossings (first-crossing selection)
    /// or the reference surface (constant-sign patches).
    pub surface: Hypersurface,
    /// Retained probability.
    pub coverage_mass: Estimate,
    pub regions: Vec<SignRegion>,
    /// True when no sampled trajectory re-crosses any single region.
    pub certificate: bool,
}

/// Builds a complete surface on `reference` from the congruence.
pub fn complete_surface(
    c: &Congruence,
    reference: &Hypersurface,
    strategy: CompletionStrategy,
    cf: &CurrentField,
    grid_points: usize,
) -> Result<CompleteSurface> {
    let per = c.crossings_of(reference)?;
    if per.iter().all(|v| v.is_empty()) {
        return Err(Error::StrategyInapplicable("no trajectory crosses the reference surface".into()));
    }
    match strategy {
        CompletionStrategy::FirstCrossingSelection => first_crossing(c, reference, &per),
        CompletionStrategy::ConnectedConstantSignPatches => sign_patches(c, reference, &per, cf, grid_points),
    }
}

fn first_crossing(c: &Congruence, reference: &Hypersurface, per: &[Vec<Crossing>]) -> Result<CompleteSurface> {
    let dims = reference.dims();
    let np = reference.patches().len();
    let mut lo = vec![[f64::INFINITY; 3]; np];
    let mut hi = vec![[f64::NEG_INFINITY; 3]; np];
    for v in per {
        if let Some(first) = v.iter().min_by(|a, b| a.s.total_cmp(&b.s)) {
            let p = &reference.patches()[first.patch];
            let u = p.coordinates(first.x);
            for i in 0..dims {
                lo[first.patch][i] = lo[first.patch][i].min(u[i]);
                hi[first.patch][i] = hi[first.patch][i].max(u[i]);
            }
        }
    }
    let patches = reference
        .patches()
        .iter()
        .enumerate()
        .filter(|(i, _)| lo[*i][0].is_finite())
        .map(|(i, p)| {
            let mut q = p.clone();
            for d in 0..dims {
                q.lo[d] = lo[i][d];
                q.hi[d] = hi[i][d];
            }
            q.with_periodic([false; 3])
        })
        .collect();
    Ok(CompleteSurface {
        strategy: CompletionStrategy::FirstCrossingSelection,
        surface: Hypersurface::new(dims, patches)?,
        coverage_mass: c.estimate(|i, _| if per[i].is_empty() { 0.0 } else { 1.0 }),
        regions: Vec::new(),
        certificate: true,
    })
}

/// Cell index of surface coordinates on a `g`-per-axis grid over the
/// patch bounds; periodic axes wrap, others must be inside.
fn cell_of(u: [f64; 3], lo: [f64; 3], hi: [f64; 3], periodic: [bool; 3], dims: usize, g: usize) -> Option<usize> {
    let mut idx = 0;
    let mut stride = 1;
    for i in 0..dims {
        let len = hi[i] - lo[i];
        let mut r = (u[i] - lo[i]) / len;
        if periodic[i] {
            r = r.rem_euclid(1.0);
        } else if !(0.0..=1.0).contains(&r) {
            return None;
        }
        let k = ((r * g as f64) as usize).min(g - 1);
        idx += k * stride;
        stride *= g;
    }
    Some(idx)
}

fn sign_patches(
    c: &Congruence,
    reference: &Hypersurface,
    per: &[Vec<Crossing>],
    cf: &CurrentField,
    g: usize,
) -> Result<CompleteSurface> {
    if g == 0 {
        return Err(Error::InvalidInput("grid_points must be positive".into()));
    }
    if !reference.is_spacelike() {
        return Err(Error::StrategyInapplicable("constant-sign patches need a spacelike reference".into()));
    }
    let dims = reference.dims();
    let mut regions: Vec<SignRegion> = Vec::new();
    // Region id per (patch, cell).
    let mut labels: Vec<Vec<usize>> = Vec::new();
    for (pi, p) in reference.patches().iter().enumerate() {
        let ncell = g.pow(dims as u32);
        let mut h = [0.0; 3];
        let mut cell_area = p.metric_factor;
        for i in 0..dims {
            h[i] = (p.hi[i] - p.lo[i]) / g as f64;
            cell_area *= h[i];
        }
        let mut flux = vec![0.0; ncell];
        for (idx, f) in flux.iter_mut().enumerate() {
            let mut u = [0.0; 3];
            let mut rem = idx;
            for i in 0..dims {
                u[i] = p.lo[i] + ((rem % g) as f64 + 0.5) * h[i];
                rem /= g;
            }
            *f = p.normal.dot(cf.current(p.point(u)));
        }
        let mut label = vec![usize::MAX; ncell];
        for start in 0..ncell {
            if label[start] != usize::MAX {
                continue;
            }
            let sign = flux[start] >= 0.0;
            let id = regions.len();
            let mut stack = vec![start];
            label[start] = id;
            let (mut cells, mut qmass) = (0usize, 0.0);
            while let Some(k) = stack.pop() {
                cells += 1;
                qmass += flux[k].abs() * cell_area;
                let mut stride = 1;
                for i in 0..dims {
                    let coord = (k / stride) % g;
                    for step in [-1i64, 1] {
                        let mut nc = coord as i64 + step;
                        if nc < 0 || nc >= g as i64 {
                            if !p.periodic[i] {
                                continue;
                            }
                            nc = nc.rem_euclid(g as i64);
                        }
                        let nk = k - coord * stride + nc as usize * stride;
                        if label[nk] == usize::MAX && (flux[nk] >= 0.0) == sign {
                            label[nk] = id;
                            stack.push(nk);
                        }
                    }
                    stride *= g;
                }
            }
            regions.push(SignRegion {
                patch: pi,
                sign: if sign { 1 } else { -1 },
                cells,
                mass: Estimate { value: 0.0, std_error: 0.0 },
                quadrature_mass: qmass,
                recrossings: 0,
            });
        }
        labels.push(label);
    }

    // counts[i] lists (region, hits) for trajectory i.
    let region_hits: Vec<Vec<(usize, usize)>> = per
        .iter()
        .map(|v| {
            let mut hits: Vec<(usize, usize)> = Vec::new();
            for cr in v {
                let p = &reference.patches()[cr.patch];
                let Some(cell) = cell_of(p.coordinates(cr.x), p.lo, p.hi, p.periodic, dims, g) else {
                    continue;
                };
                let r = labels[cr.patch][cell];
                match hits.iter_mut().find(|h| h.0 == r) {
                    Some(h) => h.1 += 1,
                    None => hits.push((r, 1)),
                }
            }
            hits
        })
        .collect();

    for (rid, region) in regions.iter_mut().enumerate() {
        region.mass = c.estimate(|i, _| {
            region_hits[i].iter().find(|h| h.0 == rid).map_or(0.0, |h| h.1 as f64)
        });
        region.recrossings = region_hits.iter().filter(|hs| hs.iter().any(|h| h.0 == rid && h.1 > 1)).count();
    }
    let certificate = regions.iter().all(|r| r.recrossings == 0);
    let best = regions
        .iter()
        .max_by(|a, b| a.mass.value.total_cmp(&b.mass.value))
        .map(|r| r.mass)
        .unwrap_or(Estimate { value: 0.0, std_error: 0.0 });
    Ok(CompleteSurface {
        strategy: CompletionStrategy::ConnectedConstantSignPatches,
        surface: reference.clone(),
        coverage_mass: best,
        regions,
        certificate,
    })
}
