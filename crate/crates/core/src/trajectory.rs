//! Integral curves `dx^μ/ds = j^μ(x)` in the affine parameter `s`.
//!
//! Curves are integrated both ways from the start point. Along the way the
//! driver records events on the dense output of each accepted step:
//! sign changes of `dt/ds = j⁰` (time reversals), crossings of watched
//! hypersurfaces, exits from the domain, and stagnation where `‖j‖` falls
//! below the threshold. Event positions are bisected to `event_tol` in `s`.

use serde::{Deserialize, Serialize};

use crate::current::{CurrentField, NParticleCurrent};
use crate::error::{Error, Result};
use crate::geometry::{FourVector, Hypersurface};
use crate::integrator::{DenseStep, Dopri5, VectorField};

/// Relative stagnation threshold against the field's magnitude bound.
pub const DEFAULT_STAGNATION_FRACTION: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DomainBounds {
    /// `[t_min, t_max]`; unbounded when absent.
    #[serde(default)]
    pub t: Option<[f64; 2]>,
    #[serde(default)]
    pub x: Option<[f64; 2]>,
    #[serde(default)]
    pub y: Option<[f64; 2]>,
    #[serde(default)]
    pub z: Option<[f64; 2]>,
}

impl DomainBounds {
    pub fn time(t_min: f64, t_max: f64) -> Self {
        Self { t: Some([t_min, t_max]), ..Default::default() }
    }

    pub fn contains(&self, p: FourVector) -> bool {
        let inside = |b: Option<[f64; 2]>, v: f64| b.is_none_or(|[lo, hi]| v >= lo && v <= hi);
        inside(self.t, p.t) && inside(self.x, p.x) && inside(self.y, p.y) && inside(self.z, p.z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Largest |Δs| per step.
    pub max_step: f64,
    /// Integration runs over `s ∈ [−max_s, max_s]`.
    pub max_s: f64,
    /// Absolute threshold ε_j; `None` means 1e-12 of the field's bound.
    pub stagnation_threshold: Option<f64>,
    pub domain: DomainBounds,
    pub event_tol: f64,
    pub keep_samples: bool,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            max_step: 0.05,
            max_s: 10.0,
            stagnation_threshold: None,
            domain: DomainBounds::default(),
            event_tol: 1e-10,
            keep_samples: true,
            max_steps: 1_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !(pos(self.rtol) && pos(self.atol) && pos(self.max_step) && pos(self.max_s) && pos(self.event_tol)) {
            return Err(Error::InvalidInput("integrator tolerances and step limits must be positive".into()));
        }
        if let Some(e) = self.stagnation_threshold {
            if !pos(e) {
                return Err(Error::InvalidInput("stagnation threshold must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// `n·j > 0`: moving to the future side with increasing `s`.
    FutureWard,
    PastWard,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::FutureWard => 1.0,
            Orientation::PastWard => -1.0,
        }
    }
}

/// A transversal intersection of a curve with a hypersurface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossing {
    pub s: f64,
    pub x: FourVector,
    pub orientation: Orientation,
    /// `|n·j| < ε_j` at the crossing.
    pub grazing: bool,
    /// Index into the watched-surface list.
    pub surface: usize,
    pub patch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    /// `dt/ds = j⁰` changes sign.
    TimeReversal,
    SurfaceCrossing,
    StagnationHalt,
    DomainExit,
}

impl EventKind {
    pub fn label(self) -> &'static str {
        match self {
            EventKind::TimeReversal => "time-reversal",
            EventKind::SurfaceCrossing => "surface-crossing",
            EventKind::StagnationHalt => "stagnation-halt",
            EventKind::DomainExit => "domain-exit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub kind: EventKind,
    pub s: f64,
    pub x: FourVector,
    pub j: FourVector,
    /// Set for surface crossings.
    pub crossing: Option<Crossing>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub s: f64,
    pub x: FourVector,
    pub j: FourVector,
}

/// Why integration in one direction stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// Reached `|s| = max_s`.
    Completed,
    Stagnation,
    LeftDomain,
    StepUnderflow,
    StepLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Completed,
    HaltedAtStagnation,
    LeftDomain,
    /// Step size underflow or step limit; the numerical failure case.
    HaltedAtUnderflow,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    /// Samples ordered by `s` (just the ends when samples are not kept).
    pub samples: Vec<Sample>,
    /// Events ordered by `s`.
    pub events: Vec<Event>,
    pub backward: Termination,
    pub forward: Termination,
    pub stagnation_threshold: f64,
    pub steps: usize,
}

impl Trajectory {
    pub fn status(&self) -> Status {
        let ends = [self.backward, self.forward];
        if ends.iter().any(|e| matches!(e, Termination::StepUnderflow | Termination::StepLimit)) {
            Status::HaltedAtUnderflow
        } else if ends.contains(&Termination::Stagnation) {
            Status::HaltedAtStagnation
        } else if ends.contains(&Termination::LeftDomain) {
            Status::LeftDomain
        } else {
            Status::Completed
        }
    }

    pub fn start(&self) -> Option<&Sample> {
        self.samples.iter().find(|s| s.s == 0.0)
    }

    pub fn s_range(&self) -> (f64, f64) {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => (a.s, b.s),
            _ => (0.0, 0.0),
        }
    }

    pub fn time_reversals(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.kind == EventKind::TimeReversal)
    }

    /// Crossings recorded during integration for watched surface `surface`.
    pub fn watched_crossings(&self, surface: usize) -> impl Iterator<Item = &Crossing> {
        self.events
            .iter()
            .filter_map(|e| e.crossing.as_ref())
            .filter(move |c| c.surface == surface)
    }
}

/// Velocity field of the single-particle current.
impl VectorField for CurrentField {
    fn dim(&self) -> usize {
        4
    }

    fn eval(&self, y: &[f64], out: &mut [f64]) {
        let j = self.current(FourVector::new(y[0], y[1], y[2], y[3]));
        out.copy_from_slice(&j.to_array());
    }
}

/// How the n-particle velocities are defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NParticleMode {
    /// Foliation-contracted currents.
    Foliated,
    /// Uncontracted per-particle currents `i ψ* ∂↔_a ψ`.
    Covariant,
}

struct NParticleField<'a> {
    npc: &'a NParticleCurrent,
    mode: NParticleMode,
}

impl VectorField for NParticleField<'_> {
    fn dim(&self) -> usize {
        4 * self.npc.particles()
    }

    fn eval(&self, y: &[f64], out: &mut [f64]) {
        let pts = points_of(y);
        for a in 0..pts.len() {
            let j = match self.mode {
                NParticleMode::Foliated => self.npc.contracted_unchecked(a, &pts),
                NParticleMode::Covariant => self.npc.particle_current(a, &pts).expect("index in range"),
            };
            out[4 * a..4 * a + 4].copy_from_slice(&j.to_array());
        }
    }
}

fn points_of(y: &[f64]) -> Vec<FourVector> {
    y.chunks_exact(4).map(|c| FourVector::new(c[0], c[1], c[2], c[3])).collect()
}

fn point(y: &[f64], a: usize) -> FourVector {
    FourVector::new(y[4 * a], y[4 * a + 1], y[4 * a + 2], y[4 * a + 3])
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Integral curve of the current through `x0`.
pub fn integrate(cf: &CurrentField, x0: FourVector, cfg: &IntegratorConfig) -> Result<Trajectory> {
    integrate_watching(cf, x0, cfg, &[])
}

/// As [`integrate`], also recording crossings of `watch` surfaces.
pub fn integrate_watching(
    cf: &CurrentField,
    x0: FourVector,
    cfg: &IntegratorConfig,
    watch: &[Hypersurface],
) -> Result<Trajectory> {
    let eps = cfg
        .stagnation_threshold
        .unwrap_or(DEFAULT_STAGNATION_FRACTION * cf.magnitude_bound());
    let mut out = integrate_system(cf, &x0.to_array(), cfg, watch, eps)?;
    Ok(out.remove(0))
}

/// Joint integration of `n` particles; returns one trajectory per particle.
pub fn integrate_n_particle(
    npc: &NParticleCurrent,
    x0s: &[FourVector],
    mode: NParticleMode,
    cfg: &IntegratorConfig,
) -> Result<Vec<Trajectory>> {
    if x0s.len() != npc.particles() {
        return Err(Error::InvalidInput(format!(
            "expected {} start points, got {}",
            npc.particles(),
            x0s.len()
        )));
    }
    if mode == NParticleMode::Foliated {
        npc.check_leaf(x0s)?;
    }
    let field = NParticleField { npc, mode };
    let y0: Vec<f64> = x0s.iter().flat_map(|x| x.to_array()).collect();
    let eps = match cfg.stagnation_threshold {
        Some(e) => e,
        None => {
            let mut f0 = vec![0.0; y0.len()];
            field.eval(&y0, &mut f0);
            DEFAULT_STAGNATION_FRACTION * norm(&f0)
        }
    };
    integrate_system(&field, &y0, cfg, &[], eps)
}

/// Integrates any 4n-dimensional velocity field both ways from `y0`.
pub fn integrate_system(
    field: &dyn VectorField,
    y0: &[f64],
    cfg: &IntegratorConfig,
    watch: &[Hypersurface],
    eps: f64,
) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    let dim = field.dim();
    if y0.len() != dim || dim % 4 != 0 {
        return Err(Error::InvalidInput(format!("state has {} entries, field expects {dim}", y0.len())));
    }
    let n = dim / 4;
    let mut f0 = vec![0.0; dim];
    field.eval(y0, &mut f0);
    let start: Vec<Sample> = (0..n)
        .map(|a| Sample { s: 0.0, x: point(y0, a), j: point(&f0, a) })
        .collect();

    if norm(&f0) < eps || !(0..n).all(|a| cfg.domain.contains(point(y0, a))) {
        let stagnant = norm(&f0) < eps;
        let end = if stagnant { Termination::Stagnation } else { Termination::LeftDomain };
        return Ok((0..n)
            .map(|a| {
                let kind = if stagnant { EventKind::StagnationHalt } else { EventKind::DomainExit };
                Trajectory {
                    samples: vec![start[a]],
                    events: vec![Event { kind, s: 0.0, x: start[a].x, j: start[a].j, crossing: None }],
                    backward: end,
                    forward: end,
                    stagnation_threshold: eps,
                    steps: 0,
                }
            })
            .collect());
    }

    let back = run_direction(field, y0, -1.0, cfg, watch, eps);
    let fwd = run_direction(field, y0, 1.0, cfg, watch, eps);

    let mut trajs = Vec::with_capacity(n);
    for a in 0..n {
        let mut samples: Vec<Sample> = back.samples[a].iter().rev().copied().collect();
        samples.push(start[a]);
        samples.extend(fwd.samples[a].iter().copied());
        let mut events: Vec<Event> = back.events[a].iter().chain(fwd.events[a].iter()).copied().collect();
        for (si, surface) in watch.iter().enumerate() {
            events.extend(launch_crossing(surface, si, start[a], eps));
        }
        events.sort_by(|p, q| p.s.total_cmp(&q.s));
        trajs.push(Trajectory {
            samples,
            events,
            backward: back.end,
            forward: fwd.end,
            stagnation_threshold: eps,
            steps: back.steps + fwd.steps,
        });
    }
    Ok(trajs)
}

/// A start point lying exactly on a watched plane is a crossing at `s = 0`
/// that neither direction sees as a sign change.
fn launch_crossing(surface: &Hypersurface, si: usize, start: Sample, eps: f64) -> Option<Event> {
    surface.patches().iter().enumerate().find_map(|(pi, p)| {
        if p.level(start.x) != 0.0 || !p.contains(p.coordinates(start.x), surface.dims()) {
            return None;
        }
        let nj = p.normal.dot(start.j);
        let c = Crossing {
            s: 0.0,
            x: start.x,
            orientation: if nj >= 0.0 { Orientation::FutureWard } else { Orientation::PastWard },
            grazing: nj.abs() < eps,
            surface: si,
            patch: pi,
        };
        Some(Event { kind: EventKind::SurfaceCrossing, s: 0.0, x: start.x, j: start.j, crossing: Some(c) })
    })
}

struct DirectionRun {
    samples: Vec<Vec<Sample>>,
    events: Vec<Vec<Event>>,
    end: Termination,
    steps: usize,
}

fn bisect(mut lo: f64, mut hi: f64, tol: f64, mut on_lo_side: impl FnMut(f64) -> bool) -> f64 {
    while (hi - lo).abs() > tol {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if on_lo_side(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn run_direction(
    field: &dyn VectorField,
    y0: &[f64],
    sign: f64,
    cfg: &IntegratorConfig,
    watch: &[Hypersurface],
    eps: f64,
) -> DirectionRun {
    let dim = y0.len();
    let n = dim / 4;
    let mut st = Dopri5::new(dim, cfg.rtol, cfg.atol);
    let mut y = y0.to_vec();
    st.prime(field, &y);
    let mut run = DirectionRun {
        samples: vec![Vec::new(); n],
        events: vec![Vec::new(); n],
        end: Termination::Completed,
        steps: 0,
    };
    let f0n = norm(st.slope()).max(f64::MIN_POSITIVE);
    let ynorm = norm(&y).max(1.0);
    let mut h = sign * cfg.max_step.min(1e-2 * ynorm / f0n).max(1e-6 * cfg.max_step);
    let mut s = 0.0;
    let s_end = sign * cfg.max_s;
    let mut y_end = vec![0.0; dim];
    let mut f_end = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];
    let mut fscratch = vec![0.0; dim];

    loop {
        if run.steps >= cfg.max_steps {
            run.end = Termination::StepLimit;
            break;
        }
        let remaining = s_end - s;
        if remaining * sign <= 0.0 {
            run.end = Termination::Completed;
            break;
        }
        if h.abs() > remaining.abs() {
            h = remaining;
        }
        if h.abs() > cfg.max_step {
            h = sign * cfg.max_step;
        }
        let attempt = st.attempt(field, &y, h);
        if !(attempt.error <= 1.0) {
            let factor = if attempt.error.is_finite() { Dopri5::factor(attempt.error) } else { 0.2 };
            h *= factor;
            if h.abs() < 1e-14 * s.abs().max(1.0) {
                run.end = Termination::StepUnderflow;
                break;
            }
            continue;
        }
        run.steps += 1;
        let dense = st.dense(&y, s, h);
        y_end.copy_from_slice(st.new_state());
        f_end.copy_from_slice(st.new_slope());
        let mut s_stop = s + h;
        let mut stop: Option<Termination> = None;

        let inside = |v: &[f64]| (0..n).all(|a| cfg.domain.contains(point(v, a)));
        if !inside(&y_end) {
            let s_exit = bisect(s, s + h, cfg.event_tol, |q| {
                dense.eval_into(q, &mut scratch);
                inside(&scratch)
            });
            s_stop = s_exit;
            dense.eval_into(s_exit, &mut y_end);
            field.eval(&y_end, &mut f_end);
            stop = Some(Termination::LeftDomain);
        }

        detect_events(
            field,
            &dense,
            s,
            s_stop,
            &y,
            st.slope(),
            &y_end,
            &f_end,
            watch,
            cfg.event_tol,
            eps,
            &mut scratch,
            &mut fscratch,
            &mut run.events,
        );

        for a in 0..n {
            if stop == Some(Termination::LeftDomain) {
                run.events[a].push(Event {
                    kind: EventKind::DomainExit,
                    s: s_stop,
                    x: point(&y_end, a),
                    j: point(&f_end, a),
                    crossing: None,
                });
            }
            if cfg.keep_samples || stop.is_some() {
                run.samples[a].push(Sample { s: s_stop, x: point(&y_end, a), j: point(&f_end, a) });
            }
        }

        if stop.is_none() && norm(&f_end) < eps {
            for a in 0..n {
                run.events[a].push(Event {
                    kind: EventKind::StagnationHalt,
                    s: s_stop,
                    x: point(&y_end, a),
                    j: point(&f_end, a),
                    crossing: None,
                });
                if !cfg.keep_samples {
                    run.samples[a].push(Sample { s: s_stop, x: point(&y_end, a), j: point(&f_end, a) });
                }
            }
            stop = Some(Termination::Stagnation);
        }

        st.accept(&mut y);
        s = s_stop;
        if let Some(t) = stop {
            run.end = t;
            break;
        }
        h *= Dopri5::factor(attempt.error);
    }

    if !cfg.keep_samples
        && matches!(run.end, Termination::Completed | Termination::StepUnderflow | Termination::StepLimit)
    {
        let mut f = vec![0.0; dim];
        field.eval(&y, &mut f);
        for a in 0..n {
            run.samples[a].push(Sample { s, x: point(&y, a), j: point(&f, a) });
        }
    }
    run
}

#[allow(clippy::too_many_arguments)]
fn detect_events(
    field: &dyn VectorField,
    dense: &DenseStep,
    s0: f64,
    s1: f64,
    y0: &[f64],
    f0: &[f64],
    y1: &[f64],
    f1: &[f64],
    watch: &[Hypersurface],
    tol: f64,
    eps: f64,
    scratch: &mut [f64],
    fscratch: &mut [f64],
    events: &mut [Vec<Event>],
) {
    let n = y0.len() / 4;
    for a in 0..n {
        // dt/ds sign change.
        let (g0, g1) = (f0[4 * a], f1[4 * a]);
        if g0 != 0.0 && g0.signum() != g1.signum() {
            let sc = bisect(s0, s1, tol, |q| {
                dense.eval_into(q, scratch);
                field.eval(scratch, fscratch);
                fscratch[4 * a].signum() == g0.signum()
            });
            dense.eval_into(sc, scratch);
            field.eval(scratch, fscratch);
            events[a].push(Event {
                kind: EventKind::TimeReversal,
                s: sc,
                x: point(scratch, a),
                j: point(fscratch, a),
                crossing: None,
            });
        }

        for (si, surface) in watch.iter().enumerate() {
            for (pi, p) in surface.patches().iter().enumerate() {
                let l0 = p.level(point(y0, a));
                let l1 = p.level(point(y1, a));
                if l0 == 0.0 || l0.signum() == l1.signum() && l1 != 0.0 {
                    continue;
                }
                let sc = if l1 == 0.0 {
                    s1
                } else {
                    bisect(s0, s1, tol, |q| {
                        dense.eval_into(q, scratch);
                        p.level(point(scratch, a)).signum() == l0.signum()
                    })
                };
                dense.eval_into(sc, scratch);
                let x = point(scratch, a);
                if !p.contains(p.coordinates(x), surface.dims()) {
                    continue;
                }
                field.eval(scratch, fscratch);
                let j = point(fscratch, a);
                let nj = p.normal.dot(j);
                let orientation = if (l1 - l0) * (s1 - s0) > 0.0 { Orientation::FutureWard } else { Orientation::PastWard };
                let c = Crossing { s: sc, x, orientation, grazing: nj.abs() < eps, surface: si, patch: pi };
                events[a].push(Event { kind: EventKind::SurfaceCrossing, s: sc, x, j, crossing: Some(c) });
            }
        }
    }
}

/// Crossings of a sampled curve with `h`, located by bisection on the cubic
/// Hermite interpolant through consecutive samples.
pub fn crossings(tr: &Trajectory, h: &Hypersurface) -> Vec<Crossing> {
    let mut out = Vec::new();
    let eps = tr.stagnation_threshold;
    for (pi, p) in h.patches().iter().enumerate() {
        let mut push = |s: f64, x: FourVector, j: FourVector, dir: f64| {
            if !p.contains(p.coordinates(x), h.dims()) {
                return;
            }
            let nj = p.normal.dot(j);
            let orientation = if dir > 0.0 { Orientation::FutureWard } else { Orientation::PastWard };
            out.push(Crossing { s, x, orientation, grazing: nj.abs() < eps, surface: 0, patch: pi });
        };
        for (i, smp) in tr.samples.iter().enumerate() {
            if p.level(smp.x) == 0.0 {
                let nj = p.normal.dot(smp.j);
                let prev = i.checked_sub(1).map(|k| p.level(tr.samples[k].x));
                let next = tr.samples.get(i + 1).map(|q| p.level(q.x));
                let transversal = match (prev, next) {
                    (Some(a), Some(b)) => a.signum() != b.signum(),
                    _ => true,
                };
                if transversal {
                    push(smp.s, smp.x, smp.j, nj);
                }
            }
        }
        for w in tr.samples.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let (la, lb) = (p.level(a.x), p.level(b.x));
            if la == 0.0 || lb == 0.0 || la.signum() == lb.signum() {
                continue;
            }
            let interp = |s: f64| hermite(a, b, s);
            let sc = bisect(a.s, b.s, 1e-12 * (1.0 + a.s.abs()), |q| p.level(interp(q).0).signum() == la.signum());
            let (x, j) = interp(sc);
            push(sc, x, j, lb - la);
        }
    }
    out.sort_by(|p, q| p.s.total_cmp(&q.s));
    out
}

/// Cubic Hermite position and linearly interpolated velocity on `[a.s, b.s]`.
fn hermite(a: &Sample, b: &Sample, s: f64) -> (FourVector, FourVector) {
    let h = b.s - a.s;
    let t = (s - a.s) / h;
    let (t2, t3) = (t * t, t * t * t);
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let x = a.x * h00 + a.j * (h10 * h) + b.x * h01 + b.j * (h11 * h);
    let j = a.j * (1.0 - t) + b.j * t;
    (x, j)
}
