//! CSV export with fixed column orders. Floats are written with 17
//! significant digits so files round-trip exactly.

use std::io::Write;

use crate::congruence::CrossingRow;
use crate::error::Result;
use crate::interference::GridRow;
use crate::trajectory::{Orientation, Trajectory};

pub const TRAJECTORY_HEADER: &str = "trajectory_id,s,t,x,y,z,j0,event_flag";
pub const GRID_HEADER: &str = "x,y,C,I,rho,j0,abs_j0_avg";
pub const CROSSING_HEADER: &str = "trajectory_id,s,t,x,y,z,orientation,grazing";

/// `{:.16e}`: one leading digit plus 16 decimals.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Samples (flag `sample`) and events merged by `s`; at equal `s` the
/// sample comes first.
pub fn write_trajectories<W: Write>(mut w: W, trajectories: &[Trajectory]) -> Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for (id, tr) in trajectories.iter().enumerate() {
        let mut rows: Vec<(f64, u8, [f64; 5], &str)> = Vec::with_capacity(tr.samples.len() + tr.events.len());
        for s in &tr.samples {
            rows.push((s.s, 0, [s.x.t, s.x.x, s.x.y, s.x.z, s.j.t], "sample"));
        }
        for e in &tr.events {
            rows.push((e.s, 1, [e.x.t, e.x.x, e.x.y, e.x.z, e.j.t], e.kind.label()));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (s, _, v, flag) in rows {
            writeln!(
                w,
                "{id},{},{},{},{},{},{},{flag}",
                fmt_f64(s),
                fmt_f64(v[0]),
                fmt_f64(v[1]),
                fmt_f64(v[2]),
                fmt_f64(v[3]),
                fmt_f64(v[4])
            )?;
        }
    }
    Ok(())
}

pub fn write_grid<W: Write>(mut w: W, rows: &[GridRow]) -> Result<()> {
    writeln!(w, "{GRID_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            fmt_f64(r.x),
            fmt_f64(r.y),
            fmt_f64(r.classical),
            fmt_f64(r.interference),
            fmt_f64(r.rho),
            fmt_f64(r.j0),
            fmt_f64(r.abs_j0_avg)
        )?;
    }
    Ok(())
}

pub fn write_crossings<W: Write>(mut w: W, rows: &[CrossingRow]) -> Result<()> {
    writeln!(w, "{CROSSING_HEADER}")?;
    for r in rows {
        let o = match r.orientation {
            Orientation::FutureWard => "future-ward",
            Orientation::PastWard => "past-ward",
        };
        writeln!(
            w,
            "{},{},{},{},{},{},{o},{}",
            r.trajectory,
            fmt_f64(r.s),
            fmt_f64(r.x.t),
            fmt_f64(r.x.x),
            fmt_f64(r.x.y),
            fmt_f64(r.x.z),
            r.grazing
        )?;
    }
    Ok(())
}
