//! CSV output. Comma-separated, header row, LF line endings, floats in
//! `{:.16e}` (17 significant digits) so discontinuities survive a round trip.

use std::io::{self, Write};

use crate::sim::HybridTrajectory;

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn header(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}_{i}"))
}

/// `t, x_0.., xc_0.., z_0..`; event instants appear twice (pre, post).
pub fn write_trajectory<W: Write>(traj: &HybridTrajectory, out: &mut W) -> io::Result<()> {
    let cols: Vec<String> = std::iter::once("t".to_string())
        .chain(header("x", traj.dim()))
        .chain(header("xc", traj.dim()))
        .chain(header("z", traj.units()))
        .collect();
    writeln!(out, "{}", cols.join(","))?;
    for i in 0..traj.len() {
        let row: Vec<String> = std::iter::once(traj.t(i))
            .chain(traj.x(i).iter().copied())
            .chain(traj.xc(i).iter().copied())
            .chain(traj.z(i).iter().copied())
            .map(fmt_f64)
            .collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// `seq, t, unit`
pub fn write_events<W: Write>(traj: &HybridTrajectory, out: &mut W) -> io::Result<()> {
    writeln!(out, "seq,t,unit")?;
    for e in traj.events() {
        writeln!(out, "{},{},{}", e.seq, fmt_f64(e.t), e.unit)?;
    }
    Ok(())
}

/// Generic table writer for derived outputs (bounds, heatmaps).
pub fn write_table<W: Write>(columns: &[&str], rows: &[Vec<String>], out: &mut W) -> io::Result<()> {
    writeln!(out, "{}", columns.join(","))?;
    for r in rows {
        writeln!(out, "{}", r.join(","))?;
    }
    Ok(())
}
