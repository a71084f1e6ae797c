//! Trajectory CSV: `s,t,theta_i..,phi_i..,dist_manifold,loss,tr_hess`.
//!
//! Numbers use 17 significant digits so that parsing restores every value bit for bit.
//! Missing projections are written as empty fields.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use slowsde_core::linalg::Vector;
use slowsde_core::optim::TrajectoryPoint;

pub fn header(d: usize) -> String {
    let mut cols = vec!["s".to_string(), "t".to_string()];
    cols.extend((0..d).map(|i| format!("theta_{i}")));
    cols.extend((0..d).map(|i| format!("phi_{i}")));
    cols.extend(["dist_manifold", "loss", "tr_hess"].map(String::from));
    cols.join(",")
}

fn num(out: &mut String, x: f64) {
    write!(out, "{x:.16e}").expect("write to string");
}

fn opt(out: &mut String, x: Option<f64>) {
    if let Some(x) = x {
        num(out, x);
    }
}

/// CSV text for `points` in dimension `d`, LF line endings.
pub fn to_csv(points: &[TrajectoryPoint<f64>], d: usize) -> String {
    let mut out = header(d);
    out.push('\n');
    for p in points {
        write!(out, "{},", p.s).expect("write to string");
        num(&mut out, p.t);
        for &x in p.theta.iter() {
            out.push(',');
            num(&mut out, x);
        }
        for i in 0..d {
            out.push(',');
            opt(&mut out, p.phi.as_ref().map(|v| v[i]));
        }
        out.push(',');
        opt(&mut out, p.dist);
        out.push(',');
        num(&mut out, p.loss);
        out.push(',');
        opt(&mut out, p.tr_hess);
        out.push('\n');
    }
    out
}

pub fn emit_csv(points: &[TrajectoryPoint<f64>], d: usize, path: &Path) -> io::Result<()> {
    std::fs::write(path, to_csv(points, d))
}

fn bad(line: usize, msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, format!("line {line}: {}", msg.into()))
}

/// Parses text produced by [`to_csv`]; returns the dimension and the points.
pub fn parse_csv(text: &str) -> io::Result<(usize, Vec<TrajectoryPoint<f64>>)> {
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| bad(1, "missing header"))?;
    let ncols = head.split(',').count();
    if ncols < 5 || (ncols - 5) % 2 != 0 {
        return Err(bad(1, "unexpected header"));
    }
    let d = (ncols - 5) / 2;
    if head != header(d) {
        return Err(bad(1, "unexpected header"));
    }
    let mut points = Vec::new();
    for (n, line) in lines.enumerate() {
        let ln = n + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != ncols {
            return Err(bad(ln, format!("expected {ncols} fields, got {}", f.len())));
        }
        let x = |i: usize| f[i].parse::<f64>().map_err(|_| bad(ln, format!("bad number {:?}", f[i])));
        let ox = |i: usize| if f[i].is_empty() { Ok(None) } else { x(i).map(Some) };
        let s = f[0].parse::<usize>().map_err(|_| bad(ln, format!("bad index {:?}", f[0])))?;
        let theta = (0..d).map(|i| x(2 + i)).collect::<io::Result<Vec<_>>>()?;
        let phi = (0..d).map(|i| ox(2 + d + i)).collect::<io::Result<Option<Vec<_>>>>()?;
        points.push(TrajectoryPoint {
            s,
            t: x(1)?,
            theta: Vector(theta),
            phi: phi.map(Vector),
            dist: ox(2 + 2 * d)?,
            loss: x(3 + 2 * d)?,
            tr_hess: ox(4 + 2 * d)?,
        });
    }
    Ok((d, points))
}
