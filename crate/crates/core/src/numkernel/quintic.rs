use nalgebra::DVector;

use crate::error::{Error, Result};

/// Sample of a planned trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub pos: DVector<f64>,
    pub vel: DVector<f64>,
    pub acc: DVector<f64>,
}

/// Rest-to-rest quintic blend from `p0` to `p1` sampled at `steps` instants
/// spaced `ts` apart (first sample at `p0`, last at `p1`).
pub fn quintic_plan(p0: &DVector<f64>, p1: &DVector<f64>, steps: usize, ts: f64) -> Result<Vec<TrajectoryPoint>> {
    if steps < 2 {
        return Err(Error::Config(format!("quintic plan needs at least 2 samples, got {steps}")));
    }
    if !(ts > 0.0) {
        return Err(Error::Config(format!("sampling time must be > 0, got {ts}")));
    }
    if p0.len() != p1.len() {
        return Err(Error::Domain("quintic endpoints differ in dimension".into()));
    }
    let duration = (steps - 1) as f64 * ts;
    let span = p1 - p0;
    let plan = (0..steps)
        .map(|i| {
            // exact endpoints, whatever the rounding of i/(steps-1)
            let s = if i + 1 == steps { 1.0 } else { i as f64 / (steps - 1) as f64 };
            let s2 = s * s;
            let s3 = s2 * s;
            let blend = s3 * (10.0 - 15.0 * s + 6.0 * s2);
            let dblend = 30.0 * s2 * (1.0 - s) * (1.0 - s);
            let ddblend = 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s);
            TrajectoryPoint {
                pos: p0 + &span * blend,
                vel: &span * (dblend / duration),
                acc: &span * (ddblend / (duration * duration)),
            }
        })
        .collect();
    Ok(plan)
}
