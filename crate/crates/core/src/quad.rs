//! Composite Simpson quadrature with step doubling.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct SimpsonResult {
    pub value: f64,
    /// Richardson estimate `|S_2n - S_n| / 15` of the final value's error.
    pub error: f64,
    pub intervals: usize,
}

/// Integrates `f` over `[a, b]` starting from `n0` intervals and doubling until
/// the step-halving estimate drops below `tol`. Previous nodes are reused.
pub fn simpson_doubling<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    n0: usize,
    tol: f64,
    max_intervals: usize,
) -> Result<SimpsonResult> {
    if b == a {
        return Ok(SimpsonResult { value: 0.0, error: 0.0, intervals: 0 });
    }
    let mut m = (n0.max(2) + 1) / 2;
    let mut hstep = (b - a) / m as f64;
    let mut trap = 0.5 * (f(a) + f(b));
    for i in 1..m {
        trap += f(a + i as f64 * hstep);
    }
    trap *= hstep;
    let refine = |trap: f64, m: usize, hstep: f64, f: &mut F| {
        let mut mid = 0.0;
        for i in 0..m {
            mid += f(a + (i as f64 + 0.5) * hstep);
        }
        0.5 * trap + 0.5 * hstep * mid
    };
    let t2 = refine(trap, m, hstep, &mut f);
    let mut simpson = (4.0 * t2 - trap) / 3.0;
    trap = t2;
    m *= 2;
    hstep /= 2.0;
    loop {
        let t2 = refine(trap, m, hstep, &mut f);
        let next = (4.0 * t2 - trap) / 3.0;
        let err = (next - simpson).abs() / 15.0;
        trap = t2;
        m *= 2;
        hstep /= 2.0;
        simpson = next;
        if err <= tol {
            return Ok(SimpsonResult { value: simpson, error: err, intervals: m });
        }
        if m > max_intervals {
            return Err(Error::Tolerance { achieved: err, requested: tol });
        }
    }
}
