//! Grid and list arguments.

use std::fmt;

/// `start:stop:step`, inclusive of `stop` when it lies on the grid; a bare
/// number is a one-point grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FGrid(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct GridError(String);

impl fmt::Display for GridError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for GridError {}

const MAX_POINTS: usize = 1_000_000;

pub fn parse_f_grid(s: &str) -> Result<FGrid, GridError> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| -> Result<f64, GridError> {
        let v: f64 = t.trim().parse().map_err(|_| GridError(format!("`{t}` is not a number")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(GridError(format!("`{t}` is not finite")))
        }
    };
    match parts.as_slice() {
        [x] => Ok(FGrid(vec![num(x)?])),
        [a, b, step] => {
            let (a, b, step) = (num(a)?, num(b)?, num(step)?);
            if step <= 0.0 {
                return Err(GridError("grid step must be positive".into()));
            }
            if b < a {
                return Err(GridError("grid stop is below its start".into()));
            }
            let span = (b - a) / step;
            if span > MAX_POINTS as f64 {
                return Err(GridError(format!("grid has more than {MAX_POINTS} points")));
            }
            let whole = span.round();
            if (span - whole).abs() < 1e-9 {
                // interpolate so that 0:1:0.1 yields 0.3 rather than 0.30000000000000004
                let n = whole as usize;
                let pts = (0..=n).map(|i| if n == 0 { a } else { a + (b - a) * i as f64 / n as f64 }).collect();
                Ok(FGrid(pts))
            } else {
                Ok(FGrid((0..=span.floor() as usize).map(|i| a + step * i as f64).collect()))
            }
        }
        _ => Err(GridError(format!("`{s}` is neither a number nor start:stop:step"))),
    }
}
