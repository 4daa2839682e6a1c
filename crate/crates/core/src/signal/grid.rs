use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

/// Uniform time discretization `t_i = t_start + i * dt`, `0 <= i < n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    t_start: f64,
    dt: f64,
    n: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, dt: f64, n: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if !t_start.is_finite() {
            return Err(Error::InvalidParameter("t_start must be finite".into()));
        }
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2 samples, got {n}"
            )));
        }
        Ok(Self { t_start, dt, n })
    }

    /// Grid covering `[t_start, t_end]` with step `dt`; the last sample is the
    /// first one at or beyond `t_end` (up to rounding).
    pub fn spanning(t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(t_end > t_start) {
            return Err(Error::InvalidParameter(format!(
                "empty span [{t_start}, {t_end}]"
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {dt}"
            )));
        }
        let steps = ((t_end - t_start) / dt - 1e-9).ceil() as usize;
        Self::new(t_start, dt, steps + 1)
    }

    #[inline]
    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Time of sample `i`, computed from the index (no accumulated drift).
    #[inline]
    pub fn time(&self, i: usize) -> f64 {
        self.t_start + i as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.n - 1)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.time(i))
    }

    /// Same spacing and length, origin moved by `delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            t_start: self.t_start + delta,
            ..*self
        }
    }

    /// Index of the last sample with `time(i) <= t`, or `None` if `t` precedes the grid.
    pub fn floor_index(&self, t: f64) -> Option<usize> {
        if t < self.t_start {
            return None;
        }
        let mut i = ((t - self.t_start) / self.dt).floor() as usize;
        i = i.min(self.n - 1);
        // guard against rounding in the division
        while i + 1 < self.n && self.time(i + 1) <= t {
            i += 1;
        }
        while i > 0 && self.time(i) > t {
            i -= 1;
        }
        Some(i)
    }
}

/// Real-valued samples on a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSignal {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl SampledSignal {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "{} values for a grid of {} samples",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite value at sample {i}"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.times().map(f).collect();
        Self::new(grid, values)
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    #[inline]
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Index range `[first, last]` of nonzero samples.
    pub fn support(&self) -> Option<(usize, usize)> {
        let first = self.values.iter().position(|&v| v != 0.0)?;
        let last = self.values.iter().rposition(|&v| v != 0.0)?;
        Some((first, last))
    }

    /// Linear interpolation at `t`; zero outside the grid.
    pub fn interpolate(&self, t: f64) -> f64 {
        let Some(i) = self.grid.floor_index(t) else {
            return 0.0;
        };
        if i + 1 >= self.len() {
            return if t == self.grid.t_end() {
                self.values[i]
            } else {
                0.0
            };
        }
        let frac = (t - self.grid.time(i)) / self.grid.dt();
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| f(self.grid.time(i), v))
            .collect();
        Self {
            grid: self.grid,
            values,
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map(|_, v| a * v)
    }

    /// Writes the `t,value` CSV representation.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{:.12e},{:.12e}", self.grid.time(i), v)?;
        }
        Ok(())
    }
}

/// Writes several signals sharing one grid as CSV columns, `t` first.
pub fn write_columns_csv<W: Write>(
    mut w: W,
    names: &[&str],
    signals: &[&SampledSignal],
) -> std::io::Result<()> {
    assert_eq!(names.len(), signals.len());
    let grid = signals[0].grid();
    debug_assert!(signals.iter().all(|s| s.grid() == grid));
    write!(w, "t")?;
    for name in names {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for i in 0..grid.len() {
        write!(w, "{:.12e}", grid.time(i))?;
        for s in signals {
            write!(w, ",{:.12e}", s.values()[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(TimeGrid::new(0.0, 0.0, 10).is_err());
        assert!(TimeGrid::new(0.0, -1e-3, 10).is_err());
        assert!(TimeGrid::new(0.0, 1e-3, 1).is_err());
        assert!(TimeGrid::new(f64::NAN, 1e-3, 10).is_err());
    }

    #[test]
    fn time_is_computed_from_index() {
        let g = TimeGrid::new(-0.123, 1e-5, 61_501).unwrap();
        let mut acc = g.t_start();
        for _ in 0..60_000 {
            acc += g.dt();
        }
        assert_eq!(g.time(60_000), -0.123 + 60_000.0 * 1e-5);
        // repeated addition drifts, index arithmetic does not
        assert_ne!(acc, g.time(60_000));
    }

    #[test]
    fn spanning_covers_end() {
        let g = TimeGrid::spanning(-1.0, 1.0, 0.1).unwrap();
        assert_eq!(g.len(), 21);
        assert!((g.t_end() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn floor_index_brackets() {
        let g = TimeGrid::new(-1.0, 0.25, 9).unwrap();
        assert_eq!(g.floor_index(-1.5), None);
        assert_eq!(g.floor_index(-1.0), Some(0));
        assert_eq!(g.floor_index(0.1), Some(4));
        assert_eq!(g.floor_index(0.0), Some(4));
        assert_eq!(g.floor_index(5.0), Some(8));
    }

    #[test]
    fn signal_validates_values() {
        let g = TimeGrid::new(0.0, 1.0, 3).unwrap();
        assert!(SampledSignal::new(g, vec![0.0; 2]).is_err());
        assert!(SampledSignal::new(g, vec![0.0, f64::INFINITY, 0.0]).is_err());
        assert!(SampledSignal::new(g, vec![0.0, 1.0, 0.0]).is_ok());
    }

    #[test]
    fn csv_has_header_and_precision() {
        let g = TimeGrid::new(0.5, 1e-5, 2).unwrap();
        let s = SampledSignal::new(g, vec![1.0, -2.0]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,value"));
        let row: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|x| x.parse().unwrap())
            .collect();
        assert_eq!(row, vec![0.5, 1.0]);
        let t1: f64 = text
            .lines()
            .nth(2)
            .unwrap()
            .split(',')
            .next()
            .unwrap()
            .parse()
            .unwrap();
        assert!((t1 - 0.50001).abs() < 1e-15);
    }
}
