use nalgebra::DVector;

use super::SolverError;

/// Vector-valued signal sampled on a strictly increasing time grid.
///
/// Between grid points the signal is linearly interpolated; outside the grid
/// it is clamped to the nearest endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    times: Vec<f64>,
    dim: usize,
    /// Row-major samples, one row of `dim` values per time.
    data: Vec<f64>,
}

impl Waveform {
    pub fn new(times: Vec<f64>, samples: Vec<DVector<f64>>) -> Result<Self, SolverError> {
        if times.is_empty() || times.len() != samples.len() {
            return Err(SolverError::InvalidWaveform(format!("{} times and {} samples", times.len(), samples.len())));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SolverError::InvalidWaveform("time grid must be strictly increasing".into()));
        }
        let dim = samples[0].len();
        if samples.iter().any(|s| s.len() != dim) {
            return Err(SolverError::InvalidWaveform("samples differ in dimension".into()));
        }
        let data = samples.iter().flat_map(|s| s.iter().copied()).collect();
        Ok(Waveform { times, dim, data })
    }

    /// The same value at every point of `times`.
    pub fn constant(times: Vec<f64>, value: &DVector<f64>) -> Result<Self, SolverError> {
        let samples = vec![value.clone(); times.len()];
        Waveform::new(times, samples)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn sample(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(self.row(k))
    }

    pub fn last(&self) -> DVector<f64> {
        self.sample(self.len() - 1)
    }

    /// Samples of component `c`.
    pub fn component(&self, c: usize) -> Vec<f64> {
        (0..self.len()).map(|k| self.data[k * self.dim + c]).collect()
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        let n = self.len();
        if t <= self.times[0] {
            return self.sample(0);
        }
        if t >= self.times[n - 1] {
            return self.sample(n - 1);
        }
        let k = self.times.partition_point(|&s| s <= t);
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        let (a, b) = (self.row(k - 1), self.row(k));
        DVector::from_iterator(self.dim, a.iter().zip(b).map(|(x, y)| x + w * (y - x)))
    }

    /// Largest absolute sample.
    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Max over the union of both grids of `‖self(t) − other(t)‖_∞`.
    pub fn sup_diff(&self, other: &Waveform) -> Result<f64, SolverError> {
        if self.dim != other.dim {
            return Err(SolverError::InvalidWaveform(format!("dimension {} vs {}", self.dim, other.dim)));
        }
        let mut d = 0.0_f64;
        for &t in self.times.iter().chain(&other.times) {
            let diff = self.eval(t) - other.eval(t);
            d = d.max(diff.iter().fold(0.0_f64, |m, v| m.max(v.abs())));
            if d.is_nan() {
                return Ok(f64::NAN);
            }
        }
        Ok(d)
    }

    /// Concatenates consecutive pieces; a piece starting where the previous
    /// one ends drops its duplicated first sample.
    pub fn concat(pieces: &[Waveform]) -> Result<Waveform, SolverError> {
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for p in pieces {
            for k in 0..p.len() {
                if k == 0 && times.last() == Some(&p.times[0]) {
                    continue;
                }
                times.push(p.times[k]);
                samples.push(p.sample(k));
            }
        }
        Waveform::new(times, samples)
    }
}

/// `n = ⌈(t1 − t0)/δt⌉` equal steps covering `[t0, t1]`.
pub fn uniform_grid(t0: f64, t1: f64, dt: f64) -> Result<Vec<f64>, SolverError> {
    if !(t1 > t0) || !(dt > 0.0) || !dt.is_finite() || !t1.is_finite() {
        return Err(SolverError::InvalidOptions(format!("grid [{t0}, {t1}] with step {dt}")));
    }
    let n = ((t1 - t0) / dt - 1e-9).ceil().max(1.0) as usize;
    let h = (t1 - t0) / n as f64;
    Ok((0..=n).map(|k| if k == n { t1 } else { t0 + k as f64 * h }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(times: &[f64], f: impl Fn(f64) -> f64) -> Waveform {
        Waveform::new(times.to_vec(), times.iter().map(|&t| DVector::from_element(1, f(t))).collect()).unwrap()
    }

    #[test]
    fn interpolation_and_clamping() {
        let w = scalar(&[0.0, 1.0, 3.0], |t| t * t);
        assert_eq!(w.eval(0.5)[0], 0.5);
        assert_eq!(w.eval(2.0)[0], 5.0);
        assert_eq!(w.eval(3.0 + 1e-12)[0], 9.0);
        assert!((w.eval(3.0 - 1e-12)[0] - 9.0).abs() < 1e-10);
        assert_eq!(w.eval(-1.0)[0], 0.0);
        assert_eq!(w.eval(1e9)[0], 9.0);
    }

    #[test]
    fn sup_diff_cases() {
        let g = uniform_grid(0.0, 1.0, 0.1).unwrap();
        let a = scalar(&g, |t| t);
        assert_eq!(a.sup_diff(&a).unwrap(), 0.0);
        let one = Waveform::constant(vec![0.0, 0.3], &DVector::from_element(1, 1.0)).unwrap();
        let zero = Waveform::constant(g.clone(), &DVector::zeros(1)).unwrap();
        assert_eq!(one.sup_diff(&zero).unwrap(), 1.0);
        let coarse = scalar(&[0.0, 1.0], |t| 3.0 * t - 1.0);
        let fine = scalar(&uniform_grid(0.0, 1.0, 1.0 / 64.0).unwrap(), |t| 3.0 * t - 1.0);
        assert!(coarse.sup_diff(&fine).unwrap() < 1e-15);
        let two = Waveform::constant(g, &DVector::zeros(2)).unwrap();
        assert!(a.sup_diff(&two).is_err());
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Waveform::new(vec![0.0, 0.0], vec![DVector::zeros(1); 2]).is_err());
        assert!(Waveform::new(vec![0.0], vec![]).is_err());
        assert!(uniform_grid(1.0, 0.0, 0.1).is_err());
        assert!(uniform_grid(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn uniform_grid_hits_endpoints() {
        let g = uniform_grid(0.0, 0.8, 1e-2).unwrap();
        assert_eq!(g.len(), 81);
        assert_eq!(g[80], 0.8);
        let g = uniform_grid(0.0, 1.0, 0.3).unwrap();
        assert_eq!(g.len(), 5);
    }

    #[test]
    fn concat_drops_shared_points() {
        let a = scalar(&[0.0, 1.0], |t| t);
        let b = scalar(&[1.0, 2.0], |t| t);
        let c = Waveform::concat(&[a, b]).unwrap();
        assert_eq!(c.times(), &[0.0, 1.0, 2.0]);
        assert_eq!(c.component(0), vec![0.0, 1.0, 2.0]);
    }
}
