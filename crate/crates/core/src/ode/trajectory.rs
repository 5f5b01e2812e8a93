use std::io::{BufRead, Write};
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Time-indexed samples of `p` variables, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    times: Vec<T>,
    states: Vec<T>,
    p: usize,
}

impl<T: Scalar> Trajectory<T> {
    pub fn from_flat(times: Vec<T>, states: Vec<T>, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::Format("trajectory needs at least one variable".into()));
        }
        if states.len() != times.len() * p {
            return Err(Error::Format(format!(
                "{} times but {} state entries for p = {p}",
                times.len(),
                states.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Format("times must be strictly increasing".into()));
        }
        Ok(Self { times, states, p })
    }

    pub fn from_rows(times: Vec<T>, rows: &[Vec<T>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::Format("ragged state rows".into()));
        }
        Self::from_flat(times, rows.concat(), p)
    }

    /// Uniform unit-spaced times `0, 1, 2, ...`.
    pub fn from_states(rows: &[Vec<T>]) -> Result<Self> {
        let times = (0..rows.len()).map(|i| T::of(i as f64)).collect();
        Self::from_rows(times, rows)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn states(&self) -> &[T] {
        &self.states
    }

    pub fn states_mut(&mut self) -> &mut [T] {
        &mut self.states
    }

    pub fn row(&self, t: usize) -> &[T] {
        &self.states[t * self.p..(t + 1) * self.p]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [T] {
        let p = self.p;
        &mut self.states[t * p..(t + 1) * p]
    }

    pub fn get(&self, t: usize, i: usize) -> T {
        self.states[t * self.p + i]
    }

    pub fn column(&self, i: usize) -> Vec<T> {
        (0..self.len()).map(|t| self.get(t, i)).collect()
    }

    pub fn slice(&self, rows: Range<usize>) -> Result<Self> {
        if rows.start >= rows.end || rows.end > self.len() {
            return Err(Error::InvalidArgument(format!(
                "row range {rows:?} outside trajectory of {} rows",
                self.len()
            )));
        }
        Ok(Self {
            times: self.times[rows.clone()].to_vec(),
            states: self.states[rows.start * self.p..rows.end * self.p].to_vec(),
            p: self.p,
        })
    }

    /// Keeps rows `0, stride, 2·stride, ...`.
    pub fn downsample(&self, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidArgument("downsample stride must be >= 1".into()));
        }
        let keep: Vec<usize> = (0..self.len()).step_by(stride).collect();
        let times = keep.iter().map(|&t| self.times[t]).collect();
        let states = keep.iter().flat_map(|&t| self.row(t).iter().copied()).collect();
        Ok(Self { times, states, p: self.p })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> =
            std::iter::once("t".to_string()).chain((1..=self.p).map(|i| format!("x{i}"))).collect();
        writeln!(w, "{}", header.join(","))?;
        for t in 0..self.len() {
            let mut line = self.times[t].to_string();
            for v in self.row(t) {
                line.push(',');
                line.push_str(&v.to_string());
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty trajectory csv".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        if cols.first() != Some(&"t") || cols.len() < 2 {
            return Err(Error::Format(format!("bad trajectory header {header:?}")));
        }
        let p = cols.len() - 1;
        let mut times = Vec::new();
        let mut states = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != p + 1 {
                return Err(Error::Format(format!("row {} has {} fields, expected {}", n + 1, fields.len(), p + 1)));
            }
            let parse = |s: &str| {
                s.parse::<T>().map_err(|_| Error::Format(format!("row {}: cannot parse {s:?}", n + 1)))
            };
            times.push(parse(fields[0])?);
            for f in &fields[1..] {
                states.push(parse(f)?);
            }
        }
        Self::from_flat(times, states, p)
    }
}

/// Adds i.i.d. `N(0, sigma²)` noise to every entry. Deterministic in `seed`.
pub fn add_sensor_noise<T: Scalar>(traj: &Trajectory<T>, sigma: f64, seed: u64) -> Result<Trajectory<T>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {sigma}")));
    }
    let mut out = traj.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in out.states_mut() {
        *v = *v + T::of(normal.sample(&mut rng));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_noise_is_identity() {
        let t = Trajectory::from_states(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(add_sensor_noise(&t, 0.0, 5).unwrap(), t);
    }

    #[test]
    fn noise_statistics() {
        let rows = vec![vec![0.5f64; 20]; 10_000];
        let t = Trajectory::from_states(&rows).unwrap();
        let noisy = add_sensor_noise(&t, 0.01, 42).unwrap();
        let d: Vec<f64> = noisy.states().iter().zip(t.states()).map(|(a, b)| a - b).collect();
        let n = d.len() as f64;
        let mean = d.iter().sum::<f64>() / n;
        let std = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 0.001, "{mean}");
        assert!((0.009..=0.011).contains(&std), "{std}");
    }

    #[test]
    fn noise_is_seeded() {
        let t = Trajectory::from_states(&vec![vec![0.0f64; 3]; 50]).unwrap();
        assert_eq!(add_sensor_noise(&t, 0.1, 9).unwrap(), add_sensor_noise(&t, 0.1, 9).unwrap());
        assert_ne!(add_sensor_noise(&t, 0.1, 9).unwrap(), add_sensor_noise(&t, 0.1, 10).unwrap());
    }

    #[test]
    fn negative_sigma_rejected() {
        let t = Trajectory::from_states(&[vec![0.0f64]]).unwrap();
        assert!(add_sensor_noise(&t, -1.0, 0).is_err());
    }

    #[test]
    fn downsample_keeps_every_stride_row() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let t = Trajectory::from_states(&rows).unwrap().downsample(10).unwrap();
        assert_eq!(t.len(), 10);
        assert_eq!(t.column(0), (0..10).map(|i| (10 * i) as f64).collect::<Vec<_>>());
    }

    #[test]
    fn csv_header_and_errors() {
        let t = Trajectory::from_flat(vec![0.0, 0.5], vec![1.0, 2.0, 3.0, 4.0], 2).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x1,x2\n0,1,2\n0.5,3,4\n"), "{text}");
        assert!(Trajectory::<f64>::read_csv("t,x1\n0,abc\n".as_bytes()).is_err());
        assert!(Trajectory::<f64>::read_csv("time,x1\n0,1\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(vals in proptest::collection::vec(proptest::num::f64::NORMAL, 12)) {
            let times: Vec<f64> = (0..4).map(|i| i as f64 * 0.01).collect();
            let t = Trajectory::from_flat(times, vals, 3).unwrap();
            let mut buf = Vec::new();
            t.write_csv(&mut buf).unwrap();
            let back = Trajectory::<f64>::read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
