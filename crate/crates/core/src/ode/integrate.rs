use serde::{Deserialize, Serialize};

use super::{SystemSpec, Trajectory};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// States with any entry above this magnitude abort integration.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Euler,
    #[default]
    Rk4,
}

/// Fixed-step integration producing `steps + 1` rows starting at `x0`.
pub fn integrate<T: Scalar>(
    spec: &SystemSpec<T>,
    x0: &[T],
    dt: T,
    steps: usize,
    method: Method,
) -> Result<Trajectory<T>> {
    integrate_perturbed(spec, x0, dt, steps, method, |_| None)
}

/// Like [`integrate`], but for every step `n` where `offset(n)` returns
/// `Some((k, a))`, each derivative evaluation of the step sees `x + a·e_k`
/// instead of `x`. The recorded state is the true (unshifted) one.
pub fn integrate_perturbed<T: Scalar>(
    spec: &SystemSpec<T>,
    x0: &[T],
    dt: T,
    steps: usize,
    method: Method,
    mut offset: impl FnMut(usize) -> Option<(usize, T)>,
) -> Result<Trajectory<T>> {
    spec.validate()?;
    let p = spec.p();
    if x0.len() != p {
        return Err(Error::shape("integrate", format!("x0 has {} entries, p = {p}", x0.len())));
    }
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state".into()));
    }

    let limit = T::of(DIVERGENCE_LIMIT);
    let mut states = Vec::with_capacity((steps + 1) * p);
    states.extend_from_slice(x0);
    let mut x = x0.to_vec();
    let mut scratch = Scratch::new(p);

    for n in 0..steps {
        let shift = offset(n);
        if let Some((k, _)) = shift {
            if k >= p {
                return Err(Error::InvalidArgument(format!("perturbed variable {k} out of range for p = {p}")));
            }
        }
        match method {
            Method::Euler => euler_step(spec, &mut x, dt, shift, &mut scratch),
            Method::Rk4 => rk4_step(spec, &mut x, dt, shift, &mut scratch),
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite() || v.abs() > limit) {
            return Err(Error::Divergence {
                step: n + 1,
                context: format!("variable {i} reached {}", x[i]),
            });
        }
        states.extend_from_slice(&x);
    }

    let times = (0..=steps).map(|n| T::of(n as f64) * dt).collect();
    Trajectory::from_flat(times, states, p)
}

struct Scratch<T> {
    probe: Vec<T>,
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
}

impl<T: Scalar> Scratch<T> {
    fn new(p: usize) -> Self {
        let z = vec![T::zero(); p];
        Self { probe: z.clone(), k1: z.clone(), k2: z.clone(), k3: z.clone(), k4: z }
    }
}

fn eval<T: Scalar>(spec: &SystemSpec<T>, x: &[T], shift: Option<(usize, T)>, probe: &mut [T], out: &mut [T]) {
    match shift {
        Some((k, a)) => {
            probe.copy_from_slice(x);
            probe[k] = probe[k] + a;
            spec.derivative_into(probe, out);
        }
        None => spec.derivative_into(x, out),
    }
}

fn euler_step<T: Scalar>(spec: &SystemSpec<T>, x: &mut [T], dt: T, shift: Option<(usize, T)>, s: &mut Scratch<T>) {
    eval(spec, x, shift, &mut s.probe, &mut s.k1);
    for (xi, &d) in x.iter_mut().zip(&s.k1) {
        *xi = *xi + dt * d;
    }
}

fn rk4_step<T: Scalar>(spec: &SystemSpec<T>, x: &mut [T], dt: T, shift: Option<(usize, T)>, s: &mut Scratch<T>) {
    let half = dt / T::of(2.0);
    let mut stage = x.to_vec();

    eval(spec, x, shift, &mut s.probe, &mut s.k1);
    for i in 0..x.len() {
        stage[i] = x[i] + half * s.k1[i];
    }
    eval(spec, &stage, shift, &mut s.probe, &mut s.k2);
    for i in 0..x.len() {
        stage[i] = x[i] + half * s.k2[i];
    }
    eval(spec, &stage, shift, &mut s.probe, &mut s.k3);
    for i in 0..x.len() {
        stage[i] = x[i] + dt * s.k3[i];
    }
    eval(spec, &stage, shift, &mut s.probe, &mut s.k4);

    let sixth = dt / T::of(6.0);
    let two = T::of(2.0);
    for i in 0..x.len() {
        x[i] = x[i] + sixth * (s.k1[i] + two * s.k2[i] + two * s.k3[i] + s.k4[i]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_rel_error(a: &Trajectory<f64>, a_stride: usize, b: &Trajectory<f64>, b_stride: usize) -> f64 {
        let rows = (a.len() - 1) / a_stride;
        assert_eq!(rows, (b.len() - 1) / b_stride);
        (0..=rows)
            .map(|r| {
                let (ra, rb) = (a.row(r * a_stride), b.row(r * b_stride));
                let diff = ra.iter().zip(rb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                let scale = rb.iter().map(|v| v.abs()).fold(0.0, f64::max);
                diff / scale
            })
            .fold(0.0, f64::max)
    }

    fn max_abs_error(a: &Trajectory<f64>, a_stride: usize, b: &Trajectory<f64>, b_stride: usize) -> f64 {
        let rows = (a.len() - 1) / a_stride;
        (0..=rows)
            .flat_map(|r| {
                let (ra, rb) = (a.row(r * a_stride).to_vec(), b.row(r * b_stride).to_vec());
                ra.into_iter().zip(rb).map(|(x, y)| (x - y).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn lorenz_rk4_converged_at_default_step() {
        let spec = SystemSpec::lorenz96(20, 10.0).unwrap();
        let x0 = spec.initial_state(3);
        let coarse = integrate(&spec, &x0, 0.01, 100, Method::Rk4).unwrap();
        let fine = integrate(&spec, &x0, 0.001, 1000, Method::Rk4).unwrap();
        let err = max_rel_error(&coarse, 1, &fine, 10);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn rk4_observed_order_at_least_three() {
        let spec = SystemSpec::lorenz96(20, 10.0).unwrap();
        let x0 = spec.initial_state(4);
        let reference = integrate(&spec, &x0, 0.0005, 1000, Method::Rk4).unwrap();
        let h = integrate(&spec, &x0, 0.05, 10, Method::Rk4).unwrap();
        let h2 = integrate(&spec, &x0, 0.025, 20, Method::Rk4).unwrap();
        let e1 = max_abs_error(&h, 1, &reference, 100);
        let e2 = max_abs_error(&h2, 2, &reference, 100);
        assert!(e1 / e2 >= 8.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn fixed_points_do_not_drift() {
        let cases: Vec<(SystemSpec<f64>, Vec<f64>)> = vec![
            (SystemSpec::lorenz96(20, 10.0).unwrap(), vec![10.0; 20]),
            (SystemSpec::reaction_diffusion(20).unwrap(), vec![1.0; 20]),
        ];
        for (spec, x0) in cases {
            for method in [Method::Euler, Method::Rk4] {
                let traj = integrate(&spec, &x0, 0.01, 200, method).unwrap();
                for r in 1..traj.len() {
                    for (a, b) in traj.row(r).iter().zip(traj.row(r - 1)) {
                        assert!((a - b).abs() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn reaction_diffusion_stays_bounded() {
        let spec = SystemSpec::reaction_diffusion(20).unwrap();
        let x0 = spec.initial_state(7);
        let traj = integrate(&spec, &x0, 0.01, 1000, Method::Rk4).unwrap();
        let fine = integrate(&spec, &x0, 0.001, 10_000, Method::Rk4).unwrap();
        for t in [&traj, &fine] {
            assert!(t.states().iter().all(|&v| v > 0.0 && v <= 1.0 + 1e-12));
        }
        assert!(max_abs_error(&traj, 1, &fine, 10) < 1e-8);
    }

    #[test]
    fn trajectory_shape_and_first_row() {
        let spec = SystemSpec::reaction_diffusion(5).unwrap();
        let x0 = spec.initial_state(1);
        let t: Trajectory<f64> = integrate(&spec, &x0, 0.01, 17, Method::Euler).unwrap();
        assert_eq!(t.len(), 18);
        assert_eq!(t.row(0), &x0[..]);
        assert!((t.times()[17] - 0.17).abs() < 1e-15);
    }

    #[test]
    fn divergence_names_the_step() {
        let spec = SystemSpec::lorenz96(5, 10.0).unwrap();
        let err = integrate(&spec, &[1e11, -1e11, 1e11, 0.0, 3.0], 0.1, 50, Method::Euler).unwrap_err();
        match err {
            Error::Divergence { step, .. } => assert!(step >= 1),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_nonpositive_dt() {
        let spec = SystemSpec::<f64>::reaction_diffusion(5).unwrap();
        assert!(integrate(&spec, &[0.5; 5], 0.0, 3, Method::Rk4).is_err());
    }
}
