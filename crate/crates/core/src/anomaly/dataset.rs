use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{inject_measurement, simulate_cyber, AnomalyKind, AnomalySegment, LabeledDataset, OffsetMode};
use crate::error::{Error, Result};
use crate::ode::{add_sensor_noise, integrate, Method, SystemSpec, Trajectory};
use crate::scalar::Scalar;

/// Data-generation protocol for the normal, cyber and measurement periods.
///
/// Each anomaly period is tiled as `[gap, segment]` repeated `n_segments`
/// times, then every period is stride-downsampled to `downsample_to` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    pub points_per_period: usize,
    pub segment_length: usize,
    pub gap_length: usize,
    pub n_segments: usize,
    pub downsample_to: usize,
    pub alpha: f64,
    pub noise_sigma: f64,
    pub noise_on_anomaly_periods: bool,
    pub dt: f64,
    pub method: Method,
    pub offset_mode: OffsetMode,
    /// Raw steps simulated and discarded before the normal period starts.
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            points_per_period: 100_000,
            segment_length: 500,
            gap_length: 500,
            n_segments: 100,
            downsample_to: 10_000,
            alpha: 1.0,
            noise_sigma: 0.01,
            noise_on_anomaly_periods: true,
            dt: 0.01,
            method: Method::Rk4,
            offset_mode: OffsetMode::PerSegment,
            burn_in: 0,
            seed: 0,
        }
    }
}

impl Protocol {
    /// Five-fold reduced protocol: 20,000 raw points per period, 2,000 kept,
    /// 20 segments of each anomaly kind.
    pub fn desk() -> Self {
        Self { points_per_period: 20_000, n_segments: 20, downsample_to: 2_000, ..Self::default() }
    }

    pub fn stride(&self) -> usize {
        self.points_per_period / self.downsample_to.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Protocol(m));
        if self.points_per_period < 2 {
            return bad(format!("points_per_period must be >= 2, got {}", self.points_per_period));
        }
        if self.downsample_to == 0 || self.downsample_to > self.points_per_period {
            return bad(format!(
                "downsample_to must lie in [1, points_per_period = {}], got {}",
                self.points_per_period, self.downsample_to
            ));
        }
        if self.points_per_period % self.downsample_to != 0 {
            return bad(format!(
                "downsample_to = {} does not divide points_per_period = {}",
                self.downsample_to, self.points_per_period
            ));
        }
        let stride = self.stride();
        if self.segment_length == 0 || self.segment_length % stride != 0 {
            return bad(format!(
                "segment_length = {} must be a positive multiple of the stride {stride}",
                self.segment_length
            ));
        }
        if self.gap_length % stride != 0 {
            return bad(format!("gap_length = {} must be a multiple of the stride {stride}", self.gap_length));
        }
        let needed = self.n_segments * (self.gap_length + self.segment_length);
        if needed > self.points_per_period {
            return bad(format!(
                "{} segments of {} points with {}-point gaps need {needed} points, period has {}",
                self.n_segments, self.segment_length, self.gap_length, self.points_per_period
            ));
        }
        if !self.alpha.is_finite() {
            return bad("alpha must be finite".into());
        }
        if !(self.noise_sigma >= 0.0) || !self.noise_sigma.is_finite() {
            return bad(format!("noise_sigma must be >= 0, got {}", self.noise_sigma));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        Ok(())
    }

    /// Raw start rows of the anomaly segments.
    pub fn segment_starts(&self) -> Vec<usize> {
        (0..self.n_segments).map(|i| self.gap_length + i * (self.gap_length + self.segment_length)).collect()
    }
}

/// Independent seed streams derived from the protocol seed.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

mod stream {
    pub const INITIAL: u64 = 1;
    pub const CYBER: u64 = 2;
    pub const MEASUREMENT: u64 = 3;
    pub const NOISE_NORMAL: u64 = 4;
    pub const NOISE_CYBER: u64 = 5;
    pub const NOISE_MEASUREMENT: u64 = 6;
    pub const OFFSETS_CYBER: u64 = 7;
    pub const OFFSETS_MEASUREMENT: u64 = 8;
    pub const REDRAW_CYBER: u64 = 9;
}

/// Redraws allowed per dataset before a cyber divergence is reported.
const MAX_REDRAWS: usize = 100;

/// Draws roots uniformly without replacement, reshuffling once exhausted.
struct RootSampler {
    pool: Vec<usize>,
    p: usize,
    rng: ChaCha8Rng,
}

impl RootSampler {
    fn new(p: usize, seed: u64) -> Self {
        Self { pool: Vec::new(), p, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn next(&mut self) -> usize {
        if self.pool.is_empty() {
            self.pool = (0..self.p).collect();
            self.pool.shuffle(&mut self.rng);
        }
        self.pool.pop().expect("refilled above")
    }
}

/// The three downsampled periods of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetTriple<T> {
    pub normal: LabeledDataset<T>,
    pub cyber: LabeledDataset<T>,
    pub measurement: LabeledDataset<T>,
}

/// Raw (pre-downsampling) periods, kept for invariant checks.
pub(crate) struct RawPeriods<T> {
    pub normal: Trajectory<T>,
    pub cyber: Trajectory<T>,
    pub cyber_segments: Vec<AnomalySegment<T>>,
    /// Noisy measurement-period readings before the anomalies are added.
    #[cfg_attr(not(test), allow(dead_code))]
    pub measurement_clean: Trajectory<T>,
    pub measurement: Trajectory<T>,
    pub measurement_segments: Vec<AnomalySegment<T>>,
}

fn draw_segments<T: Scalar>(protocol: &Protocol, kind: AnomalyKind, p: usize, stream_id: u64) -> Vec<AnomalySegment<T>> {
    let mut roots = RootSampler::new(p, derive_seed(protocol.seed, stream_id));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(protocol.seed, stream_id + 100));
    protocol
        .segment_starts()
        .into_iter()
        .map(|start| {
            let root = roots.next();
            AnomalySegment::draw(kind, root, T::of(protocol.alpha), start, protocol.segment_length, &mut rng)
        })
        .collect()
}

/// Continues a simulation from `from` for `steps` steps and drops the
/// duplicated first row.
fn continue_from<T: Scalar>(
    spec: &SystemSpec<T>,
    from: &[T],
    protocol: &Protocol,
    segments: &[AnomalySegment<T>],
    seed: u64,
) -> Result<Trajectory<T>> {
    let n = protocol.points_per_period;
    // Rows of the continuation are shifted by one relative to the period.
    let shifted: Vec<AnomalySegment<T>> =
        segments.iter().map(|s| AnomalySegment { start: s.start + 1, ..s.clone() }).collect();
    let full = simulate_cyber(spec, from, &shifted, T::of(protocol.dt), n, protocol.method, protocol.offset_mode, seed)?;
    full.slice(1..n + 1)
}

/// Simulates the cyber period and the clean measurement period after it.
/// A segment whose offset drives the system to divergence (a Fisher variable
/// pushed below zero escapes to minus infinity) gets a fresh offset from its
/// own stream, and both periods are re-run.
fn simulate_cyber_period<T: Scalar>(
    spec: &SystemSpec<T>,
    from: &[T],
    protocol: &Protocol,
    segments: &mut [AnomalySegment<T>],
) -> Result<(Trajectory<T>, Trajectory<T>)> {
    let n = protocol.points_per_period;
    let seed = derive_seed(protocol.seed, stream::OFFSETS_CYBER);
    let mut redraw = ChaCha8Rng::seed_from_u64(derive_seed(protocol.seed, stream::REDRAW_CYBER));
    let mut attempts = 0;
    loop {
        let run = continue_from(spec, from, protocol, segments, seed).and_then(|cyber| {
            let after = continue_from(spec, cyber.row(n - 1), protocol, &[], 0)
                // Blow-ups after the period are blamed on its last segment.
                .map_err(|e| match e {
                    Error::Divergence { context, .. } => Error::Divergence { step: n, context },
                    other => other,
                })?;
            Ok((cyber, after))
        });
        let err = match run {
            Ok(periods) => return Ok(periods),
            Err(err) => err,
        };
        let Error::Divergence { step, .. } = err else { return Err(err) };
        // Continuation row `step` is period row `step - 1`.
        let culprit = segments.iter().rposition(|s| s.start < step);
        match culprit {
            Some(i) if attempts < MAX_REDRAWS && protocol.offset_mode == OffsetMode::PerSegment => {
                let s = &segments[i];
                segments[i] = AnomalySegment::draw(s.kind, s.root, s.alpha, s.start, s.length, &mut redraw);
                attempts += 1;
            }
            _ => return Err(err),
        }
    }
}

fn retime<T: Scalar>(traj: Trajectory<T>, period: usize, protocol: &Protocol) -> Result<Trajectory<T>> {
    let base = period * protocol.points_per_period;
    let times = (0..traj.len()).map(|r| T::of((base + r) as f64 * protocol.dt)).collect();
    Trajectory::from_flat(times, traj.states().to_vec(), traj.p())
}

pub(crate) fn simulate_periods<T: Scalar>(spec: &SystemSpec<T>, protocol: &Protocol) -> Result<RawPeriods<T>> {
    protocol.validate()?;
    spec.validate()?;
    let p = spec.p();
    let n = protocol.points_per_period;
    let dt = T::of(protocol.dt);
    let seed = protocol.seed;

    let mut x0 = spec.initial_state(derive_seed(seed, stream::INITIAL));
    if protocol.burn_in > 0 {
        let warm = integrate(spec, &x0, dt, protocol.burn_in, protocol.method)?;
        x0 = warm.row(warm.len() - 1).to_vec();
    }
    let normal = integrate(spec, &x0, dt, n - 1, protocol.method)?;

    let mut cyber_segments = draw_segments::<T>(protocol, AnomalyKind::Cyber, p, stream::CYBER);
    let (cyber, measurement_true) = simulate_cyber_period(spec, normal.row(n - 1), protocol, &mut cyber_segments)?;

    let normal = add_sensor_noise(&normal, protocol.noise_sigma, derive_seed(seed, stream::NOISE_NORMAL))?;
    let anomaly_sigma = if protocol.noise_on_anomaly_periods { protocol.noise_sigma } else { 0.0 };
    let cyber = add_sensor_noise(&cyber, anomaly_sigma, derive_seed(seed, stream::NOISE_CYBER))?;
    let measurement_clean =
        add_sensor_noise(&measurement_true, anomaly_sigma, derive_seed(seed, stream::NOISE_MEASUREMENT))?;

    let measurement_segments = draw_segments::<T>(protocol, AnomalyKind::Measurement, p, stream::MEASUREMENT);
    let mut measurement = measurement_clean.clone();
    for (i, seg) in measurement_segments.iter().enumerate() {
        let s = derive_seed(seed, stream::OFFSETS_MEASUREMENT).wrapping_add(i as u64);
        measurement = inject_measurement(&measurement, seg, protocol.offset_mode, s)?;
    }

    Ok(RawPeriods {
        normal: retime(normal, 0, protocol)?,
        cyber: retime(cyber, 1, protocol)?,
        cyber_segments,
        measurement_clean: retime(measurement_clean, 2, protocol)?,
        measurement: retime(measurement, 2, protocol)?,
        measurement_segments,
    })
}

fn downsample_dataset<T: Scalar>(
    raw: &Trajectory<T>,
    segments: &[AnomalySegment<T>],
    spec: &SystemSpec<T>,
    stride: usize,
) -> Result<LabeledDataset<T>> {
    let trajectory = raw.downsample(stride)?;
    let segments = segments
        .iter()
        .map(|s| AnomalySegment { start: s.start / stride, length: s.length / stride, ..s.clone() })
        .collect();
    LabeledDataset::new(trajectory, segments, spec.clone())
}

/// Generates the normal, cyber-anomaly and measurement-anomaly periods.
///
/// The three periods form one continuous simulation. Sensor noise is added
/// before measurement anomalies, which edit the noisy readings.
pub fn build_dataset<T: Scalar>(spec: &SystemSpec<T>, protocol: &Protocol) -> Result<DatasetTriple<T>> {
    let raw = simulate_periods(spec, protocol)?;
    let stride = protocol.stride();
    Ok(DatasetTriple {
        normal: downsample_dataset(&raw.normal, &[], spec, stride)?,
        cyber: downsample_dataset(&raw.cyber, &raw.cyber_segments, spec, stride)?,
        measurement: downsample_dataset(&raw.measurement, &raw.measurement_segments, spec, stride)?,
    })
}
