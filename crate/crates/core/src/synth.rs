//! Synthetic channel data for spherical-absorber phantoms.
//!
//! Each absorber radiates the closed-form N-wave of a uniformly pressurized
//! sphere. The N-wave is convolved with a Gaussian-modulated cosine that models
//! the transducer pass band, and optional white Gaussian noise is injected at a
//! prescribed channel SNR. Noise comes from a `ChaCha8` stream seeded with
//! `NoiseSpec::seed`, drawn element-major then sample-major.

use std::f64::consts::PI;
use std::io::{self, BufRead, Read, Write};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{domain, Error, Result};
use crate::geometry::{AcquisitionParams, ArrayGeometry, ChannelDataSet, Point};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Absorber {
    pub center: Point,
    /// Sphere radius (m).
    pub radius: f64,
    /// Initial pressure (arbitrary linear units).
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub absorbers: Vec<Absorber>,
}

impl Phantom {
    /// Five 0.1 mm absorbers on the array axis at 25, 30, 35, 40 and 45 mm.
    pub fn paper_default() -> Self {
        Self::on_axis(&[25e-3, 30e-3, 35e-3, 40e-3, 45e-3])
    }

    pub fn on_axis(depths: &[f64]) -> Self {
        Self {
            absorbers: depths
                .iter()
                .map(|&z| Absorber {
                    center: Point::new(0.0, z),
                    radius: 0.1e-3,
                    amplitude: 1.0,
                })
                .collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            absorbers: self
                .absorbers
                .iter()
                .map(|a| Absorber {
                    amplitude: a.amplitude * factor,
                    ..*a
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Channel SNR (dB); `f64::INFINITY` disables noise.
    pub target_snr_db: f64,
    pub seed: u64,
}

/// Band-limited detector response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transducer {
    pub center_freq: f64,
    /// -6 dB spectral width divided by the center frequency.
    pub fractional_bandwidth: f64,
}

impl Default for Transducer {
    fn default() -> Self {
        Self {
            center_freq: 4e6,
            fractional_bandwidth: 0.77,
        }
    }
}

/// Pressure of the N-wave radiated by a uniform sphere of radius `radius`,
/// observed at `distance` from its center at time `time`.
pub fn nwave_pressure(
    distance: f64,
    radius: f64,
    amplitude: f64,
    time: f64,
    sound_speed: f64,
) -> Result<f64> {
    if !(radius > 0.0) || !(distance > radius) {
        return domain(format!(
            "observation distance {distance} m must exceed absorber radius {radius} m > 0"
        ));
    }
    if !(time >= 0.0) {
        return domain(format!("time {time} s must be non-negative"));
    }
    Ok(nwave_unchecked(
        distance,
        radius,
        amplitude,
        time * sound_speed,
    ))
}

#[inline]
fn nwave_unchecked(distance: f64, radius: f64, amplitude: f64, travel: f64) -> f64 {
    if travel < distance - radius || travel > distance + radius {
        0.0
    } else {
        amplitude * (distance - travel) / (2.0 * distance)
    }
}

/// Continuous Gaussian-modulated cosine kernel; sampling it at `fs` gives
/// [`impulse_response`] up to the normalization constant.
#[derive(Debug, Clone, Copy)]
struct PulseShape {
    center_freq: f64,
    /// Standard deviation of the Gaussian envelope (s).
    tau: f64,
    /// Support half width (s) where the envelope drops to 1e-3 of its peak.
    half_width: f64,
}

/// Envelope floor at which the kernel is truncated.
const KERNEL_FLOOR: f64 = 1e-3;

impl PulseShape {
    fn new(t: &Transducer, fs: f64) -> Result<Self> {
        if !(t.center_freq > 0.0 && t.center_freq < fs / 2.0) {
            return domain(format!(
                "center frequency {} Hz outside (0, {}) Hz",
                t.center_freq,
                fs / 2.0
            ));
        }
        if !(t.fractional_bandwidth > 0.0 && t.fractional_bandwidth < 2.0) {
            return domain(format!(
                "fractional bandwidth {} outside (0, 2)",
                t.fractional_bandwidth
            ));
        }
        // -6 dB (half amplitude) full width of a Gaussian spectrum is 2 sqrt(2 ln 2) sigma_f
        let sigma_f = t.fractional_bandwidth * t.center_freq / (2.0 * (2.0 * 2f64.ln()).sqrt());
        let tau = 1.0 / (2.0 * PI * sigma_f);
        let half_width = tau * (2.0 * (1.0 / KERNEL_FLOOR).ln()).sqrt();
        Ok(Self {
            center_freq: t.center_freq,
            tau,
            half_width,
        })
    }

    #[inline]
    fn eval(&self, t: f64) -> f64 {
        (-(t * t) / (2.0 * self.tau * self.tau)).exp() * (2.0 * PI * self.center_freq * t).cos()
    }

    fn half_len(&self, fs: f64) -> usize {
        (self.half_width * fs).floor() as usize
    }

    /// Magnitude of the discrete-time transform of the kernel sampled at `fs`, at `f`.
    fn sampled_gain(&self, fs: f64, f: f64) -> f64 {
        let half = self.half_len(fs) as isize;
        let (mut re, mut im) = (0.0, 0.0);
        for n in -half..=half {
            let t = n as f64 / fs;
            let h = self.eval(t);
            let phase = 2.0 * PI * f * t;
            re += h * phase.cos();
            im -= h * phase.sin();
        }
        re.hypot(im)
    }
}

/// Sampled detector impulse response: a zero-phase Gaussian-modulated cosine,
/// truncated at 1e-3 of its envelope peak and scaled to unit spectral
/// magnitude at the center frequency.
pub fn impulse_response(center_freq: f64, fractional_bandwidth: f64, fs: f64) -> Result<Vec<f64>> {
    let shape = PulseShape::new(
        &Transducer {
            center_freq,
            fractional_bandwidth,
        },
        fs,
    )?;
    let gain = shape.sampled_gain(fs, center_freq);
    let half = shape.half_len(fs) as isize;
    Ok((-half..=half)
        .map(|n| shape.eval(n as f64 / fs) / gain)
        .collect())
}

/// Quadrature points across each N-wave's support.
const NWAVE_QUADRATURE: usize = 64;

/// Channel data for `phantom` seen by `geometry`.
///
/// The convolution of the N-wave with the detector kernel is evaluated as an
/// integral over the N-wave support (midpoint rule) so that sub-sample arrival
/// times are honored. The result is scaled like a discrete convolution with
/// [`impulse_response`].
pub fn simulate_channels(
    phantom: &Phantom,
    geometry: &ArrayGeometry,
    acq: &AcquisitionParams,
    transducer: &Transducer,
) -> Result<ChannelDataSet> {
    let fs = acq.sampling_rate;
    let c = acq.sound_speed;
    let t_len = acq.num_samples;
    let shape = PulseShape::new(transducer, fs)?;
    let gain = shape.sampled_gain(fs, transducer.center_freq);

    for a in &phantom.absorbers {
        if !(a.radius > 0.0) {
            return domain(format!("absorber radius {} must be positive", a.radius));
        }
        for i in 0..geometry.num_elements() {
            let r = geometry.position_unchecked(i).distance(&a.center);
            if r <= a.radius {
                return domain(format!(
                    "element {i} lies inside an absorber at {:?}",
                    a.center
                ));
            }
        }
    }

    let rows: Vec<Vec<f64>> = par::map_range(geometry.num_elements(), |i| {
        let element = geometry.position_unchecked(i);
        let mut trace = vec![0.0; t_len];
        for a in &phantom.absorbers {
            if a.amplitude == 0.0 {
                continue;
            }
            let r = element.distance(&a.center);
            let t0 = (r - a.radius) / c;
            let t1 = (r + a.radius) / c;
            let dt = (t1 - t0) / NWAVE_QUADRATURE as f64;
            let first = ((t0 - shape.half_width) * fs).ceil().max(0.0) as usize;
            let last_f = ((t1 + shape.half_width) * fs).floor();
            if last_f >= t_len as f64 {
                log::warn!(
                    "absorber at {:?} arrives beyond the {t_len}-sample record on element {i}; truncated",
                    a.center
                );
            }
            if last_f < 0.0 {
                continue;
            }
            let last = (last_f as usize).min(t_len.saturating_sub(1));
            for (k, out) in trace.iter_mut().enumerate().take(last + 1).skip(first) {
                let tk = k as f64 / fs;
                let mut acc = 0.0;
                for q in 0..NWAVE_QUADRATURE {
                    let tau = t0 + (q as f64 + 0.5) * dt;
                    let lag = tk - tau;
                    if lag.abs() > shape.half_width {
                        continue;
                    }
                    acc += nwave_unchecked(r, a.radius, a.amplitude, tau * c) * shape.eval(lag);
                }
                *out += acc * dt * fs / gain;
            }
        }
        trace
    });

    let samples = Array2::from_shape_vec(
        (geometry.num_elements(), t_len),
        rows.into_iter().flatten().collect(),
    )
    .expect("row lengths match the record");
    ChannelDataSet::new(samples, *acq, *geometry)
}

/// Mean power of `clean` over its signal support: samples whose magnitude
/// exceeds 1e-6 of the peak magnitude.
pub fn signal_power(clean: &ChannelDataSet) -> Result<f64> {
    let peak = clean.samples().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !(peak > 0.0) {
        return Err(Error::Domain(
            "channel data has no signal energy; SNR undefined".into(),
        ));
    }
    let floor = 1e-6 * peak;
    let (sum, count) = clean
        .samples()
        .iter()
        .filter(|v| v.abs() > floor)
        .fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    Ok(sum / count as f64)
}

/// Adds zero-mean white Gaussian noise so that signal power over the support
/// divided by the noise variance equals the target SNR.
pub fn add_noise(channels: &ChannelDataSet, spec: &NoiseSpec) -> Result<ChannelDataSet> {
    if spec.target_snr_db == f64::INFINITY {
        return Ok(channels.clone());
    }
    if !spec.target_snr_db.is_finite() {
        return domain(format!(
            "target SNR {} dB is not usable",
            spec.target_snr_db
        ));
    }
    let power = signal_power(channels)?;
    let sigma = (power / 10f64.powf(spec.target_snr_db / 10.0)).sqrt();
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Domain(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut samples = channels.samples().clone();
    // standard layout: element-major, then sample-major
    for v in samples.iter_mut() {
        *v += normal.sample(&mut rng);
    }
    ChannelDataSet::new(samples, *channels.acq(), *channels.geometry())
}

pub const CHANNEL_FILE_MAGIC: &str = "PABEAM-CH v1";

/// Writes the channel-data interchange format: a magic line, `key=value`
/// metadata lines, then `M * T` little-endian `f32` samples, element-major.
pub fn write_channel_file<W: Write>(channels: &ChannelDataSet, mut out: W) -> io::Result<()> {
    let acq = channels.acq();
    writeln!(out, "{CHANNEL_FILE_MAGIC}")?;
    writeln!(out, "m={}", channels.num_elements())?;
    writeln!(out, "t={}", acq.num_samples)?;
    writeln!(out, "fs={}", acq.sampling_rate)?;
    writeln!(out, "c={}", acq.sound_speed)?;
    writeln!(out, "pitch={}", channels.geometry().pitch())?;
    let mut payload = Vec::with_capacity(channels.samples().len() * 4);
    for v in channels.samples().iter() {
        payload.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out.write_all(&payload)?;
    out.flush()
}

fn invalid(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

pub fn read_channel_file<R: Read>(input: R) -> io::Result<ChannelDataSet> {
    let mut reader = io::BufReader::new(input);
    let mut line = String::new();
    let mut next_line = |reader: &mut io::BufReader<R>| -> io::Result<String> {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(invalid("unexpected end of channel file header"));
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    };
    if next_line(&mut reader)? != CHANNEL_FILE_MAGIC {
        return Err(invalid("missing PABEAM-CH v1 header"));
    }
    let mut field = |key: &str| -> io::Result<String> {
        let l = next_line(&mut reader)?;
        l.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix('='))
            .map(str::to_string)
            .ok_or_else(|| invalid(format!("expected '{key}=' line, found '{l}'")))
    };
    let parse_err = |k: &str| invalid(format!("malformed value for '{k}'"));
    let m: usize = field("m")?.parse().map_err(|_| parse_err("m"))?;
    let t: usize = field("t")?.parse().map_err(|_| parse_err("t"))?;
    let fs: f64 = field("fs")?.parse().map_err(|_| parse_err("fs"))?;
    let c: f64 = field("c")?.parse().map_err(|_| parse_err("c"))?;
    let pitch: f64 = field("pitch")?.parse().map_err(|_| parse_err("pitch"))?;

    let geometry = ArrayGeometry::new(m, pitch).map_err(|e| invalid(e.to_string()))?;
    let acq = AcquisitionParams::new(fs, c, t).map_err(|e| invalid(e.to_string()))?;
    let count = m
        .checked_mul(t)
        .ok_or_else(|| invalid("payload size overflows"))?;
    let mut payload = vec![0u8; count * 4];
    reader.read_exact(&mut payload)?;
    let mut rest = [0u8; 1];
    if reader.read(&mut rest)? != 0 {
        return Err(invalid("trailing bytes after channel payload"));
    }
    let samples: Vec<f64> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    let samples = Array2::from_shape_vec((m, t), samples).expect("payload sized to m*t");
    ChannelDataSet::new(samples, acq, geometry).map_err(|e| invalid(e.to_string()))
}
