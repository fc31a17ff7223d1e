//! Reference generators.
//!
//! A reference is sampled as position plus up to four time derivatives. The
//! controller uses the derivatives only when feedforward is enabled.

use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Vec2;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("need at least two distinct waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("velocity and acceleration limits must be positive (v_max = {v_max}, a_max = {a_max})")]
    BadLimits { v_max: f64, a_max: f64 },
    #[error("Hilbert order must be at least 1")]
    BadOrder,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Reference position and its first four time derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReferenceSample<T> {
    pub position: Vec2<T>,
    pub velocity: Vec2<T>,
    pub accel: Vec2<T>,
    pub jerk: Vec2<T>,
    pub snap: Vec2<T>,
}

impl<T: Scalar> ReferenceSample<T> {
    pub fn at_rest(position: Vec2<T>) -> Self {
        Self {
            position,
            velocity: Vec2::zero(),
            accel: Vec2::zero(),
            jerk: Vec2::zero(),
            snap: Vec2::zero(),
        }
    }
}

/// Anything that can be sampled as a desired trajectory.
pub trait Reference<T>: Send + Sync {
    fn sample(&self, t: T) -> ReferenceSample<T>;
}

/// Fixed set point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetPoint<T>(pub Vec2<T>);

impl<T: Scalar> Reference<T> for SetPoint<T> {
    fn sample(&self, _t: T) -> ReferenceSample<T> {
        ReferenceSample::at_rest(self.0)
    }
}

/// Tilted ellipse through the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseConfig<T> {
    /// Tilt [rad].
    pub psi: T,
    /// Angular rate [rad/s].
    pub omega: T,
    /// First semi-axis [m].
    pub a: T,
    /// Second semi-axis [m].
    pub b: T,
}

impl<T: Scalar> Default for EllipseConfig<T> {
    fn default() -> Self {
        Self {
            psi: T::FRAC_PI_4(),
            omega: T::lit(0.1),
            a: T::lit(5.0),
            b: T::lit(3.0),
        }
    }
}

impl<T: Scalar> EllipseConfig<T> {
    pub fn period(&self) -> T {
        T::TAU() / self.omega
    }

    /// n-th time derivative of the position, `n >= 1`.
    fn derivative(&self, t: T, n: i32) -> Vec2<T> {
        // d^n/dt^n cos(ωt) = ω^n cos(ωt + nπ/2), likewise for sin.
        let phase = self.omega * t + T::FRAC_PI_2() * T::lit(n as f64);
        let w = self.omega.powi(n);
        let (ds, dc) = phase.sin_cos();
        let (dc, ds) = (w * dc, w * ds);
        let (sp, cp) = self.psi.sin_cos();
        Vec2::new(
            -self.a * cp * dc - self.b * sp * ds,
            -self.a * sp * dc + self.b * cp * ds,
        )
    }
}

/// Position on the ellipse at time `t`.
pub fn ellipse_ref<T: Scalar>(t: T, cfg: &EllipseConfig<T>) -> Vec2<T> {
    let (s, c) = (cfg.omega * t).sin_cos();
    let (sp, cp) = cfg.psi.sin_cos();
    Vec2::new(
        cfg.a * cp - cfg.a * cp * c - cfg.b * sp * s,
        cfg.a * sp - cfg.a * sp * c + cfg.b * cp * s,
    )
}

impl<T: Scalar> Reference<T> for EllipseConfig<T> {
    fn sample(&self, t: T) -> ReferenceSample<T> {
        ReferenceSample {
            position: ellipse_ref(t, self),
            velocity: self.derivative(t, 1),
            accel: self.derivative(t, 2),
            jerk: self.derivative(t, 3),
            snap: self.derivative(t, 4),
        }
    }
}

/// Cell coordinates of index `d` along the Hilbert curve on an `n x n` grid
/// (`n` a power of two).
fn hilbert_d2xy(n: u64, d: u64) -> (u64, u64) {
    let (mut x, mut y) = (0u64, 0u64);
    let mut t = d;
    let mut s = 1u64;
    while s < n {
        let rx = 1 & (t / 2);
        let ry = 1 & (t ^ rx);
        if ry == 0 {
            if rx == 1 {
                x = s - 1 - x;
                y = s - 1 - y;
            }
            std::mem::swap(&mut x, &mut y);
        }
        x += s * rx;
        y += s * ry;
        t /= 4;
        s *= 2;
    }
    (x, y)
}

/// The `4^order` vertices of the Hilbert curve of the given order, scaled to a
/// `side x side` square with a corner at the origin, in curve order.
pub fn hilbert_waypoints<T: Scalar>(order: u32, side: T) -> Result<Vec<Vec2<T>>, TrajectoryError> {
    if order == 0 || order > 16 {
        return Err(TrajectoryError::BadOrder);
    }
    let n = 1u64 << order;
    let pitch = side / T::lit((n - 1) as f64);
    Ok((0..n * n)
        .map(|d| {
            let (x, y) = hilbert_d2xy(n, d);
            Vec2::new(T::lit(x as f64) * pitch, T::lit(y as f64) * pitch)
        })
        .collect())
}

/// Rest-to-rest trapezoidal (or triangular) speed profile along one segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedProfile<T> {
    pub length: T,
    pub accel: T,
    /// Duration of each ramp [s].
    pub ramp_time: T,
    /// Duration of the constant-speed phase [s]; zero for a triangle.
    pub cruise_time: T,
    pub peak_speed: T,
    /// Whether the speed limit is reached.
    pub cruises: bool,
}

impl<T: Scalar> SpeedProfile<T> {
    pub fn new(length: T, v_max: T, a_max: T) -> Self {
        if length >= v_max * v_max / a_max {
            Self {
                length,
                accel: a_max,
                ramp_time: v_max / a_max,
                cruise_time: length / v_max - v_max / a_max,
                peak_speed: v_max,
                cruises: true,
            }
        } else {
            let ramp = (length / a_max).sqrt();
            Self {
                length,
                accel: a_max,
                ramp_time: ramp,
                cruise_time: T::zero(),
                peak_speed: a_max * ramp,
                cruises: false,
            }
        }
    }

    /// `L / v + v / a` when the cruise speed is reached, `2 sqrt(L / a)`
    /// otherwise.
    pub fn duration(&self) -> T {
        if self.cruises {
            self.length / self.peak_speed + self.peak_speed / self.accel
        } else {
            T::two() * self.ramp_time
        }
    }

    /// Arc length, speed and signed tangential acceleration at local time `tau`.
    pub fn eval(&self, tau: T) -> (T, T, T) {
        let dur = self.duration();
        let tau = tau.max(T::zero()).min(dur);
        let a = self.accel;
        let half = T::half();
        if tau < self.ramp_time {
            (half * a * tau * tau, a * tau, a)
        } else if tau <= self.ramp_time + self.cruise_time {
            let s0 = half * a * self.ramp_time * self.ramp_time;
            (s0 + self.peak_speed * (tau - self.ramp_time), self.peak_speed, T::zero())
        } else {
            let rem = dur - tau;
            (self.length - half * a * rem * rem, a * rem, -a)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment<T> {
    pub start_time: T,
    pub from: Vec2<T>,
    pub to: Vec2<T>,
    pub direction: Vec2<T>,
    pub profile: SpeedProfile<T>,
}

/// Straight segments traversed rest-to-rest one after another.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseTrajectory<T> {
    pub segments: Vec<Segment<T>>,
    pub duration: T,
    pub v_max: T,
    pub a_max: T,
}

/// Builds a trapezoidal-profile trajectory through `waypoints`. Zero-length
/// segments are skipped.
pub fn time_parameterize<T: Scalar>(
    waypoints: &[Vec2<T>],
    v_max: T,
    a_max: T,
) -> Result<PiecewiseTrajectory<T>, TrajectoryError> {
    if !(v_max > T::zero() && a_max > T::zero() && v_max.is_finite() && a_max.is_finite()) {
        return Err(TrajectoryError::BadLimits {
            v_max: v_max.to_f64_lossy(),
            a_max: a_max.to_f64_lossy(),
        });
    }
    let mut segments = Vec::new();
    let mut t = T::zero();
    for pair in waypoints.windows(2) {
        let delta = pair[1] - pair[0];
        let length = delta.norm();
        if length == T::zero() {
            continue;
        }
        let profile = SpeedProfile::new(length, v_max, a_max);
        segments.push(Segment {
            start_time: t,
            from: pair[0],
            to: pair[1],
            direction: delta * (T::one() / length),
            profile,
        });
        t = t + profile.duration();
    }
    if segments.is_empty() {
        return Err(TrajectoryError::TooFewWaypoints(waypoints.len()));
    }
    Ok(PiecewiseTrajectory { segments, duration: t, v_max, a_max })
}

impl<T: Scalar> PiecewiseTrajectory<T> {
    fn segment_at(&self, t: T) -> &Segment<T> {
        let idx = self.segments.partition_point(|s| s.start_time <= t);
        &self.segments[idx.saturating_sub(1)]
    }

    pub fn start(&self) -> Vec2<T> {
        self.segments[0].from
    }

    pub fn end(&self) -> Vec2<T> {
        self.segments[self.segments.len() - 1].to
    }

    /// Total path length.
    pub fn length(&self) -> T {
        self.segments.iter().fold(T::zero(), |acc, s| acc + s.profile.length)
    }

    /// Times at which the acceleration jumps: every ramp start and end.
    pub fn breakpoints(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(4 * self.segments.len());
        for s in &self.segments {
            let p = &s.profile;
            out.push(s.start_time);
            out.push(s.start_time + p.ramp_time);
            if p.cruise_time > T::zero() {
                out.push(s.start_time + p.ramp_time + p.cruise_time);
            }
        }
        out.push(self.duration);
        out
    }

    /// Position at `t`, clamped to the first/last waypoint outside
    /// `[0, duration]`.
    pub fn sample(&self, t: T) -> Vec2<T> {
        self.sample_full(t).position
    }

    /// Position, velocity and acceleration; jerk and snap are zero almost
    /// everywhere and reported as zero.
    pub fn sample_full(&self, t: T) -> ReferenceSample<T> {
        if t < T::zero() {
            return ReferenceSample::at_rest(self.start());
        }
        if t >= self.duration {
            return ReferenceSample::at_rest(self.end());
        }
        let seg = self.segment_at(t);
        let (s, v, a) = seg.profile.eval(t - seg.start_time);
        ReferenceSample {
            position: seg.from + seg.direction * s,
            velocity: seg.direction * v,
            accel: seg.direction * a,
            jerk: Vec2::zero(),
            snap: Vec2::zero(),
        }
    }
}

/// Free-function form of [`PiecewiseTrajectory::sample`].
pub fn sample<T: Scalar>(traj: &PiecewiseTrajectory<T>, t: T) -> Vec2<T> {
    traj.sample(t)
}

impl<T: Scalar> Reference<T> for PiecewiseTrajectory<T> {
    fn sample(&self, t: T) -> ReferenceSample<T> {
        self.sample_full(t)
    }
}

/// Writes waypoints as CSV with columns `index,x,y` (meters).
pub fn write_waypoints_csv<W: io::Write, T: Scalar>(
    out: W,
    waypoints: &[Vec2<T>],
) -> Result<(), TrajectoryError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index", "x", "y"])?;
    for (i, p) in waypoints.iter().enumerate() {
        w.write_record([
            i.to_string(),
            format!("{:.9e}", p.x.to_f64_lossy()),
            format!("{:.9e}", p.y.to_f64_lossy()),
        ])?;
    }
    w.flush()?;
    Ok(())
}
