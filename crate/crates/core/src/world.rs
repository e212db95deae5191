//! The 2D arena: differential-drive kinematics, segment obstacles, the
//! ray-cast ultrasonic sensor and stop-on-contact collisions.
//!
//! Units are meters, radians and seconds unless a name says otherwise. The
//! ultrasonic sensor reports centimeters and microseconds like the real
//! module. Trigonometry goes through `libm` so traces are identical on every
//! platform.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Meters per second at 20 °C.
pub const SPEED_OF_SOUND: f64 = 343.0;

/// Rays cast across the beam when a cone is configured.
const BEAM_RAYS: usize = 7;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("arena bounds are empty or not finite")]
    EmptyBounds,
    #[error("obstacle {0} has an endpoint outside the arena bounds")]
    ObstacleOutOfBounds(usize),
    #[error("{0} must be strictly positive")]
    NonPositive(&'static str),
    #[error("{0} must be finite and non-negative")]
    Negative(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        libm::hypot(self.x - other.x, self.y - other.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

fn cross(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * by - ay * bx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub const fn new(a: Point, b: Point) -> Self {
        Segment { a, b }
    }

    /// Parameter `t ≥ 0` at which the ray `origin + t·(dx, dy)` meets this
    /// segment, if it does. Parallel rays never hit.
    fn ray_hit(&self, origin: Point, dx: f64, dy: f64) -> Option<f64> {
        let (ex, ey) = (self.b.x - self.a.x, self.b.y - self.a.y);
        let denom = cross(dx, dy, ex, ey);
        if denom.abs() < 1e-15 {
            return None;
        }
        let (wx, wy) = (self.a.x - origin.x, self.a.y - origin.y);
        let t = cross(wx, wy, ex, ey) / denom;
        let s = cross(wx, wy, dx, dy) / denom;
        (t >= 0.0 && (0.0..=1.0).contains(&s)).then_some(t)
    }

    pub fn distance_to(&self, p: Point) -> f64 {
        let (ex, ey) = (self.b.x - self.a.x, self.b.y - self.a.y);
        let len2 = ex * ex + ey * ey;
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((p.x - self.a.x) * ex + (p.y - self.a.y) * ey) / len2).clamp(0.0, 1.0)
        };
        p.distance(Point::new(self.a.x + t * ex, self.a.y + t * ey))
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: Point,
    pub max: Point,
}

impl Bounds {
    pub fn contains(&self, p: Point) -> bool {
        (self.min.x..=self.max.x).contains(&p.x) && (self.min.y..=self.max.y).contains(&p.y)
    }

    fn edges(&self) -> [Segment; 4] {
        let (lo, hi) = (self.min, self.max);
        let (c1, c2) = (Point::new(hi.x, lo.y), Point::new(lo.x, hi.y));
        [
            Segment::new(lo, c1),
            Segment::new(c1, hi),
            Segment::new(hi, c2),
            Segment::new(c2, lo),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arena {
    pub bounds: Bounds,
    #[serde(default)]
    pub obstacles: Vec<Segment>,
    /// Where the operator's controller sits, for link range.
    pub controller: Point,
}

impl Arena {
    pub fn validate(&self) -> Result<(), WorldError> {
        let b = &self.bounds;
        let finite = [b.min.x, b.min.y, b.max.x, b.max.y].iter().all(|v| v.is_finite());
        if !finite || b.min.x >= b.max.x || b.min.y >= b.max.y {
            return Err(WorldError::EmptyBounds);
        }
        if let Some(i) = self
            .obstacles
            .iter()
            .position(|s| !b.contains(s.a) || !b.contains(s.b))
        {
            return Err(WorldError::ObstacleOutOfBounds(i));
        }
        Ok(())
    }

    fn walls(&self) -> impl Iterator<Item = Segment> + '_ {
        self.obstacles.iter().copied().chain(self.bounds.edges())
    }

    /// Distance in meters to the nearest obstacle or boundary along `angle`.
    pub fn ray_distance(&self, origin: Point, angle: f64) -> Option<f64> {
        let (dx, dy) = (libm::cos(angle), libm::sin(angle));
        self.walls()
            .filter_map(|s| s.ray_hit(origin, dx, dy))
            .min_by(f64::total_cmp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Radians in (−π, π].
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose {
            x,
            y,
            heading: normalize_heading(heading),
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Wraps an angle into (−π, π].
pub fn normalize_heading(angle: f64) -> f64 {
    PI - (PI - angle).rem_euclid(2.0 * PI)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotBody {
    pub wheel_base: f64,
    pub wheel_radius: f64,
    pub collision_radius: f64,
}

impl Default for RobotBody {
    fn default() -> Self {
        RobotBody {
            wheel_base: 0.12,
            wheel_radius: 0.03,
            collision_radius: 0.09,
        }
    }
}

impl RobotBody {
    pub fn validate(&self) -> Result<(), WorldError> {
        for (name, v) in [
            ("wheel_base", self.wheel_base),
            ("wheel_radius", self.wheel_radius),
            ("collision_radius", self.collision_radius),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(WorldError::NonPositive(name));
            }
        }
        Ok(())
    }
}

/// Advances a differential-drive pose by `dt` seconds with constant wheel
/// angular velocities, integrating the arc exactly.
pub fn step_kinematics(pose: Pose, v_left: f64, v_right: f64, body: &RobotBody, dt: f64) -> Pose {
    debug_assert!(dt > 0.0);
    let v = body.wheel_radius * (v_left + v_right) / 2.0;
    let omega = body.wheel_radius * (v_right - v_left) / body.wheel_base;
    let th = pose.heading;
    if omega.abs() > 1e-9 {
        let th2 = th + omega * dt;
        let r = v / omega;
        Pose::new(
            pose.x + r * (libm::sin(th2) - libm::sin(th)),
            pose.y - r * (libm::cos(th2) - libm::cos(th)),
            th2,
        )
    } else {
        Pose::new(
            pose.x + v * dt * libm::cos(th),
            pose.y + v * dt * libm::sin(th),
            th + omega * dt,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoMeasurement {
    pub duration_us: f64,
    pub distance_cm: f64,
    /// No echo within the sensor's range.
    pub saturated: bool,
}

impl EchoMeasurement {
    pub fn from_distance(distance_cm: f64, max_range_cm: f64) -> Self {
        let saturated = distance_cm > max_range_cm;
        let distance_cm = distance_cm.clamp(0.0, max_range_cm);
        EchoMeasurement {
            duration_us: distance_to_duration_us(distance_cm),
            distance_cm,
            saturated,
        }
    }
}

/// Round-trip echo time for a target `cm` away.
pub fn distance_to_duration_us(cm: f64) -> f64 {
    2.0 * (cm / 100.0) / SPEED_OF_SOUND * 1e6
}

pub fn duration_to_distance_cm(us: f64) -> f64 {
    us * 1e-6 * SPEED_OF_SOUND / 2.0 * 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub max_range_cm: f64,
    /// Half-width of the beam in radians; 0 casts a single ray.
    pub beam_half_angle: f64,
    /// Standard deviation of Gaussian range noise in cm; 0 disables it.
    pub noise_std_cm: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            max_range_cm: 400.0,
            beam_half_angle: 0.0,
            noise_std_cm: 0.0,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        if !(self.max_range_cm > 0.0 && self.max_range_cm.is_finite()) {
            return Err(WorldError::NonPositive("max_range_cm"));
        }
        for (name, v) in [
            ("beam_half_angle", self.beam_half_angle),
            ("noise_std_cm", self.noise_std_cm),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(WorldError::Negative(name));
            }
        }
        Ok(())
    }
}

/// Noise-free ultrasonic reading from a sensor mounted at the robot's
/// center and facing along its heading.
pub fn ultrasonic_cast(pose: &Pose, arena: &Arena, cfg: &SensorConfig) -> EchoMeasurement {
    let origin = pose.position();
    let nearest = if cfg.beam_half_angle > 0.0 {
        (0..BEAM_RAYS)
            .map(|i| {
                let frac = i as f64 / (BEAM_RAYS - 1) as f64;
                pose.heading - cfg.beam_half_angle + 2.0 * cfg.beam_half_angle * frac
            })
            .filter_map(|a| arena.ray_distance(origin, a))
            .min_by(f64::total_cmp)
    } else {
        arena.ray_distance(origin, pose.heading)
    };
    let cm = nearest.map_or(f64::INFINITY, |m| m * 100.0);
    EchoMeasurement::from_distance(cm, cfg.max_range_cm)
}

/// Ultrasonic sensor with an optional seeded noise source.
#[derive(Debug, Clone)]
pub struct Ultrasonic {
    cfg: SensorConfig,
    noise: Option<(Normal<f64>, ChaCha8Rng)>,
}

impl Ultrasonic {
    pub fn new(cfg: SensorConfig, seed: u64) -> Self {
        let noise = (cfg.noise_std_cm > 0.0).then(|| {
            (
                Normal::new(0.0, cfg.noise_std_cm).expect("validated std"),
                ChaCha8Rng::seed_from_u64(seed),
            )
        });
        Ultrasonic { cfg, noise }
    }

    pub fn config(&self) -> &SensorConfig {
        &self.cfg
    }

    pub fn measure(&mut self, pose: &Pose, arena: &Arena) -> EchoMeasurement {
        let clean = ultrasonic_cast(pose, arena, &self.cfg);
        match &mut self.noise {
            Some((dist, rng)) if !clean.saturated => EchoMeasurement::from_distance(
                (clean.distance_cm + dist.sample(rng)).max(0.0),
                self.cfg.max_range_cm,
            ),
            _ => clean,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolved {
    pub pose: Pose,
    pub collided: bool,
}

/// True when the body disc centered at `p` overlaps a wall or leaves the
/// bounds. Touching exactly is allowed.
pub fn overlaps(p: Point, arena: &Arena, body: &RobotBody) -> bool {
    let r = body.collision_radius;
    let b = &arena.bounds;
    p.x - r < b.min.x
        || p.x + r > b.max.x
        || p.y - r < b.min.y
        || p.y + r > b.max.y
        || arena.obstacles.iter().any(|s| s.distance_to(p) < r)
}

/// Accepts `candidate` unless it collides, in which case the robot stays
/// at `pose`.
pub fn resolve_collision(pose: Pose, candidate: Pose, arena: &Arena, body: &RobotBody) -> Resolved {
    if overlaps(candidate.position(), arena, body) {
        Resolved { pose, collided: true }
    } else {
        Resolved {
            pose: candidate,
            collided: false,
        }
    }
}
