//! Simulated aerial layer: distance-dependent throughput and frame loss,
//! plus static placement and looping waypoint mobility.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::address::ModuleId;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("receiver at {0:.2} m is beyond radio range")]
    OutOfRange(f64),
    #[error("frame of {len} bytes exceeds mtu {mtu}")]
    FrameTooLarge { len: usize, mtu: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("module {0} has no position")]
pub struct UnknownModule(pub ModuleId);

/// Outcome of offering one frame to the channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delivery {
    /// Arrives after this many seconds.
    After(f64),
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioModel {
    /// Maximum communication distance, m.
    pub range_m: f64,
    /// Link throughput at zero distance, bits/s.
    pub t_max_bps: f64,
    /// Decay exponent shared by throughput and loss.
    pub alpha: f64,
    /// Largest frame the channel carries, bytes.
    pub mtu: usize,
    /// Fixed per-hop latency, s.
    pub base_latency_s: f64,
    /// Frame-loss probability at zero distance.
    pub loss0: f64,
}

impl Default for RadioModel {
    fn default() -> Self {
        RadioModel {
            range_m: 20.0,
            t_max_bps: 250_000.0,
            alpha: 2.0,
            mtu: 1500,
            base_latency_s: 0.005,
            loss0: 0.0,
        }
    }
}

impl RadioModel {
    fn decay(&self, d_m: f64) -> f64 {
        (d_m.max(0.0) / self.range_m).powf(self.alpha)
    }

    pub fn in_range(&self, d_m: f64) -> bool {
        d_m < self.range_m
    }

    /// Link throughput in bytes/s; exactly zero at and beyond range.
    pub fn throughput(&self, d_m: f64) -> f64 {
        if !self.in_range(d_m) {
            return 0.0;
        }
        self.t_max_bps / 8.0 * (1.0 - self.decay(d_m)).max(0.0)
    }

    /// Frame-loss probability at distance `d_m`.
    pub fn loss(&self, d_m: f64) -> f64 {
        if !self.in_range(d_m) {
            return 1.0;
        }
        (self.loss0 + (1.0 - self.loss0) * self.decay(d_m)).clamp(0.0, 1.0)
    }

    /// Time on air for `len` bytes at distance `d_m`.
    pub fn airtime(&self, d_m: f64, len: usize) -> f64 {
        len as f64 / self.throughput(d_m)
    }

    /// Offers a frame to the channel, drawing loss from `rng`. Exactly one
    /// draw is consumed per in-range call.
    pub fn frame_delay<R: Rng + ?Sized>(
        &self,
        d_m: f64,
        frame_len: usize,
        rng: &mut R,
    ) -> Result<Delivery, ChannelError> {
        if frame_len > self.mtu {
            return Err(ChannelError::FrameTooLarge {
                len: frame_len,
                mtu: self.mtu,
            });
        }
        if !self.in_range(d_m) {
            return Err(ChannelError::OutOfRange(d_m));
        }
        let draw: f64 = rng.gen();
        if draw < self.loss(d_m) {
            return Ok(Delivery::Lost);
        }
        Ok(Delivery::After(
            self.base_latency_s + self.airtime(d_m, frame_len),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(self, other: Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn lerp(self, to: Position, f: f64) -> Position {
        Position {
            x: self.x + (to.x - self.x) * f,
            y: self.y + (to.y - self.y) * f,
        }
    }
}

/// Constant-speed motion along a polyline. A looping trace closes the
/// polygon back to the first waypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityTrace {
    pub waypoints: Vec<Position>,
    pub speed_mps: f64,
    pub looped: bool,
    /// Motion starts at this time; before it the node sits at the first waypoint.
    pub start_s: f64,
}

impl MobilityTrace {
    fn legs(&self) -> impl Iterator<Item = (Position, Position)> + '_ {
        let closing = self
            .looped
            .then(|| (*self.waypoints.last().unwrap(), self.waypoints[0]));
        self.waypoints
            .windows(2)
            .map(|w| (w[0], w[1]))
            .chain(closing)
    }

    pub fn length(&self) -> f64 {
        self.legs().map(|(a, b)| a.distance(b)).sum()
    }

    pub fn position_at(&self, t: f64) -> Position {
        let total = self.length();
        let mut travelled = self.speed_mps * (t - self.start_s).max(0.0);
        if total <= 0.0 {
            return self.waypoints[0];
        }
        if self.looped {
            travelled = travelled.rem_euclid(total);
        } else if travelled >= total {
            return *self.waypoints.last().unwrap();
        }
        for (a, b) in self.legs() {
            let leg = a.distance(b);
            if travelled < leg {
                return a.lerp(b, travelled / leg);
            }
            travelled -= leg;
        }
        self.waypoints[0]
    }
}

#[derive(Debug, Clone, Default)]
pub struct Placement {
    fixed: BTreeMap<ModuleId, Position>,
    mobile: BTreeMap<ModuleId, MobilityTrace>,
}

impl Placement {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn place(&mut self, id: ModuleId, at: Position) {
        self.mobile.remove(&id);
        self.fixed.insert(id, at);
    }

    pub fn attach(&mut self, id: ModuleId, trace: MobilityTrace) {
        self.fixed.remove(&id);
        self.mobile.insert(id, trace);
    }

    pub fn is_mobile(&self, id: ModuleId) -> bool {
        self.mobile.contains_key(&id)
    }

    pub fn fixed(&self) -> impl Iterator<Item = (ModuleId, Position)> + '_ {
        self.fixed.iter().map(|(id, p)| (*id, *p))
    }

    pub fn mobile_ids(&self) -> impl Iterator<Item = ModuleId> + '_ {
        self.mobile.keys().copied()
    }

    pub fn position_at(&self, id: ModuleId, t: f64) -> Result<Position, UnknownModule> {
        if let Some(p) = self.fixed.get(&id) {
            return Ok(*p);
        }
        self.mobile
            .get(&id)
            .map(|m| m.position_at(t))
            .ok_or(UnknownModule(id))
    }

    pub fn distance(&self, a: ModuleId, b: ModuleId, t: f64) -> Result<f64, UnknownModule> {
        Ok(self.position_at(a, t)?.distance(self.position_at(b, t)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64) -> Position {
        Position::new(x, y)
    }

    #[test]
    fn throughput_endpoints() {
        let m = RadioModel::default();
        assert_eq!(m.throughput(0.0), 250_000.0 / 8.0);
        assert_eq!(m.throughput(20.0), 0.0);
        assert_eq!(m.throughput(25.0), 0.0);
        // 1 - (10/20)^2 = 0.75
        assert!((m.throughput(10.0) - 0.75 * 31_250.0).abs() < 1e-9);
    }

    #[test]
    fn two_module_valley_at_midpoint() {
        let m = RadioModel {
            range_m: 10.0,
            ..RadioModel::default()
        };
        let grid: Vec<f64> = (0..=32).map(|i| i as f64 * 0.5).collect();
        let best = |x: f64| m.throughput(x).max(m.throughput(16.0 - x));
        // interior minimum over positions strictly between the modules, away from the ends
        let interior: Vec<f64> = grid
            .iter()
            .copied()
            .filter(|x| (4.0..=12.0).contains(x))
            .collect();
        let argmin = interior
            .iter()
            .copied()
            .min_by(|a, b| best(*a).partial_cmp(&best(*b)).unwrap())
            .unwrap();
        assert_eq!(argmin, 8.0);
        assert!(best(8.0) > 0.0);
        assert!(best(8.0) < best(7.5) && best(8.0) < best(8.5));
    }

    #[test]
    fn lossless_channel_at_origin() {
        let m = RadioModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let d = m.frame_delay(0.0, 100, &mut rng).unwrap();
            assert_eq!(d, Delivery::After(0.005 + 100.0 / 31_250.0));
        }
    }

    #[test]
    fn out_of_range_and_oversize() {
        let m = RadioModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            m.frame_delay(20.0, 10, &mut rng),
            Err(ChannelError::OutOfRange(_))
        ));
        assert!(matches!(
            m.frame_delay(1.0, 1501, &mut rng),
            Err(ChannelError::FrameTooLarge { .. })
        ));
    }

    #[test]
    fn monte_carlo_loss_rate() {
        let m = RadioModel {
            loss0: 0.05,
            ..RadioModel::default()
        };
        let d = 12.0;
        let expected = 0.05 + 0.95 * (12.0f64 / 20.0).powi(2);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10_000;
        let lost = (0..n)
            .filter(|_| m.frame_delay(d, 50, &mut rng).unwrap() == Delivery::Lost)
            .count();
        let rate = lost as f64 / n as f64;
        assert!((rate - expected).abs() < 0.02, "rate {rate} vs {expected}");
    }

    #[test]
    fn linear_motion() {
        let t = MobilityTrace {
            waypoints: vec![p(0.0, 0.0), p(10.0, 0.0)],
            speed_mps: 1.0,
            looped: false,
            start_s: 0.0,
        };
        assert_eq!(t.position_at(4.0), p(4.0, 0.0));
        assert_eq!(t.position_at(40.0), p(10.0, 0.0));
    }

    #[test]
    fn loop_returns_to_start() {
        // 5 x 10 rectangle, perimeter 30 m
        let t = MobilityTrace {
            waypoints: vec![p(0.0, 0.0), p(10.0, 0.0), p(10.0, 5.0), p(0.0, 5.0)],
            speed_mps: 6.0 / 3.6,
            looped: true,
            start_s: 0.0,
        };
        assert!((t.length() - 30.0).abs() < 1e-12);
        let at = t.position_at(36.0);
        assert!(at.distance(p(0.0, 0.0)) < 1e-9, "{at:?}");
    }

    #[test]
    fn placement_lookup() {
        let a = ModuleId::new(1).unwrap();
        let b = ModuleId::new(2).unwrap();
        let mut pl = Placement::new();
        pl.place(a, p(3.0, 4.0));
        assert_eq!(pl.position_at(a, 0.0), pl.position_at(a, 1e6));
        assert_eq!(pl.position_at(b, 0.0), Err(UnknownModule(b)));
        pl.attach(
            b,
            MobilityTrace {
                waypoints: vec![p(0.0, 0.0)],
                speed_mps: 0.0,
                looped: false,
                start_s: 0.0,
            },
        );
        assert_eq!(pl.distance(a, b, 5.0), Ok(5.0));
        assert_eq!(pl.distance(a, b, 5.0), pl.distance(b, a, 5.0));
    }
}
