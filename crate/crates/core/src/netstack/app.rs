//! Traffic generator of the UDP benchmark app.

use alloc::vec::Vec;
use core::net::Ipv4Addr;

use crate::error::{Error, Result};
use crate::rng::{exponential_delay, exponential_from_uniform, RngStream};
use crate::time::SimTime;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrafficParams {
    /// Probability that a packet targets a host of the sender's own LAN.
    pub p_local: f64,
    pub mean_size_bytes: f64,
    pub mean_interarrival: SimTime,
    /// No packets are generated after this time.
    pub stop: Option<SimTime>,
}

impl Default for TrafficParams {
    fn default() -> Self {
        TrafficParams {
            p_local: 0.5,
            mean_size_bytes: 200.0,
            mean_interarrival: SimTime::from_us(20),
            stop: None,
        }
    }
}

impl TrafficParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_local) {
            return Err(Error::Config(alloc::format!("p_local = {} is not a probability", self.p_local)));
        }
        if !(self.mean_size_bytes > 0.0) || !self.mean_size_bytes.is_finite() {
            return Err(Error::Config(alloc::format!(
                "mean packet size must be positive, got {}",
                self.mean_size_bytes
            )));
        }
        if self.mean_interarrival <= SimTime::ZERO {
            return Err(Error::Config(alloc::format!(
                "mean inter-arrival time must be positive, got {}",
                self.mean_interarrival
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AppStep {
    pub delay: SimTime,
    pub target: Ipv4Addr,
    pub size: u32,
    pub local: bool,
}

/// Payload size: exponential sample rounded up, at least one byte.
pub fn packet_size(u: f64, mean: f64) -> Result<u32> {
    let x = libm::ceil(exponential_from_uniform(u, mean)?);
    Ok(x.clamp(1.0, u32::MAX as f64 / 2.0) as u32)
}

/// Chooses local or remote and an index into that list from two uniform
/// draws. Falls back to the other list when the chosen one is empty.
pub fn pick_target(u_local: f64, u_pick: f64, p_local: f64, n_local: usize, n_remote: usize) -> Option<(bool, usize)> {
    let mut local = u_local < p_local;
    if local && n_local == 0 {
        local = false;
    } else if !local && n_remote == 0 {
        local = true;
    }
    let n = if local { n_local } else { n_remote };
    if n == 0 {
        return None;
    }
    let i = ((u_pick * n as f64) as usize).min(n - 1);
    Some((local, i))
}

/// Per-host generator. Every step consumes four uniform draws in the fixed
/// order delay, size, locality, target.
#[derive(Clone, Debug)]
pub struct TrafficGen {
    rng: RngStream,
    params: TrafficParams,
    local: Vec<Ipv4Addr>,
    remote: Vec<Ipv4Addr>,
}

impl TrafficGen {
    /// `local` must not contain the host itself.
    pub fn new(rng: RngStream, params: TrafficParams, local: Vec<Ipv4Addr>, remote: Vec<Ipv4Addr>) -> Result<Self> {
        params.validate()?;
        if local.is_empty() && remote.is_empty() {
            return Err(Error::Config(alloc::string::String::from("no hosts to send to")));
        }
        Ok(TrafficGen { rng, params, local, remote })
    }

    pub fn params(&self) -> &TrafficParams {
        &self.params
    }

    pub fn step(&mut self) -> Result<AppStep> {
        let delay = exponential_delay(self.rng.uniform01(), self.params.mean_interarrival)?;
        let size = packet_size(self.rng.uniform01(), self.params.mean_size_bytes)?;
        let u_local = self.rng.uniform01();
        let u_pick = self.rng.uniform01();
        let (local, i) = pick_target(u_local, u_pick, self.params.p_local, self.local.len(), self.remote.len())
            .expect("checked in new");
        let target = if local { self.local[i] } else { self.remote[i] };
        Ok(AppStep { delay, target, size, local })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path::ModulePath;
    use crate::rng::derive_stream;

    #[test]
    fn size_rounding() {
        assert_eq!(packet_size(0.0, 200.0).unwrap(), 1);
        // -200 ln 0.5 = 138.6 -> 139
        assert_eq!(packet_size(0.5, 200.0).unwrap(), 139);
    }

    #[test]
    fn locality_choice() {
        assert_eq!(pick_target(0.3, 0.0, 0.9, 56, 100), Some((true, 0)));
        assert_eq!(pick_target(0.95, 0.999_999, 0.9, 56, 100), Some((false, 99)));
        assert_eq!(pick_target(0.3, 0.5, 0.9, 0, 10), Some((false, 5)));
        assert_eq!(pick_target(0.99, 0.5, 0.5, 4, 0), Some((true, 2)));
        assert_eq!(pick_target(0.1, 0.5, 0.5, 0, 0), None);
    }

    #[test]
    fn never_targets_outside_the_lists() {
        let me = Ipv4Addr::new(10, 0, 0, 1);
        let local = alloc::vec![Ipv4Addr::new(10, 0, 0, 2), Ipv4Addr::new(10, 0, 0, 3)];
        let remote = alloc::vec![Ipv4Addr::new(10, 1, 0, 2)];
        let rng = derive_stream(1, &ModulePath::parse("net.lan0.host0").unwrap());
        let mut g = TrafficGen::new(rng, TrafficParams::default(), local.clone(), remote.clone()).unwrap();
        for _ in 0..1000 {
            let s = g.step().unwrap();
            assert_ne!(s.target, me);
            assert_eq!(local.contains(&s.target), s.local);
            assert!(s.local || remote.contains(&s.target));
            assert!(s.size >= 1);
        }
    }

    #[test]
    fn invalid_params() {
        let bad = [
            TrafficParams { p_local: 1.5, ..TrafficParams::default() },
            TrafficParams { mean_size_bytes: 0.0, ..TrafficParams::default() },
            TrafficParams { mean_interarrival: SimTime::ZERO, ..TrafficParams::default() },
        ];
        for p in bad {
            assert!(p.validate().is_err());
        }
    }
}
