use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamKind {
    Web,
}

/// One user request that needs a circuit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub time: i64,
    pub destination_port: u16,
    pub kind: StreamKind,
}

impl StreamSpec {
    pub fn web(time: i64, destination_port: u16) -> Self {
        StreamSpec {
            time,
            destination_port,
            kind: StreamKind::Web,
        }
    }
}

/// Daily active windows during which the client builds one circuit per
/// `interval` seconds. Ports are used round-robin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityModel {
    /// `[start, end)` in seconds since UTC midnight.
    pub daily_windows: Vec<(u32, u32)>,
    pub interval: i64,
    pub ports: Vec<u16>,
}

impl Default for ActivityModel {
    /// Always active, one HTTPS circuit every 10 minutes.
    fn default() -> Self {
        ActivityModel {
            daily_windows: vec![(0, DAY as u32)],
            interval: 600,
            ports: vec![443],
        }
    }
}

impl ActivityModel {
    pub fn validate(&self) -> Result<()> {
        if self.interval <= 0 {
            return Err(Error::InvalidInput("stream interval must be positive".into()));
        }
        if self.ports.is_empty() || self.ports.contains(&0) {
            return Err(Error::InvalidInput("ports must be non-empty and in 1..=65535".into()));
        }
        for &(start, end) in &self.daily_windows {
            if start >= end || end as i64 > DAY {
                return Err(Error::InvalidInput(format!("invalid daily window {start}..{end}")));
            }
        }
        Ok(())
    }

    /// Streams with `start <= time < end`, ordered by time. Within a window,
    /// stream times sit on the window start plus multiples of the interval.
    pub fn streams(&self, start: i64, end: i64) -> Result<Vec<StreamSpec>> {
        self.validate()?;
        let mut windows = self.daily_windows.clone();
        windows.sort_unstable();
        let mut times = Vec::new();
        let mut day = start.div_euclid(DAY);
        while day * DAY < end {
            for &(ws, we) in &windows {
                let (ws, we) = (day * DAY + ws as i64, day * DAY + we as i64);
                let mut t = ws;
                if t < start {
                    t += (start - t + self.interval - 1) / self.interval * self.interval;
                }
                while t < we && t < end {
                    times.push(t);
                    t += self.interval;
                }
            }
            day += 1;
        }
        // Overlapping windows may repeat a tick.
        times.sort_unstable();
        times.dedup();
        Ok(times
            .into_iter()
            .enumerate()
            .map(|(i, t)| StreamSpec::web(t, self.ports[i % self.ports.len()]))
            .collect())
    }
}
