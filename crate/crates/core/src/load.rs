//! Back-of-envelope throughput sizing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: u64 = 86_400;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlatformLoad {
    pub name: String,
    pub daily_users: u64,
    pub daily_requests: u64,
    pub required_tps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LoadEstimate {
    pub per_platform: Vec<PlatformLoad>,
    pub total_requests_range: (u64, u64),
    pub required_tps_range: (u64, u64),
    /// Reference throughput over required throughput, unrounded.
    pub redundancy_raw: (f64, f64),
    /// The same ratios floored to a multiple of ten.
    pub redundancy_range: (u64, u64),
}

fn floor_to_tens(x: f64) -> u64 {
    (x / 10.0).floor() as u64 * 10
}

pub fn load_estimate(platforms: &[(&str, u64)], per_capita: u64, reference_tps: u64) -> Result<LoadEstimate> {
    if platforms.is_empty() {
        return Err(Error::BadInput("no platforms given".into()));
    }
    if per_capita == 0 || reference_tps == 0 {
        return Err(Error::BadInput("per-capita rate and reference TPS must be positive".into()));
    }
    let mut per_platform = Vec::with_capacity(platforms.len());
    for (name, users) in platforms {
        if *users == 0 {
            return Err(Error::BadInput(format!("{name}: zero daily users")));
        }
        let daily_requests = users
            .checked_mul(per_capita)
            .ok_or_else(|| Error::BadInput(format!("{name}: request volume overflows")))?;
        per_platform.push(PlatformLoad {
            name: name.to_string(),
            daily_users: *users,
            daily_requests,
            required_tps: daily_requests.div_ceil(SECONDS_PER_DAY),
        });
    }
    let reqs = per_platform.iter().map(|p| p.daily_requests);
    let total_requests_range = (reqs.clone().min().unwrap(), reqs.max().unwrap());
    let tps = per_platform.iter().map(|p| p.required_tps);
    let required_tps_range = (tps.clone().min().unwrap(), tps.max().unwrap());
    let ratio = |tps: u64| reference_tps as f64 / tps as f64;
    let redundancy_raw = (ratio(required_tps_range.1), ratio(required_tps_range.0));
    Ok(LoadEstimate {
        per_platform,
        total_requests_range,
        required_tps_range,
        redundancy_raw,
        redundancy_range: (floor_to_tens(redundancy_raw.0), floor_to_tens(redundancy_raw.1)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_case() {
        let e = load_estimate(&[("solo", 86_400)], 1, 10).unwrap();
        assert_eq!(e.required_tps_range, (1, 1));
        assert_eq!(e.redundancy_range, (10, 10));
    }

    #[test]
    fn partial_second_rounds_up() {
        let e = load_estimate(&[("a", 86_401)], 1, 10).unwrap();
        assert_eq!(e.required_tps_range, (2, 2));
        assert_eq!(e.redundancy_raw, (5.0, 5.0));
        assert_eq!(e.redundancy_range, (0, 0));
    }

    #[test]
    fn two_platforms() {
        let e = load_estimate(&[("small", 22_000_000), ("large", 120_000_000)], 100, 15_500_000).unwrap();
        assert_eq!(e.total_requests_range, (2_200_000_000, 12_000_000_000));
        assert_eq!(e.required_tps_range, (25_463, 138_889));
        assert_eq!(e.redundancy_range, (110, 600));
        assert!((e.redundancy_raw.0 - 111.6).abs() < 0.05);
        assert!((e.redundancy_raw.1 - 608.7).abs() < 0.05);
    }

    #[test]
    fn rejects_zeros() {
        assert!(matches!(load_estimate(&[], 1, 1), Err(Error::BadInput(_))));
        assert!(matches!(load_estimate(&[("a", 0)], 1, 1), Err(Error::BadInput(_))));
        assert!(matches!(load_estimate(&[("a", 1)], 0, 1), Err(Error::BadInput(_))));
        assert!(matches!(load_estimate(&[("a", 1)], 1, 0), Err(Error::BadInput(_))));
    }
}
