//! Calibration: solve the jump response time from a target per-cluster
//! management ratio, and solve the volume's free space so whole-free-space
//! pre-allocation lands on its target ratio.

use crate::sim::engine::{run_simulation, RunConfig, StrategyChoice};
use crate::strategy::BaselinePreset;
use crate::timing::{FlashTimingParams, GIB, SECTOR_BYTES};
use crate::workload::{DataType, WorkloadSpec};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct CalibrationTargets {
    /// Target management ratio of the plain per-cluster scheme.
    pub mu_original: f64,
    /// Target ratio for all-clusters pre-allocation on the reference
    /// workload (one 2 GiB radar-echo file at 16 MB/s).
    pub mu_acpa: Option<f64>,
    pub t_w_num: u64,
    pub t_w_den: u64,
    pub sectors_per_cluster: u64,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        CalibrationTargets {
            mu_original: 102.2,
            mu_acpa: Some(0.32),
            t_w_num: 25,
            t_w_den: 4,
            sectors_per_cluster: 16,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub timing: FlashTimingParams,
    /// Ratio measured by re-running the reference workload at the solved
    /// free space.
    pub measured_mu_acpa: Option<f64>,
    pub warnings: Vec<String>,
}

/// The reference workload the free-space solve is anchored to.
pub fn acpa_reference_workload() -> WorkloadSpec {
    WorkloadSpec::single(DataType::RadarEcho, 16_000_000, 65_536, 2 * GIB)
}

fn mu_acpa_at(timing: FlashTimingParams) -> Result<f64> {
    let cfg = RunConfig {
        timing,
        workload: acpa_reference_workload(),
        strategy: StrategyChoice::Preset(BaselinePreset::Acpa),
        seed: 0,
        fast_path: true,
        charge_read_jumps: true,
        violation_dump: None,
    };
    Ok(run_simulation(&cfg)?.mu)
}

/// Solves the timing parameters for the given targets. The jump time comes
/// from inverting the per-cluster ratio formula; the free space is found by
/// bisection on the reference workload and checked by a re-run.
pub fn calibrate(targets: &CalibrationTargets) -> Result<Calibration> {
    if targets.mu_original <= 0.0 {
        return Err(Error::Config(
            "target ratio must be positive: a jump response of zero is infeasible".into(),
        ));
    }
    let cluster_bytes = SECTOR_BYTES * targets.sectors_per_cluster;
    let t_w_ns = targets.t_w_num as f64 / targets.t_w_den as f64;
    let t_jump = (targets.mu_original * cluster_bytes as f64 * t_w_ns / 4.0).round() as u64;
    if t_jump == 0 {
        return Err(Error::Config("solved jump response rounds to zero".into()));
    }
    let mut warnings = Vec::new();
    let ratio = t_jump as f64 / (SECTOR_BYTES as f64 * t_w_ns);
    if ratio < 10.0 {
        return Err(Error::Config(format!(
            "solved jump response is only {ratio:.1}x a sector write; the model \
             assumes dozens to hundreds"
        )));
    }
    if ratio > 1000.0 {
        warnings.push(format!(
            "jump response is {ratio:.0}x a sector write, beyond the hundreds the \
             timing model was stated for"
        ));
    }

    let mut timing = FlashTimingParams {
        t_w_num: targets.t_w_num,
        t_w_den: targets.t_w_den,
        t_jump_ns: t_jump,
        sector_bytes: SECTOR_BYTES,
        sectors_per_cluster: targets.sectors_per_cluster,
        volume_capacity: 512 * GIB,
    }
    .validated()?;

    let mut measured = None;
    if let Some(target_acpa) = targets.mu_acpa {
        if target_acpa <= 0.0 {
            return Err(Error::Config("pre-allocation target ratio must be positive".into()));
        }
        // The reference file needs this many clusters; free space cannot be
        // smaller. The ratio grows monotonically with capacity.
        let need = acpa_reference_workload().streams[0]
            .total_bytes
            .div_ceil(cluster_bytes);
        let mut lo = need + 1;
        let mut hi = need.max(1 << 22);
        let base_timing = timing;
        let mu_of = |clusters: u64| -> Result<f64> {
            let mut t = base_timing;
            t.volume_capacity = clusters * cluster_bytes;
            mu_acpa_at(t)
        };
        while mu_of(hi)? < target_acpa {
            hi *= 2;
            if hi > (1 << 40) {
                return Err(Error::Config(
                    "free-space solve diverged; pre-allocation target unreachable".into(),
                ));
            }
        }
        while lo + 1 < hi {
            let mid = lo + (hi - lo) / 2;
            if mu_of(mid)? < target_acpa {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (mu_lo, mu_hi) = (mu_of(lo)?, mu_of(hi)?);
        let clusters = if (mu_lo - target_acpa).abs() <= (mu_hi - target_acpa).abs() {
            lo
        } else {
            hi
        };
        timing.volume_capacity = clusters * cluster_bytes;
        let got = mu_of(clusters)?;
        if (got - target_acpa).abs() / target_acpa > 0.01 {
            warnings.push(format!(
                "solved free space gives ratio {got:.4}, more than 1% from the \
                 target {target_acpa}"
            ));
        }
        measured = Some(got);
    }

    Ok(Calibration { timing, measured_mu_acpa: measured, warnings })
}

/// The calibrated defaults used throughout: identical to solving for the
/// published anchors (ratio 102.2, pre-allocation ratio 0.32).
pub fn calibrated_default() -> Calibration {
    calibrate(&CalibrationTargets::default()).expect("default calibration solves")
}
