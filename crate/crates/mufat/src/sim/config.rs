//! Flat `key=value` config files with `#` comments.
//!
//! Run config schema (all timing keys optional, defaulting to the
//! calibrated medium):
//!
//! ```text
//! # run config
//! seed=42
//! fast_path=true
//! charge_read_jumps=true
//! cache_bytes_per_stream=16777216
//! strategy=preset:acpa            # or tuple:fatq=...,... or model:path.json
//! timing.t_w_num=25
//! timing.t_w_den=4
//! timing.t_jump_ns=1308160
//! timing.sectors_per_cluster=16
//! timing.volume_capacity=549755813888
//! stream.0.type=radar_echo
//! stream.0.rate_bps=16000000
//! stream.0.packet_b=65536
//! stream.0.total_b=2147483648
//! stream.0.file_b=2147483648     # optional, defaults to the size rule
//! stream.0.arrival=periodic
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use crate::policy::Mlp;
use crate::sim::engine::{RunConfig, StrategyChoice};
use crate::strategy::BaselinePreset;
use crate::timing::FlashTimingParams;
use crate::workload::{default_file_bytes, Arrival, DataType, StreamSpec, WorkloadSpec};
use crate::{Error, Result};

pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", no + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn get_u64(map: &BTreeMap<String, String>, key: &str, default: u64) -> Result<u64> {
    match map.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| Error::Config(format!("bad number for `{key}`: `{v}`"))),
    }
}

fn get_bool(map: &BTreeMap<String, String>, key: &str, default: bool) -> Result<bool> {
    match map.get(key).map(String::as_str) {
        None => Ok(default),
        Some("true") | Some("1") => Ok(true),
        Some("false") | Some("0") => Ok(false),
        Some(v) => Err(Error::Config(format!("bad bool for `{key}`: `{v}`"))),
    }
}

/// Timing parameters from a parsed map, defaults from `base`.
pub fn timing_from_map(
    map: &BTreeMap<String, String>,
    base: FlashTimingParams,
) -> Result<FlashTimingParams> {
    FlashTimingParams {
        t_w_num: get_u64(map, "timing.t_w_num", base.t_w_num)?,
        t_w_den: get_u64(map, "timing.t_w_den", base.t_w_den)?,
        t_jump_ns: get_u64(map, "timing.t_jump_ns", base.t_jump_ns)?,
        sector_bytes: get_u64(map, "timing.sector_bytes", base.sector_bytes)?,
        sectors_per_cluster: get_u64(map, "timing.sectors_per_cluster", base.sectors_per_cluster)?,
        volume_capacity: get_u64(map, "timing.volume_capacity", base.volume_capacity)?,
    }
    .validated()
}

/// Streams (`stream.N.*` keys) from a parsed map.
pub fn workload_from_map(map: &BTreeMap<String, String>) -> Result<WorkloadSpec> {
    let mut streams = Vec::new();
    for i in 0.. {
        let prefix = format!("stream.{i}.");
        if !map.keys().any(|k| k.starts_with(&prefix)) {
            break;
        }
        let ty = map
            .get(&format!("{prefix}type"))
            .ok_or_else(|| Error::Config(format!("missing {prefix}type")))?;
        let data_type = DataType::from_name(ty)
            .ok_or_else(|| Error::Config(format!("unknown data type `{ty}`")))?;
        let rate_bps = get_u64(map, &format!("{prefix}rate_bps"), 0)?;
        let packet_bytes = get_u64(map, &format!("{prefix}packet_b"), 0)?;
        let total_bytes = get_u64(map, &format!("{prefix}total_b"), 0)?;
        let file_bytes = get_u64(map, &format!("{prefix}file_b"), default_file_bytes(rate_bps))?;
        let arrival = match map.get(&format!("{prefix}arrival")).map(String::as_str) {
            None | Some("periodic") => Arrival::Periodic,
            Some("random") => Arrival::Random,
            Some(v) => return Err(Error::Config(format!("bad arrival `{v}`"))),
        };
        streams.push(StreamSpec { data_type, rate_bps, packet_bytes, total_bytes, file_bytes, arrival });
    }
    let w = WorkloadSpec {
        streams,
        cache_bytes_per_stream: get_u64(map, "cache_bytes_per_stream", 16 * 1024 * 1024)?,
        seed: get_u64(map, "seed", 0)?,
    };
    w.validated()?;
    Ok(w)
}

fn strategy_from_str(s: &str, base_dir: &Path) -> Result<StrategyChoice> {
    if let Some(name) = s.strip_prefix("preset:") {
        let p = BaselinePreset::from_name(name)
            .ok_or_else(|| Error::Config(format!("unknown preset `{name}`")))?;
        return Ok(StrategyChoice::Preset(p));
    }
    if let Some(t) = s.strip_prefix("tuple:") {
        return Ok(StrategyChoice::Tuple(t.parse()?));
    }
    if let Some(path) = s.strip_prefix("model:") {
        let full = base_dir.join(path);
        let text = std::fs::read_to_string(&full)
            .map_err(|e| Error::Config(format!("cannot read model `{}`: {e}", full.display())))?;
        return Ok(StrategyChoice::Model(Mlp::from_json(&text)?));
    }
    Err(Error::Config(format!(
        "strategy must be preset:<name>, tuple:<spec> or model:<path>, got `{s}`"
    )))
}

/// Full run config from config text. Relative model paths resolve against
/// `base_dir`.
pub fn run_config_from_str(text: &str, base_dir: &Path) -> Result<RunConfig> {
    let map = parse_kv(text)?;
    let timing = timing_from_map(&map, FlashTimingParams::default())?;
    let workload = workload_from_map(&map)?;
    let strategy = strategy_from_str(
        map.get("strategy")
            .ok_or_else(|| Error::Config("missing `strategy`".into()))?,
        base_dir,
    )?;
    Ok(RunConfig {
        timing,
        workload,
        strategy,
        seed: get_u64(&map, "seed", 0)?,
        fast_path: get_bool(&map, "fast_path", true)?,
        charge_read_jumps: get_bool(&map, "charge_read_jumps", true)?,
        violation_dump: None,
    })
}

/// Renders timing parameters as a config fragment.
pub fn timing_to_cfg(t: &FlashTimingParams) -> String {
    format!(
        "# calibrated flash timing\n\
         timing.t_w_num={}\n\
         timing.t_w_den={}\n\
         timing.t_jump_ns={}\n\
         timing.sector_bytes={}\n\
         timing.sectors_per_cluster={}\n\
         timing.volume_capacity={}\n",
        t.t_w_num, t.t_w_den, t.t_jump_ns, t.sector_bytes, t.sectors_per_cluster, t.volume_capacity
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_config_roundtrip() {
        let text = "\
# sample\n\
seed=7\n\
charge_read_jumps=false\n\
cache_bytes_per_stream=1048576\n\
strategy=preset:original_fat\n\
stream.0.type=radar_echo\n\
stream.0.rate_bps=16000000\n\
stream.0.packet_b=65536\n\
stream.0.total_b=8388608\n";
        let cfg = run_config_from_str(text, Path::new(".")).unwrap();
        assert_eq!(cfg.seed, 7);
        assert!(!cfg.charge_read_jumps);
        assert_eq!(cfg.workload.streams.len(), 1);
        assert_eq!(cfg.workload.streams[0].rate_bps, 16_000_000);
        assert!(matches!(cfg.strategy, StrategyChoice::Preset(BaselinePreset::OriginalFat)));
    }

    #[test]
    fn tuple_strategy_and_errors() {
        let good = strategy_from_str(
            "tuple:fatq=prescan,fatu=batch16,fdtq=cached,fdtu=close,data=per_sector",
            Path::new("."),
        );
        assert!(good.is_ok());
        assert!(strategy_from_str("nonsense", Path::new(".")).is_err());
        assert!(parse_kv("no equals sign here").is_err());
    }

    #[test]
    fn timing_cfg_fragment_parses_back() {
        let t = FlashTimingParams::default();
        let text = timing_to_cfg(&t);
        let map = parse_kv(&text).unwrap();
        let back = timing_from_map(&map, FlashTimingParams::default()).unwrap();
        assert_eq!(back, t);
    }
}
