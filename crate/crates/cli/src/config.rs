//! Flat TOML configuration. Precedence: `--set`/`--seed` flags, then the
//! config file, then built-in defaults.

use std::path::Path;

use indicators_core::evaluation::{VehicleGrouping, VISIT_MATCH_THRESHOLD_M};
use indicators_core::ingest::{ImuPosition, SHL_DEFAULT_POSITION};
use indicators_core::labels::TransportLabel;
use indicators_core::mobility::MobilityConfig;
use indicators_core::pipelines::WindowingConfig;
use indicators_core::profiles::DEFAULT_EPOCH_S;
use indicators_core::steps::{PhoneStepConfig, WatchStepConfig};
use indicators_core::svm::{KernelSpec, SvmParams};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,

    pub phone_smoothing_hz: f64,
    pub phone_prominence: f64,
    pub phone_prominence_window_s: f64,
    pub phone_min_interval_s: f64,
    pub phone_max_interval_s: f64,
    pub phone_similarity_tol: f64,
    pub phone_continuity_min: usize,
    pub phone_continuity_gap_s: f64,

    pub watch_cutoff_hz: f64,
    pub watch_delay_s: f64,
    pub watch_hysteresis_up: f64,
    pub watch_hysteresis_down: f64,
    pub watch_min_armed_s: f64,
    pub watch_group_gap_s: f64,

    pub activity_window_s: f64,
    pub activity_step_s: f64,
    /// 0 disables the majority vote.
    pub activity_smoothing_s: f64,
    pub transport_window_s: f64,
    pub transport_step_s: f64,
    pub transport_smoothing_s: f64,
    pub min_agreement: f64,

    pub svm_c: f64,
    pub svm_kernel: KernelKind,
    /// Absent means `1 / (d · mean variance)` of the training rows.
    pub svm_gamma: Option<f64>,
    pub svm_tol: f64,
    pub svm_max_iter: Option<usize>,

    pub eps_m: f64,
    pub min_density: f64,
    pub min_stay_s: f64,
    pub split_gap_s: f64,
    pub moveability_window_s: f64,
    pub max_speed_mps: f64,
    pub min_trip_speed_kmh: f64,
    pub accel_gap_s: f64,

    pub visit_match_threshold_m: f64,
    pub vehicle_classes: Vec<TransportLabel>,

    pub pamap2_imu: ImuPosition,
    pub shl_position: String,

    pub poi_radius_m: f64,
    pub counts_epoch_s: f64,
    pub utc_offset_s: i64,
}

impl Default for Config {
    fn default() -> Self {
        let phone = PhoneStepConfig::default();
        let watch = WatchStepConfig::default();
        let act = WindowingConfig::activity();
        let tr = WindowingConfig::transport();
        let svm = SvmParams::default();
        let mob = MobilityConfig::default();
        Self {
            seed: 0,
            phone_smoothing_hz: phone.smoothing_hz,
            phone_prominence: phone.prominence,
            phone_prominence_window_s: phone.prominence_window_s,
            phone_min_interval_s: phone.min_interval_s,
            phone_max_interval_s: phone.max_interval_s,
            phone_similarity_tol: phone.similarity_tol,
            phone_continuity_min: phone.continuity_min,
            phone_continuity_gap_s: phone.continuity_gap_s,
            watch_cutoff_hz: watch.cutoff_hz,
            watch_delay_s: watch.delay_s,
            watch_hysteresis_up: watch.hysteresis_up,
            watch_hysteresis_down: watch.hysteresis_down,
            watch_min_armed_s: watch.min_armed_s,
            watch_group_gap_s: watch.group_gap_s,
            activity_window_s: act.window_s,
            activity_step_s: act.step_s,
            activity_smoothing_s: act.smoothing_s.unwrap_or(0.0),
            transport_window_s: tr.window_s,
            transport_step_s: tr.step_s,
            transport_smoothing_s: tr.smoothing_s.unwrap_or(0.0),
            min_agreement: act.min_agreement,
            svm_c: svm.c,
            svm_kernel: KernelKind::Rbf,
            svm_gamma: None,
            svm_tol: svm.tol,
            svm_max_iter: svm.max_iter,
            eps_m: mob.eps_m,
            min_density: mob.min_density,
            min_stay_s: mob.min_stay_s,
            split_gap_s: mob.split_gap_s,
            moveability_window_s: mob.moveability_window_s,
            max_speed_mps: mob.max_speed_mps,
            min_trip_speed_kmh: mob.min_trip_speed_kmh,
            accel_gap_s: mob.accel_gap_s,
            visit_match_threshold_m: VISIT_MATCH_THRESHOLD_M,
            vehicle_classes: VehicleGrouping::default().vehicle,
            pamap2_imu: ImuPosition::Chest,
            shl_position: SHL_DEFAULT_POSITION.to_string(),
            poi_radius_m: 50.0,
            counts_epoch_s: DEFAULT_EPOCH_S,
            utc_offset_s: 0,
        }
    }
}

/// Parses `key=value`; the value is read as a TOML literal, falling back
/// to a bare string.
fn parse_override(kv: &str) -> Result<(String, toml::Value), Failure> {
    let (k, v) = kv
        .split_once('=')
        .ok_or_else(|| Failure::Usage(format!("--set expects key=value, got `{kv}`")))?;
    let k = k.trim().to_string();
    let v = v.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {v}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(v.to_string()),
    };
    Ok((k, value))
}

impl Config {
    pub fn load(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Self, Failure> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
                toml::from_str::<toml::Table>(&text).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for kv in overrides {
            let (k, v) = parse_override(kv)?;
            table.insert(k, v);
        }
        if let Some(s) = seed {
            let s = i64::try_from(s).map_err(|_| Failure::Usage("--seed must fit in a signed 64-bit integer".into()))?;
            table.insert("seed".into(), toml::Value::Integer(s));
        }
        let cfg: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Failure::Usage(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), Failure> {
        let positive = [
            ("phone_smoothing_hz", self.phone_smoothing_hz),
            ("phone_prominence_window_s", self.phone_prominence_window_s),
            ("phone_min_interval_s", self.phone_min_interval_s),
            ("phone_max_interval_s", self.phone_max_interval_s),
            ("phone_continuity_gap_s", self.phone_continuity_gap_s),
            ("watch_cutoff_hz", self.watch_cutoff_hz),
            ("watch_group_gap_s", self.watch_group_gap_s),
            ("activity_window_s", self.activity_window_s),
            ("activity_step_s", self.activity_step_s),
            ("transport_window_s", self.transport_window_s),
            ("transport_step_s", self.transport_step_s),
            ("svm_c", self.svm_c),
            ("svm_tol", self.svm_tol),
            ("eps_m", self.eps_m),
            ("min_stay_s", self.min_stay_s),
            ("split_gap_s", self.split_gap_s),
            ("moveability_window_s", self.moveability_window_s),
            ("max_speed_mps", self.max_speed_mps),
            ("accel_gap_s", self.accel_gap_s),
            ("visit_match_threshold_m", self.visit_match_threshold_m),
            ("poi_radius_m", self.poi_radius_m),
            ("counts_epoch_s", self.counts_epoch_s),
        ];
        let non_negative = [
            ("phone_prominence", self.phone_prominence),
            ("phone_similarity_tol", self.phone_similarity_tol),
            ("watch_delay_s", self.watch_delay_s),
            ("watch_hysteresis_up", self.watch_hysteresis_up),
            ("watch_hysteresis_down", self.watch_hysteresis_down),
            ("watch_min_armed_s", self.watch_min_armed_s),
            ("activity_smoothing_s", self.activity_smoothing_s),
            ("transport_smoothing_s", self.transport_smoothing_s),
            ("min_density", self.min_density),
            ("min_trip_speed_kmh", self.min_trip_speed_kmh),
        ];
        let bad = |k: &str, why: &str| Err(Failure::Usage(format!("config: `{k}` {why}")));
        for (k, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(k, "must be a positive number");
            }
        }
        for (k, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return bad(k, "must be a non-negative number");
            }
        }
        if !(self.min_agreement > 0.0 && self.min_agreement <= 1.0) {
            return bad("min_agreement", "must lie in (0, 1]");
        }
        if self.phone_min_interval_s >= self.phone_max_interval_s {
            return bad("phone_min_interval_s", "must be below phone_max_interval_s");
        }
        if self.phone_smoothing_hz >= 50.0 || self.watch_cutoff_hz >= 50.0 {
            return bad("phone_smoothing_hz/watch_cutoff_hz", "must be below the 50 Hz Nyquist limit");
        }
        if self.svm_gamma.is_some_and(|g| !(g.is_finite() && g > 0.0)) {
            return bad("svm_gamma", "must be a positive number");
        }
        if self.svm_max_iter == Some(0) {
            return bad("svm_max_iter", "must be positive");
        }
        if self.utc_offset_s.abs() > 14 * 3600 {
            return bad("utc_offset_s", "must be within ±14 h");
        }
        Ok(())
    }

    pub fn phone(&self) -> PhoneStepConfig {
        PhoneStepConfig {
            smoothing_hz: self.phone_smoothing_hz,
            prominence: self.phone_prominence,
            prominence_window_s: self.phone_prominence_window_s,
            min_interval_s: self.phone_min_interval_s,
            max_interval_s: self.phone_max_interval_s,
            similarity_tol: self.phone_similarity_tol,
            continuity_min: self.phone_continuity_min,
            continuity_gap_s: self.phone_continuity_gap_s,
        }
    }

    pub fn watch(&self) -> WatchStepConfig {
        WatchStepConfig {
            cutoff_hz: self.watch_cutoff_hz,
            delay_s: self.watch_delay_s,
            hysteresis_up: self.watch_hysteresis_up,
            hysteresis_down: self.watch_hysteresis_down,
            min_armed_s: self.watch_min_armed_s,
            group_gap_s: self.watch_group_gap_s,
        }
    }

    fn windowing(window_s: f64, step_s: f64, smoothing_s: f64, min_agreement: f64) -> WindowingConfig {
        WindowingConfig {
            window_s,
            step_s,
            smoothing_s: (smoothing_s > 0.0).then_some(smoothing_s),
            min_agreement,
        }
    }

    pub fn activity_windowing(&self) -> WindowingConfig {
        Self::windowing(self.activity_window_s, self.activity_step_s, self.activity_smoothing_s, self.min_agreement)
    }

    pub fn transport_windowing(&self) -> WindowingConfig {
        Self::windowing(self.transport_window_s, self.transport_step_s, self.transport_smoothing_s, self.min_agreement)
    }

    pub fn svm(&self) -> SvmParams {
        SvmParams {
            c: self.svm_c,
            kernel: match self.svm_kernel {
                KernelKind::Rbf => KernelSpec::Rbf { gamma: self.svm_gamma },
                KernelKind::Linear => KernelSpec::Linear,
            },
            tol: self.svm_tol,
            max_iter: self.svm_max_iter,
        }
    }

    pub fn mobility(&self) -> MobilityConfig {
        MobilityConfig {
            eps_m: self.eps_m,
            min_density: self.min_density,
            min_stay_s: self.min_stay_s,
            split_gap_s: self.split_gap_s,
            moveability_window_s: self.moveability_window_s,
            max_speed_mps: self.max_speed_mps,
            min_trip_speed_kmh: self.min_trip_speed_kmh,
            accel_gap_s: self.accel_gap_s,
        }
    }

    pub fn vehicle_grouping(&self) -> VehicleGrouping {
        VehicleGrouping {
            vehicle: self.vehicle_classes.clone(),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}
