//! Run settings merged from a flat TOML file and command-line flags.

use std::path::{Path, PathBuf};

use clap::Args;
use patsync::harness::{EvalOptions, SGrid, SMode, SnrSearchOptions, SweepAxis};
use patsync::saddlepoint::EstimatorMode;
use patsync::{DelayModel, SystemConfig};
use serde::Deserialize;

/// Every key is optional; flags win over the file, the file over defaults.
#[derive(Debug, Clone, Default, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// SNR in dB.
    #[arg(long)]
    pub snr_db: Option<f64>,
    /// Rate in bits per channel use.
    #[arg(long)]
    pub rate_bits: Option<f64>,
    #[arg(long)]
    pub nb: Option<usize>,
    #[arg(long)]
    pub nc: Option<usize>,
    #[arg(long)]
    pub np: Option<usize>,
    /// Receiver upsampling rate N.
    #[arg(long)]
    pub upsampling: Option<usize>,
    /// Maximum delay in samples (default 2·N).
    #[arg(long)]
    pub dmax: Option<f64>,
    /// `independent` or `fully_dependent`.
    #[arg(long)]
    pub delay_model: Option<String>,
    /// Add data-symbol interference to the pilot observations.
    #[arg(long)]
    pub data_interference: Option<bool>,
    /// per_block, joint, perfect_sync_pilot_csi, perfect_all or synthetic_delay.
    #[arg(long)]
    pub mode: Option<String>,
    /// σ_d²/tp² for the synthetic delay mode.
    #[arg(long)]
    pub sigma_d2: Option<f64>,
    /// Fixed decoder parameter; omitted means optimized.
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub s_grid_points: Option<usize>,
    #[arg(long)]
    pub n_outer: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub target_eps: Option<f64>,
    /// snr, N, np, nb or sigma_d2.
    #[arg(long)]
    pub axis: Option<String>,
    /// Comma-separated sweep values.
    #[arg(long, value_delimiter = ',')]
    pub values: Option<Vec<f64>>,
    #[arg(long)]
    pub optimize_np: Option<bool>,
    #[arg(long)]
    pub nmse_trials: Option<usize>,
    /// Fill the wall_time column.
    #[arg(long)]
    pub timing: Option<bool>,
    #[arg(long)]
    pub tol_db: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl Settings {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// `self` with every value set in `flags` replaced.
    pub fn overlay(mut self, flags: &Settings) -> Self {
        overlay!(self, flags; snr_db, rate_bits, nb, nc, np, upsampling, dmax, delay_model,
            data_interference, mode, sigma_d2, s, s_grid_points, n_outer, seed, workers,
            target_eps, axis, values, optimize_np, nmse_trials, timing, tol_db, out);
        self
    }

    pub fn system_config(&self) -> Result<SystemConfig, String> {
        let d = SystemConfig::default();
        let mut cfg = SystemConfig {
            nb: self.nb.unwrap_or(d.nb),
            nc: self.nc.unwrap_or(d.nc),
            np: self.np.unwrap_or(d.np),
            upsampling: self.upsampling.unwrap_or(d.upsampling),
            include_data_interference: self.data_interference.unwrap_or(d.include_data_interference),
            ..d
        };
        if let Some(r) = self.rate_bits {
            cfg.rate_nats = r * std::f64::consts::LN_2;
        }
        if let Some(snr) = self.snr_db {
            cfg.set_snr_db(snr);
        }
        cfg = cfg.with_default_dmax();
        if let Some(dmax) = self.dmax {
            cfg.dmax = dmax;
        }
        cfg.delay_model = match self.delay_model.as_deref() {
            None | Some("fully_dependent") => DelayModel::FullyDependent,
            Some("independent") => DelayModel::Independent,
            Some(other) => return Err(format!("unknown delay model {other:?}")),
        };
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    pub fn mode(&self) -> Result<EstimatorMode, String> {
        Ok(match self.mode.as_deref().unwrap_or("joint") {
            "per_block" => EstimatorMode::PerBlock,
            "joint" => EstimatorMode::Joint,
            "perfect_sync_pilot_csi" => EstimatorMode::PerfectSyncPilotCsi,
            "perfect_all" => EstimatorMode::PerfectAll,
            "synthetic_delay" => EstimatorMode::SyntheticDelay {
                sigma2_over_tp2: self.sigma_d2.ok_or("synthetic_delay needs sigma_d2")?,
            },
            other => return Err(format!("unknown mode {other:?}")),
        })
    }

    pub fn eval_options(&self) -> EvalOptions {
        let d = EvalOptions::default();
        EvalOptions {
            n_outer: self.n_outer.unwrap_or(d.n_outer),
            seed: self.seed.unwrap_or(d.seed),
            s_mode: self.s.map_or(SMode::GridOptimized, SMode::Fixed),
            grid: SGrid {
                points: self.s_grid_points.unwrap_or(d.grid.points),
                ..d.grid
            },
        }
    }

    pub fn search_options(&self) -> SnrSearchOptions {
        let d = SnrSearchOptions::default();
        SnrSearchOptions {
            tol_db: self.tol_db.unwrap_or(d.tol_db),
            ..d
        }
    }

    pub fn axis(&self) -> Result<SweepAxis, String> {
        SweepAxis::parse(self.axis.as_deref().unwrap_or("snr")).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: Settings = toml::from_str("nb = 4\nnc = 72\nrate_bits = 0.5\nmode = \"per_block\"").unwrap();
        let flags = Settings { nb: Some(2), ..Settings::default() };
        let s = file.overlay(&flags);
        let cfg = s.system_config().unwrap();
        assert_eq!((cfg.nb, cfg.nc), (2, 72));
        assert!((cfg.rate_nats - 0.5 * std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(s.mode().unwrap(), EstimatorMode::PerBlock);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<Settings>("bogus = 1").is_err());
    }

    #[test]
    fn default_dmax_follows_upsampling() {
        let s = Settings { upsampling: Some(10), ..Settings::default() };
        assert_eq!(s.system_config().unwrap().dmax, 20.0);
    }
}
