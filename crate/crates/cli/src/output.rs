//! Artifacts: long-format CSV tables and JSON documents with provenance.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context};
use fluxvol_core::VolumeProfile;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// Where a result came from. Contains nothing that varies between runs of the
/// same configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// SHA-256 of the configuration file as read (empty input without one).
    pub config_file_sha256: String,
    /// SHA-256 of the effective configuration after defaults and overrides.
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(command: &str, source: &[u8], config: &RunConfig) -> Self {
        let effective = toml::to_string(config).unwrap_or_default();
        Self {
            tool: "fluxvol",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_file_sha256: hex::encode(Sha256::digest(source)),
            config_sha256: hex::encode(Sha256::digest(effective.as_bytes())),
            seed: config.scenario.seed,
        }
    }
}

/// `path` unless it is relative, in which case it is taken inside `dir`.
pub fn resolve(dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        dir.join(path)
    }
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(())
}

/// Shortest round-trip form, exponent notation for very small or large
/// magnitudes; empty for non-finite values.
pub fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        String::new()
    }
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
    ensure_parent(path)?;
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub const PROFILE_HEADER: [&str; 5] = ["label", "V", "dV_dlabel", "err", "method"];

pub fn profile_rows(profile: &VolumeProfile) -> Vec<Vec<String>> {
    (0..profile.labels.len())
        .map(|i| {
            vec![
                num(profile.labels[i]),
                num(profile.volumes[i]),
                num(profile.dv_dlabel[i]),
                num(profile.error_estimate[i]),
                profile.method.tag().to_string(),
            ]
        })
        .collect()
}

/// Long-format CSV of one or more profiles, rows grouped by method in the
/// given order.
pub fn emit_plot_data(profiles: &[&VolumeProfile], out: &Path) -> anyhow::Result<()> {
    ensure!(
        !profiles.is_empty() && profiles.iter().all(|p| !p.labels.is_empty()),
        "cannot emit an empty profile"
    );
    let rows: Vec<Vec<String>> = profiles.iter().flat_map(|p| profile_rows(p)).collect();
    write_csv(out, &PROFILE_HEADER, &rows)
}

/// `profile.csv` → `profile.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

#[cfg(test)]
mod tests {
    use super::*;
    use fluxvol_core::VolumeMethod;

    fn profile(method: VolumeMethod) -> VolumeProfile {
        VolumeProfile {
            labels: vec![0.25, 0.5],
            volumes: vec![1.0, 4.0],
            dv_dlabel: vec![8.0, f64::NAN],
            error_estimate: vec![0.0, 1e-9],
            method,
            reference_label: 0.0,
            reference_volume: 0.0,
        }
    }

    #[test]
    fn long_format_keeps_methods_apart() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("p.csv");
        emit_plot_data(
            &[
                &profile(VolumeMethod::Eq1),
                &profile(VolumeMethod::MonteCarlo),
            ],
            &out,
        )
        .unwrap();
        let text = fs::read_to_string(&out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "label,V,dV_dlabel,err,method");
        assert_eq!(lines[1], "0.25,1.0,8.0,0.0,eq1");
        assert_eq!(lines[2], "0.5,4.0,,1e-9,eq1");
        assert!(lines[4].ends_with(",mc"));
    }

    #[test]
    fn empty_profiles_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = profile(VolumeMethod::Eq1);
        p.labels.clear();
        assert!(emit_plot_data(&[&p], &dir.path().join("p.csv")).is_err());
        assert!(emit_plot_data(&[], &dir.path().join("q.csv")).is_err());
        assert!(!dir.path().join("p.csv").exists());
    }

    #[test]
    fn provenance_is_stable() {
        let c = RunConfig::default();
        let a = Provenance::new("volume", b"x", &c);
        let b = Provenance::new("volume", b"x", &c);
        assert_eq!(a, b);
        assert_ne!(
            a.config_file_sha256,
            Provenance::new("volume", b"y", &c).config_file_sha256
        );
    }
}
