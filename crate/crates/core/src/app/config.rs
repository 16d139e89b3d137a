//! Pipeline configuration: one JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::hough::HoughConfig;
use crate::motionblink::BlinkConfig;
use crate::pointer::PointerConfig;
use crate::ssr::{EyeTemplatePair, SsrGeometry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionConfig {
    pub base_width: usize,
    pub base_height: usize,
    /// Multipliers applied to the base filter size.
    pub scales: Vec<f64>,
    /// Candidates whose total mismatch is at or above this are rejected.
    pub accept_threshold: f64,
    /// SSRT template file; the built-in template is used when absent.
    pub template: Option<PathBuf>,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            base_width: 24,
            base_height: 12,
            scales: vec![1.0, 1.5, 2.0, 3.0],
            accept_threshold: 2.0e6,
            template: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoseSettings {
    /// Sector width for bridge points; `None` derives it from the ROI side.
    pub s2_width: Option<usize>,
    /// Odd side of the tracking template.
    pub template_size: usize,
    /// Search window side as a multiple of the template side.
    pub search_factor: usize,
    /// Tracking confidence below which a frame counts as lost.
    pub min_confidence: f64,
    /// Consecutive lost frames before the face is re-detected.
    pub lost_frames: u32,
}

impl Default for NoseSettings {
    fn default() -> Self {
        Self { s2_width: None, template_size: 15, search_factor: 2, min_confidence: 0.3, lost_frames: 15 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub frame_rate: f64,
    pub detection: DetectionConfig,
    pub nose: NoseSettings,
    pub blink: BlinkConfig,
    pub pointer: PointerConfig,
    pub eyebrows: bool,
    pub hough: HoughConfig,
    /// Frames between metrics records.
    pub metrics_interval: u64,
    /// Frames in the rolling fps window.
    pub fps_window: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            frame_rate: 30.0,
            detection: DetectionConfig::default(),
            nose: NoseSettings::default(),
            blink: BlinkConfig::default(),
            pointer: PointerConfig::default(),
            eyebrows: true,
            hough: HoughConfig::default(),
            metrics_interval: 30,
            fps_window: 60,
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. A relative template path is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        if let (Some(t), Some(dir)) = (&cfg.detection.template, path.parent()) {
            if t.is_relative() {
                cfg.detection.template = Some(dir.join(t));
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Returns a copy with `patch` merged in: objects merge key by key, any
    /// other value replaces the old one.
    pub fn patched(&self, patch: &Value) -> Result<Self> {
        let mut doc = serde_json::to_value(self).expect("config serializes");
        merge(&mut doc, patch);
        let cfg: Self = serde_json::from_value(doc).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(config_err("frame_rate must be positive"));
        }
        SsrGeometry::new(self.detection.base_width, self.detection.base_height)?;
        if self.detection.scales.is_empty() || self.detection.scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(config_err("detection.scales must be non-empty and positive"));
        }
        if !(self.detection.accept_threshold > 0.0) {
            return Err(config_err("detection.accept_threshold must be positive"));
        }
        let n = &self.nose;
        if n.template_size < 3 || n.template_size % 2 == 0 {
            return Err(config_err("nose.template_size must be odd and at least 3"));
        }
        if n.search_factor < 1 {
            return Err(config_err("nose.search_factor must be at least 1"));
        }
        if !(0.0..=1.0).contains(&n.min_confidence) {
            return Err(config_err("nose.min_confidence must be in [0, 1]"));
        }
        if n.s2_width == Some(0) {
            return Err(config_err("nose.s2_width must be positive"));
        }
        self.blink.validate()?;
        self.pointer.validate()?;
        let h = &self.hough;
        if h.theta_bins < 2 || !(h.rho_bin_size > 0.0) || h.top_k == 0 {
            return Err(config_err("hough needs theta_bins >= 2, rho_bin_size > 0 and top_k >= 1"));
        }
        if self.metrics_interval == 0 || self.fps_window < 2 {
            return Err(config_err("metrics_interval must be >= 1 and fps_window >= 2"));
        }
        Ok(())
    }

    pub fn frame_period_ms(&self) -> f64 {
        1000.0 / self.frame_rate
    }

    pub fn scales(&self) -> Vec<SsrGeometry> {
        let base = SsrGeometry::new(self.detection.base_width, self.detection.base_height)
            .expect("validated geometry");
        self.detection.scales.iter().map(|&f| base.scaled(f)).collect()
    }

    pub fn eye_template(&self) -> Result<EyeTemplatePair> {
        match &self.detection.template {
            Some(p) => EyeTemplatePair::from_bytes(&std::fs::read(p)?),
            None => Ok(EyeTemplatePair::synthetic_default()),
        }
    }
}

fn merge(doc: &mut Value, patch: &Value) {
    match (doc, patch) {
        (Value::Object(d), Value::Object(p)) => {
            for (k, v) in p {
                match d.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        d.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pointer::Mode;
    use serde_json::json;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        let back = PipelineConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        let odd = PipelineConfig {
            frame_rate: 29.97,
            detection: DetectionConfig { accept_threshold: 1.234567890123e6, ..Default::default() },
            ..cfg
        };
        assert_eq!(PipelineConfig::from_json(&odd.to_json()).unwrap(), odd);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg = PipelineConfig::from_json(r#"{"pointer": {"gain": 2.5}}"#).unwrap();
        assert_eq!(cfg.pointer.gain, 2.5);
        assert_eq!(cfg.pointer.screen_w, 1280);
        assert_eq!(cfg.blink.blink_length, 10);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(PipelineConfig::from_json(r#"{"frame_rat": 30}"#), Err(Error::Config(_))));
        assert!(PipelineConfig::from_json(r#"{"blink": {"blink_lenght": 5}}"#).is_err());
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        for bad in [
            r#"{"frame_rate": 0}"#,
            r#"{"detection": {"base_width": 25}}"#,
            r#"{"detection": {"scales": []}}"#,
            r#"{"nose": {"template_size": 14}}"#,
            r#"{"blink": {"pixel_threshold": 0}}"#,
            r#"{"pointer": {"gain": -1}}"#,
            r#"{"hough": {"theta_bins": 1}}"#,
        ] {
            assert!(PipelineConfig::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn patches_merge() {
        let cfg = PipelineConfig::default();
        let p = cfg.patched(&json!({"pointer": {"mode": "relative", "mirror_x": false}})).unwrap();
        assert_eq!(p.pointer.mode, Mode::Relative);
        assert!(!p.pointer.mirror_x);
        assert_eq!(p.pointer.gain, cfg.pointer.gain);
        assert!(cfg.patched(&json!({"pointer": {"bogus": 1}})).is_err());
    }

    #[test]
    fn scales_and_template() {
        let cfg = PipelineConfig::default();
        let dims: Vec<_> = cfg.scales().iter().map(|g| (g.w(), g.h())).collect();
        assert_eq!(dims, vec![(24, 12), (36, 18), (48, 24), (72, 36)]);
        assert_eq!(cfg.eye_template().unwrap(), EyeTemplatePair::synthetic_default());
    }

    #[test]
    fn template_path_resolves_next_to_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("eyes.ssrt"), EyeTemplatePair::synthetic_default().to_bytes()).unwrap();
        let cfg_path = dir.path().join("cfg.json");
        std::fs::write(&cfg_path, r#"{"detection": {"template": "eyes.ssrt"}}"#).unwrap();
        let cfg = PipelineConfig::load(&cfg_path).unwrap();
        assert_eq!(cfg.detection.template.as_deref(), Some(dir.path().join("eyes.ssrt").as_path()));
        assert_eq!(cfg.eye_template().unwrap(), EyeTemplatePair::synthetic_default());
    }
}
