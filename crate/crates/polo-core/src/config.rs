//! Run configuration: one TOML file pinning everything a batch run needs —
//! scenes, episode count, seeds, kinematics, sensors, and policy choice.
//!
//! Every field has a default, so an empty file is a valid config and small
//! files stay small. Unknown keys are rejected rather than ignored: a typo
//! in a parameter name should fail loudly, not silently run the default.
//!
//! Seeding scheme: episode `e` runs on scene `scene_seeds[e % len]` with
//! episode seed `seed_base + e`. Two runs from the same config therefore
//! execute identical episode sets, and growing `episodes` extends a run
//! without disturbing the episodes already defined.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scenegen::GenParams;
use crate::scoring::ScoreParams;
use crate::sim::{KinematicsParams, SensorParams};

/// Policy selection and the knobs shared by the navigation controller.
///
/// Plain values come before the nested `score` table so the struct
/// serializes to valid TOML in declaration order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    /// One of: polo-dense, polo-sampled, polo-2d, max-coverage, max-prob, fbe.
    pub name: String,
    /// Candidate count for the sampled variant.
    pub k: usize,
    /// RNG seed for the sampled variant's candidate draw.
    pub seed: u64,
    /// Replan at latest every this many actions.
    pub t_replan: u32,
    /// Probability at which a voxel counts as a confirmed target.
    pub p_confirm: f64,
    /// Body height (meters) used to pick the 2D traversability slice.
    pub body_height_m: f64,
    pub score: ScoreParams,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            name: "polo-dense".to_string(),
            k: 150,
            seed: 7,
            t_replan: 25,
            p_confirm: 0.7,
            body_height_m: 0.88,
            score: ScoreParams::default(),
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        self.score.validate()?;
        if self.k == 0 {
            return Err(Error::InvalidParam("policy.k must be at least 1".into()));
        }
        if self.t_replan == 0 {
            return Err(Error::InvalidParam("policy.t_replan must be at least 1".into()));
        }
        if !(self.p_confirm > 0.0 && self.p_confirm < 1.0) {
            return Err(Error::InvalidParam(format!(
                "policy.p_confirm must lie in (0, 1), got {}",
                self.p_confirm
            )));
        }
        if !(self.body_height_m > 0.0) {
            return Err(Error::InvalidParam(format!(
                "policy.body_height_m must be positive, got {}",
                self.body_height_m
            )));
        }
        Ok(())
    }
}

/// Complete description of a batch run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Scene generator seeds; episodes cycle through this list.
    pub scene_seeds: Vec<u64>,
    /// Total episodes to run.
    pub episodes: usize,
    /// Episode seed for episode `e` is `seed_base + e`.
    pub seed_base: u64,
    /// Worker threads for episode execution (1 = fully serial).
    pub parallelism: usize,
    pub scene: GenParams,
    pub kinematics: KinematicsParams,
    pub sensors: SensorParams,
    pub policy: PolicyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scene_seeds: vec![1, 2, 3, 4],
            episodes: 8,
            seed_base: 1000,
            parallelism: 1,
            scene: GenParams::default(),
            kinematics: KinematicsParams::default(),
            sensors: SensorParams::default(),
            policy: PolicyConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parse a TOML document; unknown keys and type mismatches are errors.
    pub fn from_toml_str(s: &str) -> Result<RunConfig> {
        toml::from_str(s).map_err(|e| Error::parse("run config", e.to_string()))
    }

    /// Serialize the fully resolved configuration (defaults included), so
    /// the echoed copy in an output directory is self-contained.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::parse("run config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        RunConfig::from_toml_str(&text)
    }

    /// Scene generator seed for episode `e`.
    pub fn scene_seed_for(&self, episode: usize) -> u64 {
        self.scene_seeds[episode % self.scene_seeds.len()]
    }

    /// Per-episode seed (start sampling, detector noise) for episode `e`.
    pub fn episode_seed_for(&self, episode: usize) -> u64 {
        self.seed_base + episode as u64
    }

    pub fn validate(&self) -> Result<()> {
        if self.scene_seeds.is_empty() {
            return Err(Error::InvalidParam("scene_seeds must not be empty".into()));
        }
        if self.episodes == 0 {
            return Err(Error::InvalidParam("episodes must be at least 1".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::InvalidParam("parallelism must be at least 1".into()));
        }
        self.scene.validate()?;
        self.validate_kinematics()?;
        self.validate_sensors()?;
        self.policy.validate()?;
        Ok(())
    }

    fn validate_kinematics(&self) -> Result<()> {
        let k = &self.kinematics;
        if !(k.forward_step > 0.0) {
            return Err(Error::InvalidParam(format!(
                "kinematics.forward_step must be positive, got {}",
                k.forward_step
            )));
        }
        if !(k.turn_angle > 0.0 && k.turn_angle <= std::f64::consts::PI) {
            return Err(Error::InvalidParam(format!(
                "kinematics.turn_angle must lie in (0, pi], got {}",
                k.turn_angle
            )));
        }
        if !(k.agent_radius > 0.0) {
            return Err(Error::InvalidParam(format!(
                "kinematics.agent_radius must be positive, got {}",
                k.agent_radius
            )));
        }
        if !(k.success_dist > 0.0) {
            return Err(Error::InvalidParam(format!(
                "kinematics.success_dist must be positive, got {}",
                k.success_dist
            )));
        }
        if k.max_steps == 0 {
            return Err(Error::InvalidParam("kinematics.max_steps must be at least 1".into()));
        }
        Ok(())
    }

    fn validate_sensors(&self) -> Result<()> {
        let s = &self.sensors;
        s.det.validate()?;
        s.lik.validate()?;
        if !(s.prior > 0.0 && s.prior < 1.0) {
            return Err(Error::InvalidParam(format!(
                "sensors.prior must lie in (0, 1), got {}",
                s.prior
            )));
        }
        if !(s.r_map > 0.0) {
            return Err(Error::InvalidParam(format!(
                "sensors.r_map must be positive, got {}",
                s.r_map
            )));
        }
        if !(s.r_check > 0.0) {
            return Err(Error::InvalidParam(format!(
                "sensors.r_check must be positive, got {}",
                s.r_check
            )));
        }
        if s.cam.width == 0 || s.cam.height == 0 {
            return Err(Error::InvalidParam("sensors.cam must have nonzero resolution".into()));
        }
        if !(s.cam.max_depth > 0.0) {
            return Err(Error::InvalidParam(format!(
                "sensors.cam.max_depth must be positive, got {}",
                s.cam.max_depth
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_default_config_is_valid_and_round_trips() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_toml_string().unwrap();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
        // The echoed document is fully resolved: every section present.
        for section in ["[scene]", "[kinematics]", "[sensors]", "[policy]"] {
            assert!(text.contains(section), "missing {section} in:\n{text}");
        }
    }

    #[test]
    fn test_empty_and_partial_documents_fill_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());

        let cfg = RunConfig::from_toml_str(
            "episodes = 3\n\n[policy]\nname = \"fbe\"\n\n[scene]\nl = 48\n",
        )
        .unwrap();
        assert_eq!(cfg.episodes, 3);
        assert_eq!(cfg.policy.name, "fbe");
        assert_eq!(cfg.policy.k, 150);
        assert_eq!(cfg.scene.l, 48);
        assert_eq!(cfg.scene.voxel_size, GenParams::default().voxel_size);
        assert_eq!(cfg.kinematics, KinematicsParams::default());
    }

    #[test]
    fn test_unknown_keys_and_bad_types_rejected() {
        assert!(matches!(
            RunConfig::from_toml_str("episods = 3\n"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            RunConfig::from_toml_str("[policy]\nbeta = 5.0\n"),
            Err(Error::Parse { .. })
        ));
        assert!(matches!(
            RunConfig::from_toml_str("[policy.score]\nbeta = \"high\"\n"),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn test_proximity_weight_spelling() {
        let cfg = RunConfig::from_toml_str("[policy.score]\nweight = \"unit\"\n").unwrap();
        assert_eq!(cfg.policy.score.weight, crate::scoring::ProximityWeight::Unit);
        let text = cfg.to_toml_string().unwrap();
        assert!(text.contains("weight = \"unit\""));
        let cfg = RunConfig::from_toml_str("[policy.score]\nweight = \"inverse-distance\"\n")
            .unwrap();
        assert_eq!(
            cfg.policy.score.weight,
            crate::scoring::ProximityWeight::InverseDistance
        );
    }

    #[test]
    fn test_episode_seed_mapping_cycles_scenes() {
        let mut cfg = RunConfig::default();
        cfg.scene_seeds = vec![5, 9];
        cfg.seed_base = 2000;
        cfg.episodes = 5;
        let scenes: Vec<u64> = (0..cfg.episodes).map(|e| cfg.scene_seed_for(e)).collect();
        assert_eq!(scenes, vec![5, 9, 5, 9, 5]);
        let seeds: Vec<u64> = (0..cfg.episodes).map(|e| cfg.episode_seed_for(e)).collect();
        assert_eq!(seeds, vec![2000, 2001, 2002, 2003, 2004]);
    }

    #[test]
    fn test_validate_rejects_bad_fields() {
        let mut cfg = RunConfig::default();
        cfg.scene_seeds.clear();
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.episodes = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.parallelism = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.kinematics.forward_step = 0.0;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.kinematics.turn_angle = 4.0;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.policy.p_confirm = 1.0;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.sensors.prior = 0.0;
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.policy.score.beta = -1.0;
        assert!(cfg.validate().is_err());
    }
}
