use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentError;
use crate::model::{ModelConfig, DEFAULT_HEAD_DIM};
use crate::tasks::TaskKind;
use crate::train::{TrainConfig, DESK_HEAD_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    FixedDepthScaleWidth,
    FixedWidthScaleDepth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    #[default]
    Full,
    Desk,
}

/// `[seeds]`: either `start` and `count`, or an explicit `list`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SeedsSection {
    start: Option<u64>,
    count: Option<u64>,
    list: Option<Vec<u64>>,
}

/// `[scale]`: the axis plus the fixed dimension and the swept values.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScaleSection {
    axis: SweepAxis,
    head_dim: Option<usize>,
    depth: Option<usize>,
    width: Option<usize>,
    depths: Option<Vec<usize>>,
    widths: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    name: String,
    task: TaskKind,
    #[serde(default)]
    preset: PresetName,
    output_dir: PathBuf,
    max_parallel: Option<usize>,
    #[serde(default)]
    checkpoints: bool,
    seeds: SeedsSection,
    scale: ScaleSection,
    #[serde(default)]
    train: toml::Table,
}

/// A fully resolved sweep: every (scale point, seed) cell is one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub name: String,
    pub task_kind: TaskKind,
    pub sweep_axis: SweepAxis,
    pub scale_points: Vec<ModelConfig>,
    pub seeds: Vec<u64>,
    /// Shared by every cell; the cell's seed replaces `train.seed`.
    pub train: TrainConfig,
    pub output_dir: PathBuf,
    pub max_parallel: usize,
    pub checkpoints: bool,
}

pub fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Parses `a..b` (half-open) or `a..=b`.
pub fn parse_seed_range(text: &str) -> Result<Vec<u64>, ExperimentError> {
    let bad = || ExperimentError::Config(format!("seed range {text:?} is not of the form a..b or a..=b"));
    let (lo, hi, inclusive) = if let Some((a, b)) = text.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = text.split_once("..") {
        (a, b, false)
    } else {
        return Err(bad());
    };
    let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: u64 = hi.trim().parse().map_err(|_| bad())?;
    let seeds: Vec<u64> = if inclusive { (lo..=hi).collect() } else { (lo..hi).collect() };
    if seeds.is_empty() {
        return Err(ExperimentError::Config(format!("seed range {text:?} is empty")));
    }
    Ok(seeds)
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let file: SweepFile = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        Self::resolve(file)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|e| ExperimentError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ExperimentError::Config(m) => ExperimentError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn resolve(file: SweepFile) -> Result<Self, ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        let mut template = toml::Table::try_from(TrainConfig::preset(file.task, file.preset == PresetName::Desk))
            .map_err(|e| ExperimentError::Config(e.to_string()))?;
        for (key, value) in file.train {
            if key == "task_kind" || key == "seed" {
                return bad(format!("train.{key} is set by the sweep, not the template"));
            }
            template.insert(key, value);
        }
        let train: TrainConfig = toml::Value::Table(template)
            .try_into()
            .map_err(|e: toml::de::Error| ExperimentError::Config(format!("train: {e}")))?;

        let seeds = match (file.seeds.start, file.seeds.count, file.seeds.list) {
            (Some(start), Some(count), None) => (start..start + count).collect(),
            (None, None, Some(list)) => list,
            _ => return bad("seeds needs either start and count, or list".into()),
        };

        let s = file.scale;
        let shapes: Vec<(usize, usize)> = match s.axis {
            SweepAxis::FixedDepthScaleWidth => match (s.depth, s.widths, s.width, s.depths) {
                (Some(depth), Some(widths), None, None) => widths.into_iter().map(|w| (depth, w)).collect(),
                _ => return bad("fixed_depth_scale_width needs depth and widths only".into()),
            },
            SweepAxis::FixedWidthScaleDepth => match (s.width, s.depths, s.depth, s.widths) {
                (Some(width), Some(depths), None, None) => depths.into_iter().map(|d| (d, width)).collect(),
                _ => return bad("fixed_width_scale_depth needs width and depths only".into()),
            },
        };
        let head_dim = s.head_dim.unwrap_or(match file.preset {
            PresetName::Full => DEFAULT_HEAD_DIM,
            PresetName::Desk => DESK_HEAD_DIM,
        });
        if head_dim == 0 {
            return bad("scale.head_dim must be positive".into());
        }
        let mut points = Vec::with_capacity(shapes.len());
        for (depth, width) in shapes {
            let m = train.model_with_heads(depth, width, head_dim);
            if m.hidden_dim() != width {
                return bad(format!("width {width} is not a multiple of the {}-wide heads", m.head_dim));
            }
            points.push(m);
        }

        let cfg = Self {
            name: file.name,
            task_kind: file.task,
            sweep_axis: s.axis,
            scale_points: points,
            seeds,
            train,
            output_dir: file.output_dir,
            max_parallel: file.max_parallel.unwrap_or_else(default_parallelism),
            checkpoints: file.checkpoints,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.scale_points.is_empty() {
            return bad("at least one scale point is required".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        let mut seen = HashSet::new();
        if let Some(s) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return bad(format!("seed {s} is listed twice"));
        }
        if self.scale_points.windows(2).any(|w| w[0].param_count() >= w[1].param_count()) {
            return bad("scale points must be strictly increasing in parameter count".into());
        }
        if self.max_parallel == 0 {
            return bad("max_parallel must be positive".into());
        }
        if self.train.task_kind != self.task_kind {
            return bad("train template task differs from the sweep task".into());
        }
        for m in &self.scale_points {
            self.train.validate(m).map_err(|e| ExperimentError::Config(format!("{}: {e}", m.scale_label())))?;
        }
        Ok(())
    }

    /// Replaces the seed list, e.g. from `--seed-range`.
    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Result<Self, ExperimentError> {
        self.seeds = seeds;
        self.validate()?;
        Ok(self)
    }

    pub fn with_eval_every(mut self, every: Option<usize>) -> Result<Self, ExperimentError> {
        self.train.eval_every = every;
        self.validate()?;
        Ok(self)
    }

    /// The training configuration of one cell.
    pub fn train_for_seed(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }

    /// SHA-256 over everything that determines run results. Output location,
    /// parallelism and checkpointing are excluded.
    pub fn config_hash(&self) -> String {
        #[derive(Serialize)]
        struct Hashed<'a> {
            task_kind: TaskKind,
            sweep_axis: SweepAxis,
            scale_points: &'a [ModelConfig],
            seeds: &'a [u64],
            train: &'a TrainConfig,
        }
        let json = serde_json::to_vec(&Hashed {
            task_kind: self.task_kind,
            sweep_axis: self.sweep_axis,
            scale_points: &self.scale_points,
            seeds: &self.seeds,
            train: &self.train,
        })
        .expect("sweep configuration serializes");
        let digest = Sha256::digest(json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESK: &str = r#"
name = "t"
task = "count"
preset = "desk"
output_dir = "out"
max_parallel = 2

[seeds]
start = 3
count = 2

[scale]
axis = "fixed_width_scale_depth"
width = 64
depths = [1, 2]

[train]
steps = 5
"#;

    #[test]
    fn parses_and_overrides() {
        let c = SweepConfig::from_toml_str(DESK).unwrap();
        assert_eq!(c.seeds, vec![3, 4]);
        assert_eq!(c.train.steps, 5);
        assert_eq!(c.train.max_train_length, 10);
        assert_eq!(c.scale_points.len(), 2);
        assert_eq!(c.scale_points[1].depth, 2);
        assert_eq!(c.train_for_seed(9).seed, 9);
    }

    #[test]
    fn rejects_unknown_keys() {
        let top = DESK.replace("max_parallel = 2", "max_parallel = 2\ncolour = 1");
        assert!(SweepConfig::from_toml_str(&top).is_err());
        let train = DESK.replace("steps = 5", "steps = 5\nstepz = 6");
        assert!(SweepConfig::from_toml_str(&train).is_err());
        let seed = DESK.replace("steps = 5", "seed = 1");
        assert!(SweepConfig::from_toml_str(&seed).is_err());
    }

    #[test]
    fn rejects_bad_grids() {
        let dup = DESK.replace("count = 2", "count = 2\nlist = [1]");
        assert!(SweepConfig::from_toml_str(&dup).is_err());
        let order = DESK.replace("depths = [1, 2]", "depths = [2, 1]");
        assert!(SweepConfig::from_toml_str(&order).is_err());
        let mixed = DESK.replace("width = 64", "width = 64\ndepth = 2");
        assert!(SweepConfig::from_toml_str(&mixed).is_err());
        let list = DESK.replace("start = 3\ncount = 2", "list = [1, 1]");
        assert!(SweepConfig::from_toml_str(&list).is_err());
    }

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seed_range("2..5").unwrap(), vec![2, 3, 4]);
        assert_eq!(parse_seed_range("2..=3").unwrap(), vec![2, 3]);
        assert!(parse_seed_range("5..5").is_err());
        assert!(parse_seed_range("x").is_err());
    }

    #[test]
    fn hash_tracks_run_inputs_only() {
        let a = SweepConfig::from_toml_str(DESK).unwrap();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        b.max_parallel = 7;
        assert_eq!(a.config_hash(), b.config_hash());
        b.train.steps += 1;
        assert_ne!(a.config_hash(), b.config_hash());
    }
}
