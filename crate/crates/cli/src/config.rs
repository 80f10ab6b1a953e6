//! Plain-text run configuration: `key = value` lines under bracketed section
//! headers. Unknown keys and out-of-domain values are rejected with line
//! numbers; missing keys fall back to documented defaults.

use chd_core::{BoundaryTag, GridConfig, MaterialModel, MobilityLaw, StepperParams, SymTensor};
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone)]
pub struct ConfigIssue {
    /// 1-based line number; 0 marks a command-line override.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "override: {}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

#[derive(Debug)]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.0 {
            writeln!(f, "{issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

const SECTIONS: [&str; 5] = ["grid", "material", "stepper", "scenario", "output"];

/// Raw parse: sections of key -> (line, value). Kept around so overrides can
/// be applied before typed extraction.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, BTreeMap<String, (usize, String)>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig, ConfigErrors> {
        let mut issues = Vec::new();
        let mut raw = RawConfig::default();
        let mut current: Option<String> = None;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let stripped = match line.find('#') {
                Some(pos) => &line[..pos],
                None => line,
            }
            .trim();
            if stripped.is_empty() {
                continue;
            }
            if let Some(name) = stripped.strip_prefix('[') {
                match name.strip_suffix(']') {
                    Some(name) if SECTIONS.contains(&name) => {
                        raw.entries.entry(name.to_string()).or_default();
                        current = Some(name.to_string());
                    }
                    Some(name) => issues.push(ConfigIssue {
                        line: line_no,
                        message: format!("unknown section [{name}]"),
                    }),
                    None => issues.push(ConfigIssue {
                        line: line_no,
                        message: "malformed section header".to_string(),
                    }),
                }
                continue;
            }
            let Some((key, value)) = stripped.split_once('=') else {
                issues.push(ConfigIssue {
                    line: line_no,
                    message: format!("expected key = value, got {stripped:?}"),
                });
                continue;
            };
            let Some(section) = &current else {
                issues.push(ConfigIssue {
                    line: line_no,
                    message: "key before any [section] header".to_string(),
                });
                continue;
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            raw.entries
                .get_mut(section)
                .unwrap()
                .insert(key, (line_no, value));
        }
        for section in SECTIONS {
            if !raw.entries.contains_key(section) {
                issues.push(ConfigIssue {
                    line: 0,
                    message: format!("missing section [{section}]"),
                });
            }
        }
        if issues.is_empty() {
            Ok(raw)
        } else {
            Err(ConfigErrors(issues))
        }
    }

    /// Applies a `section.key=value` override (line 0).
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigIssue> {
        let (path, value) = spec.split_once('=').ok_or_else(|| ConfigIssue {
            line: 0,
            message: format!("override {spec:?} is not of the form section.key=value"),
        })?;
        let (section, key) = path.split_once('.').ok_or_else(|| ConfigIssue {
            line: 0,
            message: format!("override key {path:?} is not of the form section.key"),
        })?;
        if !SECTIONS.contains(&section.trim()) {
            return Err(ConfigIssue {
                line: 0,
                message: format!("unknown section {:?} in override", section.trim()),
            });
        }
        self.entries
            .entry(section.trim().to_string())
            .or_default()
            .insert(key.trim().to_string(), (0, value.trim().to_string()));
        Ok(())
    }
}

/// Fully validated run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub material: MaterialModel,
    pub stepper: StepperParams,
    pub scenario_name: String,
    pub stretch_rate: f64,
    pub amplitude: f64,
    pub out_dir: String,
    pub snapshot_stride: usize,
    pub seed: u64,
}

/// Tracks consumption of raw keys so leftovers can be reported as unknown.
struct Section<'a> {
    name: String,
    map: BTreeMap<String, (usize, String)>,
    issues: &'a mut Vec<ConfigIssue>,
}

impl<'a> Section<'a> {
    fn f64_or(&mut self, key: &str, default: f64) -> f64 {
        match self.map.remove(key) {
            None => default,
            Some((line, text)) => match text.parse::<f64>() {
                Ok(v) => v,
                Err(_) => {
                    self.issues.push(ConfigIssue {
                        line,
                        message: format!("[{}] {key}: not a number: {text:?}", self.name),
                    });
                    default
                }
            },
        }
    }

    fn usize_or(&mut self, key: &str, default: usize) -> usize {
        match self.map.remove(key) {
            None => default,
            Some((line, text)) => match text.parse::<usize>() {
                Ok(v) => v,
                Err(_) => {
                    self.issues.push(ConfigIssue {
                        line,
                        message: format!(
                            "[{}] {key}: not a nonnegative integer: {text:?}",
                            self.name
                        ),
                    });
                    default
                }
            },
        }
    }

    fn string_or(&mut self, key: &str, default: &str) -> String {
        match self.map.remove(key) {
            None => default.to_string(),
            Some((_, text)) => text,
        }
    }

    fn tag_or(&mut self, key: &str, default: BoundaryTag) -> BoundaryTag {
        match self.map.remove(key) {
            None => default,
            Some((line, text)) => match text.to_ascii_lowercase().as_str() {
                "dirichlet" => BoundaryTag::Dirichlet,
                "neumann" => BoundaryTag::Neumann,
                _ => {
                    self.issues.push(ConfigIssue {
                        line,
                        message: format!(
                            "[{}] {key}: expected dirichlet or neumann, got {text:?}",
                            self.name
                        ),
                    });
                    default
                }
            },
        }
    }

    fn finish(self) {
        for (key, (line, _)) in self.map {
            self.issues.push(ConfigIssue {
                line,
                message: format!("[{}] unknown key {key:?}", self.name),
            });
        }
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let raw = RawConfig::parse(text)?;
    from_raw(raw)
}

pub fn from_raw(raw: RawConfig) -> Result<RunConfig, ConfigErrors> {
    let mut issues = Vec::new();
    // remember line numbers before consumption for domain diagnostics
    let mut lines: BTreeMap<String, usize> = BTreeMap::new();
    for (section, map) in &raw.entries {
        for (key, (line, _)) in map {
            lines.insert(format!("{section}.{key}"), *line);
        }
    }

    fn take<'a>(raw: &RawConfig, name: &str, issues: &'a mut Vec<ConfigIssue>) -> Section<'a> {
        Section {
            name: name.to_string(),
            map: raw.entries.get(name).cloned().unwrap_or_default(),
            issues,
        }
    }

    // [grid]
    let mut sec = take(&raw, "grid", &mut issues);
    let dimension = sec.usize_or("dimension", 1);
    let length_x = sec.f64_or("length_x", 1.0);
    let length_y = sec.f64_or("length_y", 1.0);
    let nodes_x = sec.usize_or("nodes_x", 65);
    let nodes_y = sec.usize_or("nodes_y", 9);
    let left = sec.tag_or("left", BoundaryTag::Dirichlet);
    let right = sec.tag_or("right", BoundaryTag::Dirichlet);
    let bottom = sec.tag_or("bottom", BoundaryTag::Neumann);
    let top = sec.tag_or("top", BoundaryTag::Neumann);
    sec.finish();
    let grid = GridConfig {
        dimension,
        lengths: [length_x, length_y],
        nodes: [nodes_x, nodes_y],
        face_tags: [left, right, bottom, top],
    };

    // [material]
    let mut sec = take(&raw, "material", &mut issues);
    let mut material = MaterialModel::default_for_dim(if dimension == 2 { 2 } else { 1 });
    material.eta = sec.f64_or("eta", material.eta);
    material.lambda_l = sec.f64_or("lambda", material.lambda_l);
    material.mu_l = sec.f64_or("mu", material.mu_l);
    if dimension == 2 {
        material.ehat = SymTensor::new(
            sec.f64_or("eigenstrain_xx", 1.0),
            sec.f64_or("eigenstrain_yy", 1.0),
            sec.f64_or("eigenstrain_xy", 0.0),
        );
    } else {
        material.ehat = SymTensor::scalar(sec.f64_or("eigenstrain", 1.0));
    }
    material.alpha = sec.f64_or("alpha", material.alpha);
    material.psi_scale = sec.f64_or("psi_scale", material.psi_scale);
    let m0 = sec.f64_or("mobility_m0", 1.0);
    let m1 = sec.f64_or("mobility_m1", 0.0);
    material.mobility = if m1 == 0.0 {
        MobilityLaw::Constant { m0 }
    } else {
        MobilityLaw::Affine { m0, m1 }
    };
    material.p = sec.f64_or("p", material.p);
    material.two_star = sec.f64_or("two_star", material.two_star);
    material.stiffness_intercept = sec.f64_or("stiffness_intercept", 0.0);
    material.stiffness_slope = sec.f64_or("stiffness_slope", 1.0);
    sec.finish();

    // [stepper]
    let mut sec = take(&raw, "stepper", &mut issues);
    let defaults = StepperParams::default();
    let stepper = StepperParams {
        tau: sec.f64_or("tau", defaults.tau),
        delta: sec.f64_or("delta", defaults.delta),
        t_final: sec.f64_or("t_final", defaults.t_final),
        outer_tol: sec.f64_or("outer_tol", defaults.outer_tol),
        block_tol: sec.f64_or("block_tol", defaults.block_tol),
        linear_tol: sec.f64_or("linear_tol", defaults.linear_tol),
        max_outer: sec.usize_or("max_outer", defaults.max_outer),
        max_block_iters: sec.usize_or("max_block_iters", defaults.max_block_iters),
        max_linear_iters: sec.usize_or("max_linear_iters", defaults.max_linear_iters),
        armijo: sec.f64_or("armijo", defaults.armijo),
        backtrack: sec.f64_or("backtrack", defaults.backtrack),
    };
    sec.finish();

    // [scenario]
    let mut sec = take(&raw, "scenario", &mut issues);
    let scenario_name = sec.string_or("name", "equilibrium");
    let stretch_rate = sec.f64_or("rate", 0.2);
    let amplitude = sec.f64_or("amplitude", 0.02);
    sec.finish();

    // [output]
    let mut sec = take(&raw, "output", &mut issues);
    let out_dir = sec.string_or("directory", "out");
    let snapshot_stride = sec.usize_or("snapshot_stride", 10);
    let seed = sec.usize_or("seed", 42) as u64;
    sec.finish();

    // domain validation with key attribution
    let line_for = |key: &str| lines.get(key).copied().unwrap_or(0);
    if dimension != 1 && dimension != 2 {
        issues.push(ConfigIssue {
            line: line_for("grid.dimension"),
            message: format!("grid.dimension must be 1 or 2, got {dimension}"),
        });
    }
    if stepper.tau <= 0.0 {
        issues.push(ConfigIssue {
            line: line_for("stepper.tau"),
            message: format!("stepper.tau must be positive, got {}", stepper.tau),
        });
    }
    if stepper.t_final <= 0.0 {
        issues.push(ConfigIssue {
            line: line_for("stepper.t_final"),
            message: format!("stepper.t_final must be positive, got {}", stepper.t_final),
        });
    }
    for (key, value) in [
        ("stepper.outer_tol", stepper.outer_tol),
        ("stepper.block_tol", stepper.block_tol),
        ("stepper.linear_tol", stepper.linear_tol),
    ] {
        if value <= 0.0 {
            issues.push(ConfigIssue {
                line: line_for(key),
                message: format!("{key} must be positive, got {value}"),
            });
        }
    }
    if stepper.delta < 0.0 {
        issues.push(ConfigIssue {
            line: line_for("stepper.delta"),
            message: format!("stepper.delta must be nonnegative, got {}", stepper.delta),
        });
    }
    if let Err(e) = material.validate_parameters() {
        issues.push(ConfigIssue {
            line: 0,
            message: format!("material: {e}"),
        });
    }
    if !matches!(
        scenario_name.as_str(),
        "equilibrium" | "stretch" | "phase-separation" | "phase_separation"
    ) {
        issues.push(ConfigIssue {
            line: line_for("scenario.name"),
            message: format!("unknown scenario {scenario_name:?}"),
        });
    }
    if snapshot_stride == 0 {
        issues.push(ConfigIssue {
            line: line_for("output.snapshot_stride"),
            message: "output.snapshot_stride must be at least 1".to_string(),
        });
    }

    if issues.is_empty() {
        Ok(RunConfig {
            grid,
            material,
            stepper,
            scenario_name,
            stretch_rate,
            amplitude,
            out_dir,
            snapshot_stride,
            seed,
        })
    } else {
        Err(ConfigErrors(issues))
    }
}
