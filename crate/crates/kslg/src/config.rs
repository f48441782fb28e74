//! Flat-text experiment configuration.
//!
//! Grammar: one `key = value` pair per line, dotted section prefixes
//! (`model.chi = 1.0`), `#` starts a comment, blank lines ignored.
//! Lists are comma-separated. Unknown keys are rejected so typos cannot
//! silently fall back to defaults. Parsing the serialized form of a config
//! reproduces it exactly.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::params::ModelParams;
use crate::profiles::Profile;
use crate::solver::{AdvectionMode, Scheme, SolverConfig};
use crate::weakform::WeakFormConfig;

/// Where a component's initial data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    Profile(Profile),
    Snapshot(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub dims: usize,
    pub extents: Vec<f64>,
    pub cells: Vec<usize>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        Grid::new(self.dims, &self.extents, &self.cells)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    K,
    Chi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    pub grid: GridSpec,
    pub init_u: InitSpec,
    pub init_v: InitSpec,
    pub solver: SolverConfig,
    pub weakform: WeakFormConfig,
    pub sweep: Option<SweepSpec>,
    pub output_dir: Option<PathBuf>,
}

struct KeyMap {
    entries: BTreeMap<String, (String, usize)>,
    consumed: std::cell::RefCell<Vec<String>>,
}

impl KeyMap {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`, got `{raw}`",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(Error::Config(format!("line {}: empty key or value", lineno + 1)));
            }
            if entries.insert(key.clone(), (value, lineno + 1)).is_some() {
                return Err(Error::Config(format!("duplicate key `{key}`")));
            }
        }
        Ok(KeyMap {
            entries,
            consumed: std::cell::RefCell::new(Vec::new()),
        })
    }

    fn get(&self, key: &str) -> Option<String> {
        self.consumed.borrow_mut().push(key.to_string());
        self.entries.get(key).map(|(v, _)| v.clone())
    }

    fn require(&self, key: &str) -> Result<String> {
        self.get(key)
            .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    fn f64(&self, key: &str) -> Result<f64> {
        let v = self.require(key)?;
        v.parse()
            .map_err(|_| Error::Config(format!("key `{key}`: cannot parse `{v}` as a number")))
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("key `{key}`: cannot parse `{v}` as a number"))),
            None => Ok(default),
        }
    }

    fn usize(&self, key: &str) -> Result<usize> {
        let v = self.require(key)?;
        v.parse()
            .map_err(|_| Error::Config(format!("key `{key}`: cannot parse `{v}` as an integer")))
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            Some(v) => v.parse().map_err(|_| {
                Error::Config(format!("key `{key}`: cannot parse `{v}` as an integer"))
            }),
            None => Ok(default),
        }
    }

    fn f64_list(&self, key: &str) -> Result<Vec<f64>> {
        let v = self.require(key)?;
        v.split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| {
                    Error::Config(format!("key `{key}`: cannot parse `{s}` in list"))
                })
            })
            .collect()
    }

    fn usize_list(&self, key: &str) -> Result<Vec<usize>> {
        let v = self.require(key)?;
        v.split(',')
            .map(|s| {
                s.trim().parse().map_err(|_| {
                    Error::Config(format!("key `{key}`: cannot parse `{s}` in list"))
                })
            })
            .collect()
    }

    fn reject_unknown(&self) -> Result<()> {
        let consumed = self.consumed.borrow();
        for (key, (_, lineno)) in &self.entries {
            if !consumed.iter().any(|c| c == key) {
                return Err(Error::Config(format!("line {lineno}: unknown key `{key}`")));
            }
        }
        Ok(())
    }
}

fn parse_center(map: &KeyMap, key: &str, dims: usize) -> Result<[f64; 2]> {
    let list = map.f64_list(key)?;
    if list.len() != dims {
        return Err(Error::Config(format!(
            "key `{key}`: expected {dims} coordinates, got {}",
            list.len()
        )));
    }
    let mut c = [0.0; 2];
    c[..list.len()].copy_from_slice(&list);
    Ok(c)
}

fn parse_init(map: &KeyMap, section: &str, dims: usize) -> Result<InitSpec> {
    let profile = map.require(&format!("{section}.profile"))?;
    let spec = match profile.as_str() {
        "constant" => InitSpec::Profile(Profile::Constant {
            value: map.f64(&format!("{section}.value"))?,
        }),
        "gaussian-bump" => InitSpec::Profile(Profile::GaussianBump {
            base: map.f64(&format!("{section}.base"))?,
            amp: map.f64(&format!("{section}.amp"))?,
            center: parse_center(map, &format!("{section}.center"), dims)?,
            sigma: map.f64(&format!("{section}.sigma"))?,
        }),
        "two-bumps" => InitSpec::Profile(Profile::TwoBumps {
            base: map.f64(&format!("{section}.base"))?,
            amp1: map.f64(&format!("{section}.amp1"))?,
            center1: parse_center(map, &format!("{section}.center1"), dims)?,
            sigma1: map.f64(&format!("{section}.sigma1"))?,
            amp2: map.f64(&format!("{section}.amp2"))?,
            center2: parse_center(map, &format!("{section}.center2"), dims)?,
            sigma2: map.f64(&format!("{section}.sigma2"))?,
        }),
        "checkerboard-positive" => InitSpec::Profile(Profile::CheckerboardPositive {
            base: map.f64(&format!("{section}.base"))?,
            amp: map.f64(&format!("{section}.amp"))?,
        }),
        "snapshot" => InitSpec::Snapshot(PathBuf::from(
            map.require(&format!("{section}.snapshot"))?,
        )),
        other => {
            return Err(Error::Config(format!(
                "{section}.profile: unknown profile `{other}`"
            )))
        }
    };
    Ok(spec)
}

pub fn parse(text: &str) -> Result<ExperimentConfig> {
    let map = KeyMap::parse(text)?;

    let model = ModelParams::new(
        map.f64("model.chi")?,
        map.f64("model.a")?,
        map.f64("model.b")?,
        map.usize_or("model.n", 3)? as u32,
        map.f64("model.k")?,
    )?;

    let dims = map.usize("grid.dims")?;
    let grid = GridSpec {
        dims,
        extents: map.f64_list("grid.extents")?,
        cells: map.usize_list("grid.cells")?,
    };
    grid.build()?;

    let init_u = parse_init(&map, "init_u", dims)?;
    let init_v = parse_init(&map, "init_v", dims)?;

    let scheme = match map.get("solver.scheme").as_deref() {
        None | Some("explicit") => Scheme::Explicit,
        Some("imex") => Scheme::Imex,
        Some(other) => {
            return Err(Error::Config(format!("solver.scheme: unknown scheme `{other}`")))
        }
    };
    let advection = match map.get("solver.advection").as_deref() {
        None | Some("upwind") => AdvectionMode::Upwind,
        Some("central") => AdvectionMode::Central,
        Some(other) => {
            return Err(Error::Config(format!(
                "solver.advection: unknown mode `{other}`"
            )))
        }
    };
    let solver = SolverConfig {
        dt_max: map.f64("solver.dt_max")?,
        cfl_safety: map.f64_or("solver.cfl_safety", 0.9)?,
        t_end: map.f64("solver.t_end")?,
        scheme,
        advection,
        record_stride: map.usize_or("solver.record_stride", 1)?,
        snapshot_stride: map.usize_or("solver.snapshot_stride", 0)?,
    };
    solver.validate()?;

    let weakform = WeakFormConfig {
        trace_exponent: map.f64_or(
            "weakform.trace_exponent",
            WeakFormConfig::default().trace_exponent,
        )?,
        spatial_modes: map.usize_or("weakform.spatial_modes", 6)?,
        temporal_modes: map.usize_or("weakform.temporal_modes", 5)?,
        tolerance: map.f64_or("weakform.tolerance", 1e-2)?,
    };
    weakform.validate(model.n)?;

    let sweep = match map.get("sweep.axis") {
        None => {
            // Consume values so a dangling list is still flagged as unknown
            // only when the axis is missing.
            None
        }
        Some(axis) => {
            let axis = match axis.as_str() {
                "k" => SweepAxis::K,
                "chi" => SweepAxis::Chi,
                other => {
                    return Err(Error::Config(format!("sweep.axis: unknown axis `{other}`")))
                }
            };
            Some(SweepSpec {
                axis,
                values: map.f64_list("sweep.values")?,
            })
        }
    };

    let output_dir = map.get("output.dir").map(PathBuf::from);

    map.reject_unknown()?;

    Ok(ExperimentConfig {
        model,
        grid,
        init_u,
        init_v,
        solver,
        weakform,
        sweep,
        output_dir,
    })
}

fn push_center(out: &mut String, key: &str, center: &[f64; 2], dims: usize) {
    let coords: Vec<String> = center[..dims].iter().map(|c| format!("{c:?}")).collect();
    out.push_str(&format!("{key} = {}\n", coords.join(",")));
}

fn serialize_init(out: &mut String, section: &str, spec: &InitSpec, dims: usize) {
    match spec {
        InitSpec::Profile(Profile::Constant { value }) => {
            out.push_str(&format!("{section}.profile = constant\n"));
            out.push_str(&format!("{section}.value = {value:?}\n"));
        }
        InitSpec::Profile(Profile::GaussianBump {
            base,
            amp,
            center,
            sigma,
        }) => {
            out.push_str(&format!("{section}.profile = gaussian-bump\n"));
            out.push_str(&format!("{section}.base = {base:?}\n"));
            out.push_str(&format!("{section}.amp = {amp:?}\n"));
            push_center(out, &format!("{section}.center"), center, dims);
            out.push_str(&format!("{section}.sigma = {sigma:?}\n"));
        }
        InitSpec::Profile(Profile::TwoBumps {
            base,
            amp1,
            center1,
            sigma1,
            amp2,
            center2,
            sigma2,
        }) => {
            out.push_str(&format!("{section}.profile = two-bumps\n"));
            out.push_str(&format!("{section}.base = {base:?}\n"));
            out.push_str(&format!("{section}.amp1 = {amp1:?}\n"));
            push_center(out, &format!("{section}.center1"), center1, dims);
            out.push_str(&format!("{section}.sigma1 = {sigma1:?}\n"));
            out.push_str(&format!("{section}.amp2 = {amp2:?}\n"));
            push_center(out, &format!("{section}.center2"), center2, dims);
            out.push_str(&format!("{section}.sigma2 = {sigma2:?}\n"));
        }
        InitSpec::Profile(Profile::CheckerboardPositive { base, amp }) => {
            out.push_str(&format!("{section}.profile = checkerboard-positive\n"));
            out.push_str(&format!("{section}.base = {base:?}\n"));
            out.push_str(&format!("{section}.amp = {amp:?}\n"));
        }
        InitSpec::Snapshot(path) => {
            out.push_str(&format!("{section}.profile = snapshot\n"));
            out.push_str(&format!("{section}.snapshot = {}\n", path.display()));
        }
    }
}

/// Canonical serialization; `parse(serialize(cfg)) == cfg`.
pub fn serialize(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    let m = &cfg.model;
    out.push_str(&format!("model.chi = {:?}\n", m.chi));
    out.push_str(&format!("model.a = {:?}\n", m.a));
    out.push_str(&format!("model.b = {:?}\n", m.b));
    out.push_str(&format!("model.n = {}\n", m.n));
    out.push_str(&format!("model.k = {:?}\n", m.k));

    out.push_str(&format!("grid.dims = {}\n", cfg.grid.dims));
    let extents: Vec<String> = cfg.grid.extents.iter().map(|e| format!("{e:?}")).collect();
    out.push_str(&format!("grid.extents = {}\n", extents.join(",")));
    let cells: Vec<String> = cfg.grid.cells.iter().map(|c| c.to_string()).collect();
    out.push_str(&format!("grid.cells = {}\n", cells.join(",")));

    serialize_init(&mut out, "init_u", &cfg.init_u, cfg.grid.dims);
    serialize_init(&mut out, "init_v", &cfg.init_v, cfg.grid.dims);

    let s = &cfg.solver;
    out.push_str(&format!(
        "solver.scheme = {}\n",
        match s.scheme {
            Scheme::Explicit => "explicit",
            Scheme::Imex => "imex",
        }
    ));
    out.push_str(&format!(
        "solver.advection = {}\n",
        match s.advection {
            AdvectionMode::Upwind => "upwind",
            AdvectionMode::Central => "central",
        }
    ));
    out.push_str(&format!("solver.dt_max = {:?}\n", s.dt_max));
    out.push_str(&format!("solver.cfl_safety = {:?}\n", s.cfl_safety));
    out.push_str(&format!("solver.t_end = {:?}\n", s.t_end));
    out.push_str(&format!("solver.record_stride = {}\n", s.record_stride));
    out.push_str(&format!("solver.snapshot_stride = {}\n", s.snapshot_stride));

    let w = &cfg.weakform;
    out.push_str(&format!("weakform.trace_exponent = {:?}\n", w.trace_exponent));
    out.push_str(&format!("weakform.spatial_modes = {}\n", w.spatial_modes));
    out.push_str(&format!("weakform.temporal_modes = {}\n", w.temporal_modes));
    out.push_str(&format!("weakform.tolerance = {:?}\n", w.tolerance));

    if let Some(sweep) = &cfg.sweep {
        out.push_str(&format!(
            "sweep.axis = {}\n",
            match sweep.axis {
                SweepAxis::K => "k",
                SweepAxis::Chi => "chi",
            }
        ));
        let values: Vec<String> = sweep.values.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&format!("sweep.values = {}\n", values.join(",")));
    }
    if let Some(dir) = &cfg.output_dir {
        out.push_str(&format!("output.dir = {}\n", dir.display()));
    }
    out
}

pub fn parse_file(path: impl AsRef<std::path::Path>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
        Error::Config(format!("cannot read {}: {e}", path.as_ref().display()))
    })?;
    parse(&text)
}
