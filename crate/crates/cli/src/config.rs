//! Flat key-value run configurations with sections.
//!
//! A run is driven by a single text file; every value has a default and
//! the resolved configuration (all defaults made explicit, keys in
//! canonical order) is echoed next to the outputs. The echo bytes are
//! hashed into a digest that every output file carries in its header, so
//! artifacts are traceable to the exact parameters that produced them.
//!
//! Worker count is deliberately *not* a configuration key: it comes from
//! the `QPERC_WORKERS` environment variable only, and never changes
//! output bytes.

use qperc_core::error::{Error, Result};
use qperc_core::ids::NormalizerKind;
use qperc_core::lattice::{ExhaustionSchedule, LatticePreset, PeriodicGraph};
use qperc_core::operator::{
    kernel_preset, BoundaryPerturbation, HoppingKernel, KernelPreset, PerturbationKind,
};
use qperc_core::percolation::{Configuration, PercolationLaw};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Default)]
struct RawConfig {
    // section -> key -> (value, line)
    values: BTreeMap<String, BTreeMap<String, (String, usize)>>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        let mut section = String::new();
        for (idx, line_raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = line_raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or(Error::Parse {
                    line: line_no,
                    msg: "unterminated section header".into(),
                })?;
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected `key = value`, got `{line}`"),
                });
            };
            if section.is_empty() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "key outside of any [section]".into(),
                });
            }
            raw.values
                .entry(section.clone())
                .or_default()
                .insert(key.trim().to_string(), (value.trim().to_string(), line_no));
        }
        Ok(raw)
    }

    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        self.values
            .get_mut(section)
            .and_then(|m| m.remove(key))
            .map(|(v, _)| v)
    }

    /// Any keys left after resolution are unknown; name the first one.
    fn reject_leftovers(&self) -> Result<()> {
        for (section, keys) in &self.values {
            if let Some((key, (_, line))) = keys.iter().next() {
                return Err(Error::Parse {
                    line: *line,
                    msg: format!("unknown configuration key `{section}.{key}`"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IdsEstimator {
    Exhaustion,
    Trace,
}

/// Fully resolved run configuration; every field explicit.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub graph_preset: String,
    pub graph_file: String,
    pub kernel_preset: String,
    pub kernel_file: String,
    pub nnn_t1: f64,
    pub nnn_t2: f64,
    pub p: f64,
    pub p_orbit: String,
    pub seed: u64,
    pub realization: u64,
    pub explicit_file: String,
    pub sizes: Vec<usize>,
    pub grid_points: usize,
    pub realizations: usize,
    pub buffer: usize,
    pub normalizer: NormalizerKind,
    pub estimator: IdsEstimator,
    pub infinite_cluster: bool,
    pub pert: String,
    pub pert_b: String,
    pub pert_strength: f64,
    pub pert_width: usize,
    pub pert_seed: u64,
    pub max_moment: usize,
    pub energy: f64,
    pub max_size: usize,
    pub shape_cap: usize,
    pub tau_res: f64,
    pub output_dir: String,
    pub emit_gnuplot: bool,

    /// Directory relative file references resolve against (the config
    /// file's directory); not part of the resolved echo.
    pub base_dir: PathBuf,

    // constructed objects
    pub graph: PeriodicGraph,
    pub kernel: HoppingKernel,
}

fn parse_field<T: std::str::FromStr>(section: &str, key: &str, value: &str) -> Result<T> {
    value.parse::<T>().map_err(|_| {
        Error::InvalidParameter(format!("{section}.{key}: cannot parse `{value}`"))
    })
}

fn invalid(section: &str, key: &str, msg: impl std::fmt::Display) -> Error {
    Error::InvalidParameter(format!("{section}.{key}: {msg}"))
}

impl RunConfig {
    pub fn load(path: &Path, emit_gnuplot_flag: bool) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidParameter(format!("config {}: {e}", path.display()))
        })?;
        RunConfig::from_text(&text, path.parent().unwrap_or(Path::new(".")), emit_gnuplot_flag)
    }

    /// Parse, apply defaults, validate, and build the graph and kernel.
    /// Relative file references are resolved against `base_dir`.
    pub fn from_text(text: &str, base_dir: &Path, emit_gnuplot_flag: bool) -> Result<RunConfig> {
        let mut raw = RawConfig::parse(text)?;
        let take = |raw: &mut RawConfig, s: &str, k: &str, default: &str| -> String {
            raw.take(s, k).unwrap_or_else(|| default.to_string())
        };

        let graph_preset = take(&mut raw, "graph", "preset", "square");
        let graph_file = take(&mut raw, "graph", "file", "");
        let kernel_preset_name = take(&mut raw, "kernel", "preset", "adjacency");
        let kernel_file = take(&mut raw, "kernel", "file", "");
        let nnn_t1: f64 = parse_field("kernel", "nnn_t1", &take(&mut raw, "kernel", "nnn_t1", "1"))?;
        let nnn_t2: f64 =
            parse_field("kernel", "nnn_t2", &take(&mut raw, "kernel", "nnn_t2", "0.5"))?;

        let p: f64 = parse_field("law", "p", &take(&mut raw, "law", "p", "0.5"))?;
        let p_orbit = take(&mut raw, "law", "p_orbit", "");
        let seed: u64 = parse_field("law", "seed", &take(&mut raw, "law", "seed", "1"))?;
        let realization: u64 = parse_field(
            "law",
            "realization",
            &take(&mut raw, "law", "realization", "0"),
        )?;
        let explicit_file = take(&mut raw, "law", "explicit_file", "");

        let sizes_text = take(&mut raw, "run", "sizes", "16,32,64");
        let grid_points: usize = parse_field(
            "run",
            "grid_points",
            &take(&mut raw, "run", "grid_points", "2001"),
        )?;
        let realizations: usize = parse_field(
            "run",
            "realizations",
            &take(&mut raw, "run", "realizations", "10"),
        )?;
        let buffer_raw: usize =
            parse_field("run", "buffer", &take(&mut raw, "run", "buffer", "0"))?;
        let normalizer_text = take(&mut raw, "run", "normalizer", "box");
        let estimator_text = take(&mut raw, "run", "estimator", "exhaustion");
        let infinite_cluster: bool = parse_field(
            "run",
            "infinite_cluster",
            &take(&mut raw, "run", "infinite_cluster", "false"),
        )?;
        let pert = take(&mut raw, "run", "pert", "none");
        let pert_b = take(&mut raw, "run", "pert_b", "periodic_wrap");
        let pert_strength: f64 = parse_field(
            "run",
            "pert_strength",
            &take(&mut raw, "run", "pert_strength", "1"),
        )?;
        let pert_width: usize = parse_field(
            "run",
            "pert_width",
            &take(&mut raw, "run", "pert_width", "1"),
        )?;
        let pert_seed: u64 =
            parse_field("run", "pert_seed", &take(&mut raw, "run", "pert_seed", "7"))?;
        let max_moment: usize = parse_field(
            "run",
            "max_moment",
            &take(&mut raw, "run", "max_moment", "6"),
        )?;
        let energy: f64 = parse_field("run", "energy", &take(&mut raw, "run", "energy", "0"))?;
        let max_size: usize =
            parse_field("run", "max_size", &take(&mut raw, "run", "max_size", "4"))?;
        let shape_cap: usize = parse_field(
            "run",
            "shape_cap",
            &take(&mut raw, "run", "shape_cap", "10"),
        )?;
        let tau_res: f64 =
            parse_field("run", "tau_res", &take(&mut raw, "run", "tau_res", "0"))?;

        let output_dir_text = take(&mut raw, "output", "dir", "out");
        let emit_gnuplot_cfg: bool = parse_field(
            "output",
            "emit_gnuplot",
            &take(&mut raw, "output", "emit_gnuplot", "false"),
        )?;
        raw.reject_leftovers()?;

        // graph
        let graph = if graph_file.is_empty() {
            let preset: LatticePreset = graph_preset.parse()?;
            qperc_core::lattice::build_preset(preset)
        } else {
            let path = base_dir.join(&graph_file);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| invalid("graph", "file", format!("{}: {e}", path.display())))?;
            PeriodicGraph::from_text(graph_file.clone(), &text)?
        };

        // kernel
        let kernel = if kernel_file.is_empty() {
            match kernel_preset_name.as_str() {
                "adjacency" => kernel_preset(&graph, KernelPreset::Adjacency)?,
                "laplacian" => kernel_preset(&graph, KernelPreset::Laplacian)?,
                "nnn" => kernel_preset(&graph, KernelPreset::Nnn(nnn_t1, nnn_t2))?,
                other => return Err(Error::UnknownPreset(other.to_string())),
            }
        } else {
            let path = base_dir.join(&kernel_file);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| invalid("kernel", "file", format!("{}: {e}", path.display())))?;
            HoppingKernel::from_text(kernel_file.clone(), &graph, &text)?
        };

        // law fields
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid("law", "p", format!("p = {p} outside [0,1]")));
        }
        if !p_orbit.is_empty() {
            let probs = parse_usize_list::<f64>("law", "p_orbit", &p_orbit)?;
            if probs.len() != graph.orbit_count() {
                return Err(invalid(
                    "law",
                    "p_orbit",
                    format!(
                        "expected {} per-orbit probabilities, got {}",
                        graph.orbit_count(),
                        probs.len()
                    ),
                ));
            }
            for &q in &probs {
                if !(0.0..=1.0).contains(&q) {
                    return Err(invalid("law", "p_orbit", format!("p = {q} outside [0,1]")));
                }
            }
        }

        let sizes = parse_usize_list::<usize>("run", "sizes", &sizes_text)?;
        if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid(
                "run",
                "sizes",
                "must be a strictly increasing, nonempty list",
            ));
        }
        if grid_points < 2 {
            return Err(invalid("run", "grid_points", "need at least 2 grid points"));
        }
        if realizations == 0 {
            return Err(invalid("run", "realizations", "need at least 1 realization"));
        }
        let buffer = if buffer_raw == 0 {
            2 * kernel.range() + 2
        } else {
            buffer_raw
        };
        let normalizer = match normalizer_text.as_str() {
            "box" => NormalizerKind::BoxVolume,
            "active" => NormalizerKind::ActiveCount,
            other => return Err(invalid("run", "normalizer", format!("unknown `{other}`"))),
        };
        let estimator = match estimator_text.as_str() {
            "exhaustion" => IdsEstimator::Exhaustion,
            "trace" => IdsEstimator::Trace,
            other => return Err(invalid("run", "estimator", format!("unknown `{other}`"))),
        };
        for (key, value) in [("pert", &pert), ("pert_b", &pert_b)] {
            match value.as_str() {
                "none" | "periodic_wrap" | "diagonal_potential" | "random_symmetric" => {}
                other => return Err(invalid("run", key, format!("unknown `{other}`"))),
            }
        }

        Ok(RunConfig {
            graph_preset,
            graph_file,
            kernel_preset: kernel_preset_name,
            kernel_file,
            nnn_t1,
            nnn_t2,
            p,
            p_orbit,
            seed,
            realization,
            explicit_file,
            sizes,
            grid_points,
            realizations,
            buffer,
            normalizer,
            estimator,
            infinite_cluster,
            pert,
            pert_b,
            pert_strength,
            pert_width,
            pert_seed,
            max_moment,
            energy,
            max_size,
            shape_cap,
            tau_res,
            output_dir: output_dir_text,
            emit_gnuplot: emit_gnuplot_cfg || emit_gnuplot_flag,
            base_dir: base_dir.to_path_buf(),
            graph,
            kernel,
        })
    }

    /// Output directory resolved against the config location.
    pub fn output_path(&self) -> PathBuf {
        self.base_dir.join(&self.output_dir)
    }

    /// Canonical echo: every key explicit, sections and keys in fixed
    /// order. Reruns of the same resolved configuration produce the same
    /// bytes, hence the same digest.
    pub fn resolved_text(&self) -> String {
        let mut out = String::new();
        out.push_str("[graph]\n");
        out.push_str(&format!("file = {}\n", self.graph_file));
        out.push_str(&format!("preset = {}\n", self.graph_preset));
        out.push_str("[kernel]\n");
        out.push_str(&format!("file = {}\n", self.kernel_file));
        out.push_str(&format!("nnn_t1 = {}\n", self.nnn_t1));
        out.push_str(&format!("nnn_t2 = {}\n", self.nnn_t2));
        out.push_str(&format!("preset = {}\n", self.kernel_preset));
        out.push_str("[law]\n");
        out.push_str(&format!("explicit_file = {}\n", self.explicit_file));
        out.push_str(&format!("p = {}\n", self.p));
        out.push_str(&format!("p_orbit = {}\n", self.p_orbit));
        out.push_str(&format!("realization = {}\n", self.realization));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str("[output]\n");
        out.push_str(&format!("dir = {}\n", self.output_dir));
        out.push_str(&format!("emit_gnuplot = {}\n", self.emit_gnuplot));
        out.push_str("[run]\n");
        out.push_str(&format!("buffer = {}\n", self.buffer));
        out.push_str(&format!("energy = {}\n", self.energy));
        out.push_str(&format!(
            "estimator = {}\n",
            match self.estimator {
                IdsEstimator::Exhaustion => "exhaustion",
                IdsEstimator::Trace => "trace",
            }
        ));
        out.push_str(&format!("grid_points = {}\n", self.grid_points));
        out.push_str(&format!("infinite_cluster = {}\n", self.infinite_cluster));
        out.push_str(&format!("max_moment = {}\n", self.max_moment));
        out.push_str(&format!("max_size = {}\n", self.max_size));
        out.push_str(&format!(
            "normalizer = {}\n",
            match self.normalizer {
                NormalizerKind::BoxVolume => "box",
                NormalizerKind::ActiveCount => "active",
            }
        ));
        out.push_str(&format!("pert = {}\n", self.pert));
        out.push_str(&format!("pert_b = {}\n", self.pert_b));
        out.push_str(&format!("pert_seed = {}\n", self.pert_seed));
        out.push_str(&format!("pert_strength = {}\n", self.pert_strength));
        out.push_str(&format!("pert_width = {}\n", self.pert_width));
        out.push_str(&format!("realizations = {}\n", self.realizations));
        out.push_str(&format!("shape_cap = {}\n", self.shape_cap));
        out.push_str(&format!(
            "sizes = {}\n",
            self.sizes
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(",")
        ));
        out.push_str(&format!("tau_res = {}\n", self.tau_res));
        out
    }

    /// FNV-1a over the resolved echo bytes, as 16 hex digits.
    pub fn digest(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.resolved_text().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }

    pub fn law(&self) -> Result<PercolationLaw> {
        if self.p_orbit.is_empty() {
            let mut law =
                PercolationLaw::uniform(self.p, self.graph.orbit_count(), self.seed)?;
            law = law.with_realization(self.realization);
            Ok(law)
        } else {
            let probs = parse_usize_list::<f64>("law", "p_orbit", &self.p_orbit)?;
            PercolationLaw::new(probs, self.seed, self.realization)
        }
    }

    pub fn configuration(&self) -> Result<Configuration> {
        let law = self.law()?;
        if self.explicit_file.is_empty() {
            Ok(Configuration::from_law(law))
        } else {
            let path = self.base_dir.join(&self.explicit_file);
            let text = std::fs::read_to_string(&path).map_err(|e| {
                invalid("law", "explicit_file", format!("{}: {e}", path.display()))
            })?;
            Configuration::from_explicit_text(law, self.graph.dimension(), &text)
        }
    }

    pub fn schedule(&self) -> Result<ExhaustionSchedule> {
        ExhaustionSchedule::anchored(self.graph.dimension(), self.sizes.clone())
    }

    fn perturbation_from_name(&self, name: &str) -> Option<BoundaryPerturbation> {
        match name {
            "periodic_wrap" => Some(BoundaryPerturbation::periodic_wrap()),
            "diagonal_potential" => Some(BoundaryPerturbation {
                kind: PerturbationKind::DiagonalPotential,
                strength: self.pert_strength,
                width: self.pert_width,
                seed: self.pert_seed,
            }),
            "random_symmetric" => Some(BoundaryPerturbation {
                kind: PerturbationKind::RandomSymmetric,
                strength: self.pert_strength,
                width: self.pert_width,
                seed: self.pert_seed,
            }),
            _ => None,
        }
    }

    pub fn perturbation_a(&self) -> Option<BoundaryPerturbation> {
        self.perturbation_from_name(&self.pert)
    }

    pub fn perturbation_b(&self) -> Option<BoundaryPerturbation> {
        self.perturbation_from_name(&self.pert_b)
    }
}

fn parse_usize_list<T: std::str::FromStr>(
    section: &str,
    key: &str,
    text: &str,
) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| parse_field::<T>(section, key, s))
        .collect()
}

/// Resolve the worker-count override from the environment; `0` or an
/// unset variable keeps the library default.
pub fn init_workers() {
    if let Ok(text) = std::env::var("QPERC_WORKERS") {
        if let Ok(n) = text.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_and_digest_is_stable() {
        let cfg = RunConfig::from_text("", Path::new("."), false).unwrap();
        assert_eq!(cfg.graph_preset, "square");
        assert_eq!(cfg.kernel.range(), 2);
        assert_eq!(cfg.buffer, 6); // auto: 2R + 2
        let echo = cfg.resolved_text();
        assert!(echo.contains("buffer = 6"));
        // resolving the echo reproduces the echo
        let cfg2 = RunConfig::from_text(&echo, Path::new("."), false).unwrap();
        assert_eq!(cfg2.resolved_text(), echo);
        assert_eq!(cfg2.digest(), cfg.digest());
    }

    #[test]
    fn unknown_keys_are_rejected_with_names() {
        let err = RunConfig::from_text("[run]\nbogus = 1\n", Path::new("."), false).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("run.bogus"), "message was: {msg}");
    }

    #[test]
    fn invalid_probability_names_the_field() {
        let err =
            RunConfig::from_text("[law]\np = 1.5\n", Path::new("."), false).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("law.p"), "message was: {msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn sizes_must_increase() {
        let err = RunConfig::from_text("[run]\nsizes = 8,8\n", Path::new("."), false)
            .unwrap_err();
        assert!(format!("{err}").contains("run.sizes"));
    }
}
