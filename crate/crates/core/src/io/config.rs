use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cache::CacheHeader;
use crate::error::{Error, Result};
use crate::forward::OpticalProperties;
use crate::geometry::{Domain, Grid, OptodeArray, Point2, TimeAxis};
use crate::inverse::HyperParams;
use crate::phantoms::{PhantomCase, PhantomSpec, Shape, DEFAULT_CONTRAST};

/// Environment variable that redirects the Jacobian cache directory.
pub const CACHE_DIR_ENV: &str = "GSDOT_CACHE_DIR";

const DEFAULT_CACHE_DIR: &str = ".gsdot-cache";

/// Full run description. Every section must be present; unknown keys are errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub physics: PhysicsConfig,
    pub phantom: PhantomConfig,
    pub noise: NoiseConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub radius_cm: f64,
    pub resolution_cm: f64,
    pub margin_cm: f64,
    pub n_sources: usize,
    pub n_detectors: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            radius_cm: 3.0,
            resolution_cm: 0.1,
            margin_cm: 0.0,
            n_sources: 10,
            n_detectors: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub mu_a: f64,
    pub mu_s_prime: f64,
    pub refractive_index: f64,
    pub t_total_ns: f64,
    pub dt_ns: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        let p = OpticalProperties::default();
        Self {
            mu_a: p.mu_a,
            mu_s_prime: p.mu_s_prime,
            refractive_index: p.refractive_index,
            t_total_ns: 6.0,
            dt_ns: 0.02,
        }
    }
}

/// Phantom selection. `shapes`, when given, replaces the case's default geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomConfig {
    pub case: String,
    #[serde(default = "default_contrast")]
    pub contrast: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shapes: Option<Vec<ShapeConfig>>,
}

fn default_contrast() -> f64 {
    DEFAULT_CONTRAST
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ShapeConfig {
    Disc {
        center: [f64; 2],
        radius: f64,
    },
    Annulus {
        center: [f64; 2],
        inner: f64,
        outer: f64,
    },
    Crescent {
        center: [f64; 2],
        radius: f64,
        cut_center: [f64; 2],
        cut_radius: f64,
    },
}

impl ShapeConfig {
    fn to_shape(&self) -> Shape {
        let pt = |c: [f64; 2]| Point2::new(c[0], c[1]);
        match *self {
            ShapeConfig::Disc { center, radius } => Shape::Disc {
                center: pt(center),
                radius,
            },
            ShapeConfig::Annulus {
                center,
                inner,
                outer,
            } => Shape::Annulus {
                center: pt(center),
                inner,
                outer,
            },
            ShapeConfig::Crescent {
                center,
                radius,
                cut_center,
                cut_radius,
            } => Shape::Crescent {
                center: pt(center),
                radius,
                cut_center: pt(cut_center),
                cut_radius,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub enabled: bool,
    pub level: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            level: 0.02,
            seed: 1,
        }
    }
}

/// Solver settings; `n_splats` falls back to the phantom case's default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_splats: Option<usize>,
    pub lambda_r: f64,
    pub beta: f64,
    pub lambda_p: f64,
    pub rho_p: f64,
    pub r_p: f64,
    pub eps_bp_rel: f64,
    pub lr_amplitude: f64,
    pub lr_center: f64,
    pub lr_scale: f64,
    pub lr_angle: f64,
    pub n_iters: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub alpha_init: f64,
    pub s_init: f64,
    pub n_sigma: f64,
    pub peak_radius: f64,
    pub center_margin: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::from_hyper(&HyperParams::default(), None)
    }
}

impl SolverConfig {
    pub fn from_hyper(h: &HyperParams, n_splats: Option<usize>) -> Self {
        Self {
            n_splats,
            lambda_r: h.lambda_r,
            beta: h.beta,
            lambda_p: h.lambda_p,
            rho_p: h.rho_p,
            r_p: h.r_p,
            eps_bp_rel: h.eps_bp_rel,
            lr_amplitude: h.lr_amplitude,
            lr_center: h.lr_center,
            lr_scale: h.lr_scale,
            lr_angle: h.lr_angle,
            n_iters: h.n_iters,
            adam_beta1: h.adam_beta1,
            adam_beta2: h.adam_beta2,
            adam_eps: h.adam_eps,
            alpha_init: h.alpha_init,
            s_init: h.s_init,
            n_sigma: h.n_sigma,
            peak_radius: h.peak_radius,
            center_margin: h.center_margin,
        }
    }

    pub fn hyper(&self, case: PhantomCase) -> HyperParams {
        HyperParams {
            lambda_r: self.lambda_r,
            beta: self.beta,
            lambda_p: self.lambda_p,
            rho_p: self.rho_p,
            r_p: self.r_p,
            eps_bp_rel: self.eps_bp_rel,
            n_splats: self.n_splats.unwrap_or(case.default_splats()),
            lr_amplitude: self.lr_amplitude,
            lr_center: self.lr_center,
            lr_scale: self.lr_scale,
            lr_angle: self.lr_angle,
            n_iters: self.n_iters,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            alpha_init: self.alpha_init,
            s_init: self.s_init,
            n_sigma: self.n_sigma,
            peak_radius: self.peak_radius,
            center_margin: self.center_margin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Explicit cache file. When unset a name derived from the geometry is used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jacobian_cache: Option<PathBuf>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            jacobian_cache: None,
        }
    }
}

/// Geometry, physics and phantom objects built from a validated config.
#[derive(Debug, Clone)]
pub struct Setup {
    pub domain: Domain,
    pub grid: Grid,
    pub optodes: OptodeArray,
    pub time: TimeAxis,
    pub props: OpticalProperties,
    pub phantom: PhantomSpec,
    pub hyper: HyperParams,
}

impl Setup {
    /// Header a cached matrix must carry to be valid for this setup.
    pub fn cache_header(&self) -> CacheHeader {
        CacheHeader {
            n_sources: self.optodes.n_sources() as u32,
            n_detectors: self.optodes.n_detectors() as u32,
            n_bins: self.time.n_bins() as u32,
            n_pixels: self.grid.n_active() as u32,
            dt_ns: self.time.dt_ns,
            resolution_cm: self.grid.resolution_cm,
            radius_cm: self.domain.radius_cm,
            mu_a: self.props.mu_a,
            mu_s_prime: self.props.mu_s_prime,
            refractive_index: self.props.refractive_index,
        }
    }
}

impl RunConfig {
    /// Default configuration for one of the built-in phantoms.
    pub fn for_case(case: PhantomCase) -> Self {
        Self {
            geometry: GeometryConfig::default(),
            physics: PhysicsConfig::default(),
            phantom: PhantomConfig {
                case: case.as_str().to_string(),
                contrast: DEFAULT_CONTRAST,
                shapes: None,
            },
            noise: NoiseConfig::default(),
            solver: SolverConfig::default(),
            output: OutputConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn case(&self) -> Result<PhantomCase> {
        self.phantom
            .case
            .parse()
            .map_err(|e: Error| Error::Config(format!("phantom.case: {e}")))
    }

    /// Copy with the case default `K` filled in, as written next to the outputs.
    pub fn resolved(&self) -> Result<Self> {
        let mut out = self.clone();
        let case = self.case()?;
        out.solver.n_splats = Some(self.solver.n_splats.unwrap_or(case.default_splats()));
        Ok(out)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 of the resolved configuration in canonical TOML form.
    pub fn hash(&self) -> Result<String> {
        let text = self.resolved()?.to_toml()?;
        Ok(hex(&Sha256::digest(text.as_bytes())))
    }

    /// Builds every model object, reporting failures as config errors tagged by section.
    pub fn setup(&self) -> Result<Setup> {
        let tag = |section: &'static str| move |e: Error| Error::Config(format!("{section}: {e}"));
        let g = &self.geometry;
        let domain = Domain::new(g.radius_cm).map_err(tag("geometry"))?;
        let grid = Grid::build(&domain, g.resolution_cm, g.margin_cm).map_err(tag("geometry"))?;
        let optodes =
            OptodeArray::place(g.n_sources, g.n_detectors, &domain).map_err(tag("geometry"))?;
        let p = &self.physics;
        let time = TimeAxis::new(p.t_total_ns, p.dt_ns).map_err(tag("physics"))?;
        let props = OpticalProperties::new(p.mu_a, p.mu_s_prime, p.refractive_index)
            .map_err(tag("physics"))?;

        let case = self.case()?;
        let mut phantom = PhantomSpec::default_for(case);
        phantom.contrast = self.phantom.contrast;
        if let Some(shapes) = &self.phantom.shapes {
            phantom.shapes = shapes.iter().map(ShapeConfig::to_shape).collect();
        }
        phantom.validate(&domain).map_err(tag("phantom"))?;

        if self.noise.enabled && !(self.noise.level.is_finite() && self.noise.level > 0.0) {
            return Err(Error::Config(format!(
                "noise.level must be positive, got {}",
                self.noise.level
            )));
        }
        let hyper = self.solver.hyper(case);
        hyper.validate().map_err(tag("solver"))?;
        if self.output.dir.as_os_str().is_empty() {
            return Err(Error::Config("output.dir must not be empty".into()));
        }
        Ok(Setup {
            domain,
            grid,
            optodes,
            time,
            props,
            phantom,
            hyper,
        })
    }

    /// Cache file location: the configured path or a geometry-derived name, with
    /// the directory replaced by `$GSDOT_CACHE_DIR` when that is set.
    pub fn cache_path(&self) -> PathBuf {
        let default_name = || {
            let g = &self.geometry;
            let p = &self.physics;
            let key = format!(
                "{} {} {} {} {} {} {} {} {} {}",
                g.radius_cm,
                g.resolution_cm,
                g.margin_cm,
                g.n_sources,
                g.n_detectors,
                p.mu_a,
                p.mu_s_prime,
                p.refractive_index,
                p.t_total_ns,
                p.dt_ns
            );
            let digest = hex(&Sha256::digest(key.as_bytes()));
            PathBuf::from(format!("jacobian-{}.gsdj", &digest[..16]))
        };
        let configured = self
            .output
            .jacobian_cache
            .clone()
            .unwrap_or_else(|| Path::new(DEFAULT_CACHE_DIR).join(default_name()));
        match std::env::var_os(CACHE_DIR_ENV) {
            Some(dir) if !dir.is_empty() => {
                let name = configured
                    .file_name()
                    .map(PathBuf::from)
                    .unwrap_or_else(default_name);
                PathBuf::from(dir).join(name)
            }
            _ => configured,
        }
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
