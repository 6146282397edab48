//! Experiment configuration: TOML with one table per module. Unknown keys
//! are rejected and every precondition that can be checked without running
//! a pipeline is checked in [`ExperimentConfig::validate`].

use std::path::{Path, PathBuf};

use fracmag::operators::{check_order, QuadratureScheme};
use fracmag::potentials::{make_potential, PotentialFamily, VectorPotential};
use fracmag::resolvent::LadderParams;
use fracmag::scattering::ScatteringSetup;
use fracmag::Grid;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Order s of (-Δ_A)^{s/2}, 0 < s < 2.
    pub s: f64,
    /// Weight exponent σ > 1/2.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    pub grid: GridConfig,
    #[serde(default = "default_potential")]
    pub potential: PotentialFamily,
    /// One flat-array stem per component, used with family = "custom_samples".
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub potential_samples: Vec<PathBuf>,
    #[serde(default)]
    pub quadrature: QuadratureScheme,
    #[serde(default)]
    pub absorption: AbsorptionConfig,
    #[serde(default)]
    pub vx: VxConfig,
    #[serde(default)]
    pub scattering: Option<ScatteringConfig>,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_sigma() -> f64 {
    1.0
}

fn default_potential() -> PotentialFamily {
    PotentialFamily::Zero
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    #[serde(rename = "N")]
    pub points: usize,
    #[serde(rename = "L")]
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AbsorptionConfig {
    /// Energy λ at which R₀^s(λ ± i0) is taken.
    pub lambda: f64,
    pub eps0: f64,
    pub ratio: f64,
    pub depth: usize,
    pub order: Option<usize>,
    pub pad_factor: Option<usize>,
    /// τ range and count for the (τ - Δ)^{-1} scaling fits.
    pub tau_range: (f64, f64),
    pub tau_count: usize,
}

impl Default for AbsorptionConfig {
    fn default() -> Self {
        let l = LadderParams::default();
        Self {
            lambda: 1.0,
            eps0: l.eps0,
            ratio: l.ratio,
            depth: l.depth,
            order: None,
            pad_factor: None,
            tau_range: (1.0, 1000.0),
            tau_count: 16,
        }
    }
}

impl AbsorptionConfig {
    /// Ladder parameters; the Richardson order defaults to the full tableau.
    pub fn ladder(&self) -> LadderParams {
        LadderParams {
            eps0: self.eps0,
            ratio: self.ratio,
            depth: self.depth,
            order: self.order.unwrap_or(self.depth.saturating_sub(1)),
            pad_factor: self.pad_factor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VxConfig {
    /// Extra decay δ > 1 and smoothing α ∈ (0, min(s, 1)) for the weighted V_x norm.
    pub delta: f64,
    pub alpha: Option<f64>,
}

impl Default for VxConfig {
    fn default() -> Self {
        Self { delta: 1.5, alpha: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScatteringConfig {
    pub t_max: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub band: (f64, f64),
    pub centers: Vec<f64>,
    pub width: f64,
    #[serde(default = "default_times")]
    pub intertwine_times: Vec<f64>,
    /// Extra T values for the convergence table; T/4 and T/2 when omitted.
    #[serde(default)]
    pub t_ladder: Option<Vec<f64>>,
    /// Expected number of packets; checked against 2·|centers|·|momenta|.
    #[serde(default)]
    pub basis_size: Option<usize>,
}

fn default_dt() -> f64 {
    0.25
}

fn default_times() -> Vec<f64> {
    vec![0.5, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Participation-ratio threshold below which an eigenvector counts as localized.
    pub threshold: f64,
    /// Orders for the power-identity table; `s` alone when empty.
    pub power_orders: Vec<f64>,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self { threshold: fracmag::spectral::LOCALIZATION_THRESHOLD, power_orders: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Not serialized: where results go does not change what they are.
    #[serde(skip_serializing)]
    pub dir: PathBuf,
    /// Write flat-array dumps of operators and grid functions.
    pub dumps: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("fracmag-out"), dumps: true }
    }
}

/// A parsed and validated configuration with the objects it determines.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub grid: Grid,
    pub potential: VectorPotential,
}

fn invalid(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn scattering_setup(&self) -> Option<ScatteringSetup> {
        self.scattering.as_ref().map(|sc| ScatteringSetup {
            s: self.s,
            t_max: sc.t_max,
            dt: sc.dt,
            band: sc.band,
            centers: sc.centers.clone(),
            width: sc.width,
            sigma: self.sigma,
            intertwine_times: sc.intertwine_times.clone(),
            t_ladder: sc.t_ladder.clone().unwrap_or_else(|| vec![0.25 * sc.t_max, 0.5 * sc.t_max]),
        })
    }

    pub fn vx_alpha(&self) -> f64 {
        self.vx.alpha.unwrap_or(0.5 * self.s.min(1.0))
    }

    pub fn power_orders(&self) -> Vec<f64> {
        if self.spectrum.power_orders.is_empty() {
            vec![self.s]
        } else {
            self.spectrum.power_orders.clone()
        }
    }

    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    /// Checks every module precondition that does not require running a
    /// pipeline and builds the grid and potential.
    pub fn validate(self) -> Result<Experiment, CliError> {
        let g = &self.grid;
        let grid = Grid::new(g.n, g.points, g.half_width).map_err(|e| invalid("grid", e))?;
        check_order(self.s).map_err(|e| invalid("s", e))?;
        if !(self.sigma > 0.5) {
            return Err(invalid("sigma", format!("{} must exceed 1/2", self.sigma)));
        }
        self.quadrature.validate().map_err(|e| invalid("quadrature", e))?;
        let ab = &self.absorption;
        ab.ladder().validate().map_err(|e| invalid("absorption", e))?;
        let top = grid.max_frequency().powf(self.s) * if grid.dim() == 2 { 2f64.powf(0.5 * self.s) } else { 1.0 };
        if !(ab.lambda > 0.0 && ab.lambda < top) {
            return Err(invalid("absorption.lambda", format!("{} must lie in (0, {top:.4})", ab.lambda)));
        }
        if !(ab.tau_range.0 > 0.0 && ab.tau_range.1 > ab.tau_range.0) || ab.tau_count < 2 {
            return Err(invalid("absorption.tau_range", "need 0 < lo < hi and tau_count >= 2"));
        }
        if !(self.vx.delta > 1.0) {
            return Err(invalid("vx.delta", format!("{} must exceed 1", self.vx.delta)));
        }
        let alpha = self.vx_alpha();
        if !(alpha > 0.0 && alpha < self.s.min(1.0)) {
            return Err(invalid("vx.alpha", format!("{alpha} must lie in (0, min(s, 1))")));
        }
        if !(self.spectrum.threshold > 0.0 && self.spectrum.threshold < 1.0) {
            return Err(invalid("spectrum.threshold", "must lie in (0, 1)"));
        }
        for &p in &self.power_orders() {
            check_order(p).map_err(|e| invalid("spectrum.power_orders", e))?;
        }
        if let Some(setup) = self.scattering_setup() {
            setup.validate(&grid).map_err(|e| invalid("scattering", e))?;
            let sc = self.scattering.as_ref().expect("setup implies section");
            if let Some(n) = sc.basis_size {
                let got = setup.labels().len();
                if n != got {
                    return Err(invalid("scattering.basis_size", format!("{n} != 2·centers·momenta = {got}")));
                }
            }
        }
        let potential = match &self.potential {
            PotentialFamily::CustomSamples => load_samples(&grid, &self.potential_samples)?,
            fam => {
                if !self.potential_samples.is_empty() {
                    return Err(invalid("potential_samples", "only used with family = \"custom_samples\""));
                }
                make_potential(&grid, fam).map_err(|e| invalid("potential", e))?
            }
        };
        Ok(Experiment { config: self, grid, potential })
    }
}

fn load_samples(grid: &Grid, stems: &[PathBuf]) -> Result<VectorPotential, CliError> {
    if stems.len() != grid.dim() {
        return Err(invalid("potential_samples", format!("need {} stems, got {}", grid.dim(), stems.len())));
    }
    let mut comps = Vec::new();
    for stem in stems {
        let (side, values) = fracmag::io::read_grid_function(stem).map_err(|e| invalid("potential_samples", e))?;
        if side.grid != grid.params() {
            return Err(invalid("potential_samples", format!("{} was written on a different grid", stem.display())));
        }
        if values.iter().any(|z| z.im != 0.0) {
            return Err(invalid("potential_samples", format!("{} has nonzero imaginary parts", stem.display())));
        }
        comps.push(values.iter().map(|z| z.re).collect());
    }
    VectorPotential::from_samples(grid, comps).map_err(|e| invalid("potential_samples", e))
}
