//! One pipeline per subcommand. Each returns report data and a list of gates;
//! `full-report` runs all of them in sequence.

use std::time::Instant;

use clap::ValueEnum;
use fracmag::distorted_ft::DistortedFt;
use fracmag::linalg::{hermitian_eigen, log_log_slope, max_abs_entry, op_norm, CMat, CVec, C64};
use fracmag::operators::{
    build_magnetic_laplacian, coupling_constant, coupling_constant_exact, frac_power_balakrishnan, frac_power_eig,
    free_fractional, perturbation_vx, weighted_vx_norm, Ordering, VxRoute,
};
use fracmag::potentials::{boundary_max, certify_decay, decay_profile, side_conditions, BOUNDARY_LIMIT};
use fracmag::resolvent::{geometric_set, limiting_absorption, weighted_free_resolvent_scaling, Branch};
use fracmag::scattering::{scattering_report, Propagator};
use fracmag::spectral::{eigensystem_with_threshold, embedded_eigenvalue_scan, gauge_transform_check, power_identity_check};
use fracmag::{Error, HermitianOperator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::artifacts::{num, Artifacts};
use crate::config::Experiment;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    CertifyPotential,
    Fracpow,
    Vx,
    LapScan,
    DftScan,
    Scatter,
    Spectrum,
    FullReport,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::CertifyPotential => "certify-potential",
            Pipeline::Fracpow => "fracpow",
            Pipeline::Vx => "vx",
            Pipeline::LapScan => "lap-scan",
            Pipeline::DftScan => "dft-scan",
            Pipeline::Scatter => "scatter",
            Pipeline::Spectrum => "spectrum",
            Pipeline::FullReport => "full-report",
        }
    }

    /// The single-stage pipelines run by this command, in order.
    pub fn stages(self, has_scattering: bool) -> Vec<Pipeline> {
        match self {
            Pipeline::FullReport => {
                let mut v = vec![
                    Pipeline::CertifyPotential,
                    Pipeline::Fracpow,
                    Pipeline::Vx,
                    Pipeline::LapScan,
                    Pipeline::DftScan,
                    Pipeline::Spectrum,
                ];
                if has_scattering {
                    v.push(Pipeline::Scatter);
                }
                v
            }
            p => vec![p],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gate {
    pub name: String,
    pub value: f64,
    pub relation: &'static str,
    pub limit: f64,
    pub passed: bool,
}

fn le(name: &str, value: f64, limit: f64) -> Gate {
    Gate { name: name.into(), value, relation: "<=", limit, passed: value <= limit }
}

fn ge(name: &str, value: f64, limit: f64) -> Gate {
    Gate { name: name.into(), value, relation: ">=", limit, passed: value >= limit }
}

fn lt(name: &str, value: f64, limit: f64) -> Gate {
    Gate { name: name.into(), value, relation: "<", limit, passed: value < limit }
}

fn holds(name: &str, ok: bool) -> Gate {
    Gate { name: name.into(), value: f64::from(u8::from(ok)), relation: "==", limit: 1.0, passed: ok }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Complete,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Section {
    pub name: &'static str,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cause: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hint: Option<String>,
    pub gates: Vec<Gate>,
    pub data: Value,
}

/// Errors that are a failed numerical gate rather than a broken run.
fn gate_error(e: &CliError) -> Option<&'static str> {
    match e {
        CliError::Core(err) => match err {
            Error::QuadratureNotConverged { .. } => Some("quadrature_convergence"),
            Error::NegativeSpectrum { .. } => Some("positivity"),
            Error::HermiticityViolation { .. } => Some("hermiticity"),
            Error::NotConverging { .. } => Some("absorption_convergence"),
            Error::ExceptionalShell { .. } => Some("exceptional_shell"),
            Error::TailNotDecaying { .. } => Some("cook_tail_decay"),
            Error::FitUnstable(_) => Some("decay_fit"),
            _ => None,
        },
        _ => None,
    }
}

type Stage = std::result::Result<(Value, Vec<Gate>), CliError>;

/// State shared by the stages of one run.
pub struct Run<'a> {
    pub exp: &'a Experiment,
    pub art: Artifacts,
    ha: Option<HermitianOperator>,
    hs: Option<HermitianOperator>,
    vx: Option<CMat>,
}

impl<'a> Run<'a> {
    pub fn new(exp: &'a Experiment, art: Artifacts) -> Self {
        Self { exp, art, ha: None, hs: None, vx: None }
    }

    fn ensure_ha(&mut self) -> Result<(), CliError> {
        if self.ha.is_none() {
            self.ha = Some(build_magnetic_laplacian(&self.exp.grid, &self.exp.potential)?);
        }
        Ok(())
    }

    fn ensure_hs(&mut self) -> Result<(), CliError> {
        self.ensure_ha()?;
        if self.hs.is_none() {
            let ha = self.ha.as_ref().expect("built");
            self.hs = Some(frac_power_eig(ha, 0.5 * self.exp.config.s)?);
        }
        Ok(())
    }

    fn ensure_vx(&mut self) -> Result<(), CliError> {
        self.ensure_hs()?;
        if self.vx.is_none() {
            let hs = self.hs.as_ref().expect("built");
            self.vx = Some(hs.entries() - free_fractional(&self.exp.grid, self.exp.config.s).entries());
        }
        Ok(())
    }

    fn rng(&self, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.exp.config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt)
    }

    /// Runs one stage and converts gate-type errors into an aborted section.
    pub fn stage(&mut self, p: Pipeline) -> Result<(Section, f64), CliError> {
        let t0 = Instant::now();
        let out = match p {
            Pipeline::CertifyPotential => self.certify_potential(),
            Pipeline::Fracpow => self.fracpow(),
            Pipeline::Vx => self.vx_stage(),
            Pipeline::LapScan => self.lap_scan(),
            Pipeline::DftScan => self.dft_scan(),
            Pipeline::Scatter => self.scatter(),
            Pipeline::Spectrum => self.spectrum(),
            Pipeline::FullReport => unreachable!("full-report is split into stages"),
        };
        let elapsed = t0.elapsed().as_secs_f64();
        let section = match out {
            Ok((data, gates)) => Section { name: p.name(), status: Status::Complete, cause: None, hint: None, gates, data },
            Err(e) => match gate_error(&e) {
                Some(gate) => Section {
                    name: p.name(),
                    status: Status::Aborted,
                    cause: Some(e.to_string()),
                    hint: e.hint().map(str::to_string),
                    gates: vec![holds(gate, false)],
                    data: Value::Null,
                },
                None => return Err(e),
            },
        };
        Ok((section, elapsed))
    }

    fn dumps(&self) -> bool {
        self.exp.config.output.dumps
    }

    fn certify_potential(&mut self) -> Stage {
        let grid = &self.exp.grid;
        let a = &self.exp.potential;
        let cfg = &self.exp.config;
        if self.dumps() {
            for (j, comp) in a.components.iter().enumerate() {
                let u = CVec::from_iterator(comp.len(), comp.iter().map(|&v| C64::new(v, 0.0)));
                self.art.dump_grid_function(&format!("potential_A{}", j + 1), grid, &u)?;
            }
        }
        let bmax = boundary_max(grid, a);
        let mut gates = vec![le("potential.boundary_max", bmax, BOUNDARY_LIMIT)];
        if a.is_zero() {
            self.art.write_csv("decay_profile.csv", &["radius", "profile", "bound"], &[])?;
            return Ok((json!({ "family": a.family, "zero": true, "boundary_max": bmax }), gates));
        }
        let cert = certify_decay(grid, a)?;
        let n = grid.dim();
        gates.push(Gate {
            name: "potential.decay_exponent".into(),
            value: cert.beta,
            relation: ">",
            limit: n as f64 + 2.0,
            passed: cert.beta > n as f64 + 2.0,
        });
        gates.push(le("potential.certificate_residual", cert.residual, fracmag::potentials::CERT_RESIDUAL_LIMIT));
        let side = side_conditions(cert.beta, n, cfg.vx.delta, cfg.vx_alpha());
        let profile = decay_profile(grid, a);
        let r2 = grid.radius_sq();
        let mut rows: Vec<(f64, f64)> = r2.iter().map(|r| r.sqrt()).zip(profile.iter().copied()).collect();
        rows.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
        let csv_rows: Vec<Vec<String>> = rows
            .iter()
            .map(|&(r, f)| vec![num(r), num(f), num(cert.constant * (1.0 + r * r).powf(-0.5 * cert.beta))])
            .collect();
        self.art.write_csv("decay_profile.csv", &["radius", "profile", "bound"], &csv_rows)?;
        Ok((
            json!({
                "family": a.family,
                "zero": false,
                "boundary_max": bmax,
                "max_abs": a.max_abs(),
                "certificate": cert,
                "side_conditions": side,
            }),
            gates,
        ))
    }

    fn fracpow(&mut self) -> Stage {
        self.ensure_hs()?;
        let cfg = &self.exp.config;
        let s = cfg.s;
        let ha = self.ha.as_ref().expect("built");
        let hs = self.hs.as_ref().expect("built");
        let min_eig = ha.min_eigenvalue();
        let quad = frac_power_balakrishnan(ha, s, &cfg.quadrature)?;
        let defect = op_norm(&(quad.entries() - hs.entries())) / hs.norm().max(f64::MIN_POSITIVE);
        let lam = &ha.eigen().values;
        let (mu, _) = hermitian_eigen(hs.entries());
        let mut mapping = 0.0_f64;
        let mut rows = Vec::with_capacity(lam.len());
        for k in 0..lam.len() {
            let mapped = lam[k].max(0.0).powf(0.5 * s);
            let d = (mu[k] - mapped).abs();
            mapping = mapping.max(d);
            rows.push(vec![k.to_string(), num(lam[k]), num(mu[k]), num(mapped), num(d)]);
        }
        self.art.write_csv("spectral_mapping.csv", &["index", "eig_ha", "eig_hs", "mapped", "defect"], &rows)?;
        if self.dumps() {
            self.art.dump_operator("hs", hs.entries(), hs.label(), hs.hermiticity_residual())?;
        }
        let c_quad = coupling_constant(s, &cfg.quadrature)?;
        let c_exact = coupling_constant_exact(s);
        let gates = vec![
            ge("fracpow.min_eigenvalue", min_eig, -fracmag::operators::NEGATIVE_TOL),
            le("fracpow.oracle_defect", defect, 1e-6),
            le("fracpow.spectral_mapping", mapping, 1e-10),
            le("fracpow.hermiticity", ha.hermiticity_residual(), fracmag::operators::HERMITIAN_TOL),
        ];
        Ok((
            json!({
                "s": s,
                "quadrature": cfg.quadrature,
                "min_eigenvalue": min_eig,
                "norm_ha": ha.norm(),
                "oracle_defect": defect,
                "spectral_mapping_defect": mapping,
                "coupling_constant": { "exact": c_exact, "quadrature": c_quad },
            }),
            gates,
        ))
    }

    fn vx_stage(&mut self) -> Stage {
        let grid = &self.exp.grid;
        let cfg = &self.exp.config;
        let a = &self.exp.potential;
        let s = cfg.s;
        let diff = perturbation_vx(grid, a, s, VxRoute::Difference, &cfg.quadrature)?;
        let scale = op_norm(&diff);
        let rel = |m: &CMat| {
            let d = op_norm(&(m - &diff));
            if scale > 0.0 {
                d / scale
            } else {
                d
            }
        };
        let mag = perturbation_vx(grid, a, s, VxRoute::Integral(Ordering::MagneticFirst), &cfg.quadrature)?;
        let free = perturbation_vx(grid, a, s, VxRoute::Integral(Ordering::FreeFirst), &cfg.quadrature)?;
        let (d_mag, d_free) = (rel(&mag), rel(&free));
        let weighted = weighted_vx_norm(grid, &diff, s, cfg.sigma, cfg.vx.delta, cfg.vx_alpha())?;
        let herm = fracmag::linalg::hermiticity_residual(&diff);
        if self.dumps() {
            self.art.dump_operator("vx", &diff, "V_x difference route", herm)?;
        }
        let gates = vec![le("vx.magnetic_first_defect", d_mag, 1e-6), le("vx.free_first_defect", d_free, 1e-6)];
        Ok((
            json!({
                "s": s,
                "norm": scale,
                "hermiticity_residual": herm,
                "magnetic_first_defect": d_mag,
                "free_first_defect": d_free,
                "weighted_norm": { "value": weighted, "sigma": cfg.sigma, "delta": cfg.vx.delta, "alpha": cfg.vx_alpha() },
            }),
            gates,
        ))
    }

    fn lap_scan(&mut self) -> Stage {
        let grid = &self.exp.grid;
        let cfg = &self.exp.config;
        let ab = &cfg.absorption;
        let ladder = ab.ladder();
        let mut rng = self.rng(1);
        let env_w = 0.125 * grid.half_width();
        let u = CVec::from_iterator(
            grid.len(),
            grid.radius_sq().iter().map(|r2| {
                let env = (-r2 / (2.0 * env_w * env_w)).exp();
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * env
            }),
        );
        let mut gates = Vec::new();
        let mut branches = Vec::new();
        for (branch, tag) in [(Branch::Plus, "plus"), (Branch::Minus, "minus")] {
            let (w, rep) = limiting_absorption(grid, cfg.s, ab.lambda, branch, cfg.sigma, &u, &ladder)?;
            let ratio = rep.boundedness_ratio();
            let slope = rep.unweighted_slope();
            gates.push(le(&format!("lap-scan.boundedness_{tag}"), ratio, 2.0));
            gates.push(le(&format!("lap-scan.unweighted_slope_{tag}"), (slope + 1.0).abs(), 0.1));
            let rows: Vec<Vec<String>> = (0..rep.eps.len())
                .map(|k| {
                    vec![num(rep.eps[k]), num(rep.weighted_norms[k]), num(rep.unweighted_norms[k]), num(rep.extrapolant)]
                })
                .collect();
            self.art.write_csv(
                &format!("absorption_{tag}.csv"),
                &["epsilon", "weighted_norm", "unweighted_norm", "extrapolant"],
                &rows,
            )?;
            if self.dumps() {
                self.art.dump_grid_function(&format!("boundary_value_{tag}"), grid, &w)?;
            }
            branches.push(json!({ "branch": branch, "report": rep, "boundedness_ratio": ratio, "unweighted_slope": slope }));
        }

        let taus = geometric_set(ab.tau_range.0, ab.tau_range.1, ab.tau_count);
        let k2 = grid.freq_sq();
        let sup: Vec<f64> = taus.iter().map(|&t| k2.iter().map(|k| 1.0 / (t + k)).fold(0.0, f64::max)).collect();
        let plain = log_log_slope(&taus, &sup);
        let unweighted = weighted_free_resolvent_scaling(grid, &taus, 0.0, 0.0)?;
        let weighted = weighted_free_resolvent_scaling(grid, &taus, 2.0, 0.0)?;
        gates.push(le("lap-scan.resolvent_exponent", (plain + 1.0).abs(), 0.02));
        gates.push(Gate {
            name: "lap-scan.weighted_exponent".into(),
            value: weighted.slope,
            relation: "in [-1, 0.15]",
            limit: 0.15,
            passed: (-1.0..=0.15).contains(&weighted.slope),
        });
        let rows: Vec<Vec<String>> = (0..taus.len())
            .map(|k| vec![num(taus[k]), num(sup[k]), num(unweighted.norms[k]), num(weighted.norms[k])])
            .collect();
        self.art.write_csv("resolvent_scaling.csv", &["tau", "norm", "matrix_norm", "weighted_norm_N2_N1_0"], &rows)?;
        let fits = vec![
            vec!["multiplier".into(), num(plain), num(-1.0)],
            vec!["matrix".into(), num(unweighted.slope), num(unweighted.predicted)],
            vec!["weighted_N2_N1_0".into(), num(weighted.slope), num(weighted.predicted)],
        ];
        self.art.write_csv("exponent_fit.csv", &["series", "slope", "predicted"], &fits)?;
        Ok((
            json!({
                "lambda": ab.lambda,
                "ladder": ladder,
                "branches": branches,
                "scaling": { "multiplier_slope": plain, "matrix": unweighted, "weighted": weighted },
            }),
            gates,
        ))
    }

    fn dft_scan(&mut self) -> Stage {
        self.ensure_vx()?;
        let grid = &self.exp.grid;
        let cfg = &self.exp.config;
        let s = cfg.s;
        let ladder = cfg.absorption.ladder();
        let vx = self.vx.as_ref().expect("built");
        let hs = self.hs.as_ref().expect("built");
        // Localized packets with momenta away from zero: the threshold shells
        // carry a box-truncation error unrelated to the transform itself.
        let l = grid.half_width();
        let width = 0.2 * l;
        let kmax = grid.max_frequency();
        let nodes: Vec<Vec<f64>> = (0..grid.dim()).map(|k| grid.node_component(k)).collect();
        let mut rng = self.rng(2);
        let mut u = CVec::zeros(grid.len());
        for _ in 0..3 {
            let center: Vec<f64> = (0..grid.dim()).map(|_| rng.random_range(-0.125 * l..0.125 * l)).collect();
            let speed = rng.random_range(0.35 * kmax..0.5 * kmax);
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let k = [speed * angle.cos(), speed * angle.sin()];
            let k = if grid.dim() == 1 { [speed.copysign(k[0]), 0.0] } else { k };
            let amp = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            for i in 0..grid.len() {
                let (mut r2, mut phase) = (0.0, 0.0);
                for (ax, xs) in nodes.iter().enumerate() {
                    let d = xs[i] - center[ax];
                    r2 += d * d;
                    phase += k[ax] * xs[i];
                }
                u[i] += amp * C64::from_polar((-r2 / (width * width)).exp(), phase);
            }
        }
        let norm = u.norm();
        if norm > 0.0 {
            u.unscale_mut(norm);
        }
        let prop = Propagator::from_operator(hs);
        let times = [0.3, 0.7, 1.9];
        let mut worst = 0.0_f64;
        let mut trivial = 0.0_f64;
        let mut per_shell: Vec<(f64, usize, f64, f64, f64)> = Vec::new();
        for (bi, branch) in [Branch::Plus, Branch::Minus].into_iter().enumerate() {
            let f = DistortedFt::new(grid, vx, s, cfg.sigma, branch, &ladder)?;
            let summary = f.summary();
            if bi == 0 {
                per_shell = summary.iter().map(|sh| (sh.lambda, sh.multiplicity, sh.sigma_min, 0.0, 0.0)).collect();
            } else {
                for (row, sh) in per_shell.iter_mut().zip(&summary) {
                    row.3 = sh.sigma_min;
                }
            }
            let fu = f.transform(&u)?;
            if self.exp.potential.is_zero() {
                trivial = trivial.max(fu.distance_to(&grid.forward(&u)));
            }
            for &t in &times {
                let fhu = f.transform(&prop.propagate(-t, &u))?;
                for (row, (_, d)) in per_shell.iter_mut().zip(f.intertwining_defects(&fu, &fhu, t)) {
                    row.4 = row.4.max(d);
                    worst = worst.max(d);
                }
            }
        }
        let exceptional: Vec<f64> = per_shell
            .iter()
            .filter(|r| r.2.min(r.3) < fracmag::distorted_ft::EXCEPTIONAL_THRESHOLD)
            .map(|r| r.0)
            .collect();
        let rows: Vec<Vec<String>> = per_shell
            .iter()
            .map(|r| vec![num(r.0), r.1.to_string(), num(r.2), num(r.3), num(r.4)])
            .collect();
        self.art.write_csv(
            "shells.csv",
            &["lambda", "multiplicity", "sigma_min_plus", "sigma_min_minus", "intertwine_defect"],
            &rows,
        )?;
        let mut gates = vec![
            le("dft-scan.exceptional_shells", exceptional.len() as f64, 0.0),
            le("dft-scan.intertwining_defect", worst, 1e-6),
        ];
        if self.exp.potential.is_zero() {
            gates.push(le("dft-scan.free_agreement", trivial, 1e-10));
        }
        Ok((
            json!({
                "shells": per_shell.len(),
                "times": times,
                "intertwining_defect": worst,
                "free_agreement": if self.exp.potential.is_zero() { Some(trivial) } else { None },
                "exceptional_shells": exceptional,
            }),
            gates,
        ))
    }

    fn scatter(&mut self) -> Stage {
        let setup = self
            .exp
            .config
            .scattering_setup()
            .ok_or_else(|| CliError::Config("scatter requires a [scattering] table".into()))?;
        self.ensure_vx()?;
        let grid = &self.exp.grid;
        let cfg = &self.exp.config;
        let hs = self.hs.as_ref().expect("built");
        let vx = self.vx.as_ref().expect("built");
        let r = scattering_report(grid, hs, vx, &setup, &cfg.absorption.ladder(), cfg.spectrum.threshold)?;

        let inter = r.intertwining.iter().map(|p| p.1).fold(0.0, f64::max);
        let angle = r.principal_angles.iter().copied().fold(0.0, f64::max);
        let mut gates = vec![
            holds("scatter.cook_tail_decay", r.tail_monotone()),
            le("scatter.route_agreement", r.max_route_excess(), 1.0),
            le("scatter.isometry_defect", r.isometry_defect, 1e-3),
            le("scatter.intertwining_defect", inter, 5e-3),
            le("scatter.s_star_s", r.s_star_s, 1e-2),
            le("scatter.s_s_star", r.s_s_star, 1e-2),
            le("scatter.off_shell_leakage", r.off_shell_leakage, 1e-2),
            le("scatter.fw_defect", r.fw.max, 5e-2),
            le("scatter.principal_angle", angle, 0.1),
            le("scatter.point_spectrum_overlap", r.point_overlap, 1e-3),
        ];
        // Only meaningful while truncation dominates the defect.
        if r.fw_half.max > 1e-8 {
            gates.push(lt("scatter.fw_decreasing", r.fw.max, r.fw_half.max));
        }
        let s_mat = CMat::from_fn(r.s_matrix.len(), r.s_matrix.len(), |j, k| r.s_matrix[j][k]);
        if self.exp.potential.is_zero() {
            let id = CMat::identity(s_mat.nrows(), s_mat.ncols());
            gates.push(le("scatter.free_identity", max_abs_entry(&(&s_mat - id)), 1e-10));
        }

        let rows: Vec<Vec<String>> = r
            .convergence
            .iter()
            .map(|c| vec![num(c.t), num(c.isometry_defect), num(c.intertwine_defect), num(c.fw_defect)])
            .collect();
        self.art.write_csv(
            "scattering_convergence.csv",
            &["T", "isometry_defect", "intertwine_defect", "fw_defect"],
            &rows,
        )?;
        let rows: Vec<Vec<String>> =
            r.integrand_times.iter().zip(&r.integrand_max).map(|(t, v)| vec![num(*t), num(*v)]).collect();
        self.art.write_csv("cook_integrand.csv", &["t", "integrand_norm"], &rows)?;
        if self.dumps() {
            self.art.dump_operator("s_matrix", &s_mat, "scattering matrix", 0.0)?;
        }
        Ok((serde_json::to_value(&r)?, gates))
    }

    fn spectrum(&mut self) -> Stage {
        self.ensure_hs()?;
        let grid = &self.exp.grid;
        let cfg = &self.exp.config;
        let ha = self.ha.as_ref().expect("built");
        let hs = self.hs.as_ref().expect("built");
        let decomp = eigensystem_with_threshold(hs, cfg.spectrum.threshold);
        let embedded = embedded_eigenvalue_scan(&decomp);
        let mut gates = vec![
            le("spectrum.eigen_residual", decomp.residual, 1e-9),
            le("spectrum.orthonormality", decomp.orthonormality, 1e-10),
            le("spectrum.embedded_eigenvalues", embedded.len() as f64, 0.0),
        ];
        let rows: Vec<Vec<String>> = (0..decomp.values.len())
            .map(|k| {
                vec![
                    k.to_string(),
                    num(decomp.values[k]),
                    num(decomp.participation[k]),
                    decomp.point_flags.contains(&k).to_string(),
                ]
            })
            .collect();
        self.art.write_csv("eigenvalues.csv", &["index", "eigenvalue", "participation", "localized"], &rows)?;

        let mut power = Vec::new();
        let mut rows = Vec::new();
        for s in cfg.power_orders() {
            let rep = power_identity_check(ha, s)?;
            gates.push(le(&format!("spectrum.power_identity_s{s}"), rep.relative, 1e-8));
            for (k, d) in rep.defects.iter().enumerate() {
                rows.push(vec![num(s), k.to_string(), num(*d)]);
            }
            power.push(json!({ "s": s, "max_defect": rep.max_defect, "relative": rep.relative }));
        }
        self.art.write_csv("power_identity.csv", &["s", "index", "defect"], &rows)?;

        let gauge = if grid.dim() == 1 {
            match gauge_transform_check(grid, &self.exp.potential) {
                Ok(g) => {
                    gates.push(le("spectrum.gauge_conjugation", g.band_conjugation_defect, 1e-8));
                    gates.push(le("spectrum.gauge_spectrum", g.spectral_defect, 1e-8));
                    serde_json::to_value(&g)?
                }
                Err(Error::FluxObstruction { flux }) => {
                    json!({ "flux_obstruction": flux, "hint": "use a zero-mean potential for the gauge check" })
                }
                Err(e) => return Err(e.into()),
            }
        } else {
            Value::Null
        };
        Ok((
            json!({
                "threshold": decomp.threshold,
                "eigen_residual": decomp.residual,
                "orthonormality": decomp.orthonormality,
                "localized": decomp.point_flags.len(),
                "embedded_candidates": embedded,
                "power_identity": power,
                "gauge": gauge,
            }),
            gates,
        ))
    }
}
