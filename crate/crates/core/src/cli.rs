//! Command-line front end.
//!
//! Exit codes: 0 success (or stable-candidate), 1 a check failed, 2 unstable,
//! 3 inconclusive, 64 configuration error, 65 model error, 70 numerical
//! failure, 74 output error.

use std::f64::consts::{E, PI};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use crate::basis::BasisOptions;
use crate::config::{ConfigError, Format, KindName, ModelFile, Overrides, RunConfig};
use crate::error::Error;
use crate::functional::{
    center_scale_stationarity, entropy, f_value, monotonicity_equality_check, off_center_sphere_derivative, CenterScale,
};
use crate::models::{shrinker_residual, ShrinkerModel};
use crate::quadrature::{build_grid, verify_weighted_identities, Resolution, WeightedGrid};
use crate::report::{num, Check, Report, Table};
use crate::spectrum::{assemble, spectrum, verify_eigenfields, OperatorKind, DEFAULT_BAND};
use crate::variation::{
    finite_difference_variation, first_variation, second_variation, FieldChoice, NormalVariation, DEFAULT_STEPS,
};
use crate::verdict::{
    assess, constant_vector_instability, cylinder_instability, sphere_stability_demo, standard_basis,
    StabilityOptions, Status, Validation, VALIDATION_SAMPLES,
};

pub const THREADS_ENV: &str = "SHRINKSTAB_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_UNSTABLE: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;
pub const EXIT_CONFIG: i32 = 64;
pub const EXIT_MODEL: i32 = 65;
pub const EXIT_NUMERICAL: i32 = 70;
pub const EXIT_OUTPUT: i32 = 74;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("model error: {0}")]
    Model(Error),
    #[error("numerical error: {0}")]
    Numerical(Error),
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(m) => CliError::Config(ConfigError::Invalid(m)),
            Error::TruncationTooSmall { .. } => CliError::Config(ConfigError::Invalid(e.to_string())),
            Error::DegenerateMetric { .. }
            | Error::FrameDiscontinuity(_)
            | Error::UnsupportedDomain(_)
            | Error::DimensionMismatch { .. }
            | Error::VanishingMeanCurvature { .. }
            | Error::NotACriticalPoint { .. }
            | Error::NotMinimalInSphere(_) => CliError::Model(e),
            Error::NonFiniteValue { .. }
            | Error::NonConvergence { .. }
            | Error::ImmersionLost { .. }
            | Error::EigensolverFailure(_)
            | Error::InconclusiveResolution { .. } => CliError::Numerical(e),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Model(_) => EXIT_MODEL,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Output(_) => EXIT_OUTPUT,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "shrinkstab", version, about = "F-functional, variations and stability of model self-shrinkers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Nodes per factor (overrides the model file).
    #[arg(long)]
    pub res: Option<usize>,
    /// Half-width of Euclidean factors.
    #[arg(long)]
    pub trunc: Option<f64>,
    /// json | csv | table
    #[arg(long)]
    pub format: Option<Format>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Shrinker residual, weighted identities, stationarity and eigenfield identities.
    Verify {
        model: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Lowest eigenvalues of a stability operator (CSV by default).
    Spectrum {
        model: PathBuf,
        /// drift | L | Lnu
        #[arg(long, default_value = "L")]
        operator: String,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = DEFAULT_BAND)]
        band: f64,
        /// Write node values of the computed eigenfields to this CSV file.
        #[arg(long)]
        export_eigenfields: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// F-stability verdict with certificate. Exit 0 stable-candidate, 2 unstable, 3 inconclusive.
    Stability {
        model: PathBuf,
        #[arg(long, default_value_t = 24)]
        count: usize,
        #[arg(long, default_value_t = DEFAULT_BAND)]
        band: f64,
        /// Points at which a certificate is re-checked.
        #[arg(long, default_value_t = VALIDATION_SAMPLES)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Entropy: maximize F over centers and scales.
    Entropy {
        model: PathBuf,
        /// Starting point `x0_1,...,x0_N,t0`, or just `t0` with `x0 = 0`.
        #[arg(long, allow_hyphen_values = true)]
        seed: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// First and second variation of a named field, optionally against finite differences.
    Variation {
        model: PathBuf,
        /// constant-normal | coordinate-times-normal | harmonic:K | random:SEED
        #[arg(long)]
        field: String,
        /// Ambient vector `y`, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        y: Option<String>,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        h: f64,
        /// Also run Richardson finite differences.
        #[arg(long)]
        fd: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Reproduction suite over the model catalog.
    Demo {
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
}

/// A finished command: the report, where it goes and the exit code.
#[derive(Debug)]
pub struct Outcome {
    pub report: Report,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub exit: i32,
}

fn overrides(c: &Common) -> Overrides {
    Overrides { resolution: c.res, truncation: c.trunc }
}

fn grid_for(cfg: &RunConfig) -> Result<WeightedGrid, CliError> {
    let model = cfg.shrinker_model()?;
    Ok(build_grid(&model, cfg.resolution, cfg.truncation)?)
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| {
            let v: f64 =
                t.trim().parse().map_err(|_| ConfigError::Invalid(format!("bad number {t:?} in {what}")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(ConfigError::Invalid(format!("non-finite number in {what}")).into())
            }
        })
        .collect()
}

/// Gamma at a positive half-integer `m / 2`.
fn half_gamma(m: u32) -> f64 {
    let (mut g, mut x) = if m % 2 == 0 { (1.0, 1.0) } else { (PI.sqrt(), 0.5) };
    while x < m as f64 / 2.0 - 1e-12 {
        g *= x;
        x += 1.0;
    }
    g
}

/// `F_{0,1/2}` of `S^k(sqrt k)` from the area of the unit sphere.
pub fn round_sphere_f(k: usize) -> f64 {
    let kf = k as f64;
    let area = 2.0 * PI.powf((kf + 1.0) / 2.0) / half_gamma(k as u32 + 1);
    (2.0 * PI).powf(-kf / 2.0) * area * kf.powf(kf / 2.0) * (-kf / 2.0).exp()
}

/// Closed-form `F_{0,1/2}` for unperturbed catalog files.
fn closed_form_f(m: &ModelFile) -> Option<f64> {
    if m.radius.is_some() || m.scale.is_some() {
        return None;
    }
    match m.kind {
        KindName::Sphere => m.n.map(round_sphere_f),
        KindName::Plane => Some(1.0),
        KindName::Cylinder => m.k.map(round_sphere_f),
        KindName::CliffordTorus => Some(round_sphere_f(1).powi(2)),
    }
}

fn verify(cfg: &RunConfig) -> Result<Report, CliError> {
    let grid = grid_for(cfg)?;
    let tol = cfg.tolerances;
    let mut rep = Report::new(cfg);
    let res = shrinker_residual(&grid);
    rep.check(Check::at_most("shrinker_residual", "shrinker equation H = -x^perp, sup norm", res.sup, tol.shrinker));
    let ids = verify_weighted_identities(&grid)?;
    let anchors = [
        ("second_moment", "weighted second moment equals n"),
        ("first_moments", "weighted first and third moments vanish"),
        ("fourth_moment", "weighted fourth moment identity"),
        ("coordinate_gradient", "weighted x x^T equals tangential projection"),
        ("variance", "weighted variance of |x|^2"),
    ];
    for r in &ids.residuals {
        let anchor = anchors.iter().find(|a| a.0 == r.name).map_or(r.name, |a| a.1);
        rep.check(Check::at_most(r.name, anchor, r.residual, tol.identities));
    }
    let cs = CenterScale::standard(grid.ambient());
    let st = center_scale_stationarity(&grid, &cs)?;
    rep.check(Check::at_most(
        "center_scale_stationarity",
        "critical point of F in (x0, t0)",
        st.max_abs(),
        tol.criticality,
    ));
    let f = f_value(&grid, &cs)?;
    let closed = cfg.model.as_ref().and_then(closed_form_f);
    if let Some(c) = closed {
        rep.check(Check::near("f_value", "F at (0, 1/2) against the closed form", f, c, tol.f_value));
    }
    let eig = verify_eigenfields(&grid, BasisOptions::default())?;
    let mut eig_check = |name: String, anchor: &str, v: Option<f64>| {
        if let Some(v) = v {
            rep.check(Check::at_most(name, anchor, v, tol.eigenfields));
        }
    };
    eig_check("mean_curvature_eigenfield".into(), "L H = 2H", eig.mean_curvature);
    for (i, v) in eig.constant_vectors.iter().enumerate() {
        eig_check(format!("constant_vector_eigenfield_{i}"), "L z^perp = z^perp", *v);
    }
    for (i, v) in eig.coordinates.iter().enumerate() {
        eig_check(format!("coordinate_eigenfunction_{i}"), "drift Laplacian of x_i is -x_i", *v);
    }
    eig_check("square_norm".into(), "drift Laplacian of |x|^2/2 is n - |x|^2", Some(eig.square_norm));
    eig_check("lnu_mean_curvature".into(), "L_nu <H, nu> = 2 <H, nu>", eig.lnu_mean_curvature);
    for (i, v) in eig.lnu_constant_vectors.iter().enumerate() {
        eig_check(format!("lnu_constant_vector_{i}"), "L_nu <z, nu> = <z, nu>", *v);
    }
    rep.data = json!({
        "model": grid.model.name(),
        "nodes": grid.len(),
        "resolution": grid.resolution,
        "f_value": f,
        "f_closed_form": closed,
        "shrinker_residual": res.sup,
        "identity_normalizer": ids.normalizer,
        "stationarity": st,
        "eigenfields": eig,
    });
    Ok(rep)
}

fn export_eigenfields(
    path: &Path,
    grid: &WeightedGrid,
    op: &crate::spectrum::DiscreteOperator,
    spectral: &crate::spectrum::SpectralResult,
) -> Result<(), CliError> {
    let fields: Vec<_> =
        (0..spectral.eigenvalues.len()).map(|k| spectral.eigenfield(op, grid, k)).collect::<crate::Result<_>>()?;
    let mut header: Vec<String> = vec!["node".into()];
    header.extend((0..grid.nodes[0].len()).map(|i| format!("u{i}")));
    header.extend((0..grid.ambient()).map(|i| format!("x{i}")));
    header.push("gaussian_weight".into());
    for k in 0..fields.len() {
        header.extend((0..grid.p()).map(|a| format!("phi{k}_{a}")));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Output(e.into()))?;
    let io = |e: csv::Error| CliError::Output(e.into());
    w.write_record(&header).map_err(io)?;
    for q in 0..grid.len() {
        let mut row = vec![q.to_string()];
        row.extend(grid.nodes[q].iter().map(|v| num(*v)));
        row.extend(grid.geometry[q].position.iter().map(|v| num(*v)));
        row.push(num(grid.gaussian_weights[q]));
        for f in &fields {
            row.extend(f.at(q).iter().map(|v| num(*v)));
        }
        w.write_record(&row).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

fn run_spectrum(
    cfg: &RunConfig,
    operator: &str,
    count: usize,
    band: f64,
    export: Option<&Path>,
) -> Result<Report, CliError> {
    let kind = OperatorKind::parse(operator)?;
    let grid = grid_for(cfg)?;
    let op = assemble(&grid, kind, BasisOptions::default())?;
    let s = spectrum(&op, count, band)?;
    let mut rep = Report::new(cfg);
    rep.check(Check::at_most(
        "orthonormality",
        "eigenvectors orthonormal in the weighted inner product",
        s.orthonormality_residual,
        1e-8,
    ));
    if let Some(g) = s.weak_strong_gap {
        rep.check(Check::at_most("weak_strong_gap", "weak and strong forms of the operator agree", g, 1e-6));
    }
    let mut t = Table::new(&["index", "eigenvalue", "classification", "rayleigh_residual"]);
    for (i, mu) in s.eigenvalues.iter().enumerate() {
        t.push(vec![i.to_string(), num(*mu), s.classification[i].label().into(), num(s.rayleigh_residuals[i])]);
    }
    rep.table = Some(t);
    if let Some(path) = export {
        export_eigenfields(path, &grid, &op, &s)?;
    }
    rep.data = json!({
        "model": grid.model.name(),
        "operator": kind.label(),
        "basis": op.basis.options,
        "spectrum": s,
        "eigenfields_file": export.map(|p| p.display().to_string()),
    });
    Ok(rep)
}

fn run_stability(cfg: &RunConfig, opts: StabilityOptions) -> Result<(Report, i32), CliError> {
    let grid = grid_for(cfg)?;
    let mut rep = Report::new(cfg);
    match assess(&grid, &opts) {
        Ok(v) => {
            let exit = match v.status {
                Status::StableCandidate => EXIT_OK,
                Status::Unstable => EXIT_UNSTABLE,
                Status::Inconclusive => EXIT_INCONCLUSIVE,
            };
            if let Some(c) = &v.certificate {
                rep.check(Check::at_most(
                    "certificate_worst_case",
                    "worst case of F'' over (h, y) for the certificate field",
                    c.worst_case_fpp,
                    0.0,
                ));
            }
            rep.data = json!({ "model": grid.model.name(), "options": opts, "verdict": v });
            Ok((rep, exit))
        }
        Err(Error::InconclusiveResolution { eigenvalue }) => {
            rep.data = json!({
                "model": grid.model.name(),
                "options": opts,
                "verdict": { "status": Status::Inconclusive, "band_edge_eigenvalue": eigenvalue },
            });
            Ok((rep, EXIT_INCONCLUSIVE))
        }
        Err(e) => Err(e.into()),
    }
}

fn run_entropy(cfg: &RunConfig, seed: Option<&str>) -> Result<Report, CliError> {
    let grid = grid_for(cfg)?;
    let big = grid.ambient();
    let start = match seed {
        None => CenterScale::new(vec![0.0; big], 1.0)?,
        Some(s) => {
            let v = parse_list(s, "--seed")?;
            if v.len() == 1 {
                CenterScale::new(vec![0.0; big], v[0])?
            } else if v.len() == big + 1 {
                CenterScale::new(v[..big].to_vec(), v[big])?
            } else {
                return Err(ConfigError::Invalid(format!(
                    "--seed needs {} values (x0 then t0) or a single t0, got {}",
                    big + 1,
                    v.len()
                ))
                .into());
            }
        }
    };
    let r = entropy(&grid, &start)?;
    let mut rep = Report::new(cfg);
    rep.data = json!({
        "model": grid.model.name(),
        "lambda": r.lambda,
        "x0": r.argmax.x0,
        "t0": r.argmax.t0,
        "stationarity_residuals": r.stationarity,
        "evaluations": r.evaluations,
        "restarts": r.restarts,
        "flat_direction": r.flat_direction,
        "start": start,
    });
    Ok(rep)
}

fn run_variation(cfg: &RunConfig, field: &str, y: Option<&str>, h: f64, fd: bool) -> Result<Report, CliError> {
    let choice = FieldChoice::parse(field)?;
    let grid = grid_for(cfg)?;
    let big = grid.ambient();
    let y = match y {
        Some(s) => parse_list(s, "--y")?,
        None => vec![0.0; big],
    };
    if y.len() != big {
        return Err(ConfigError::Invalid(format!("--y needs {big} components, got {}", y.len())).into());
    }
    if !h.is_finite() {
        return Err(ConfigError::Invalid("--h must be finite".into()).into());
    }
    let var = NormalVariation::new(choice.build(&grid), y, h);
    let cs = CenterScale::standard(big);
    let tol = cfg.tolerances;
    let mut rep = Report::new(cfg);
    let first = first_variation(&grid, &var, &cs)?;
    let second = match second_variation(&grid, &var) {
        Ok(v) => Some(v),
        Err(Error::NotACriticalPoint { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    rep.check(Check::at_most("criticality", "first variation vanishes at a shrinker", first.abs(), tol.criticality));
    let fd_report = if fd {
        let r = finite_difference_variation(&grid, &var, &cs, &DEFAULT_STEPS)?;
        rep.check(Check::at_most(
            "fd_first_gap",
            "first variation against Richardson differences (absolute)",
            (r.analytic_first - r.fd_first).abs(),
            tol.fd_first,
        ));
        if let Some(d) = r.discrepancy_second {
            rep.check(Check::at_most(
                "fd_second_relative",
                "second variation against Richardson differences",
                d,
                tol.fd_second,
            ));
        }
        Some(r)
    } else {
        None
    };
    rep.data = json!({
        "model": grid.model.name(),
        "field": field,
        "y": var.y,
        "h": var.h,
        "first_variation": first,
        "second_variation": second,
        "finite_differences": fd_report,
    });
    Ok(rep)
}

fn run_demo(cfg: &RunConfig, trials: usize, seed: u64) -> Result<Report, CliError> {
    let res = cfg.resolution.compact.unwrap_or(32);
    let grid = |m: ShrinkerModel| -> Result<WeightedGrid, CliError> {
        Ok(build_grid(&m, Resolution::uniform(res), cfg.truncation)?)
    };
    let mut rep = Report::new(cfg);
    let mut data = serde_json::Map::new();

    let circle = grid(ShrinkerModel::sphere(1, 1)?)?;
    let sphere = grid(ShrinkerModel::sphere(2, 1)?)?;
    let plane = grid(ShrinkerModel::plane(2, 1)?)?;
    let f_circle = f_value(&circle, &CenterScale::standard(2))?;
    let f_sphere = f_value(&sphere, &CenterScale::standard(3))?;
    let f_plane = f_value(&plane, &CenterScale::standard(3))?;
    let circle_exact = (2.0 * PI).sqrt() / E.sqrt();
    rep.check(Check::near("f_circle", "F of the unit circle is sqrt(2 pi / e)", f_circle, circle_exact, 1e-6));
    rep.check(Check::near("f_sphere", "F of the 2-sphere of radius sqrt 2 is 4/e", f_sphere, 4.0 / E, 1e-6));
    rep.check(Check::near("f_plane", "F of a plane is 1", f_plane, 1.0, 1e-10));
    data.insert("f_values".into(), json!({ "circle": f_circle, "sphere2": f_sphere, "plane": f_plane }));

    let catalog = [
        ShrinkerModel::sphere(1, 1)?,
        ShrinkerModel::sphere(2, 2)?,
        ShrinkerModel::sphere(3, 1)?,
        ShrinkerModel::cylinder(1, 2, 1)?,
        ShrinkerModel::clifford_torus()?,
        ShrinkerModel::plane(2, 1)?,
    ];
    let mut residuals = serde_json::Map::new();
    for m in catalog {
        let g = grid(m)?;
        let r = shrinker_residual(&g).sup;
        rep.check(Check::at_most(format!("shrinker_{}", g.model.name()), "shrinker equation", r, 1e-10));
        residuals.insert(g.model.name(), json!(r));
    }
    data.insert("shrinker_residuals".into(), residuals.into());

    let op = assemble(&sphere, OperatorKind::FullL, BasisOptions::default())?;
    let s = spectrum(&op, 10, DEFAULT_BAND)?;
    let exact = [-2.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 4.0];
    let dev = s.eigenvalues.iter().zip(exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    rep.check(Check::at_most("sphere_spectrum", "stability spectrum of the round 2-sphere", dev, 1e-3));
    data.insert("sphere_spectrum".into(), json!(s.eigenvalues));

    let demo = sphere_stability_demo(2, 1, trials, seed, res)?;
    rep.check(Check::at_least("sphere_demo_min", "explicit (h, y) choice on the round sphere", demo.min, -1e-6));
    data.insert("sphere_demo".into(), json!(demo));

    let torus = grid(ShrinkerModel::clifford_torus()?)?;
    let cv = constant_vector_instability(&torus, &standard_basis(4))?;
    rep.check(Check::at_most("clifford_constant_vector", "constant-vector instability of the Clifford torus", cv.worst, -1e-3));
    data.insert("clifford_constant_vector".into(), json!(cv));

    let cyl = grid(ShrinkerModel::cylinder(1, 2, 1)?)?;
    let cr = cylinder_instability(&cyl, &[4.0])?;
    rep.check(Check::at_most("cylinder_cutoff_j4", "cut-off coordinate field on the cylinder", cr.entries[0].max_fpp, 0.0));
    data.insert("cylinder".into(), json!(cr));

    for n in [1, 2] {
        let m = monotonicity_equality_check(n, 5)?;
        rep.check(Check::at_most(
            format!("monotonicity_equality_n{n}"),
            "monotonicity is an equality along the shrinking sphere",
            m.max_abs_derivative,
            1e-6,
        ));
        data.insert(format!("monotonicity_n{n}"), json!(m));
    }
    let (d, rhs) = off_center_sphere_derivative(2)?;
    rep.check(Check::at_most("monotonicity_control", "strict decrease off the self-similar family", d, -1e-2));
    data.insert("monotonicity_control".into(), json!({ "derivative": d, "rhs": rhs }));

    data.insert("resolution".into(), json!(res));
    rep.data = data.into();
    Ok(rep)
}

fn config(command: &str, model: Option<&Path>, common: &Common, default: Format, seed: Option<u64>) -> Result<RunConfig, CliError> {
    Ok(RunConfig::new(command, model, overrides(common), common.format.unwrap_or(default), seed)?)
}

fn finish(report: Report, common: &Common, exit: Option<i32>) -> Outcome {
    let exit = exit.unwrap_or(if report.all_pass() { EXIT_OK } else { EXIT_CHECK_FAILED });
    Outcome { format: report.config.format, out: common.out.clone(), report, exit }
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Verify { model, common } => {
            let cfg = config("verify", Some(model), common, Format::Json, None)?;
            Ok(finish(verify(&cfg)?, common, None))
        }
        Command::Spectrum { model, operator, count, band, export_eigenfields, common } => {
            let cfg = config("spectrum", Some(model), common, Format::Csv, None)?;
            let rep = run_spectrum(&cfg, operator, *count, *band, export_eigenfields.as_deref())?;
            Ok(finish(rep, common, None))
        }
        Command::Stability { model, count, band, trials, seed, common } => {
            let cfg = config("stability", Some(model), common, Format::Json, Some(*seed))?;
            let opts = StabilityOptions {
                count: *count,
                band: *band,
                validation: Validation { samples: *trials, seed: *seed },
                ..StabilityOptions::default()
            };
            let (rep, exit) = run_stability(&cfg, opts)?;
            Ok(finish(rep, common, Some(exit)))
        }
        Command::Entropy { model, seed, common } => {
            let cfg = config("entropy", Some(model), common, Format::Json, None)?;
            Ok(finish(run_entropy(&cfg, seed.as_deref())?, common, None))
        }
        Command::Variation { model, field, y, h, fd, common } => {
            let cfg = config("variation", Some(model), common, Format::Json, None)?;
            Ok(finish(run_variation(&cfg, field, y.as_deref(), *h, *fd)?, common, None))
        }
        Command::Demo { trials, seed, common } => {
            let cfg = config("demo", None, common, Format::Json, Some(*seed))?;
            Ok(finish(run_demo(&cfg, *trials, *seed)?, common, None))
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| ConfigError::Invalid(format!("{THREADS_ENV} must be a thread count, got {v:?}")))?;
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ConfigError::Invalid(format!("cannot start {n} threads: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn emit(outcome: &Outcome) -> Result<(), CliError> {
    let bytes = outcome.report.render(outcome.format)?;
    match &outcome.out {
        Some(p) => std::fs::write(p, bytes)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(&bytes)?;
            out.flush()?;
        }
    }
    Ok(())
}

/// Parse arguments, run, write the report and return the exit code. Timing
/// and failure summaries go to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let started = Instant::now();
    let result = configure_threads().and_then(|_| run(&cli)).and_then(|o| emit(&o).map(|_| o));
    match result {
        Ok(o) => {
            for c in o.report.failures() {
                eprintln!("FAIL {}: {} (tolerance {}) [{}]", c.name, num(c.value), num(c.tolerance), c.anchor);
            }
            eprintln!("{} finished in {:.3} s", o.report.command, started.elapsed().as_secs_f64());
            o.exit
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
