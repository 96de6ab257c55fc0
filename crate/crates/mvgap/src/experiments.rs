//! The registered experiments. Each one turns a resolved configuration into
//! claims, a JSON results block and optional CSV artifacts.

use std::f64::consts::PI;
use std::time::Instant;

use serde_json::{json, Value};
use thiserror::Error;

use mvgap_core::forms::{
    check_crucial_identity, check_ibp, mc_observe, mc_rayleigh, CylindricalFunction, McConfig,
    OuterFunction, Side,
};
use mvgap_core::manifold::{
    build_theta_form, BaseMeasure, GridFunction, GridKind, GridVectorField, ManifoldGrid,
    Potential,
};
use mvgap_core::measure::Partition;
use mvgap_core::sampling::{
    parallel_accumulate, DirichletMeasureSampler, DirichletMethod, GammaMeasureSampler,
    LevyTruncation, RngStream,
};
use mvgap_core::spectral::builders::{
    form_generator, normalize_test_function, slow_mode_quotient, stated_generator,
};
use mvgap_core::spectral::trajectory::default_dt;
use mvgap_core::spectral::{
    build_jacobi_problem, build_laguerre_problem, build_one_particle_problem, fit_decay_rate,
    kkl_certificate, rpp_quadrature_check, simulate_laguerre, simulate_wright_fisher, AcfWindow,
    HatGrid, SBoundary, SpectralProblem, Trajectory,
};
use mvgap_core::special::expint_e1;
use mvgap_core::stats::{batch_means, ks_test_unsorted, CovarianceAccumulator, ReferenceCdf};

use crate::config::{ConfigError, Experiment, ExperimentConfig};
use crate::report::{Claim, Environment, Report, Tolerance, SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] mvgap_core::Error),
}

impl RunError {
    /// True when the failure stems from the configuration rather than from
    /// a numerical routine.
    pub fn is_config(&self) -> bool {
        use mvgap_core::Error as E;
        match self {
            RunError::Config(_) => true,
            RunError::Core(e) => matches!(
                e,
                E::InvalidGrid(_) | E::InvalidMeasure(_) | E::InvalidParameter { .. }
            ),
        }
    }
}

type Run<T> = Result<T, RunError>;

/// Every anchor an experiment may attach to a claim.
pub const ANCHORS: &[&str] = &[
    "gamma-total-mass-law",
    "gamma-partition-law",
    "levy-atom-count",
    "small-jump-deficit",
    "dirichlet-normalized",
    "dirichlet-partition-law",
    "dirichlet-method-agreement",
    "mass-shape-independence",
    "dirichlet-linear-mean",
    "dirichlet-linear-second-moment",
    "dirichlet-linear-variance",
    "gamma-mass-mean",
    "gamma-mass-second-moment",
    "crucial-identity",
    "integration-by-parts",
    "ibp-divergence-free",
    "theta-gap",
    "one-particle-gap",
    "one-particle-slow-mode",
    "one-particle-truncation-stability",
    "laguerre-gap",
    "laguerre-r-independence",
    "laguerre-eigenfunction",
    "laguerre-second-eigenvalue",
    "jacobi-gap",
    "lambda-theta",
    "bracket-certificate",
    "kkl-certificate-mc",
    "kkl-lower-bound",
    "laguerre-stationary-mean",
    "laguerre-stationary-law",
    "laguerre-decay-rate",
    "wf-stationary-mean",
    "wf-stationary-law",
    "wf-decay-rate",
    "generator-slow-mode",
    "rpp-monotone",
    "rpp-limit",
    "rpp-form-value",
    "seed-matrix",
];

/// A CSV side artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file_name: String,
    pub contents: String,
}

#[derive(Default)]
struct Outcome {
    claims: Vec<Claim>,
    results: serde_json::Map<String, Value>,
    artifacts: Vec<Artifact>,
}

impl Outcome {
    fn claim(&mut self, c: Claim) {
        debug_assert!(ANCHORS.contains(&c.anchor.as_str()), "unregistered anchor {}", c.anchor);
        self.claims.push(c);
    }

    fn result(&mut self, key: &str, v: Value) {
        self.results.insert(key.to_string(), v);
    }

    fn artifact(&mut self, name: &str, contents: String) {
        self.artifacts.push(Artifact {
            file_name: name.to_string(),
            contents,
        });
    }
}

pub fn run(cfg: &ExperimentConfig) -> Run<(Report, Vec<Artifact>)> {
    let start = Instant::now();
    let out = match cfg.experiment() {
        Experiment::VerifyGammaMeasure => verify_gamma_measure(cfg)?,
        Experiment::VerifyDirichletMeasure => verify_dirichlet_measure(cfg)?,
        Experiment::VerifyIndependence => verify_independence(cfg)?,
        Experiment::VerifyMoments => verify_moments(cfg)?,
        Experiment::VerifyCrucialIdentity => verify_crucial_identity(cfg)?,
        Experiment::VerifyIbp => verify_ibp(cfg)?,
        Experiment::GapTheta => gap_theta(cfg)?,
        Experiment::GapOneParticle => gap_one_particle(cfg)?,
        Experiment::GapLaguerre => gap_laguerre(cfg)?,
        Experiment::GapJacobi => gap_jacobi(cfg)?,
        Experiment::BoundsDirichlet => summarize_bounds(cfg)?,
        Experiment::SimulateLaguerre => run_simulate_laguerre(cfg)?,
        Experiment::SimulateWf => run_simulate_wf(cfg)?,
        Experiment::RppCheck => rpp_check(cfg)?,
    };
    let report = Report {
        schema_version: SCHEMA_VERSION,
        experiment: cfg.experiment().name().to_string(),
        claims: out.claims,
        environment: Environment {
            seed: cfg.u64("seed"),
            version: env!("CARGO_PKG_VERSION").to_string(),
            elapsed_seconds: start.elapsed().as_secs_f64(),
        },
        config: cfg.values().clone(),
        results: Value::Object(out.results),
    };
    Ok((report, out.artifacts))
}

/// Runs the experiment for `count` consecutive seeds starting at the
/// configured one; passes when at least 90% of the runs pass.
pub fn run_seed_matrix(cfg: &ExperimentConfig, count: usize) -> Run<Report> {
    let start = Instant::now();
    let base = cfg.u64("seed");
    let mut runs = Vec::new();
    let mut passes = 0usize;
    for k in 0..count as u64 {
        let mut c = cfg.clone();
        c.set("seed", &(base + k).to_string())?;
        let (r, _) = run(&c)?;
        if r.pass() {
            passes += 1;
        }
        runs.push(json!({
            "seed": base + k,
            "pass": r.pass(),
            "failed": r.failures().map(|c| c.anchor.clone()).collect::<Vec<_>>(),
        }));
    }
    let required = (9 * count).div_ceil(10);
    let claim = Claim::new(
        "seed-matrix",
        format!("runs passing out of {count}"),
        required as f64,
        passes as f64,
        Tolerance::AtLeast { value: 0.0 },
    );
    Ok(Report {
        schema_version: SCHEMA_VERSION,
        experiment: cfg.experiment().name().to_string(),
        claims: vec![claim],
        environment: Environment {
            seed: base,
            version: env!("CARGO_PKG_VERSION").to_string(),
            elapsed_seconds: start.elapsed().as_secs_f64(),
        },
        config: cfg.values().clone(),
        results: json!({ "seedMatrix": runs }),
    })
}

fn base_measure(cfg: &ExperimentConfig) -> Run<BaseMeasure> {
    let nx = cfg.usize("nx");
    let grid = match cfg.str("manifold") {
        "circle" => ManifoldGrid::circle(cfg.f64("length"), nx)?,
        _ => ManifoldGrid::interval(cfg.f64("a"), cfg.f64("b"), nx)?,
    };
    let potential = match cfg.str("potential") {
        "cosine" => Potential::Cosine {
            amplitude: cfg.f64("amplitude"),
        },
        _ => Potential::Zero,
    };
    Ok(BaseMeasure::new(grid, &potential)?)
}

fn theta_with_mass(cfg: &ExperimentConfig) -> Run<BaseMeasure> {
    Ok(base_measure(cfg)?.with_total_mass(cfg.f64("theta_mass"))?)
}

fn truncation(cfg: &ExperimentConfig) -> Run<LevyTruncation> {
    Ok(LevyTruncation::new(cfg.f64("eps"), true)?)
}

fn mc_config(cfg: &ExperimentConfig) -> Run<McConfig> {
    Ok(McConfig {
        seed: cfg.u64("seed"),
        samples: cfg.usize("samples"),
        trunc: truncation(cfg)?,
    })
}

/// Analytic gap of the weighted Laplacian when V is constant.
fn flat_gap(cfg: &ExperimentConfig, grid: &ManifoldGrid) -> Option<f64> {
    if cfg.str("potential") != "zero" {
        return None;
    }
    Some(match grid.kind() {
        GridKind::Circle { length } => (2.0 * PI / length).powi(2),
        GridKind::Interval { a, b } => (PI / (b - a)).powi(2),
    })
}

/// Runs `f` once per sample in deterministic chunks and concatenates.
fn collect<T, F>(seed: u64, stream_base: u64, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut RngStream) -> T + Sync,
{
    parallel_accumulate(
        seed,
        stream_base,
        n,
        |rng, len, acc: &mut Vec<T>| {
            acc.reserve(len);
            for _ in 0..len {
                acc.push(f(rng));
            }
        },
        |a, b| a.extend(b),
    )
}

fn ks_claim(anchor: &str, what: String, samples: &[f64], cdf: &ReferenceCdf, level: f64) -> (Claim, Value) {
    let ks = ks_test_unsorted(samples, cdf);
    let claim = Claim::new(anchor, what, level, ks.p_value, Tolerance::PValue);
    (claim, json!({ "statistic": ks.statistic, "pValue": ks.p_value, "n": ks.n }))
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn verify_gamma_measure(cfg: &ExperimentConfig) -> Run<Outcome> {
    let mut out = Outcome::default();
    let base = base_measure(cfg)?;
    let n = cfg.usize("samples");
    let seed = cfg.u64("seed");
    let level = cfg.f64("ks_level");
    let trunc = LevyTruncation::new(cfg.f64("eps"), cfg.bool("compensate"))?;
    let part = Partition::contiguous(base.grid().len(), cfg.usize("cells"))
        ?;
    let mut per_mass = Vec::new();
    for (k, &m) in cfg.list("mass_values").iter().enumerate() {
        let theta = base.with_total_mass(m)?;
        let sampler = GammaMeasureSampler::new(&theta, trunc);
        let totals: Vec<f64> = collect(seed, (k as u64) << 32, n, |rng| sampler.sample(rng).total_mass());
        let (c, ks) = ks_claim(
            "gamma-total-mass-law",
            format!("total mass ~ Gamma({m}) (KS)"),
            &totals,
            &ReferenceCdf::Gamma { shape: m },
            level,
        );
        out.claim(c);
        // Below the cutoff the law of a cell mass with shape a is distorted on
        // a set of probability about eps^a, so small shapes need a finer cutoff.
        let a_min = part.cells().iter().map(|c| theta.mass_of(c)).fold(f64::MAX, f64::min);
        let part_eps = trunc.eps.min((0.05 / (n as f64).sqrt()).powf(1.0 / a_min));
        let fine = GammaMeasureSampler::new(&theta, LevyTruncation::new(part_eps, trunc.compensate)?);
        let draws: Vec<Vec<f64>> =
            collect(seed, ((k as u64) << 32) + (1 << 30), n, |rng| fine.sample(rng).partition_masses(&part));
        let mut cells = Vec::new();
        for (i, cell) in part.cells().iter().enumerate() {
            let shape = theta.mass_of(cell);
            let v: Vec<f64> = draws.iter().map(|d| d[i]).collect();
            let (c, ks) = ks_claim(
                "gamma-partition-law",
                format!("theta(M)={m}: cell {i} mass ~ Gamma({shape:.6}) (KS)"),
                &v,
                &ReferenceCdf::Gamma { shape },
                level,
            );
            out.claim(c);
            cells.push(ks);
        }
        per_mass.push(json!({ "thetaMass": m, "totalMass": ks, "cells": cells, "partitionEps": part_eps }));
        if k == 0 {
            let mut rng = RngStream::new(seed, u64::MAX);
            out.artifact("sample_measure.csv", sampler.sample(&mut rng).to_csv(theta.grid()));
        }
    }
    out.result("laws", Value::Array(per_mass));

    // Atom count and small-jump deficit at coarse cutoffs, theta(M) = 1.
    let theta = base.with_total_mass(1.0)?;
    let coarse = GammaMeasureSampler::new(&theta, LevyTruncation::new(1.0, false)?);
    let counts: Vec<f64> = collect(seed, 1 << 48, n, |rng| coarse.sample_configuration(rng).len() as f64);
    let (m, se) = mean_stderr(&counts);
    out.claim(Claim::new(
        "levy-atom-count",
        "mean atom count at eps = 1 equals E1(1)",
        expint_e1(1.0),
        m,
        Tolerance::ZScore { value: 3.0, stderr: se },
    ));
    let eps = 0.2;
    let uncompensated = GammaMeasureSampler::new(&theta, LevyTruncation::new(eps, false)?);
    let totals: Vec<f64> = collect(seed, (1 << 48) + (1 << 40), n, |rng| uncompensated.sample(rng).total_mass());
    let (m, se) = mean_stderr(&totals);
    out.claim(Claim::new(
        "small-jump-deficit",
        "uncompensated mass deficit at eps = 0.2 equals 1 - exp(-0.2)",
        1.0 - (-eps).exp(),
        1.0 - m,
        Tolerance::ZScore { value: 3.0, stderr: se },
    ));
    out.result("atomCount", json!({ "mean": counts.iter().sum::<f64>() / n as f64, "expected": expint_e1(1.0) }));
    Ok(out)
}

fn verify_dirichlet_measure(cfg: &ExperimentConfig) -> Run<Outcome> {
    let mut out = Outcome::default();
    let theta = theta_with_mass(cfg)?;
    let total = theta.total_mass();
    let n = cfg.usize("samples");
    let seed = cfg.u64("seed");
    let part = Partition::contiguous(theta.grid().len(), 2)?;
    let alpha = theta.mass_of(&part.cells()[0]);
    let sticks = match cfg.usize("sticks") {
        0 => None,
        k => Some(k),
    };
    let methods = [
        ("levy-normalize", DirichletMethod::LevyNormalize),
        ("stick-breaking", DirichletMethod::StickBreaking(sticks)),
    ];
    let mut means = Vec::new();
    let mut per_method = Vec::new();
    for (k, (name, method)) in methods.into_iter().enumerate() {
        let sampler = DirichletMeasureSampler::new(&theta, truncation(cfg)?, method);
        let draws: Vec<(f64, f64)> = collect(seed, (k as u64) << 32, n, |rng| {
            let mu = sampler.sample(rng);
            (mu.total_mass(), mu.partition_masses(&part)[0])
        });
        let max_dev = draws.iter().map(|d| (d.0 - 1.0).abs()).fold(0.0, f64::max);
        out.claim(Claim::new(
            "dirichlet-normalized",
            format!("{name}: every sample has total mass 1"),
            0.0,
            max_dev,
            Tolerance::Absolute { value: 1e-12 },
        ));
        let cell: Vec<f64> = draws.iter().map(|d| d.1).collect();
        let (c, ks) = ks_claim(
            "dirichlet-partition-law",
            format!("{name}: first-half mass ~ Beta({alpha:.6}, {:.6}) (KS)", total - alpha),
            &cell,
            &ReferenceCdf::Beta { a: alpha, b: total - alpha },
            cfg.f64("ks_level"),
        );
        out.claim(c);
        let (m, se) = mean_stderr(&cell);
        means.push((m, se));
        per_method.push(json!({ "method": name, "sticks": sampler.sticks(), "cellMean": m, "cellStderr": se, "ks": ks }));
    }
    let se = (means[0].1.powi(2) + means[1].1.powi(2)).sqrt();
    out.claim(Claim::new(
        "dirichlet-method-agreement",
        "partition-mass means of both methods agree",
        means[1].0,
        means[0].0,
        Tolerance::ZScore { value: cfg.f64("z_max"), stderr: se },
    ));
    out.result("methods", Value::Array(per_method));
    out.result("expectedCellMean", json!(alpha / total));
    Ok(out)
}

fn verify_independence(cfg: &ExperimentConfig) -> Run<Outcome> {
    let mut out = Outcome::default();
    let theta = theta_with_mass(cfg)?;
    let n = cfg.usize("samples");
    let k = cfg.usize("cells");
    let part = Partition::contiguous(theta.grid().len(), k)?;
    let sampler = GammaMeasureSampler::new(&theta, truncation(cfg)?);
    let accs = parallel_accumulate(
        cfg.u64("seed"),
        0,
        n,
        |rng, len, acc: &mut Vec<CovarianceAccumulator>| {
            acc.resize(k, CovarianceAccumulator::default());
            for _ in 0..len {
                let eta = sampler.sample(rng);
                let total = eta.total_mass();
                for (a, p) in acc.iter_mut().zip(eta.partition_masses(&part)) {
                    a.push(total, p / total);
                }
            }
        },
        |a, b| {
            a.resize(k, CovarianceAccumulator::default());
            for (x, y) in a.iter_mut().zip(&b) {
                x.merge(y);
            }
        },
    );
    let bound = 3.0 / (n as f64).sqrt();
    let mut corrs = Vec::new();
    for (i, a) in accs.iter().enumerate() {
        let r = a.correlation();
        corrs.push(r);
        out.claim(Claim::new(
            "mass-shape-independence",
            format!("corr(total mass, normalized mass of cell {i}) within 3/sqrt(N)"),
            0.0,
            r,
            Tolerance::Absolute { value: bound },
        ));
    }
    out.result("correlations", json!(corrs));
    out.result("bound", json!(bound));
    Ok(out)
}

fn moment_test_function(theta: &BaseMeasure) -> GridFunction {
    let grid = theta.grid();
    let (lo, hi) = (grid.nodes()[0], grid.nodes()[grid.len() - 1]);
    let w = 2.0 * PI / (hi - lo + grid.spacing());
    grid.sample(|x| 1.0 + (w * (x - lo)).cos() + 0.5 * (2.0 * w * (x - lo)).sin())
}

fn verify_moments(cfg: &ExperimentConfig) -> Run<Outcome> {
    let mut out = Outcome::default();
    let base = base_measure(cfg)?;
    let z_max = cfg.f64("z_max");
    let mut rows = Vec::new();
    for (k, &m) in cfg.list("mass_values").iter().enumerate() {
        let theta = base.with_total_mass(m)?;
        let g = moment_test_function(&theta);
        let h = normalize_test_function(&theta, &g)?;
        let mut mc = mc_config(cfg)?;
        mc.seed = mc.seed.wrapping_add(k as u64);
        let acc = mc_observe(&mc, &theta, Side::Dirichlet, 4, |mu, o| {
            let (a, b) = (mu.pair(&g), mu.pair(&h));
            o.copy_from_slice(&[a, a * a, b, b * b]);
        });
        let tg = theta.integrate(&g);
        let tg2 = theta.integrate(&g.map(|x| x * x));
        let mean = acc.estimate(0);
        let second = acc.estimate(1);
        let mh = acc.mean(2);
        let var = acc.delta_method(acc.mean(3) - mh * mh, &[0.0, 0.0, -2.0 * mh, 1.0]);
        let ztol = |se: f64| Tolerance::ZScore { value: z_max, stderr: se };
        out.claim(Claim::new(
            "dirichlet-linear-mean",
            format!("theta(M)={m}: D(F_g) = theta(g)/theta(M)"),
            tg / m,
            mean.value,
            ztol(mean.stderr),
        ));
        out.claim(Claim::new(
            "dirichlet-linear-second-moment",
            format!("theta(M)={m}: D(F_g^2) = (theta(g^2)+theta(g)^2)/(theta(M)(theta(M)+1))"),
            (tg2 + tg * tg) / (m * (m + 1.0)),
            second.value,
            ztol(second.stderr),
        ));
        out.claim(Claim::new(
            "dirichlet-linear-variance",
            format!("theta(M)={m}: Var(F_h) = 1/(theta(M)(theta(M)+1)) for normalized h"),
            1.0 / (m * (m + 1.0)),
            var.value,
            ztol(var.stderr),
        ));
        let acc = mc_observe(&mc, &theta, Side::Gamma, 2, |eta, o| {
            let t = eta.total_mass();
            o.copy_from_slice(&[t, t * t]);
        });
        let (f0, f02) = (acc.estimate(0), acc.estimate(1));
        out.claim(Claim::new(
            "gamma-mass-mean",
            format!("theta(M)={m}: G(F0) = theta(M)"),
            m,
            f0.value,
            ztol(f0.stderr),
        ));
        out.claim(Claim::new(
            "gamma-mass-second-moment",
            format!("theta(M)={m}: G(F0^2) = theta(M)^2 + theta(M)"),
            m * m + m,
            f02.value,
            ztol(f02.stderr),
        ));
        rows.push(json!({
            "thetaMass": m,
            "meanFg": mean, "secondFg": second, "varFh": var, "gammaF0": f0, "gammaF0Sq": f02,
        }));
    }
    out.result("moments", Value::Array(rows));
    Ok(out)
}

/// Three (F, G) pairs: identical linear, product against linear, and a
/// nonlinear pair of different arity.
pub fn identity_pairs(grid: &ManifoldGrid) -> Vec<(&'static str, CylindricalFunction, CylindricalFunction)> {
    let (lo, hi) = (grid.nodes()[0], grid.nodes()[grid.len() - 1]);
    let w = 2.0 * PI / (hi - lo + grid.spacing());
    let h1 = grid.sample(|x| (w * (x - lo)).cos());
    let h2 = grid.sample(|x| 0.5 + (2.0 * w * (x - lo)).sin());
    let h3 = grid.sample(|x| (w * (x - lo)).sin());
    let lin = |h: &GridFunction| CylindricalFunction::linear(grid, h.clone()).expect("valid");
    let prod = CylindricalFunction::new(grid, vec![h1.clone(), h2.clone()], OuterFunction::Product { arity: 2 })
        .expect("valid");
    let tanh = CylindricalFunction::new(
        grid,
        vec![h1.clone(), h2.clone()],
        OuterFunction::TanhLinear { coeffs: vec![1.0, -0.7], offset: 0.2 },
    )
    .expect("valid");
    let sq = CylindricalFunction::new(grid, vec![h3], OuterFunction::square()).expect("valid");
    vec![
        ("linear-linear", lin(&h1), lin(&h1)),
        ("product-linear", prod, lin(&h2)),
        ("tanh-square", tanh, sq),
    ]
}

fn verify_crucial_identity(cfg: &ExperimentConfig) -> Run<Outcome> {
    let mut out = Outcome::default();
    let theta = theta_with_mass(cfg)?;
    let lambda = cfg.f64("lambda");
    let mut checks = Vec::new();
    for (k, (name, f, g)) in identity_pairs(theta.grid()).into_iter().enumerate() {
        let mut mc = mc_config(cfg)?;
        mc.seed = mc.seed.wrapping_add(1000 * k as u64);
        let mut c = check_crucial_identity(&mc, &theta, lambda, &f, &g)?;
        c.config.insert("pair".into(), json!(name));
        c.config.insert("lambda".into(), json!(lambda));
        out.claim(Claim::z(
            "crucial-identity",
            format!("{name}: Gamma-side lifted form equals Dirichlet-side expression"),
            c.z,
            cfg.f64("z_max"),
        ));
        checks.push(serde_json::to_value(&c).expect("serializable"));
    }
    out.result("checks", Value::Array(checks));
    Ok(out)
}

/// sin-shaped vector field; on intervals it vanishes at both ends.
fn test_vector_field(grid: &ManifoldGrid) -> Run<GridVectorField> {
    let field = match grid.kind() {
        GridKind::Circle { length } => GridVectorField::from_fn(grid, |x| (2.0 * PI * x / length).sin()),
        GridKind::Interval { a, b } => GridVectorField::from_fn(grid, |x| (PI * (x - a) / (b - a)).sin()),
    };
    Ok(field?)
}

fn verify_ibp(cfg: &ExperimentConfig) -> Run<Outcome> {
    let mut out = Outcome::default();
    let theta = theta_with_mass(cfg)?;
    let grid = theta.grid().clone();
    let v = test_vector_field(&grid)?;
    let (lo, hi) = (grid.nodes()[0], grid.nodes()[grid.len() - 1]);
    let w = 2.0 * PI / (hi - lo + grid.spacing());
    let f = CylindricalFunction::new(
        &grid,
        vec![grid.sample(|x| (w * (x - lo)).cos()), grid.sample(|x| (2.0 * w * (x - lo)).sin())],
        OuterFunction::TanhLinear { coeffs: vec![1.0, 0.5], offset: 0.1 },
    )?;
    let z_max = cfg.f64("z_max");
    let mut checks = Vec::new();
    for (k, &eps) in cfg.list("ibp_eps").iter().enumerate() {
        let mut mc = mc_config(cfg)?;
        mc.seed = mc.seed.wrapping_add(1000 * k as u64);
        let mut c = check_ibp(&mc, &theta, &f, &v, eps)?;
        c.config.insert("eps".into(), json!(eps));
        out.claim(Claim::z(
            "integration-by-parts",
            format!("eps={eps}: E[d_v (F o psi)] = -E[(F o psi) B]"),
            c.z,
            z_max,
        ));
        checks.push(serde_json::to_value(&c).expect("serializable"));
    }
    if grid.is_circle() {
        let flat = BaseMeasure::new(grid.clone(), &Potential::Zero)?.with_total_mass(theta.total_mass())?;
        let one = CylindricalFunction::constant(&grid, 1.0);
        let eps = cfg.list("ibp_eps")[0];
        let mut mc = mc_config(cfg)?;
        mc.seed = mc.seed.wrapping_add(999_999);
        let mut c = check_ibp(&mc, &flat, &one, &v, eps)?;
        c.config.insert("case".into(), json!("divergence-free"));
        out.claim(Claim::new(
            "ibp-divergence-free",
            "flat circle, F = 1: lhs is exactly 0",
            0.0,
            c.lhs,
            Tolerance::Absolute { value: 0.0 },
        ));
        out.claim(Claim::new(
            "ibp-divergence-free",
            "flat circle, F = 1: rhs is 0 within stderr",
            0.0,
            c.rhs,
            Tolerance::ZScore { value: z_max, stderr: c.rhs_stderr.max(1e-15) },
        ));
        checks.push(serde_json::to_value(&c).expect("serializable"));
    }
    out.result("checks", Value::Array(checks));
    Ok(out)
}

fn eigen_csv(x: &[f64], u: &[f64]) -> String {
    let mut s = String::from("x,u\n");
    for (a, b) in x.iter().zip(u) {
        s.push_str(&format!("{a:.12e},{b:.12e}\n"));
    }
    s
}

fn gap_json(p: &SpectralProblem, gap: &mvgap_core::spectral::GapResult) -> Value {
    json!({
        "gap": gap.gap,
        "ground": gap.ground,
        "residual": gap.residual,
        "gridMeta": { "label": p.meta().label, "unknowns": p.len() },
    })
}

fn gap_theta(cfg: &ExperimentConfig) -> Run<Outcome> {
    let mut out = Outcome::default();
    let theta = theta_with_mass(cfg)?;
    let p = build_theta_form(&theta);
    let pairs = p.smallest_eigenpairs(2)?;
    let g = p.gap_from(&pairs);
    let (expected, how) = match flat_gap(cfg, theta.grid()) {
        Some(e) => (e, "analytic"),
        None => {
            let mut fine = cfg.clone();
            fine.set("nx", &(2 * cfg.usize("nx")).to_string())?;
            (build_theta_form(&theta_with_mass(&fine)?).gap()?.gap, "refined grid")
        }
    };
    out.claim(Claim::new(
        "theta-gap",
        format!("weighted Laplacian gap matches the {how} value"),
        expected,
        g.gap,
        Tolerance::Relative { value: 0.01 },
    ));
    out.result("gap", gap_json(&p, &g));
    out.artifact("eigenfunction.csv", eigen_csv(theta.grid().nodes(), &pairs.vectors[1]));
    Ok(out)
}

fn hat_grid(cfg: &ExperimentConfig, theta: &BaseMeasure, refine: bool) -> Run<HatGrid> {
    let boundary = match cfg.str("boundary") {
        "reflecting" => SBoundary::Reflecting,
        _ => SBoundary::Absorbing,
    };
    let (mut s_min, mut s_max, mut n) = (cfg.f64("s_min"), cfg.f64("s_max"), cfg.usize("s_nodes"));
    if refine {
        s_min *= 0.5;
        s_max *= 2.0;
        n += 60;
    }
    Ok(HatGrid::new(theta, s_min, s_max, n, boundary)?)
}

fn gap_one_particle(cfg: &ExperimentConfig) -> Run<Outcome> {
    let mut out = Outcome::default();
    let theta = theta_with_mass(cfg)?;
    let lambda = cfg.f64("lambda");
    let hat = hat_grid(cfg, &theta, false)?;
    let p = build_one_particle_problem(&hat, lambda);
    let pairs = p.smallest_eigenpairs(2)?;
    let g = p.gap_from(&pairs);
    out.claim(Claim::new(
        "one-particle-gap",
        "one-particle form gap equals lambda",
        lambda,
        g.gap,
        Tolerance::Relative { value: 0.05 },
    ));
    let q = slow_mode_quotient(&hat, &p);
    out.claim(Claim::new(
        "one-particle-slow-mode",
        "Rayleigh quotient of the affine-in-s slow mode equals lambda",
        lambda,
        q,
        Tolerance::Relative { value: 0.03 },
    ));
    let fine = hat_grid(cfg, &theta, true)?;
    let gf = build_one_particle_problem(&fine, lambda).gap()?;
    out.claim(Claim::new(
        "one-particle-truncation-stability",
        "gap changes by less than 2% after halving s_min, doubling s_max",
        gf.gap,
        g.gap,
        Tolerance::Relative { value: 0.02 },
    ));
    out.result("gap", gap_json(&p, &g));
    out.result("refinedGap", json!(gf.gap));
    out.result("slowModeQuotient", json!(q));
    let idx = if p.has_killing() { 0 } else { 1 };
    let nx = theta.grid().len();
    let mut csv = String::from("s,x,u\n");
    for (k, (s, u)) in p.meta().coordinates.iter().zip(&pairs.vectors[idx]).enumerate() {
        csv.push_str(&format!("{s:.12e},{:.12e},{u:.12e}\n", theta.grid().nodes()[k % nx]));
    }
    out.artifact("eigenfunction.csv", csv);
    Ok(out)
}

fn gap_laguerre(cfg: &ExperimentConfig) -> Run<Outcome> {
    let mut out = Outcome::default();
    let lambda = cfg.f64("lambda");
    let mut gaps = Vec::new();
    let mut rows = Vec::new();
    for (k, &r) in cfg.list("r_values").iter().enumerate() {
        let p = build_laguerre_problem(lambda, r, cfg.f64("s_max"), cfg.usize("nodes"))?;
        let pairs = p.smallest_eigenpairs(3)?;
        let g = p.gap_from(&pairs);
        out.claim(Claim::new(
            "laguerre-gap",
            format!("r={r}: gap equals lambda"),
            lambda,
            g.gap,
            Tolerance::Relative { value: 0.01 },
        ));
        let u = &pairs.vectors[1];
        let target: Vec<f64> = p.meta().coordinates.iter().map(|s| s - r).collect();
        let cos = p.mass_inner(u, &target).abs()
            / (p.mass_inner(u, u) * p.mass_inner(&target, &target)).sqrt();
        out.claim(Claim::new(
            "laguerre-eigenfunction",
            format!("r={r}: cosine similarity of the gap eigenfunction with s - r"),
            1.0,
            cos,
            Tolerance::AtLeast { value: 0.001 },
        ));
        out.claim(Claim::new(
            "laguerre-second-eigenvalue",
            format!("r={r}: next eigenvalue equals 2 lambda"),
            2.0 * lambda,
            pairs.values[2],
            Tolerance::Relative { value: 0.02 },
        ));
        gaps.push(g.gap);
        let mut v = gap_json(&p, &g);
        v["r"] = json!(r);
        v["eigenvalues"] = json!(pairs.values);
        v["cosine"] = json!(cos);
        rows.push(v);
        if k == 0 {
            out.artifact("eigenfunction.csv", eigen_csv(&p.meta().coordinates, u));
        }
    }
    let hi = gaps.iter().cloned().fold(f64::MIN, f64::max);
    let lo = gaps.iter().cloned().fold(f64::MAX, f64::min);
    out.claim(Claim::new(
        "laguerre-r-independence",
        "relative spread of the gap across r",
        0.0,
        (hi - lo) / lo,
        Tolerance::Absolute { value: 0.02 },
    ));
    out.result("problems", Value::Array(rows));
    Ok(out)
}

fn two_alphas(cfg: &ExperimentConfig) -> Run<(f64, f64)> {
    match cfg.list("alpha")[..] {
        [a1, a2] => Ok((a1, a2)),
        _ => Err(ConfigError::InvalidValue {
            key: "alpha".into(),
            reason: "gap-jacobi needs exactly two components".into(),
        }
        .into()),
    }
}

fn gap_jacobi(cfg: &ExperimentConfig) -> Run<Outcome> {
    let mut out = Outcome::default();
    let lambda = cfg.f64("lambda");
    let (a1, a2) = two_alphas(cfg)?;
    let p = build_jacobi_problem(lambda, a1, a2, cfg.usize("nodes"))?;
    let pairs = p.smallest_eigenpairs(2)?;
    let g = p.gap_from(&pairs);
    out.claim(Claim::new(
        "jacobi-gap",
        format!("two-cell Fleming-Viot gap equals lambda (a1 + a2) = {}", lambda * (a1 + a2)),
        lambda * (a1 + a2),
        g.gap,
        Tolerance::Relative { value: 0.01 },
    ));
    out.result("gap", gap_json(&p, &g));
    out.artifact("eigenfunction.csv", eigen_csv(&p.meta().coordinates, &pairs.vectors[1]));
    Ok(out)
}

/// Bracket [lambda theta(M), lambda theta(M) + lambda_theta (theta(M) + 1)]
/// for the Dirichlet-side form, with the certificate at the optimal h and a
/// Monte Carlo Rayleigh quotient. Reported values are bounds, never the gap.
fn summarize_bounds(cfg: &ExperimentConfig) -> Run<Outcome> {
    let mut out = Outcome::default();
    let theta = theta_with_mass(cfg)?;
    let lambda = cfg.f64("lambda");
    let total = theta.total_mass();
    let form = build_theta_form(&theta);
    let pairs = form.smallest_eigenpairs(2)?;
    let lambda_theta = form.gap_from(&pairs).gap;
    let lower = lambda * total;
    let upper = lower + lambda_theta * (total + 1.0);
    if let Some(exact) = flat_gap(cfg, theta.grid()) {
        out.claim(Claim::new(
            "lambda-theta",
            "weighted Laplacian gap matches its analytic value",
            exact,
            lambda_theta,
            Tolerance::Relative { value: 0.01 },
        ));
    }
    let h = GridFunction::new(pairs.vectors[1].clone());
    let cert = kkl_certificate(&theta, lambda, &h)?;
    out.claim(Claim::new(
        "bracket-certificate",
        "certificate at the optimal h is at least the lower bound",
        lower,
        cert.rayleigh_quotient,
        Tolerance::AtLeast { value: 0.0 },
    ));
    out.claim(Claim::new(
        "bracket-certificate",
        "certificate at the optimal h is at most the upper bound (1% grid slack)",
        upper,
        cert.rayleigh_quotient,
        Tolerance::AtMost { value: 0.01 * upper },
    ));
    let f = CylindricalFunction::linear(theta.grid(), normalize_test_function(&theta, &h)?)?;
    let mc = mc_rayleigh(&mc_config(cfg)?, &theta, lambda, &f, Side::Dirichlet)?;
    let q = mc.quotient;
    out.claim(Claim::new(
        "kkl-certificate-mc",
        "Monte Carlo Rayleigh quotient of F_h matches the quadrature certificate",
        cert.rayleigh_quotient,
        q.value,
        Tolerance::ZScore { value: cfg.f64("z_max"), stderr: q.stderr },
    ));
    out.claim(Claim::new(
        "kkl-lower-bound",
        "Monte Carlo Rayleigh quotient is at least lambda theta(M) - 3 stderr",
        lower,
        q.value,
        Tolerance::AtLeast { value: 3.0 * q.stderr },
    ));
    let collapsed = lambda_theta.abs() < 1e-12;
    out.result(
        "bracket",
        json!({
            "lower": lower,
            "upper": if collapsed { lower } else { upper },
            "collapsed": collapsed,
            "gapIfCollapsed": if collapsed { Some(lower) } else { None },
        }),
    );
    out.result("lambdaTheta", json!(lambda_theta));
    out.result("certificate", serde_json::to_value(cert).expect("serializable"));
    out.result("monteCarlo", serde_json::to_value(mc).expect("serializable"));
    Ok(out)
}

fn decay_claim(out: &mut Outcome, anchor: &str, what: &str, v: &[f64], dt: f64, expected: f64) {
    match fit_decay_rate(v, dt, AcfWindow::default(), true) {
        Ok(fit) => {
            let observed = if fit.reliable { fit.rate } else { f64::NAN };
            out.claim(Claim::new(anchor, what, expected, observed, Tolerance::Relative { value: 0.05 }));
            out.result("decayFit", serde_json::to_value(fit).expect("serializable"));
        }
        Err(e) => {
            out.claim(Claim::new(anchor, what, expected, f64::NAN, Tolerance::Relative { value: 0.05 }));
            out.result("decayFitError", json!(e.to_string()));
        }
    }
}

/// Subsample spaced about five relaxation times apart for the KS test.
fn decorrelated(v: &[f64], dt: f64, rate: f64) -> Run<Vec<f64>> {
    let stride = ((5.0 / (rate * dt)).ceil() as usize).max(1);
    let sub: Vec<f64> = v.iter().step_by(stride).copied().collect();
    if sub.len() < 100 {
        return Err(ConfigError::InvalidValue {
            key: "steps".into(),
            reason: format!("trajectory gives only {} decorrelated states, need 100", sub.len()),
        }
        .into());
    }
    Ok(sub)
}

fn trajectory_setup(cfg: &ExperimentConfig) -> (f64, f64, usize, usize) {
    let lambda = cfg.f64("lambda");
    let dt = cfg.f64_or_auto("dt").unwrap_or_else(|| default_dt(lambda));
    (lambda, dt, cfg.usize("steps"), cfg.usize("thin"))
}

fn run_simulate_laguerre(cfg: &ExperimentConfig) -> Run<Outcome> {
    let mut out = Outcome::default();
    let (lambda, dt, steps, thin) = trajectory_setup(cfg);
    let r = cfg.f64("r");
    let mut rng = RngStream::new(cfg.u64("seed"), 0);
    let traj = simulate_laguerre(&mut rng, lambda, r, dt, steps, r, thin)?;
    out.artifact("trajectory.csv", traj.to_csv(cfg.usize("csv_thin")));
    let t = traj.skip(cfg.usize("burn_in"));
    let v = t.component(0);
    let m = batch_means(&v, 20);
    out.claim(Claim::new(
        "laguerre-stationary-mean",
        "long-run mean equals r (batch means)",
        r,
        m.value,
        Tolerance::ZScore { value: cfg.f64("z_max"), stderr: m.stderr },
    ));
    let sub = decorrelated(&v, t.dt, lambda)?;
    let (c, ks) = ks_claim(
        "laguerre-stationary-law",
        format!("stationary law is Gamma({r}) (KS)"),
        &sub,
        &ReferenceCdf::Gamma { shape: r },
        cfg.f64("ks_level"),
    );
    out.claim(c);
    decay_claim(&mut out, "laguerre-decay-rate", "autocorrelation decay rate equals lambda", &v, t.dt, lambda);
    out.result("ks", ks);
    out.result("trajectory", trajectory_meta(&traj, dt));
    Ok(out)
}

fn trajectory_meta(t: &Trajectory, dt: f64) -> Value {
    json!({ "scheme": t.scheme, "dt": dt, "storedDt": t.dt, "stored": t.len() })
}

fn run_simulate_wf(cfg: &ExperimentConfig) -> Run<Outcome> {
    let mut out = Outcome::default();
    let (lambda, dt, steps, thin) = trajectory_setup(cfg);
    let alpha = cfg.list("alpha");
    if alpha.len() < 2 {
        return Err(ConfigError::InvalidValue {
            key: "alpha".into(),
            reason: "need at least two components".into(),
        }
        .into());
    }
    let total: f64 = alpha.iter().sum();
    let x0: Vec<f64> = alpha.iter().map(|a| a / total).collect();
    let mut rng = RngStream::new(cfg.u64("seed"), 0);
    let traj = simulate_wright_fisher(&mut rng, lambda, &alpha, dt, steps, &x0, thin)?;
    out.artifact("trajectory.csv", traj.to_csv(cfg.usize("csv_thin")));
    let t = traj.skip(cfg.usize("burn_in"));
    for (i, a) in alpha.iter().enumerate() {
        let m = batch_means(&t.component(i), 20);
        out.claim(Claim::new(
            "wf-stationary-mean",
            format!("mean of x{i} equals alpha_{i}/|alpha| (batch means)"),
            a / total,
            m.value,
            Tolerance::ZScore { value: cfg.f64("z_max"), stderr: m.stderr },
        ));
    }
    let x1 = t.component(0);
    let rate = lambda * total;
    let sub = decorrelated(&x1, t.dt, rate)?;
    let (c, ks) = ks_claim(
        "wf-stationary-law",
        format!("x0 marginal is Beta({}, {}) (KS)", alpha[0], total - alpha[0]),
        &sub,
        &ReferenceCdf::Beta { a: alpha[0], b: total - alpha[0] },
        cfg.f64("ks_level"),
    );
    out.claim(c);
    decay_claim(&mut out, "wf-decay-rate", "autocorrelation decay rate of x0 equals lambda |alpha|", &x1, t.dt, rate);
    out.result("ks", ks);
    out.result("trajectory", trajectory_meta(&traj, dt));
    Ok(out)
}

fn rpp_check(cfg: &ExperimentConfig) -> Run<Outcome> {
    let mut out = Outcome::default();
    let theta = theta_with_mass(cfg)?;
    let lambda = cfg.f64("lambda");
    let total = theta.total_mass();

    // Slow mode of the generator at 1000 random points.
    let mut rng = RngStream::new(cfg.u64("seed"), 0);
    let mut worst: f64 = 0.0;
    let mut worst_form: f64 = 0.0;
    for _ in 0..1000 {
        let s = 1e-3 + 50.0 * rng.uniform();
        let e = stated_generator(lambda, s, 1.0, 0.0, 0.0) + lambda * (s + 1.0);
        worst = worst.max(e.abs() / (1.0 + lambda * s));
        let e = form_generator(lambda, s, 1.0, 0.0, 0.0) + lambda * s;
        worst_form = worst_form.max(e.abs() / (1.0 + lambda * s));
    }
    out.claim(Claim::new(
        "generator-slow-mode",
        "generator maps s + 1 to -lambda (s + 1) at 1000 points",
        0.0,
        worst,
        Tolerance::Absolute { value: 1e-12 },
    ));
    out.result("generatorMaxError", json!({ "statedOnSPlusOne": worst, "formOnS": worst_form }));

    let mut rows = Vec::new();
    let mut quotients = Vec::new();
    for &eps in &cfg.list("eps_values") {
        let r = rpp_quadrature_check(&theta, lambda, eps)?;
        out.claim(Claim::new(
            "rpp-form-value",
            format!("eps={eps}: form value equals lambda theta(M) exp(-eps)"),
            lambda * total * (-eps).exp(),
            r.form_value,
            Tolerance::Absolute { value: 1e-10 * (1.0 + lambda * total) },
        ));
        quotients.push(r.quotient);
        rows.push(serde_json::to_value(r).expect("serializable"));
    }
    let violations = quotients.windows(2).filter(|w| w[1] >= w[0] || w[1].is_nan()).count();
    out.claim(Claim::new(
        "rpp-monotone",
        "quotient decreases as eps decreases (count of violations)",
        0.0,
        violations as f64,
        Tolerance::Absolute { value: 0.0 },
    ));
    out.claim(Claim::new(
        "rpp-limit",
        "quotient at the smallest eps is within 0.5% of lambda",
        lambda,
        *quotients.last().expect("nonempty list"),
        Tolerance::Relative { value: 0.005 },
    ));
    out.result("quotients", Value::Array(rows));
    Ok(out)
}

