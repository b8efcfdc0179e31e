//! Registry of verification examples run by `verify <example>`.

use std::path::Path;

use energyfem::element::ElementKind;
use energyfem::physics::ElasticModel;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bench::{cmd_bench, loglog_slope, BenchConfig, BenchMode, BenchProblem, BenchRecord};
use crate::output::write_solution;
use crate::problems::checks::{
    color_counts, jvp_consistency, residual_oracle, tangent_comparison, tape_peaks,
};
use crate::problems::cohesive::{run_dcb, DcbParams};
use crate::problems::homogenization::{run_homogenization, HomogenizationParams};
use crate::problems::kirsch::{run_kirsch_with, KirschParams};
use crate::problems::neural::{run_neural, NeuralParams};
use crate::problems::rigid::{run_rigid, RigidParams};
use crate::problems::sphere::{monotonicity_violations, run_sphere, SphereParams};
use crate::report::{Check, Report};
use crate::{CliError, CliResult};

pub const EXAMPLES: &[(&str, &str)] = &[
    (
        "residual-oracle",
        "AD residual vs a hand-written element loop",
    ),
    (
        "tangent",
        "colored vs scatter-add vs dense vs finite-difference tangents",
    ),
    (
        "jvp",
        "sparse matrix-vector products vs Hessian-vector products",
    ),
    (
        "coloring-bound",
        "distance-2 color counts across mesh sizes",
    ),
    ("kirsch", "plate with a hole vs the infinite-plate solution"),
    (
        "cohesive",
        "cohesive separation: dissipation and unload/reload closure",
    ),
    (
        "homogenization",
        "periodic homogenization of homogeneous and hexagonal cells",
    ),
    ("sphere", "advection-diffusion on a rotating sphere"),
    ("neural", "MLP strain energy and neural inclusion couplings"),
    ("rigid-mpc", "rigid disk with a free rotation"),
    ("tape", "peak tape length across mesh sizes"),
    (
        "scaling",
        "time vs DoFs for residual, JVP and colored build",
    ),
];

fn load<P: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<P> {
    match path {
        Some(p) => Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?),
        None => Ok(P::default()),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleParams {
    /// Grid divisions; a grid with `n` divisions has `2n²` triangles.
    pub divisions: Vec<usize>,
    pub seed: u64,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            divisions: vec![1, 10],
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TangentParams {
    pub tri_divisions: usize,
    pub quad_divisions: usize,
    pub tet_divisions: usize,
    pub seed: u64,
}

impl Default for TangentParams {
    fn default() -> Self {
        TangentParams {
            tri_divisions: 15,
            quad_divisions: 12,
            tet_divisions: 4,
            seed: 3,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct JvpParams {
    pub divisions: usize,
    pub n_vectors: usize,
    pub seed: u64,
}

impl Default for JvpParams {
    fn default() -> Self {
        JvpParams {
            divisions: 70,
            n_vectors: 20,
            seed: 4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ColoringParams {
    pub tri_divisions: Vec<usize>,
    pub tet_divisions: Vec<usize>,
    pub tri_bound: usize,
    pub tet_bound: usize,
}

impl Default for ColoringParams {
    fn default() -> Self {
        ColoringParams {
            tri_divisions: vec![21, 70, 223],
            tet_divisions: vec![16, 36, 79],
            tri_bound: 48,
            tet_bound: 110,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TapeParams {
    pub divisions: Vec<usize>,
    pub batch: usize,
}

impl Default for TapeParams {
    fn default() -> Self {
        TapeParams {
            divisions: vec![71, 224, 707],
            batch: 2000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingParams {
    pub dofs: Vec<usize>,
    pub batch: usize,
    /// Repetitions for residual and single-hvp timings.
    pub repetitions: usize,
    /// Repetitions for the colored build, which already spans n_colors hvps.
    pub colored_repetitions: usize,
}

impl Default for ScalingParams {
    fn default() -> Self {
        ScalingParams {
            dofs: vec![10_000, 31_623, 100_000, 316_228, 1_000_000],
            batch: 50_000,
            repetitions: 15,
            colored_repetitions: 3,
        }
    }
}

pub fn verify_residual_oracle(p: &OracleParams) -> CliResult<Report> {
    let mut r = Report::new("residual-oracle");
    for &n in &p.divisions {
        let err = residual_oracle(n, p.seed)?;
        r.push(Check::below(
            &format!("{} elements: relative residual gap", 2 * n * n),
            err,
            1e-10,
        ));
    }
    Ok(r)
}

pub fn verify_tangent(p: &TangentParams) -> CliResult<Report> {
    let mut r = Report::new("tangent");
    let cases = [
        (ElementKind::Tri3, p.tri_divisions),
        (ElementKind::Quad4, p.quad_divisions),
        (ElementKind::Tet4, p.tet_divisions),
    ];
    for (kind, n) in cases {
        for model in [ElasticModel::LinearElastic, ElasticModel::NeoHookean] {
            let c = tangent_comparison(kind, n, model, p.seed)?;
            let tag = format!("{} {:?} ({} DoFs)", kind.name(), model, c.n_dofs);
            r.push(Check::at_most(
                &format!("{tag}: DoFs"),
                c.n_dofs as f64,
                2000.0,
            ));
            r.push(Check::below(
                &format!("{tag}: colored vs dense"),
                c.colored_vs_dense,
                1e-10,
            ));
            r.push(Check::below(
                &format!("{tag}: scatter vs dense"),
                c.scatter_vs_dense,
                1e-10,
            ));
            r.push(Check::below(
                &format!("{tag}: colored vs scatter"),
                c.colored_vs_scatter,
                1e-10,
            ));
            r.push(Check::below(
                &format!("{tag}: colored vs finite differences"),
                c.colored_vs_fd,
                1e-5,
            ));
        }
    }
    Ok(r)
}

pub fn verify_jvp(p: &JvpParams) -> CliResult<Report> {
    let mut r = Report::new("jvp");
    let (n, err) = jvp_consistency(p.divisions, p.n_vectors, p.seed)?;
    r.notes
        .push(format!("{n} DoFs, {} random directions", p.n_vectors));
    r.push(Check::below("max relative gap spmv vs hvp", err, 1e-10));
    Ok(r)
}

pub fn verify_coloring(p: &ColoringParams) -> CliResult<Report> {
    let mut r = Report::new("coloring-bound");
    for (label, kind, divs, bound) in [
        ("Tri3", ElementKind::Tri3, &p.tri_divisions, p.tri_bound),
        ("Tet4", ElementKind::Tet4, &p.tet_divisions, p.tet_bound),
    ] {
        let counts = color_counts(kind, 2, divs)?;
        for &(n, c) in &counts {
            r.notes.push(format!("{label} m=2: {n} DoFs -> {c} colors"));
        }
        let max = counts.iter().map(|c| c.1).max().unwrap_or(0);
        r.push(Check::flag(
            &format!("{label} color count identical across sizes"),
            counts.iter().all(|c| c.1 == max),
        ));
        r.push(Check::at_most(
            &format!("{label} color count"),
            max as f64,
            bound as f64,
        ));
    }
    Ok(r)
}

pub fn verify_kirsch(p: &KirschParams) -> CliResult<Report> {
    let mut r = Report::new("kirsch");
    let coarse = KirschParams {
        n_theta: p.n_theta / 2,
        ..p.clone()
    };
    let n_s = coarse.n_radial();
    let c = run_kirsch_with(&coarse, n_s)?;
    let f = run_kirsch_with(p, 2 * n_s)?;
    let ratio = f.hoop_at_hole / (3.0 * p.traction);
    r.notes.push(format!(
        "{} DoFs: hoop stress at the hole / remote traction = {:.4}",
        f.n_dofs,
        3.0 * ratio
    ));
    r.notes.push(format!(
        "sigma_rr L2 error along theta=0: {:.3e} ({} DoFs) -> {:.3e} ({} DoFs)",
        c.srr_error, c.n_dofs, f.srr_error, f.n_dofs
    ));
    r.push(Check::below(
        "hoop stress relative deviation from 3t",
        (ratio - 1.0).abs(),
        0.05,
    ));
    r.push(Check::below(
        "refined / coarse sigma_rr L2 error",
        f.srr_error / c.srr_error,
        1.0,
    ));
    r.solution = Some(f.solution);
    Ok(r)
}

pub fn verify_cohesive(p: &DcbParams) -> CliResult<Report> {
    let mut r = Report::new("cohesive");
    let d = run_dcb(p)?;
    let target = d.gamma * d.crack_area;
    r.notes.push(format!(
        "external work {:.6e}, dissipation {:.6e}, Gamma*A {:.6e}",
        d.external_work, d.dissipation, target
    ));
    r.push(Check::below(
        "relative dissipation error vs Gamma*A",
        ((d.dissipation - target) / target).abs(),
        0.02,
    ));
    r.push(Check::below(
        "unload/reload closure",
        d.cycle_closure,
        1e-12,
    ));
    r.solution = Some(d.solution);
    Ok(r)
}

pub fn verify_homogenization(p: &HomogenizationParams) -> CliResult<Report> {
    let mut r = Report::new("homogenization");
    let h = run_homogenization(p)?;
    let scale = h.plane_strain[0][0];
    let mut dev: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            dev = dev.max((h.homogeneous.c[i][j] - h.plane_strain[i][j]).abs() / scale);
        }
    }
    let c = &h.hexagonal.c;
    r.notes.push(format!(
        "hexagonal cell C11 = {:.6e}, C22 = {:.6e}, C12 = {:.6e}, C33 = {:.6e}",
        c[0][0], c[1][1], c[0][1], c[2][2]
    ));
    r.push(Check::below(
        "homogeneous constraint residual",
        h.homogeneous.constraint_residual,
        1e-10,
    ));
    r.push(Check::below(
        "hexagonal constraint residual",
        h.hexagonal.constraint_residual,
        1e-10,
    ));
    r.push(Check::below(
        "homogeneous C vs plane strain (relative)",
        dev,
        1e-8,
    ));
    r.push(Check::below(
        "hexagonal |C11 - C22| / C11",
        (c[0][0] - c[1][1]).abs() / c[0][0],
        0.02,
    ));
    r.solution = Some(h.solution);
    Ok(r)
}

pub fn verify_sphere(p: &SphereParams) -> CliResult<Report> {
    let mut r = Report::new("sphere");
    let s = run_sphere(p)?;
    let (first, last) = (s.extrema[0], s.extrema[s.extrema.len() - 1]);
    r.notes.push(format!(
        "{} nodes, {} steps; max {:.4} -> {:.4}, min {:.3e} -> {:.3e}",
        s.n_nodes, p.n_steps, first.0, last.0, first.1, last.1
    ));
    r.push(Check::below("relative mass drift", s.mass_drift, 1e-8));
    r.push(Check::at_most(
        "steps with rising max or falling min",
        monotonicity_violations(&s.extrema) as f64,
        0.0,
    ));
    r.push(Check::above(
        "tangent asymmetry with rotation",
        s.asymmetry,
        1e-6,
    ));
    r.push(Check::below(
        "tangent asymmetry at rest",
        s.asymmetry_at_rest,
        1e-10,
    ));
    r.solution = Some(s.solution);
    Ok(r)
}

pub fn verify_neural(p: &NeuralParams) -> CliResult<Report> {
    let mut r = Report::new("neural");
    let n = run_neural(p)?;
    for (label, rep) in [("MLP cube", &n.cube), ("neural inclusion", &n.inclusion)] {
        r.push(Check::at_most(
            &format!("{label}: Newton iterations"),
            rep.iterations as f64,
            15.0,
        ));
        r.push(Check::at_most(
            &format!("{label}: final residual"),
            rep.residual,
            1e-12,
        ));
    }
    r.notes.push(format!("{} interface DoFs", n.interface_dofs));
    r.push(Check::at_most(
        "oracle nonzeros missing from the pattern",
        n.missing_entries as f64,
        0.0,
    ));
    r.push(Check::at_most(
        "pattern entries zero in the oracle",
        n.extra_entries as f64,
        0.0,
    ));
    r.push(Check::within(
        "interface block fill",
        n.block_fill,
        1.0,
        1.0,
    ));
    r.solution = Some(n.solution);
    Ok(r)
}

pub fn verify_rigid(p: &RigidParams) -> CliResult<Report> {
    let mut r = Report::new("rigid-mpc");
    let s = run_rigid(p)?;
    r.notes.push(format!(
        "{} disk nodes, theta = {:.6e}, {} Newton iterations",
        s.disk_nodes, s.theta, s.newton.iterations
    ));
    r.push(Check::below(
        "pairwise distance change",
        s.distance_error,
        1e-10,
    ));
    r.push(Check::below(
        "moment about the disk centre",
        s.moment.abs(),
        1e-8,
    ));
    r.solution = Some(s.solution);
    Ok(r)
}

pub fn verify_tape(p: &TapeParams) -> CliResult<Report> {
    let mut r = Report::new("tape");
    let peaks = tape_peaks(&p.divisions, p.batch)?;
    for &(n, t) in &peaks {
        r.notes.push(format!("{n} elements: peak tape {t}"));
    }
    let mean = peaks.iter().map(|p| p.1 as f64).sum::<f64>() / peaks.len() as f64;
    let spread = peaks
        .iter()
        .map(|p| (p.1 as f64 / mean - 1.0).abs())
        .fold(0.0, f64::max);
    r.push(Check::at_most(
        "peak tape deviation from the mean",
        spread,
        0.10,
    ));
    Ok(r)
}

/// Slopes of residual and JVP times, and the colored-build cost model.
pub fn scaling_summary(jvp: &[BenchRecord], colored: &[BenchRecord]) -> (f64, f64, f64) {
    let pts = |rs: &[BenchRecord], mode: &str| -> Vec<(f64, f64)> {
        rs.iter()
            .filter(|r| r.mode == mode && r.status == "ok")
            .map(|r| (r.n_dofs as f64, r.time_s))
            .collect()
    };
    let s_res = loglog_slope(&pts(jvp, "residual"));
    let s_jvp = loglog_slope(&pts(jvp, "jvp"));
    let mut worst = f64::NAN;
    for c in colored.iter().filter(|r| r.mode == "colored") {
        if let Some(j) = jvp.iter().find(|j| j.mode == "jvp" && j.n_dofs == c.n_dofs) {
            let ratio = c.time_s / (c.n_colors.unwrap_or(0) as f64 * j.time_s);
            if worst.is_nan() || (ratio - 1.0).abs() > (worst - 1.0).abs() {
                worst = ratio;
            }
        }
    }
    (s_res, s_jvp, worst)
}

pub fn verify_scaling(p: &ScalingParams) -> CliResult<Report> {
    let mut r = Report::new("scaling");
    let cfg = |mode, repetitions| BenchConfig {
        problem: BenchProblem::Elasticity2d,
        dofs: p.dofs.clone(),
        mode,
        batch_size: p.batch,
        repetitions,
        output: None,
    };
    let jvp = cmd_bench(&cfg(BenchMode::Jvp, p.repetitions))?;
    let colored = cmd_bench(&cfg(BenchMode::Colored, p.colored_repetitions))?;
    for rec in jvp
        .iter()
        .chain(colored.iter().filter(|r| r.mode == "colored"))
    {
        r.notes.push(rec.csv_row());
    }
    let (s_res, s_jvp, ratio) = scaling_summary(&jvp, &colored);
    r.push(Check::within(
        "residual time log-log slope",
        s_res,
        0.9,
        1.15,
    ));
    r.push(Check::within("hvp time log-log slope", s_jvp, 0.9, 1.15));
    r.push(Check::within(
        "colored build / (n_colors x hvp), worst size",
        ratio,
        0.7,
        1.3,
    ));
    Ok(r)
}

/// Runs a registered example; parameters come from an optional JSON file and
/// solution fields are written to `out` when given.
pub fn cmd_verify(name: &str, problem: Option<&Path>, out: Option<&Path>) -> CliResult<Report> {
    let report = match name {
        "residual-oracle" => verify_residual_oracle(&load(problem)?)?,
        "tangent" => verify_tangent(&load(problem)?)?,
        "jvp" => verify_jvp(&load(problem)?)?,
        "coloring-bound" => verify_coloring(&load(problem)?)?,
        "kirsch" => verify_kirsch(&load(problem)?)?,
        "cohesive" => verify_cohesive(&load(problem)?)?,
        "homogenization" => verify_homogenization(&load(problem)?)?,
        "sphere" => verify_sphere(&load(problem)?)?,
        "neural" => verify_neural(&load(problem)?)?,
        "rigid-mpc" => verify_rigid(&load(problem)?)?,
        "tape" => verify_tape(&load(problem)?)?,
        "scaling" => verify_scaling(&load(problem)?)?,
        _ => return Err(CliError::UnknownExample(name.into())),
    };
    if let (Some(dir), Some(sol)) = (out, &report.solution) {
        write_solution(dir, name, sol)?;
    }
    Ok(report)
}
