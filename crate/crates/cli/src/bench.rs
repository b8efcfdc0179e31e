//! Scaling benchmarks: residual, Hessian-vector product, colored sparse
//! build and scatter-add build on structured elasticity meshes.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use energyfem::autodiff::{grad_scalar, hvp, peak_tape_len, reset_peak_tape_len};
use energyfem::coloring::distance2_coloring;
use energyfem::element::ElementKind;
use energyfem::mesh::{structured_grid, Mesh};
use energyfem::operator::{Operator, OperatorEnergy};
use energyfem::physics::{Elastic, Lame};
use energyfem::sparse::{
    scatter_add_assemble, sparse_hessian, sparsity_from_mesh, JacobianOptions,
};
use energyfem::Result;

use crate::{CliError, CliResult};

pub const CSV_HEADER: &str = "problem,mode,n_dofs,time_s,throughput_dofs_per_s,n_colors,status";
/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "ENERGYFEM_THREADS";
/// Environment variable overriding the memory budget (bytes).
pub const MEMORY_ENV: &str = "ENERGYFEM_MEMORY_LIMIT";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchProblem {
    Elasticity2d,
    Elasticity3d,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchMode {
    Jvp,
    Colored,
    Scatter,
}

impl FromStr for BenchProblem {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "elasticity2d" => Ok(BenchProblem::Elasticity2d),
            "elasticity3d" => Ok(BenchProblem::Elasticity3d),
            _ => Err(CliError::InvalidConfig(format!("unknown problem '{s}'"))),
        }
    }
}

impl FromStr for BenchMode {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "jvp" => Ok(BenchMode::Jvp),
            "colored" => Ok(BenchMode::Colored),
            "scatter" => Ok(BenchMode::Scatter),
            _ => Err(CliError::InvalidConfig(format!("unknown mode '{s}'"))),
        }
    }
}

impl fmt::Display for BenchProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchProblem::Elasticity2d => "elasticity2d",
            BenchProblem::Elasticity3d => "elasticity3d",
        })
    }
}

impl fmt::Display for BenchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchMode::Jvp => "jvp",
            BenchMode::Colored => "colored",
            BenchMode::Scatter => "scatter",
        })
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub problem: BenchProblem,
    pub dofs: Vec<usize>,
    pub mode: BenchMode,
    pub batch_size: usize,
    pub repetitions: usize,
    pub output: Option<PathBuf>,
}

impl BenchConfig {
    pub fn validate(&self) -> CliResult<()> {
        if self.dofs.is_empty() || self.dofs[0] == 0 || self.dofs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::InvalidConfig(
                "DoF targets must be positive and strictly ascending".into(),
            ));
        }
        if self.repetitions < 3 {
            return Err(CliError::InvalidConfig(format!(
                "repetitions = {} < 3",
                self.repetitions
            )));
        }
        if self.batch_size == 0 {
            return Err(CliError::InvalidConfig(
                "batch size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One timed operation. `mode` is `residual` for the gradient timing that
/// accompanies every mode-specific row.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub problem: String,
    pub mode: String,
    pub n_dofs: usize,
    /// Median over repetitions, warm-up excluded.
    pub time_s: f64,
    pub throughput: f64,
    pub n_colors: Option<usize>,
    /// Estimated peak working memory of the operation in bytes.
    pub peak_memory: usize,
    pub status: String,
}

impl BenchRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6e},{:.6e},{},{}",
            self.problem,
            self.mode,
            self.n_dofs,
            self.time_s,
            self.throughput,
            self.n_colors.map_or(String::new(), |c| c.to_string()),
            self.status
        )
    }

    pub fn parse_row(line: &str) -> CliResult<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(CliError::InvalidConfig(format!(
                "malformed CSV row '{line}'"
            )));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| CliError::InvalidConfig(format!("bad number '{s}'")))
        };
        Ok(BenchRecord {
            problem: f[0].into(),
            mode: f[1].into(),
            n_dofs: num(f[2])? as usize,
            time_s: num(f[3])?,
            throughput: num(f[4])?,
            n_colors: if f[5].is_empty() {
                None
            } else {
                Some(num(f[5])? as usize)
            },
            peak_memory: 0,
            status: f[6].into(),
        })
    }
}

pub fn to_csv(records: &[BenchRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

pub fn parse_csv(text: &str) -> CliResult<Vec<BenchRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(CliError::InvalidConfig("unexpected CSV header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(BenchRecord::parse_row)
        .collect()
}

/// Structured unit-square Tri3 or unit-cube Tet4 mesh near `target` DoFs.
pub fn elasticity_mesh(problem: BenchProblem, target: usize) -> Result<Mesh> {
    match problem {
        BenchProblem::Elasticity2d => {
            let n = (((target as f64 / 2.0).sqrt().round() as usize).max(2)) - 1;
            structured_grid(&[n, n], &[[0.0, 1.0], [0.0, 1.0]], ElementKind::Tri3)
        }
        BenchProblem::Elasticity3d => {
            let n = (((target as f64 / 3.0).cbrt().round() as usize).max(2)) - 1;
            structured_grid(&[n, n, n], &[[0.0, 1.0]; 3], ElementKind::Tet4)
        }
    }
}

/// Median of `reps` timed runs after one untimed warm-up.
pub fn time_median(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    f()?;
    let mut t = Vec::with_capacity(reps);
    for _ in 0..reps {
        let s = Instant::now();
        f()?;
        t.push(s.elapsed().as_secs_f64());
    }
    t.sort_by(f64::total_cmp);
    let m = t.len() / 2;
    Ok(if t.len() % 2 == 1 {
        t[m]
    } else {
        0.5 * (t[m - 1] + t[m])
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

fn memory_limit() -> usize {
    std::env::var(MEMORY_ENV)
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(4 << 30)
}

/// Rough working-set estimate: mesh, operator geometry, tape and, for
/// assembled modes, the sparse matrix.
fn memory_estimate(problem: BenchProblem, mode: BenchMode, n_dofs: usize, batch: usize) -> usize {
    let (d, n_en, nbr) = match problem {
        BenchProblem::Elasticity2d => (2, 3, 7),
        BenchProblem::Elasticity3d => (3, 4, 27),
    };
    let n_nodes = n_dofs / d;
    let n_el = n_nodes * if d == 2 { 2 } else { 6 };
    let geometry = n_el * (n_en * d + 2) * 8 + n_el * n_en * 8;
    let tape = batch * 40 * n_en * d * 8;
    let matrix = match mode {
        BenchMode::Jvp => 0,
        _ => n_dofs * nbr * d * 16 * 2,
    };
    geometry + tape + matrix + 4 * n_dofs * 8
}

fn record(
    cfg: &BenchConfig,
    mode: &str,
    n: usize,
    t: Result<f64>,
    colors: Option<usize>,
    mem: usize,
) -> BenchRecord {
    let (time_s, status) = match t {
        Ok(t) => (t, "ok".to_string()),
        Err(e) => (f64::NAN, format!("error: {e}").replace(',', ";")),
    };
    BenchRecord {
        problem: cfg.problem.to_string(),
        mode: mode.into(),
        n_dofs: n,
        time_s,
        throughput: n as f64 / time_s,
        n_colors: colors,
        peak_memory: mem,
        status,
    }
}

fn bench_size(cfg: &BenchConfig, target: usize) -> Result<Vec<BenchRecord>> {
    let mem = memory_estimate(cfg.problem, cfg.mode, target, cfg.batch_size);
    if mem > memory_limit() {
        let mut r = record(cfg, &cfg.mode.to_string(), target, Ok(f64::NAN), None, mem);
        r.status = "out_of_memory".into();
        return Ok(vec![r]);
    }
    let mesh = elasticity_mesh(cfg.problem, target)?;
    let kind = mesh.blocks[0].kind;
    let d = mesh.dim;
    let n = d * mesh.n_nodes();
    let op = Operator::new(&mesh, kind, cfg.batch_size)?;
    let integrand = Elastic::linear(d, Lame::from_young_poisson(1.0, 0.3));
    let f = OperatorEnergy::new(&op, integrand.clone());
    let u: Vec<f64> = (0..n).map(|i| 1e-3 * (0.37 * i as f64).sin()).collect();
    let v: Vec<f64> = (0..n).map(|i| (0.11 * i as f64).cos()).collect();

    reset_peak_tape_len();
    let t_res = time_median(cfg.repetitions, || grad_scalar(&f, &u).map(|_| ()));
    let tape = peak_tape_len() * 40;
    let mut out = vec![record(cfg, "residual", n, t_res, None, tape)];
    let mode = cfg.mode.to_string();
    let row = match cfg.mode {
        BenchMode::Jvp => {
            let t = time_median(cfg.repetitions, || hvp(&f, &u, &v).map(|_| ()));
            record(cfg, &mode, n, t, None, mem)
        }
        BenchMode::Colored => {
            let pattern = sparsity_from_mesh(&mesh, d)?;
            let coloring = distance2_coloring(&pattern);
            let opts = JacobianOptions {
                parallel: threads() > 1,
                ..Default::default()
            };
            let t = time_median(cfg.repetitions, || {
                sparse_hessian(&f, &u, &pattern, &coloring, &opts).map(|_| ())
            });
            record(cfg, &mode, n, t, Some(coloring.n_colors), mem)
        }
        BenchMode::Scatter => {
            let pattern = sparsity_from_mesh(&mesh, d)?;
            let t = time_median(cfg.repetitions, || {
                scatter_add_assemble(&op, &integrand, &u, &pattern).map(|_| ())
            });
            record(cfg, &mode, n, t, None, mem)
        }
    };
    out.push(row);
    Ok(out)
}

/// Runs the configured benchmark; failures become records with a status
/// instead of aborting the sweep.
pub fn cmd_bench(cfg: &BenchConfig) -> CliResult<Vec<BenchRecord>> {
    cfg.validate()?;
    let run = || -> CliResult<Vec<BenchRecord>> {
        let mut records = Vec::new();
        for &target in &cfg.dofs {
            match bench_size(cfg, target) {
                Ok(r) => records.extend(r),
                Err(e) => records.push(record(cfg, &cfg.mode.to_string(), target, Err(e), None, 0)),
            }
        }
        Ok(records)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads())
        .build()
        .map_err(|e| CliError::InvalidConfig(format!("thread pool: {e}")))?;
    let records = pool.install(run)?;
    if let Some(path) = &cfg.output {
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, to_csv(&records))?;
    }
    Ok(records)
}
