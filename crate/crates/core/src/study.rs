//! Coarsening study pipelines: per-step error tables over uniform pixel
//! coarsening and adaptive quadtree coarsening, with an on-disk cache for
//! reference solutions.

use std::path::PathBuf;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::coarsen::{coarsen_variant_a, coarsen_variant_b, quadtree_coarsen, CoarsenVariant};
use crate::error::{Error, Result};
use crate::error_analysis::{
    decompose_from_solutions, elasticity_error, zz_estimate, MicroCase, RecoveryScheme,
};
use crate::homogenize::MicroSolver;
use crate::mesh::{build_uniform_mesh, AffineField, QuadtreeMesh};
use crate::phase::{CellMaterial, MaterialTable, PhaseGrid};

/// Configuration of a coarsening error study.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub variant: CoarsenVariant,
    pub uniform_steps: usize,
    pub adaptive_steps: usize,
    /// Macro strain driving the micro problems (Voigt, engineering).
    pub strain: [f64; 3],
    /// Reference mesh refinement relative to the input image
    /// (reference mesh resolution = image resolution * 2^this).
    pub reference_mesh_refine: u32,
    pub schemes: Vec<RecoveryScheme>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            variant: CoarsenVariant::Averaging,
            uniform_steps: 3,
            adaptive_steps: 0,
            strain: [1.0, 0.0, 0.0],
            reference_mesh_refine: 0,
            schemes: vec![RecoveryScheme::Average, RecoveryScheme::PhaseDistinct],
        }
    }
}

/// One row of the study table.
#[derive(Debug, Clone, Serialize)]
pub struct StudyRow {
    pub step: usize,
    pub px: usize,
    pub ndof: usize,
    /// ndof / ndof at step 0.
    pub factor: f64,
    pub h_star: f64,
    pub e_total: f64,
    pub e_disc: f64,
    pub e_model: f64,
    pub rel_total: f64,
    pub rel_disc: f64,
    pub rel_model: f64,
    pub e_est_avg: Option<f64>,
    pub theta_avg: Option<f64>,
    pub e_est_pd: Option<f64>,
    pub theta_pd: Option<f64>,
    /// Relative elasticity-coefficient error against the reference A0.
    pub a0_err: Option<f64>,
}

/// Content-addressed store for micro solutions, keyed by the image, mesh
/// refinement, strain and material table.
pub struct SolutionCache {
    dir: PathBuf,
}

impl SolutionCache {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    fn key(case: &MicroCase, strain: [f64; 3], table: &MaterialTable) -> String {
        let mut h = Sha256::new();
        h.update(b"pixelfem-solution-v1");
        h.update((case.grid.width() as u64).to_le_bytes());
        h.update((case.grid.height() as u64).to_le_bytes());
        h.update(case.grid.cell_size().to_bits().to_le_bytes());
        for cell in case.grid.cells() {
            match cell {
                CellMaterial::Discrete(id) => {
                    h.update([0u8]);
                    h.update(id.to_le_bytes());
                }
                CellMaterial::Blend(w) => {
                    h.update([1u8]);
                    for (p, v) in w {
                        h.update(p.to_le_bytes());
                        h.update(v.to_bits().to_le_bytes());
                    }
                }
            }
        }
        h.update(case.mesh_refine.to_le_bytes());
        for s in strain {
            h.update(s.to_bits().to_le_bytes());
        }
        h.update(serde_json::to_string(table).unwrap_or_default().as_bytes());
        let digest = h.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    fn load(&self, key: &str, expected_len: usize) -> Option<Vec<f64>> {
        let raw = std::fs::read(self.dir.join(key)).ok()?;
        if raw.len() != 8 * expected_len {
            return None;
        }
        Some(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        )
    }

    fn store(&self, key: &str, data: &[f64]) {
        let mut raw = Vec::with_capacity(8 * data.len());
        for v in data {
            raw.extend_from_slice(&v.to_le_bytes());
        }
        let _ = std::fs::write(self.dir.join(key), raw);
    }
}

/// Solve a micro case, consulting the cache when available.
pub fn solve_cached(
    case: &MicroCase,
    strain: [f64; 3],
    table: &MaterialTable,
    cache: Option<&SolutionCache>,
) -> Result<(QuadtreeMesh, Vec<f64>)> {
    let mesh = build_uniform_mesh(&case.grid.upsample(1 << case.mesh_refine)?)?;
    if let Some(cache) = cache {
        let key = SolutionCache::key(case, strain, table);
        if let Some(u) = cache.load(&key, 2 * mesh.n_nodes()) {
            return Ok((mesh, u));
        }
        let micro = MicroSolver::new(mesh, table)?;
        let sol = micro.solve_fields(&[AffineField::from_strain(strain)])?;
        let u = sol.displacements.into_iter().next().unwrap();
        cache.store(&key, &u);
        Ok((micro.into_mesh(), u))
    } else {
        let micro = MicroSolver::new(mesh, table)?;
        let sol = micro.solve_fields(&[AffineField::from_strain(strain)])?;
        let u = sol.displacements.into_iter().next().unwrap();
        Ok((micro.into_mesh(), u))
    }
}

fn coarsen_step(
    grid: &PhaseGrid,
    variant: CoarsenVariant,
    reference_fractions: &std::collections::BTreeMap<crate::phase::PhaseId, f64>,
) -> Result<PhaseGrid> {
    match variant {
        CoarsenVariant::Averaging => coarsen_variant_a(grid),
        CoarsenVariant::Majority => coarsen_variant_b(grid, reference_fractions),
    }
}

struct ReferenceData {
    mesh: QuadtreeMesh,
    u: Vec<f64>,
    a0: Option<crate::phase::Elasticity2D>,
}

fn reference_data(
    grid: &PhaseGrid,
    cfg: &StudyConfig,
    table: &MaterialTable,
    cache: Option<&SolutionCache>,
    want_a0: bool,
) -> Result<ReferenceData> {
    let case = MicroCase::new(grid.clone(), cfg.reference_mesh_refine);
    let (mesh, u) = solve_cached(&case, cfg.strain, table, cache)?;
    let a0 = if want_a0 {
        let micro = MicroSolver::new(mesh.clone(), table)?;
        Some(micro.homogenized_tensor()?)
    } else {
        None
    };
    Ok(ReferenceData { mesh, u, a0 })
}

#[allow(clippy::too_many_arguments)]
fn study_row(
    step: usize,
    work_mesh: &QuadtreeMesh,
    u_work: &[f64],
    work_case: &MicroCase,
    reference: &ReferenceData,
    cfg: &StudyConfig,
    table: &MaterialTable,
    cache: Option<&SolutionCache>,
    ndof0: usize,
    a0_work: Option<&crate::phase::Elasticity2D>,
) -> Result<StudyRow> {
    // Same image on the reference mesh for the discretization split.
    let ref_res = reference.mesh.fine_dims().0;
    let href_case = MicroCase::new(
        work_case.grid.clone(),
        (ref_res / work_case.grid.width()).trailing_zeros(),
    );
    let (href_mesh, u_href) = solve_cached(&href_case, cfg.strain, table, cache)?;
    let b = decompose_from_solutions(
        work_mesh,
        u_work,
        &href_mesh,
        &u_href,
        &reference.mesh,
        &reference.u,
        work_case,
        table,
    )?;

    let mut row = StudyRow {
        step,
        px: work_case.grid.width(),
        ndof: work_mesh.ndof(),
        factor: work_mesh.ndof() as f64 / ndof0 as f64,
        h_star: b.h_star,
        e_total: b.e_total,
        e_disc: b.e_disc,
        e_model: b.e_model,
        rel_total: b.rel_total,
        rel_disc: b.rel_disc,
        rel_model: b.rel_model,
        e_est_avg: None,
        theta_avg: None,
        e_est_pd: None,
        theta_pd: None,
        a0_err: None,
    };
    for scheme in &cfg.schemes {
        let est = zz_estimate(work_mesh, u_work, table, *scheme)?;
        let theta = if b.e_disc > 0.0 { Some(est.estimate / b.e_disc) } else { None };
        match scheme {
            RecoveryScheme::Average => {
                row.e_est_avg = Some(est.estimate);
                row.theta_avg = theta;
            }
            RecoveryScheme::PhaseDistinct => {
                row.e_est_pd = Some(est.estimate);
                row.theta_pd = theta;
            }
        }
    }
    if let (Some(a0w), Some(a0r)) = (a0_work, reference.a0.as_ref()) {
        if table.phases.len() == 2 {
            let p0 = table.tensor(table.phases[0].id)?;
            let p1 = table.tensor(table.phases[1].id)?;
            row.a0_err = Some(elasticity_error(a0w, a0r, (&p0, &p1)));
        }
    }
    Ok(row)
}

/// Uniform pixel-coarsening study: one row per coarsening step (step 0 is
/// the input resolution), errors measured against the reference built
/// from the input image.
pub fn run_uniform_study(
    grid: &PhaseGrid,
    table: &MaterialTable,
    cfg: &StudyConfig,
    cache: Option<&SolutionCache>,
) -> Result<Vec<StudyRow>> {
    let reference = reference_data(grid, cfg, table, cache, true)?;
    let reference_fractions = grid.volume_fractions();
    let mut rows = Vec::new();
    let mut current = grid.clone();
    let ndof0 = 2 * grid.width() * grid.height();
    for step in 0..=cfg.uniform_steps {
        if step > 0 {
            current = coarsen_step(&current, cfg.variant, &reference_fractions)?;
        }
        let case = MicroCase::new(current.clone(), 0);
        let mesh = build_uniform_mesh(&current)?;
        let micro = MicroSolver::new(mesh, table)?;
        // One batched solve: the driving strain plus the three unit
        // states for the homogenized tensor.
        let fields = [
            AffineField::from_strain(cfg.strain),
            AffineField::from_strain([1.0, 0.0, 0.0]),
            AffineField::from_strain([0.0, 1.0, 0.0]),
            AffineField::from_strain([0.0, 0.0, 1.0]),
        ];
        let sol = micro.solve_fields(&fields)?;
        let a0 = micro.tensor_from_states(&sol.displacements[1..4])?;
        let row = study_row(
            step,
            micro.mesh(),
            &sol.displacements[0],
            &case,
            &reference,
            cfg,
            table,
            cache,
            ndof0,
            Some(&a0),
        )?;
        rows.push(row);
    }
    Ok(rows)
}

/// Adaptive coarsening study: uniform coarsening first (fixing the
/// resolution and the modeling error), then one row per quadtree
/// coarsening step. `factor` is relative to the uniform mesh at the
/// coarsened resolution.
pub fn run_adaptive_study(
    grid: &PhaseGrid,
    table: &MaterialTable,
    cfg: &StudyConfig,
    cache: Option<&SolutionCache>,
) -> Result<Vec<StudyRow>> {
    let reference = reference_data(grid, cfg, table, cache, false)?;
    let reference_fractions = grid.volume_fractions();
    let mut current = grid.clone();
    for _ in 0..cfg.uniform_steps {
        current = coarsen_step(&current, cfg.variant, &reference_fractions)?;
    }
    let case = MicroCase::new(current.clone(), 0);
    let uniform_mesh = build_uniform_mesh(&current)?;
    let ndof0 = uniform_mesh.ndof();
    let mut rows = Vec::new();
    let mut mesh = uniform_mesh;
    for step in 0..=cfg.adaptive_steps {
        if step > 0 {
            let (coarser, report) = quadtree_coarsen(&mesh, 1)?;
            mesh = coarser;
            if report.steps_applied == 0 && step > 1 {
                // Fixpoint: the remaining rows would repeat.
                break;
            }
        }
        let micro = MicroSolver::new(mesh.clone(), table)?;
        let sol = micro.solve_fields(&[AffineField::from_strain(cfg.strain)])?;
        let row = study_row(
            step,
            micro.mesh(),
            &sol.displacements[0],
            &case,
            &reference,
            cfg,
            table,
            cache,
            ndof0,
            None,
        )?;
        rows.push(row);
    }
    Ok(rows)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.10e}")).unwrap_or_default()
}

/// Render study rows as CSV with a versioned header comment. The output
/// is byte-deterministic for identical inputs.
pub fn rows_to_csv(rows: &[StudyRow]) -> String {
    let mut out = String::new();
    out.push_str("# pixelfem coarsen-study table v1\n");
    out.push_str(
        "step,px,ndof,factor,h_star_mm,e_total,e_disc,e_model,rel_total,rel_disc,rel_model,\
         e_est_avg,theta_avg,e_est_pd,theta_pd,a0_err\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{},{},{},{},{}\n",
            r.step,
            r.px,
            r.ndof,
            r.factor,
            r.h_star,
            r.e_total,
            r.e_disc,
            r.e_model,
            r.rel_total,
            r.rel_disc,
            r.rel_model,
            fmt_opt(r.e_est_avg),
            fmt_opt(r.theta_avg),
            fmt_opt(r.e_est_pd),
            fmt_opt(r.theta_pd),
            fmt_opt(r.a0_err),
        ));
    }
    out
}

/// Smoothly varying modulus encoded as blend weights between the two
/// phases of a table: weight w(x, y) = 0.5 (1 + A sin(2 pi x / ex)
/// sin(2 pi y / ey)) sampled at pixel centers. With a common Poisson
/// ratio the effective modulus varies sinusoidally and the cell has no
/// material interfaces.
pub fn smooth_sinusoidal_grid(n: usize, amplitude: f64) -> Result<PhaseGrid> {
    if !(0.0..=1.0).contains(&amplitude) {
        return Err(Error::InvalidInput("amplitude must lie in [0, 1]".into()));
    }
    let mut cells = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let x = (i as f64 + 0.5) / n as f64;
            let y = (j as f64 + 0.5) / n as f64;
            let w = 0.5
                * (1.0
                    + amplitude
                        * (2.0 * std::f64::consts::PI * x).sin()
                        * (2.0 * std::f64::consts::PI * y).sin());
            cells.push(CellMaterial::Blend(vec![(0, 1.0 - w), (1, w)]));
        }
    }
    PhaseGrid::from_cells(n, n, 1.0 / n as f64, cells)
}
