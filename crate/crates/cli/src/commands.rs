use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use pixelfem::coarsen::{coarsen_uniform, quadtree_coarsen};

use pixelfem::export::{write_vtk_macro, write_vtk_quadtree, CellField, PointField};
use pixelfem::homogenize::{fehmm_solve, timoshenko_tip_deflection, MacroProblem, MicroSolver};
use pixelfem::mesh::{build_quadtree_mesh, build_uniform_mesh, extract_constraints, AffineField, Coupling};
use pixelfem::phase::{save_pgm, Elasticity2D, PhaseId};
use pixelfem::study::{
    run_adaptive_study, run_uniform_study, rows_to_csv, SolutionCache, StudyConfig,
};

use crate::config::ResolvedConfig;

fn ensure_out(cfg: &ResolvedConfig) -> anyhow::Result<()> {
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("cannot create output dir {}", cfg.out_dir.display()))
}

fn cache_for(cfg: &ResolvedConfig) -> anyhow::Result<Option<SolutionCache>> {
    if cfg.cache {
        Ok(Some(SolutionCache::new(cfg.out_dir.join(".cache"))?))
    } else {
        Ok(None)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

#[derive(Serialize)]
struct TensorReport {
    a11: f64,
    a22: f64,
    a33: f64,
    a12: f64,
    matrix: [[f64; 3]; 3],
}

impl TensorReport {
    fn new(t: &Elasticity2D) -> Self {
        let (a11, a22, a33, a12) = t.coefficients();
        Self { a11, a22, a33, a12, matrix: t.m }
    }
}

#[derive(Serialize)]
struct HomogenizeReport {
    resolution_px: (usize, usize),
    adaptive_steps_applied: usize,
    ndof: usize,
    volume_fractions: BTreeMap<PhaseId, f64>,
    homogenized: TensorReport,
}

/// `homogenize`: apply the coarsening plan, compute the effective tensor
/// and write a JSON report.
pub fn cmd_homogenize(cfg: &ResolvedConfig) -> anyhow::Result<()> {
    ensure_out(cfg)?;
    let (grid, _) = coarsen_uniform(&cfg.grid, cfg.variant, cfg.uniform_steps)?;
    let mesh = build_quadtree_mesh(&grid, cfg.adaptive_steps)?;
    let applied = mesh.leaves().iter().map(|l| l.level).max().unwrap_or(0) as usize;
    let micro = MicroSolver::new(mesh, &cfg.table)?;
    let a0 = micro.homogenized_tensor()?;
    let report = HomogenizeReport {
        resolution_px: (grid.width(), grid.height()),
        adaptive_steps_applied: applied,
        ndof: micro.mesh().ndof(),
        volume_fractions: grid.volume_fractions(),
        homogenized: TensorReport::new(&a0),
    };
    let path = cfg.out_dir.join("homogenize.json");
    write_json(&path, &report)?;
    println!(
        "homogenized tensor (MPa): A11 = {:.4}, A22 = {:.4}, A33 = {:.4}, A12 = {:.4}",
        report.homogenized.a11, report.homogenized.a22, report.homogenized.a33, report.homogenized.a12
    );
    println!("report written to {}", path.display());
    Ok(())
}

/// `coarsen-study`: per-step error tables (uniform, plus adaptive when
/// configured) as CSV and JSON.
pub fn cmd_coarsen_study(cfg: &ResolvedConfig) -> anyhow::Result<()> {
    ensure_out(cfg)?;
    let cache = cache_for(cfg)?;
    let study_cfg = StudyConfig {
        variant: cfg.variant,
        uniform_steps: cfg.uniform_steps,
        adaptive_steps: cfg.adaptive_steps,
        strain: cfg.strain,
        reference_mesh_refine: cfg.reference_mesh_refine,
        schemes: cfg.schemes.clone(),
    };
    let rows = run_uniform_study(&cfg.grid, &cfg.table, &study_cfg, cache.as_ref())?;
    let csv = rows_to_csv(&rows);
    let csv_path = cfg.out_dir.join("coarsen_study.csv");
    std::fs::write(&csv_path, &csv)?;
    write_json(&cfg.out_dir.join("coarsen_study.json"), &rows)?;
    println!("{csv}");
    println!("tables written to {}", csv_path.display());

    if cfg.adaptive_steps > 0 {
        let rows = run_adaptive_study(&cfg.grid, &cfg.table, &study_cfg, cache.as_ref())?;
        let csv = rows_to_csv(&rows);
        let path = cfg.out_dir.join("adaptive_study.csv");
        std::fs::write(&path, &csv)?;
        write_json(&cfg.out_dir.join("adaptive_study.json"), &rows)?;
        println!("adaptive table written to {}", path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct MacroReport {
    u_max_mm: f64,
    timoshenko_mm: f64,
    probe_request_mm: [f64; 2],
    probe_snapped_mm: [f64; 2],
    max_von_mises_mpa: f64,
    homogenized: TensorReport,
    macro_ndof: usize,
    micro_ndof: usize,
}

/// `macro-run`: two-scale cantilever solve, micro recovery at the probe
/// quadrature point, VTK exports and a JSON summary.
pub fn cmd_macro_run(cfg: &ResolvedConfig) -> anyhow::Result<()> {
    ensure_out(cfg)?;
    let (grid, _) = coarsen_uniform(&cfg.grid, cfg.variant, cfg.uniform_steps)?;
    let mesh = build_quadtree_mesh(&grid, cfg.adaptive_steps)?;
    let micro = MicroSolver::new(mesh, &cfg.table)?;
    let a0 = micro.homogenized_tensor()?;

    let mp = &cfg.macro_problem;
    let problem = MacroProblem::cantilever(
        mp.length_mm,
        mp.height_mm,
        mp.thickness_mm,
        mp.q0_n_per_mm,
        mp.mesh_nx,
        mp.mesh_ny,
    )?;
    let sol = fehmm_solve(&problem, &micro)?;

    // Micro postprocessing at the probe point: per the error framework
    // the single-scale field with the homogenized tensor drives the
    // recovery; for the linear problem it coincides with the FE-HMM field.
    let reference = problem.solve_single_scale(&a0)?;
    let (e, l, snapped) = problem.nearest_quadrature_point(mp.probe_x_mm, mp.probe_y_mm);
    let field = reference.linearized_field(e, l, micro.mesh().extent())?;
    let rec = micro.recover(&field)?;

    write_vtk_macro(
        cfg.out_dir.join("macro.vtk"),
        &sol.mesh,
        &[],
        &[PointField { name: "displacement", values: &sol.displacements }],
    )?;
    write_vtk_quadtree(
        cfg.out_dir.join("micro_probe.vtk"),
        micro.mesh(),
        &[CellField { name: "von_mises", values: &rec.von_mises }],
        &[PointField { name: "displacement", values: &rec.displacements }],
    )?;

    let report = MacroReport {
        u_max_mm: sol.u_max,
        timoshenko_mm: timoshenko_tip_deflection(&a0, mp.length_mm, mp.height_mm, mp.q0_n_per_mm),
        probe_request_mm: [mp.probe_x_mm, mp.probe_y_mm],
        probe_snapped_mm: snapped,
        max_von_mises_mpa: rec.max_von_mises,
        homogenized: TensorReport::new(&a0),
        macro_ndof: 2 * sol.mesh.n_nodes(),
        micro_ndof: micro.mesh().ndof(),
    };
    let path = cfg.out_dir.join("macro_run.json");
    write_json(&path, &report)?;
    println!(
        "u_max = {:.4} mm (Timoshenko {:.4} mm), max von Mises at probe = {:.4} MPa",
        report.u_max_mm, report.timoshenko_mm, report.max_von_mises_mpa
    );
    println!("report written to {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct ValidationLine {
    check: String,
    passed: bool,
    detail: String,
}

/// `validate`: run the invariant suite on the configured problem. Prints
/// one PASS/FAIL line per check and fails with a numerical error when
/// any check fails.
pub fn cmd_validate(cfg: &ResolvedConfig) -> anyhow::Result<bool> {
    ensure_out(cfg)?;
    let mut lines: Vec<ValidationLine> = Vec::new();
    let mut check = |name: &str, result: std::result::Result<String, String>| {
        let (passed, detail) = match result {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        println!("{} {} {}", if passed { "PASS" } else { "FAIL" }, name, detail);
        lines.push(ValidationLine { check: name.into(), passed, detail });
    };

    // Volume fractions sum to one.
    let fractions = cfg.grid.volume_fractions();
    let sum: f64 = fractions.values().sum();
    check(
        "volume-fractions-sum",
        if (sum - 1.0).abs() <= 1e-12 {
            Ok(format!("sum = {sum:.15}"))
        } else {
            Err(format!("sum = {sum:.15}"))
        },
    );

    // Phase tensors positive definite.
    let mut all_pd = true;
    for p in &cfg.table.phases {
        if !cfg.table.tensor(p.id).map(|t| t.is_positive_definite()).unwrap_or(false) {
            all_pd = false;
        }
    }
    check(
        "phase-tensors-positive-definite",
        if all_pd { Ok(String::new()) } else { Err("a phase tensor is not PD".into()) },
    );

    // Mesh construction and exact tiling.
    let (grid, _) = coarsen_uniform(&cfg.grid, cfg.variant, cfg.uniform_steps)?;
    let mesh = build_quadtree_mesh(&grid, cfg.adaptive_steps)?;
    let area: f64 = mesh
        .leaves()
        .iter()
        .map(|l| {
            let s = mesh.leaf_side_mm(l);
            s * s
        })
        .sum();
    let (ex, ey) = mesh.extent();
    check(
        "mesh-tiles-domain",
        if (area - ex * ey).abs() <= 1e-10 * ex * ey {
            Ok(format!("{} leaves", mesh.leaves().len()))
        } else {
            Err(format!("area defect {:.3e}", area - ex * ey))
        },
    );

    // Hanging nodes sit on their master edges.
    let mut worst = 0.0f64;
    for h in mesh.hanging() {
        let p = mesh.nodes()[h.node];
        let a = mesh.nodes()[h.masters.0];
        let b = mesh.nodes()[h.masters.1];
        let ex = [(1.0 - h.t) * a[0] + h.t * b[0], (1.0 - h.t) * a[1] + h.t * b[1]];
        worst = worst.max((p[0] - ex[0]).abs().max((p[1] - ex[1]).abs()));
    }
    check(
        "hanging-nodes-on-master-edges",
        if worst <= 1e-12 {
            Ok(format!("{} hanging nodes", mesh.hanging().len()))
        } else {
            Err(format!("worst offset {worst:.3e}"))
        },
    );

    // Constraint extraction and full row rank (via the solver setup).
    let constraints = extract_constraints(&mesh, Coupling::Periodic)?;
    let expected =
        2 * mesh.hanging().len() + 2 * mesh.periodic_pairs().len() + 2;
    check(
        "constraint-row-count",
        if constraints.n_rows() == expected {
            Ok(format!("{} rows", expected))
        } else {
            Err(format!("{} rows, expected {}", constraints.n_rows(), expected))
        },
    );

    let micro = match MicroSolver::new(mesh.clone(), &cfg.table) {
        Ok(m) => m,
        Err(e) => {
            check("constraint-rank-and-factorization", Err(format!("{e}")));
            write_json(&cfg.out_dir.join("validate.json"), &lines)?;
            return Ok(false);
        }
    };
    check("constraint-rank-and-factorization", Ok(String::new()));

    // Patch test on a single-material copy of the same mesh (including
    // hanging nodes): an affine field is reproduced at every node.
    {
        let single = pixelfem::phase::MaterialTable::new(vec![pixelfem::phase::PhaseProperties {
            id: 0,
            young: 100.0,
            poisson: 0.2,
            gray: 0,
        }])?;
        let boxes = mesh.leaf_boxes();
        let uniform_boxes: Vec<_> = boxes
            .into_iter()
            .map(|mut b| {
                b.material = pixelfem::phase::CellMaterial::Discrete(0);
                b
            })
            .collect();
        let (fw, fh) = mesh.fine_dims();
        let patch_mesh = pixelfem::mesh::QuadtreeMesh::from_leaf_boxes(
            fw,
            fh,
            mesh.cell_size(),
            &uniform_boxes,
        )?;
        let patch = MicroSolver::new(patch_mesh, &single)?;
        let field = AffineField::from_strain([1.0, -0.5, 0.7]);
        let sol = patch.solve_fields(&[field])?;
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for (n, p) in patch.mesh().nodes().iter().enumerate() {
            let u = field.eval(*p);
            scale = scale.max(u[0].abs().max(u[1].abs()));
            worst = worst
                .max((sol.displacements[0][2 * n] - u[0]).abs())
                .max((sol.displacements[0][2 * n + 1] - u[1]).abs());
        }
        check(
            "patch-test-affine-reproduction",
            if worst <= 1e-10 * scale.max(1.0) {
                Ok(format!("max defect {worst:.3e}"))
            } else {
                Err(format!("max defect {worst:.3e}"))
            },
        );
    }

    // Homogenized tensor: SPD and inside the Reuss/Voigt bounds.
    let a0 = micro.homogenized_tensor()?;
    check(
        "homogenized-tensor-spd",
        if a0.is_positive_definite() { Ok(String::new()) } else { Err("not PD".into()) },
    );
    if cfg.table.phases.len() == 2 {
        let f = pixelfem::coarsen::mesh_fractions(micro.mesh());
        let id0 = cfg.table.phases[0].id;
        let id1 = cfg.table.phases[1].id;
        let c0 = cfg.table.tensor(id0)?;
        let c1 = cfg.table.tensor(id1)?;
        let (f0, f1) = (
            f.get(&id0).copied().unwrap_or(0.0),
            f.get(&id1).copied().unwrap_or(0.0),
        );
        let voigt = c0.scale(f0).add(&c1.scale(f1));
        let s0 = c0.inverse();
        let s1 = c1.inverse();
        let mut s = [[0.0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                s[r][c] = f0 * s0[r][c] + f1 * s1[r][c];
            }
        }
        let reuss = Elasticity2D::new(Elasticity2D::new(s)?.inverse())?;
        let upper = voigt.sub(&a0).min_eigenvalue();
        let lower = a0.sub(&reuss).min_eigenvalue();
        let tol = -1e-8 * voigt.m[0][0];
        check(
            "reuss-voigt-bounds",
            if upper > tol && lower > tol {
                Ok(format!("margins {lower:.3e}, {upper:.3e}"))
            } else {
                Err(format!("margins {lower:.3e}, {upper:.3e}"))
            },
        );
    }

    // Hill-Mandel consistency at the configured strain.
    {
        let rec = micro.recover(&AffineField::from_strain(cfg.strain))?;
        let mut power = 0.0;
        for (leaf, (ss, es)) in
            micro.mesh().leaves().iter().zip(rec.gp_stress.iter().zip(&rec.gp_strain))
        {
            let det = micro.mesh().leaf_side_mm(leaf).powi(2) / 4.0;
            for g in 0..4 {
                power += det * (0..3).map(|r| ss[g][r] * es[g][r]).sum::<f64>();
            }
        }
        power /= micro.volume();
        let macro_power: f64 =
            (0..3).map(|r| rec.avg_stress[r] * rec.avg_strain[r]).sum();
        let rel = (power - macro_power).abs() / macro_power.abs().max(1e-300);
        check(
            "hill-mandel-consistency",
            if rel <= 1e-8 {
                Ok(format!("relative defect {rel:.3e}"))
            } else {
                Err(format!("relative defect {rel:.3e}"))
            },
        );
    }

    let all = lines.iter().all(|l| l.passed);
    write_json(&cfg.out_dir.join("validate.json"), &lines)?;
    println!("{}", if all { "validation passed" } else { "validation FAILED" });
    Ok(all)
}

/// `export-mesh`: apply the coarsening plan and write the mesh as VTK.
pub fn cmd_export_mesh(cfg: &ResolvedConfig) -> anyhow::Result<()> {
    ensure_out(cfg)?;
    let (grid, report) = coarsen_uniform(&cfg.grid, cfg.variant, cfg.uniform_steps)?;
    let mesh = if cfg.adaptive_steps > 0 {
        let uniform = build_uniform_mesh(&grid)?;
        let (coarse, qreport) = quadtree_coarsen(&uniform, cfg.adaptive_steps)?;
        write_json(&cfg.out_dir.join("coarsen_report.json"), &(&report, &qreport))?;
        coarse
    } else {
        write_json(&cfg.out_dir.join("coarsen_report.json"), &report)?;
        build_uniform_mesh(&grid)?
    };
    let path = cfg.out_dir.join("mesh.vtk");
    write_vtk_quadtree(&path, &mesh, &[], &[])?;
    println!(
        "mesh with {} leaves / {} nodes ({} hanging) written to {}",
        mesh.leaves().len(),
        mesh.n_nodes(),
        mesh.hanging().len(),
        path.display()
    );
    Ok(())
}

/// `synth`: generate the configured synthetic microstructure and write it
/// as PGM together with a matching material table.
pub fn cmd_synth(cfg: &ResolvedConfig) -> anyhow::Result<()> {
    ensure_out(cfg)?;
    let pgm = cfg.out_dir.join("microstructure.pgm");
    save_pgm(&pgm, &cfg.grid, &cfg.table)?;
    #[derive(Serialize)]
    struct Domain {
        eps_x_mm: f64,
        eps_y_mm: f64,
    }
    #[derive(Serialize)]
    struct TableFile<'a> {
        phases: &'a [pixelfem::phase::PhaseProperties],
        domain: Domain,
    }
    let (ex, ey) = cfg.grid.extent();
    write_json(
        &cfg.out_dir.join("materials.json"),
        &TableFile { phases: &cfg.table.phases, domain: Domain { eps_x_mm: ex, eps_y_mm: ey } },
    )?;
    let f = cfg.grid.volume_fractions();
    println!(
        "wrote {} ({}x{} px, fractions {:?})",
        pgm.display(),
        cfg.grid.width(),
        cfg.grid.height(),
        f
    );
    Ok(())
}

