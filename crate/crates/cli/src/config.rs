use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;

use pixelfem::coarsen::CoarsenVariant;
use pixelfem::error_analysis::RecoveryScheme;
use pixelfem::phase::{
    load_grid, load_material_table, synth_microstructure, GridFormat, MaterialTable,
    PhaseGrid, PhaseProperties, SynthSpec,
};

/// Run configuration, TOML on disk. All physical quantities carry unit
/// suffixes in their key names.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub image: ImageSection,
    pub materials: MaterialSection,
    #[serde(default)]
    pub domain: Option<DomainSection>,
    #[serde(default)]
    pub coarsen: CoarsenSection,
    #[serde(default)]
    pub reference: ReferenceSection,
    #[serde(default)]
    pub micro: MicroSection,
    #[serde(rename = "macro", default)]
    pub macro_problem: MacroSection,
    #[serde(default)]
    pub estimator: EstimatorSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageSection {
    /// Path to a PGM (P2/P5) or CSV phase image.
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// `pgm` or `csv`; inferred from the extension when omitted.
    #[serde(default)]
    pub format: Option<String>,
    /// Synthetic microstructure instead of a file.
    #[serde(default)]
    pub synth: Option<SynthSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub kind: String,
    pub width_px: usize,
    pub height_px: usize,
    #[serde(default)]
    pub tiles: Option<usize>,
    #[serde(default)]
    pub fraction: Option<f64>,
    #[serde(default)]
    pub axis: Option<String>,
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub target_fraction: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSection {
    /// JSON material table file ({phases: [...], domain: {...}}).
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// Inline phases as an alternative to `path`.
    #[serde(default)]
    pub phases: Option<Vec<InlinePhase>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlinePhase {
    pub id: u16,
    pub e_mpa: f64,
    pub nu: f64,
    #[serde(default)]
    pub gray: u16,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub eps_x_mm: f64,
    pub eps_y_mm: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoarsenSection {
    /// `a` (averaging / interphases) or `b` (majority / phase preserving).
    pub variant: String,
    pub uniform_steps: usize,
    pub adaptive_steps: usize,
}

impl Default for CoarsenSection {
    fn default() -> Self {
        Self { variant: "a".into(), uniform_steps: 0, adaptive_steps: 0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceSection {
    /// Reference mesh refinement: reference mesh resolution = input image
    /// resolution times 2^mesh_refine.
    pub mesh_refine: u32,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        Self { mesh_refine: 0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MicroSection {
    /// Driving macro strain (Voigt: eps11, eps22, gamma12).
    pub strain: [f64; 3],
}

impl Default for MicroSection {
    fn default() -> Self {
        Self { strain: [1.0, 0.0, 0.0] }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MacroSection {
    pub length_mm: f64,
    pub height_mm: f64,
    pub thickness_mm: f64,
    pub q0_n_per_mm: f64,
    pub mesh_nx: usize,
    pub mesh_ny: usize,
    /// Micro postprocessing point, snapped to the nearest macro
    /// quadrature point.
    pub probe_x_mm: f64,
    pub probe_y_mm: f64,
}

impl Default for MacroSection {
    fn default() -> Self {
        Self {
            length_mm: 5000.0,
            height_mm: 1000.0,
            thickness_mm: 100.0,
            q0_n_per_mm: 0.02,
            mesh_nx: 20,
            mesh_ny: 4,
            probe_x_mm: 2.1132,
            probe_y_mm: 2.1132,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSection {
    /// Any of `average`, `phase_distinct`.
    pub schemes: Vec<String>,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self { schemes: vec!["average".into(), "phase_distinct".into()] }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Cache reference solves under `<dir>/.cache`.
    pub cache: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out"), cache: true }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    /// Worker thread cap; 0 keeps the rayon default.
    pub threads: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { threads: 0 }
    }
}

/// Everything the commands need, resolved and validated.
pub struct ResolvedConfig {
    pub grid: PhaseGrid,
    pub table: MaterialTable,
    pub variant: CoarsenVariant,
    pub uniform_steps: usize,
    pub adaptive_steps: usize,
    pub reference_mesh_refine: u32,
    pub strain: [f64; 3],
    pub macro_problem: MacroSection,
    pub schemes: Vec<RecoveryScheme>,
    pub out_dir: PathBuf,
    pub cache: bool,
    pub threads: usize,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        Ok(cfg)
    }

    /// Validate and materialize the configuration: load or synthesize the
    /// image, resolve the material table and map enum-like strings.
    pub fn resolve(&self, config_dir: &Path) -> anyhow::Result<ResolvedConfig> {
        let rel = |p: &PathBuf| -> PathBuf {
            if p.is_absolute() {
                p.clone()
            } else {
                config_dir.join(p)
            }
        };

        // Material table and domain extents.
        let (table, domain_from_file) = match (&self.materials.path, &self.materials.phases) {
            (Some(path), None) => {
                let path = rel(path);
                if !path.exists() {
                    bail!("material table {} does not exist", path.display());
                }
                let (t, d) = load_material_table(&path)?;
                (t, Some(d))
            }
            (None, Some(phases)) => {
                let props: Vec<PhaseProperties> = phases
                    .iter()
                    .map(|p| PhaseProperties {
                        id: p.id,
                        young: p.e_mpa,
                        poisson: p.nu,
                        gray: p.gray,
                    })
                    .collect();
                (MaterialTable::new(props)?, None)
            }
            (Some(_), Some(_)) => bail!("materials: give either `path` or inline `phases`"),
            (None, None) => bail!("materials: missing `path` or inline `phases`"),
        };

        let domain = match (&self.domain, domain_from_file) {
            (Some(d), _) => (d.eps_x_mm, d.eps_y_mm),
            (None, Some(d)) => d,
            (None, None) => (1.0, 1.0),
        };
        if domain.0 <= 0.0 || domain.1 <= 0.0 {
            bail!("domain extents must be positive");
        }

        // Image: file or synthetic.
        let grid = match (&self.image.path, &self.image.synth) {
            (Some(path), None) => {
                let path = rel(path);
                if !path.exists() {
                    bail!("phase image {} does not exist", path.display());
                }
                let format = match self
                    .image
                    .format
                    .clone()
                    .unwrap_or_else(|| {
                        path.extension()
                            .and_then(|e| e.to_str())
                            .unwrap_or_default()
                            .to_lowercase()
                    })
                    .as_str()
                {
                    "pgm" => GridFormat::Pgm,
                    "csv" => GridFormat::Csv,
                    other => bail!("unknown image format {other:?} (use pgm or csv)"),
                };
                // Square pixels: both extents must agree with the raster.
                let probe = load_grid(&path, format, &table, 1.0)?;
                let hx = domain.0 / probe.width() as f64;
                let hy = domain.1 / probe.height() as f64;
                if ((hx - hy) / hx).abs() > 1e-12 {
                    bail!(
                        "non-square pixels: {}x{} px image in a {} x {} mm domain",
                        probe.width(),
                        probe.height(),
                        domain.0,
                        domain.1
                    );
                }
                load_grid(&path, format, &table, hx)?
            }
            (None, Some(synth)) => {
                let spec = synth.to_spec()?;
                let g = synth_microstructure(&spec, synth.width_px, synth.height_px)?;
                // synth uses a unit extent along x; rescale to the domain.
                let hx = domain.0 / synth.width_px as f64;
                let hy = domain.1 / synth.height_px as f64;
                if ((hx - hy) / hx).abs() > 1e-12 {
                    bail!("non-square pixels in synthetic image");
                }
                PhaseGrid::from_cells(g.width(), g.height(), hx, g.cells().to_vec())?
            }
            (Some(_), Some(_)) => bail!("image: give either `path` or `synth`"),
            (None, None) => bail!("image: missing `path` or `synth`"),
        };

        // Every image phase must be mapped.
        for p in grid.phases_present() {
            table.phase(p)?;
        }

        let variant = match self.coarsen.variant.to_lowercase().as_str() {
            "a" | "averaging" | "interphase" => CoarsenVariant::Averaging,
            "b" | "majority" | "phase_preserving" => CoarsenVariant::Majority,
            other => bail!("unknown coarsening variant {other:?} (use a or b)"),
        };

        // Uniform coarsening must keep dimensions even at every step.
        let mut w = grid.width();
        let mut h = grid.height();
        for step in 0..self.coarsen.uniform_steps {
            if w % 2 != 0 || h % 2 != 0 {
                bail!("cannot coarsen {w}x{h} px at step {step}: dimensions must stay even");
            }
            w /= 2;
            h /= 2;
        }

        let mut schemes = Vec::new();
        for s in &self.estimator.schemes {
            match s.to_lowercase().as_str() {
                "average" | "ave" => schemes.push(RecoveryScheme::Average),
                "phase_distinct" | "quad" | "duplex" => {
                    schemes.push(RecoveryScheme::PhaseDistinct)
                }
                other => bail!("unknown estimator scheme {other:?}"),
            }
        }

        if self.macro_problem.mesh_nx == 0 || self.macro_problem.mesh_ny == 0 {
            bail!("macro mesh dimensions must be positive");
        }

        Ok(ResolvedConfig {
            grid,
            table,
            variant,
            uniform_steps: self.coarsen.uniform_steps,
            adaptive_steps: self.coarsen.adaptive_steps,
            reference_mesh_refine: self.reference.mesh_refine,
            strain: self.micro.strain,
            macro_problem: self.macro_problem.clone(),
            schemes,
            out_dir: self.output.dir.clone(),
            cache: self.output.cache,
            threads: self.run.threads,
        })
    }
}

impl SynthSection {
    pub fn to_spec(&self) -> anyhow::Result<SynthSpec> {
        let spec = match self.kind.to_lowercase().as_str() {
            "checkerboard" => SynthSpec::Checkerboard { n: self.tiles.unwrap_or(1) },
            "laminate" => {
                let fraction =
                    self.fraction.context("laminate synth needs `fraction`")?;
                let axis = match self.axis.as_deref().unwrap_or("x") {
                    "x" => pixelfem::phase::Axis::X,
                    "y" => pixelfem::phase::Axis::Y,
                    other => bail!("unknown laminate axis {other:?}"),
                };
                SynthSpec::Laminate { fraction, axis }
            }
            "circular_inclusions" => SynthSpec::CircularInclusions {
                count: self.count.context("circular_inclusions needs `count`")?,
                target_fraction: self
                    .target_fraction
                    .context("circular_inclusions needs `target_fraction`")?,
                seed: self.seed.unwrap_or(0),
            },
            other => bail!("unknown synth kind {other:?}"),
        };
        Ok(spec)
    }
}
