//! End-to-end runs driven by a TOML configuration.

use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::acquisition::{acquire_sweep, form_volumes, AcquisitionMode, AcquisitionParams, SpeckleParams};
use crate::arfi::{self, ArfiScene};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::forward::{ExcitationSpec, PotentialSpec, SourceGeometry, SteadyStateField};
use crate::geometry::{Aabb, FrustumGeometry, Point};
use crate::inversion::{
    self, covering_grid, erode_mask, fuse_frequencies, roi_stats, scan_convert_to, CartesianPhasorSet, CurlMode,
    ElasticityVolume, FilterBank,
};
use crate::io::{self, ArtifactWriter, VolumeHeader};
use crate::phantom::{build_phantom, ElasticityPhantom, Material, PhantomSpec, RegionSpec, Shape};
use crate::phasor::{fit_phasors, PhasorSet};
use crate::sequence::{plan_sequence, validate_synchronization, SequencePlan, SequenceParams, SyncReport};
use crate::tracking::{track_displacements, DisplacementSeries, TrackingParams};

/// Acquisition time of the original swept-focus 3D method [s].
pub const ORIGINAL_SWAVE_TIME: f64 = 12.0;

/// Young's moduli of the four reference phantoms [Pa].
pub const REFERENCE_MODULI: [f64; 4] = [2800.0, 6200.0, 11600.0, 21200.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhantomConfig {
    /// One material on a grid sized to cover the imaging frustum.
    Homogeneous {
        youngs: f64,
        #[serde(default = "default_rho")]
        rho: f64,
        #[serde(default)]
        eta: f64,
        #[serde(default = "default_phantom_spacing")]
        spacing: f64,
        #[serde(default = "default_margin")]
        margin: f64,
    },
    Custom(PhantomSpec),
}

fn default_rho() -> f64 {
    1000.0
}
fn default_phantom_spacing() -> f64 {
    1e-3
}
fn default_margin() -> f64 {
    5e-3
}

impl Default for PhantomConfig {
    fn default() -> Self {
        PhantomConfig::Homogeneous {
            youngs: 6200.0,
            rho: default_rho(),
            eta: 0.0,
            spacing: default_phantom_spacing(),
            margin: default_margin(),
        }
    }
}

impl PhantomConfig {
    pub fn homogeneous(youngs: f64, eta: f64) -> Self {
        PhantomConfig::Homogeneous {
            youngs,
            rho: default_rho(),
            eta,
            spacing: default_phantom_spacing(),
            margin: default_margin(),
        }
    }

    pub fn spec(&self, geometry: &FrustumGeometry) -> PhantomSpec {
        match self {
            PhantomConfig::Custom(spec) => spec.clone(),
            &PhantomConfig::Homogeneous { youngs, rho, eta, spacing, margin } => {
                let b = geometry.bounds();
                let origin = b.min.map(|v| v - margin);
                let dims = [0, 1, 2].map(|a| ((b.max[a] + margin - origin[a]) / spacing).ceil() as usize + 1);
                PhantomSpec {
                    dims,
                    spacing,
                    origin,
                    regions: vec![RegionSpec {
                        id: "background".into(),
                        shape: Shape::Background,
                        material: Material::from_youngs(youngs, rho, eta),
                    }],
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExcitationConfig {
    /// Displacement amplitude per tone [m].
    pub amplitude: f64,
    /// Tilt of the propagation direction toward +y [deg].
    pub tilt_deg: f64,
    pub direction_mix: [f64; 2],
}

impl Default for ExcitationConfig {
    fn default() -> Self {
        ExcitationConfig { amplitude: 50e-6, tilt_deg: 20.0, direction_mix: [0.6, 0.8] }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisplacementSource {
    /// Exact field samples.
    #[default]
    Oracle,
    /// Block matching on synthetic speckle.
    Tracked,
}

impl DisplacementSource {
    pub fn name(self) -> &'static str {
        match self {
            DisplacementSource::Oracle => "oracle",
            DisplacementSource::Tracked => "tracked",
        }
    }
}

impl std::str::FromStr for DisplacementSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(DisplacementSource::Oracle),
            "tracked" => Ok(DisplacementSource::Tracked),
            other => Err(Error::Config(format!("unknown displacement source `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    pub source: DisplacementSource,
    /// Keep every `frame_stride`-th frame of each plane.
    pub frame_stride: usize,
    pub speckle: SpeckleParams,
    /// Additive displacement noise in oracle mode, relative to the largest amplitude.
    pub oracle_noise: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            source: DisplacementSource::Oracle,
            frame_stride: 1,
            speckle: SpeckleParams::default(),
            oracle_noise: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContaminantConfig {
    pub potential: PotentialSpec,
    /// Gradient amplitude as a fraction of the shear amplitude.
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InversionConfig {
    pub curl: CurlMode,
    /// Cartesian resampling pitch [m].
    pub spacing: f64,
    pub filters: FilterBank,
    /// Mask erosion along x and y [m].
    pub erosion_in_plane: f64,
    /// Mask erosion along z [voxels].
    pub erosion_elevation: usize,
    /// Density used in `E = 3 rho c^2`; defaults to the phantom background.
    pub rho: Option<f64>,
    /// Gaussian smoothing of the resampled phasors before inversion [m].
    pub smoothing: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            curl: CurlMode::Curl3d,
            spacing: 0.5e-3,
            filters: FilterBank::default(),
            erosion_in_plane: 2e-3,
            erosion_elevation: 1,
            rho: None,
            smoothing: 2e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoiConfig {
    pub name: String,
    pub center: Point,
    pub size: Point,
}

impl RoiConfig {
    pub fn aabb(&self) -> Aabb {
        Aabb::centered(self.center, self.size)
    }
}

fn default_rois() -> Vec<RoiConfig> {
    vec![RoiConfig { name: "center".into(), center: [0.05, 0.0, 0.0], size: [0.01; 3] }]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    /// Phasor and per-frequency elasticity volumes.
    pub intermediates: bool,
    pub slices: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { intermediates: true, slices: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Identifier written to the stats table.
    pub name: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub phantom: PhantomConfig,
    pub sequence: SequenceParams,
    pub excitation: ExcitationConfig,
    pub geometry: FrustumGeometry,
    pub acquisition: AcquisitionConfig,
    pub tracking: TrackingParams,
    pub contaminant: Option<ContaminantConfig>,
    pub inversion: InversionConfig,
    #[serde(rename = "roi")]
    pub rois: Vec<RoiConfig>,
    pub outputs: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            name: "phantom".into(),
            seed: 1,
            output_dir: PathBuf::from("swave-out"),
            phantom: PhantomConfig::default(),
            sequence: SequenceParams::deep(),
            excitation: ExcitationConfig::default(),
            geometry: FrustumGeometry::default(),
            acquisition: AcquisitionConfig::default(),
            tracking: TrackingParams { window: [41, 21, 5], search: [2, 2, 1], regularization: 1, cross_terms: true },
            contaminant: None,
            inversion: InversionConfig::default(),
            rois: default_rois(),
            outputs: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.sequence.n_planes != self.geometry.n_planes
            || (self.sequence.plane_angle_step_deg - self.geometry.plane_angle_step_deg).abs() > 1e-12
        {
            return Err(Error::Config("sequence and geometry disagree on the plane sweep".into()));
        }
        if self.acquisition.frame_stride == 0 {
            return Err(Error::Config("frame_stride must be at least 1".into()));
        }
        if !(self.acquisition.oracle_noise >= 0.0) {
            return Err(Error::Config("oracle_noise must be non-negative".into()));
        }
        if !(self.excitation.amplitude >= 0.0) {
            return Err(Error::Config("excitation amplitude must be non-negative".into()));
        }
        if !(self.inversion.spacing > 0.0 && self.inversion.spacing.is_finite()) {
            return Err(Error::Config("inversion spacing must be positive".into()));
        }
        if !(self.inversion.smoothing >= 0.0) {
            return Err(Error::Config("smoothing must be non-negative".into()));
        }
        self.inversion.filters.validate().map_err(|e| Error::Config(e.to_string()))?;
        if let Some(c) = &self.contaminant {
            if !(c.fraction >= 0.0) {
                return Err(Error::Config("contaminant fraction must be non-negative".into()));
            }
        }
        if self.rois.is_empty() {
            return Err(Error::Config("at least one ROI is required".into()));
        }
        for r in &self.rois {
            if r.size.iter().any(|s| !(*s > 0.0)) {
                return Err(Error::Config(format!("ROI `{}` has a non-positive size", r.name)));
            }
        }
        Ok(())
    }

    fn density(&self, phantom: &ElasticityPhantom) -> f64 {
        self.inversion.rho.unwrap_or_else(|| {
            phantom.homogeneous_material().map(|m| m.rho).unwrap_or_else(|| {
                phantom.regions().first().map(|r| r.material.rho).unwrap_or(1000.0)
            })
        })
    }
}

/// One row of the elasticity statistics table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub phantom_id: String,
    pub mode: String,
    pub f_set: String,
    #[serde(rename = "mean_Pa")]
    pub mean_pa: f64,
    #[serde(rename = "std_Pa")]
    pub std_pa: f64,
    pub n_voxels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    /// Last stage that ran.
    pub completed: StopAfter,
    pub source: DisplacementSource,
    pub curl: CurlMode,
    pub plan: Option<SequencePlan>,
    pub synchronization: Option<SyncReport>,
    pub rows: Vec<StatsRow>,
    pub artifacts: Vec<io::ManifestEntry>,
    #[serde(skip)]
    pub timings: Vec<StageTiming>,
}

/// Stage after which a run stops; later stages are skipped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopAfter {
    Simulate,
    Acquire,
    Track,
    Phasors,
    Invert,
}

pub fn f_set_label(freqs: &[f64]) -> String {
    freqs.iter().map(|f| format!("{f}")).collect::<Vec<_>>().join("/")
}

struct Stages {
    writer: Option<ArtifactWriter>,
    timings: Vec<StageTiming>,
}

impl Stages {
    fn run<T>(&mut self, name: &str, f: impl FnOnce(&mut Option<ArtifactWriter>) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f(&mut self.writer).map_err(|e| Error::Stage {
            stage: name.to_string(),
            source: Box::new(e),
            written: self.writer.as_ref().map(|w| w.written().to_vec()).unwrap_or_default(),
        });
        self.timings.push(StageTiming { stage: name.to_string(), seconds: start.elapsed().as_secs_f64() });
        out
    }
}

/// Everything up to and including the Cartesian phasors.
#[derive(Clone, Debug)]
pub struct PhasorStage {
    pub phantom: ElasticityPhantom,
    pub plan: SequencePlan,
    pub sync: SyncReport,
    pub displacement: DisplacementSeries,
    pub phasors: PhasorSet,
    pub cartesian: CartesianPhasorSet,
    pub rho: f64,
}

fn excitation_spec(cfg: &RunConfig, phantom: &ElasticityPhantom) -> ExcitationSpec {
    let source = SourceGeometry::bottom_plate(&phantom.bounds(), cfg.excitation.tilt_deg);
    let mut exc = ExcitationSpec::tones(&cfg.sequence.frequencies, cfg.excitation.amplitude, source);
    exc.direction_mix = cfg.excitation.direction_mix;
    exc
}

fn add_oracle_noise(disp: &mut DisplacementSeries, level: f64, seed: u64) {
    let peak = disp
        .frames
        .iter()
        .flat_map(|f| f.iter().map(|c| c.max_abs()))
        .fold(0.0, f64::max);
    if level == 0.0 || peak == 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6f72_6163_6c65);
    let normal = Normal::new(0.0, level * peak).expect("finite sigma");
    for frame in &mut disp.frames {
        for c in frame.iter_mut() {
            for v in c.as_mut_slice() {
                *v += normal.sample(&mut rng);
            }
        }
    }
}

fn header_for<T: io::Sample>(dims: [usize; 3], name: &str) -> VolumeHeader {
    VolumeHeader { name: Some(name.into()), ..VolumeHeader::new::<T>(dims) }
}

fn write_phasors(w: &mut ArtifactWriter, phasors: &PhasorSet) -> Result<()> {
    const NAMES: [&str; 3] = ["axial", "lateral", "elevational"];
    for (f, comps) in phasors.frequencies.iter().zip(&phasors.components) {
        for (c, v) in comps.iter().enumerate() {
            let name = format!("phasor_{f}Hz_{}", NAMES[c]);
            w.write_volume(&format!("phasors/{name}.vol"), v, &header_for::<crate::volume::C64>(v.dims(), &name))?;
        }
    }
    w.write_volume(
        "phasors/residual.vol",
        &phasors.residual,
        &header_for::<f64>(phasors.residual.dims(), "phasor_residual"),
    )?;
    Ok(())
}

fn grid_header<T: io::Sample>(vol_dims: [usize; 3], e: &ElasticityVolume, name: &str) -> VolumeHeader {
    VolumeHeader {
        spacing: Some(e.grid.spacing),
        origin: Some(e.grid.origin),
        ..header_for::<T>(vol_dims, name)
    }
}

fn write_elasticity(w: &mut ArtifactWriter, e: &ElasticityVolume, stem: &str, slices: bool) -> Result<()> {
    w.write_volume(&format!("elasticity/{stem}.vol"), &e.e, &grid_header::<f64>(e.e.dims(), e, stem))?;
    if slices {
        let mid = e.grid.dims[2] / 2;
        let png = io::slice_png(&e.e, Some(&e.mask), 2, mid)?;
        w.write(&format!("slices/{stem}_z{mid}.png"), &png)?;
    }
    Ok(())
}

enum Prepared {
    Partial { plan: Option<SequencePlan>, sync: Option<SyncReport> },
    Full(Box<PhasorStage>),
}

/// Simulate, acquire, estimate displacement, fit phasors and scan-convert.
pub fn run_to_phasors(cfg: &RunConfig, exec: Execution) -> Result<PhasorStage> {
    let mut st = Stages { writer: None, timings: Vec::new() };
    match prepare(cfg, exec, &mut st, StopAfter::Phasors)? {
        Prepared::Full(stage) => Ok(*stage),
        Prepared::Partial { .. } => unreachable!("phasor stage always completes"),
    }
}

fn write_displacement(w: &mut ArtifactWriter, d: &DisplacementSeries) -> Result<()> {
    const NAMES: [&str; 3] = ["axial", "lateral", "elevational"];
    let provenance = match d.provenance {
        crate::tracking::Provenance::Oracle => "oracle",
        crate::tracking::Provenance::Tracked => "tracked",
    };
    let mid = d.len() / 2;
    for (c, v) in d.frames[mid].iter().enumerate() {
        let name = format!("displacement_frame{mid}_{}", NAMES[c]);
        let h = VolumeHeader { provenance: Some(provenance.into()), ..header_for::<f64>(v.dims(), &name) };
        w.write_volume(&format!("displacement/{name}.vol"), v, &h)?;
    }
    let h = VolumeHeader { provenance: Some(provenance.into()), ..header_for::<f64>(d.quality.dims(), "quality") };
    w.write_volume("displacement/quality.vol", &d.quality, &h)?;
    w.write_json("displacement/timestamps.json", &d.timestamps)?;
    Ok(())
}

fn prepare(cfg: &RunConfig, exec: Execution, st: &mut Stages, stop: StopAfter) -> Result<Prepared> {
    cfg.validate()?;
    let (phantom, field) = st.run("simulate", |w| {
        let phantom = build_phantom(&cfg.phantom.spec(&cfg.geometry))?;
        let exc = excitation_spec(cfg, &phantom);
        let mut field = SteadyStateField::new(&phantom, &exc)?;
        if let Some(c) = &cfg.contaminant {
            field = field.with_compressional(&c.potential, c.fraction * cfg.excitation.amplitude)?;
        }
        if let Some(w) = w.as_mut() {
            let e = phantom.youngs_modulus();
            let spec = cfg.phantom.spec(&cfg.geometry);
            let h = VolumeHeader {
                spacing: Some([spec.spacing; 3]),
                origin: Some(spec.origin),
                ..header_for::<f64>(e.dims(), "phantom_youngs_modulus")
            };
            w.write_volume("phantom/youngs_modulus.vol", &e, &h)?;
            w.write_json("phantom/excitation.json", &exc)?;
        }
        Ok((phantom, field))
    })?;
    if stop == StopAfter::Simulate {
        return Ok(Prepared::Partial { plan: None, sync: None });
    }
    let (plan, sync, vols) = st.run("acquire", |w| {
        let plan = plan_sequence(&cfg.sequence)?;
        let sync = validate_synchronization(&plan);
        let params = AcquisitionParams {
            mode: match cfg.acquisition.source {
                DisplacementSource::Oracle => AcquisitionMode::Displacement,
                DisplacementSource::Tracked => AcquisitionMode::Speckle,
            },
            frame_stride: cfg.acquisition.frame_stride,
            speckle: SpeckleParams { seed: cfg.seed, ..cfg.acquisition.speckle },
        };
        let record = acquire_sweep(&field, &plan, &cfg.geometry, &params, exec)?;
        let vols = form_volumes(&record)?;
        if let Some(w) = w.as_mut() {
            w.write_json("sequence/plan.json", &plan)?;
            w.write_json("sequence/synchronization.json", &sync)?;
            if stop == StopAfter::Acquire {
                w.write_json("acquisition/volume_phases.json", &vols.volume_timestamps)?;
                for (c, v) in vols.volumes[0].iter().enumerate() {
                    let name = format!("volume0_component{c}");
                    w.write_volume(&format!("acquisition/{name}.vol"), v, &header_for::<f64>(v.dims(), &name))?;
                }
            }
        }
        Ok((plan, sync, vols))
    })?;
    if stop == StopAfter::Acquire {
        return Ok(Prepared::Partial { plan: Some(plan), sync: Some(sync) });
    }
    let displacement = st.run("track", |w| {
        let d = match cfg.acquisition.source {
            DisplacementSource::Oracle => {
                let mut d = DisplacementSeries::from_displacement_volumes(&vols)?;
                add_oracle_noise(&mut d, cfg.acquisition.oracle_noise, cfg.seed);
                d
            }
            DisplacementSource::Tracked => track_displacements(&vols, &cfg.tracking, exec)?,
        };
        if let (Some(w), true) = (w.as_mut(), stop == StopAfter::Track) {
            write_displacement(w, &d)?;
        }
        Ok(d)
    })?;
    drop(vols);
    if stop == StopAfter::Track {
        return Ok(Prepared::Partial { plan: Some(plan), sync: Some(sync) });
    }
    let phasors = st.run("fit_phasors", |w| {
        let p = fit_phasors(&displacement, &plan.frequencies, exec)?;
        if let (Some(w), true) = (w.as_mut(), cfg.outputs.intermediates || stop == StopAfter::Phasors) {
            write_phasors(w, &p)?;
        }
        Ok(p)
    })?;
    let cartesian = st.run("scan_convert", |_| {
        let grid = covering_grid(&phasors.geometry, cfg.inversion.spacing)?;
        let cart = scan_convert_to(&phasors, &grid, exec)?;
        inversion::smooth(&cart, cfg.inversion.smoothing, exec)
    })?;
    let rho = cfg.density(&phantom);
    Ok(Prepared::Full(Box::new(PhasorStage { phantom, plan, sync, displacement, phasors, cartesian, rho })))
}

/// Per-frequency and fused elasticity for one curl mode, with the eroded mask applied.
pub fn invert_mode(
    stage: &PhasorStage,
    cfg: &RunConfig,
    mode: CurlMode,
    exec: Execution,
) -> Result<(Vec<ElasticityVolume>, ElasticityVolume)> {
    let per_freq = inversion::invert(&stage.cartesian, mode, stage.rho, &cfg.inversion.filters, exec)?;
    let fused = fuse_frequencies(&per_freq)?;
    let mask = erode_mask(
        &stage.cartesian.mask,
        &stage.cartesian.grid,
        cfg.inversion.erosion_in_plane,
        cfg.inversion.erosion_elevation,
    );
    let per_freq = per_freq
        .iter()
        .map(|e| inversion::apply_mask(e, &mask))
        .collect::<Result<Vec<_>>>()?;
    Ok((per_freq, inversion::apply_mask(&fused, &mask)?))
}

/// ROI rows: one per frequency and one for the fused estimate.
pub fn stats_rows(
    cfg: &RunConfig,
    mode: CurlMode,
    per_freq: &[ElasticityVolume],
    fused: &ElasticityVolume,
) -> Result<Vec<StatsRow>> {
    let mut rows = Vec::new();
    for roi in &cfg.rois {
        let id = if cfg.rois.len() == 1 { cfg.name.clone() } else { format!("{}:{}", cfg.name, roi.name) };
        let aabb = roi.aabb();
        for e in per_freq.iter().chain(std::iter::once(fused)) {
            let s = roi_stats(e, &aabb)?;
            rows.push(StatsRow {
                phantom_id: id.clone(),
                mode: mode.name().into(),
                f_set: f_set_label(&e.provenance.frequencies),
                mean_pa: s.mean,
                std_pa: s.std,
                n_voxels: s.count,
            });
        }
    }
    Ok(rows)
}

/// Full run writing artifacts under `cfg.output_dir`.
pub fn run_pipeline(cfg: &RunConfig, exec: Execution) -> Result<RunReport> {
    run_stages(cfg, exec, StopAfter::Invert)
}

/// Run up to and including `stop`, writing that prefix's artifacts, the report and the manifest.
pub fn run_stages(cfg: &RunConfig, exec: Execution, stop: StopAfter) -> Result<RunReport> {
    cfg.validate()?;
    let writer = ArtifactWriter::new(&cfg.output_dir)?;
    let mut st = Stages { writer: Some(writer), timings: Vec::new() };
    let mode = cfg.inversion.curl;
    let (plan, sync, rows) = match prepare(cfg, exec, &mut st, stop)? {
        Prepared::Partial { plan, sync } => (plan, sync, Vec::new()),
        Prepared::Full(stage) if stop == StopAfter::Phasors => (Some(stage.plan), Some(stage.sync), Vec::new()),
        Prepared::Full(stage) => {
            let (per_freq, fused) = st.run("invert", |w| {
                let (per_freq, fused) = invert_mode(&stage, cfg, mode, exec)?;
                if let Some(w) = w.as_mut() {
                    if cfg.outputs.intermediates {
                        for e in &per_freq {
                            let stem = format!("{}_{}Hz", mode.name(), e.provenance.frequencies[0]);
                            write_elasticity(w, e, &stem, cfg.outputs.slices)?;
                        }
                    }
                    write_elasticity(w, &fused, &format!("{}_fused", mode.name()), cfg.outputs.slices)?;
                    let h = grid_header::<bool>(fused.mask.dims(), &fused, "mask");
                    w.write_volume("elasticity/mask.vol", &fused.mask, &h)?;
                }
                Ok((per_freq, fused))
            })?;
            let rows = st.run("stats", |w| {
                let rows = stats_rows(cfg, mode, &per_freq, &fused)?;
                if let Some(w) = w.as_mut() {
                    w.write_csv("stats.csv", &rows)?;
                }
                Ok(rows)
            })?;
            let PhasorStage { plan, sync, .. } = *stage;
            (Some(plan), Some(sync), rows)
        }
    };
    let mut writer = st.writer.take().expect("writer present");
    let mut report = RunReport {
        name: cfg.name.clone(),
        completed: stop,
        source: cfg.acquisition.source,
        curl: mode,
        plan,
        synchronization: sync,
        rows,
        artifacts: Vec::new(),
        timings: st.timings,
    };
    writer.write_json("report.json", &report)?;
    report.artifacts = writer.finish()?;
    // Wall-clock timings vary between runs and stay out of the manifest.
    let timing_bytes = serde_json::to_vec_pretty(&report.timings).map_err(|e| Error::Format(e.to_string()))?;
    io::write_atomic(&cfg.output_dir.join("timings.json"), &timing_bytes)?;
    Ok(report)
}

/// Four homogeneous phantoms, each inverted without curl, with the 2D curl and with the 3D curl.
pub fn replicate_table(base: &RunConfig, moduli: &[f64], exec: Execution) -> Result<Vec<StatsRow>> {
    let mut rows = Vec::new();
    for &youngs in moduli {
        let mut cfg = base.clone();
        cfg.phantom = match &base.phantom {
            &PhantomConfig::Homogeneous { rho, eta, spacing, margin, .. } => {
                PhantomConfig::Homogeneous { youngs, rho, eta, spacing, margin }
            }
            PhantomConfig::Custom(_) => PhantomConfig::homogeneous(youngs, 0.0),
        };
        cfg.name = format!("E{:.1}kPa", youngs / 1000.0);
        let stage = run_to_phasors(&cfg, exec)?;
        for mode in CurlMode::ALL {
            let (_, fused) = invert_mode(&stage, &cfg, mode, exec)?;
            rows.extend(stats_rows(&cfg, mode, &[], &fused)?);
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeRow {
    pub method: String,
    pub time_s: f64,
    /// Reduction relative to the original 3D method [%].
    pub reduction_pct: f64,
    /// Reduction rounded to whole percent.
    pub reduction_display: String,
}

fn time_row(method: &str, time_s: f64) -> TimeRow {
    let pct = 100.0 * (1.0 - time_s / ORIGINAL_SWAVE_TIME);
    TimeRow { method: method.into(), time_s, reduction_pct: pct, reduction_display: format!("{}%", pct.round()) }
}

/// Acquisition time of each method against the original 12 s.
pub fn acquisition_time_report(deep: &SequencePlan, shallow: &SequencePlan, arfi_repeats: usize) -> Vec<TimeRow> {
    vec![
        time_row("ARFI single", arfi::SINGLE_MEASUREMENT_TIME),
        time_row(&format!("ARFI x{arfi_repeats}"), arfi_repeats as f64 * arfi::SINGLE_MEASUREMENT_TIME),
        time_row("original 3D S-WAVE", ORIGINAL_SWAVE_TIME),
        time_row("UF S-WAVE deep", deep.total_time),
        time_row("UF S-WAVE shallow", shallow.total_time),
    ]
}

pub fn render_time_report(rows: &[TimeRow]) -> String {
    let mut s = format!("{:<22} {:>8} {:>10}\n", "method", "time [s]", "reduction");
    for r in rows {
        s.push_str(&format!("{:<22} {:>8.2} {:>10}\n", r.method, r.time_s, r.reduction_display));
    }
    s
}

/// CSV row for baseline repeats and dispersion curves. Group-speed rows leave `f_Hz` empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArfiRow {
    pub repeat: usize,
    #[serde(rename = "f_Hz")]
    pub f_hz: Option<f64>,
    pub c_mps: Option<f64>,
    #[serde(rename = "E_Pa")]
    pub e_pa: Option<f64>,
}

pub fn arfi_rows(report: &arfi::RepeatReport, rho: f64) -> Vec<ArfiRow> {
    let mut rows = Vec::new();
    for r in &report.repeats {
        rows.push(ArfiRow { repeat: r.repeat, f_hz: None, c_mps: Some(r.group_speed), e_pa: Some(r.youngs_modulus) });
        for p in &r.phase_velocities {
            rows.push(ArfiRow {
                repeat: r.repeat,
                f_hz: Some(p.frequency),
                c_mps: p.speed,
                e_pa: p.speed.and_then(|c| arfi::elasticity_from_sws(c, rho).ok()),
            });
        }
    }
    rows
}

/// Baseline scene matching a run configuration's phantom.
pub fn arfi_scene(cfg: &RunConfig) -> Result<ArfiScene> {
    let phantom = build_phantom(&cfg.phantom.spec(&cfg.geometry))?;
    let material = phantom
        .homogeneous_material()
        .ok_or_else(|| Error::Config("the baseline needs a homogeneous phantom".into()))?;
    Ok(ArfiScene { material, ..ArfiScene::default() })
}
