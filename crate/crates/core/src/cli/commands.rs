use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{load_refine_config, CliError, CliResult, EvalArgs, MeshArgs, PhantomArgs, RefineArgs, SdfFromMaskArgs};
use crate::edt::signed_distance_from_mask;
use crate::energy::Term;
use crate::error::Error;
use crate::io::{self, MeshFormat, ReportRow, VolumeHeader, VolumeKind};
use crate::mesher::{connected_components, marching_cubes, surface_samples, TriangleMesh};
use crate::metrics::{occupancy_from_sdf, surface_scores, volume_scores};
use crate::phantom::{Phantom, PhantomSpec};
use crate::refine::{init_from_occupancy, refine_sdf, RefineTrace};
use crate::volume::{BinaryMask, OccupancyVolume, SdfVolume, VoxelVolume};

/// `<base><suffix>` where `<base>` is the volume basename of `path`.
pub(crate) fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let (header, _) = io::volume_paths(path);
    let mut s: OsString = header.with_extension("").into_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

pub(crate) fn ensure_parent(path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        if !dir.is_dir() {
            return Err(CliError::format(format!("output directory {} does not exist", dir.display())));
        }
    }
    Ok(())
}

pub(crate) fn read_sdf(path: &Path) -> CliResult<SdfVolume> {
    let (vol, _) = io::read_volume(path)?;
    Ok(SdfVolume::new(vol)?)
}

pub(crate) fn read_occupancy(path: &Path) -> CliResult<OccupancyVolume> {
    let (vol, _) = io::read_volume(path)?;
    Ok(OccupancyVolume::new(vol)?)
}

/// Inside mask and a negative-inside field for meshing. SDF volumes use their
/// own sign; anything else is thresholded at 0.5.
pub(crate) fn read_labelled(path: &Path) -> CliResult<(BinaryMask, VoxelVolume)> {
    let (vol, header) = io::read_volume(path)?;
    if header.kind == VolumeKind::Sdf {
        let sdf = SdfVolume::new(vol)?;
        Ok((occupancy_from_sdf(&sdf), sdf.into_volume()))
    } else {
        let occ = OccupancyVolume::new(vol)?;
        Ok((occ.threshold(0.5), occ.map(|v| 0.5 - v)))
    }
}

pub(crate) fn write_trace(trace: &RefineTrace, path: &Path) -> CliResult<()> {
    let terms: Vec<Term> = trace.first().map(|e| e.terms.active().map(|(t, _)| t).collect()).unwrap_or_default();
    let mut csv = String::from("iteration,total");
    for t in &terms {
        let _ = write!(csv, ",{}", t.name());
    }
    csv.push_str(",grad_sup\n");
    for e in &trace.entries {
        let _ = write!(csv, "{},{:?}", e.iteration, e.total);
        for &t in &terms {
            let _ = write!(csv, ",{:?}", e.terms.get(t).unwrap_or(f64::NAN));
        }
        let _ = writeln!(csv, ",{:?}", e.grad_sup);
    }
    fs::write(path, csv).map_err(Error::from)?;
    Ok(())
}

pub(crate) fn write_json(value: &impl serde::Serialize, path: &Path) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::format(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(Error::from)?;
    Ok(())
}

pub(crate) fn check_same_grid(a: &VoxelVolume, b: &VoxelVolume, what: &str) -> CliResult<()> {
    if !a.same_grid(b) {
        return Err(CliError::mismatch(format!(
            "{what}: dims {:?} spacing {:?} vs dims {:?} spacing {:?}",
            a.dims().as_array(),
            a.spacing().as_array(),
            b.dims().as_array(),
            b.spacing().as_array()
        )));
    }
    Ok(())
}

/// Ground-truth side of an evaluation, sampled once.
pub(crate) struct Truth {
    pub mask: BinaryMask,
    pub points: Option<Vec<[f64; 3]>>,
}

impl Truth {
    pub fn new(mask: BinaryMask, field: &VoxelVolume, samples: usize, seed: u64) -> CliResult<Self> {
        let mesh = marching_cubes(field, 0.0)?;
        let points = if mesh.is_empty() { None } else { Some(surface_samples(&mesh, samples, seed)?) };
        Ok(Self { mask, points })
    }
}

/// Scores one prediction; the mesh is returned for export.
pub(crate) fn score_case(
    case: &str,
    mask: &BinaryMask,
    field: &VoxelVolume,
    truth: &Truth,
    samples: usize,
    seed: u64,
    shell_radius: f64,
) -> CliResult<(ReportRow, TriangleMesh)> {
    check_same_grid(mask, &truth.mask, "prediction vs truth")?;
    let volume = volume_scores(mask, &truth.mask, shell_radius)?;
    let mesh = marching_cubes(field, 0.0)?;
    let components = connected_components(&mesh).count;
    let surface = match (&truth.points, mesh.is_empty()) {
        (Some(tp), false) => Some(surface_scores(&surface_samples(&mesh, samples, seed)?, tp)?),
        _ => None,
    };
    Ok((ReportRow { case: case.to_string(), volume, surface, components }, mesh))
}

pub fn sdf_from_mask(a: &SdfFromMaskArgs) -> CliResult<()> {
    let (vol, _) = io::read_volume(&a.input)?;
    let mask = BinaryMask::new(vol).map_err(|e| CliError::format(format!("{}: {e}", a.input.display())))?;
    ensure_parent(&a.out)?;
    let sdf = signed_distance_from_mask(&mask)?;
    io::write_volume(&sdf, &VolumeHeader::for_volume(&sdf, VolumeKind::Sdf), &a.out)?;
    Ok(())
}

pub fn refine(a: &RefineArgs) -> CliResult<()> {
    let y = read_occupancy(&a.occupancy)?;
    let reference = match &a.reference {
        Some(p) => {
            let r = read_sdf(p)?;
            check_same_grid(&y, &r, "occupancy vs reference")?;
            Some(r)
        }
        None => None,
    };
    let cfg = load_refine_config(y.spacing(), &a.energy, &a.disable)?;
    ensure_parent(&a.out)?;
    let init = init_from_occupancy(&y, a.energy.threshold)?;
    let out = refine_sdf(&init.sdf, &y, reference.as_ref(), &cfg)?;

    let config_echo = serde_json::json!({
        "refine": cfg,
        "threshold": a.energy.threshold,
        "reference": reference.is_some(),
        "degenerate_init": init.degenerate,
    });
    println!("{}", serde_json::to_string(&config_echo).map_err(|e| CliError::format(e.to_string()))?);
    for (label, entry) in [("start", out.trace.first()), ("end", out.trace.last())] {
        if let Some(e) = entry {
            let mut line = format!("{label}: iteration {} total {:?}", e.iteration, e.total);
            for (t, v) in e.terms.active() {
                let _ = write!(line, " {}={v:?}", t.name());
            }
            println!("{line}");
        }
    }
    if !out.improved {
        println!("note: optimizer did not improve on the initial field; initial field kept");
    }
    io::write_volume(&out.sdf, &VolumeHeader::for_volume(&out.sdf, VolumeKind::Sdf), &a.out)?;
    write_trace(&out.trace, &sibling(&a.out, "_trace.csv"))?;
    write_json(&config_echo, &sibling(&a.out, "_config.json"))?;
    Ok(())
}

pub fn mesh(a: &MeshArgs) -> CliResult<()> {
    let format = match &a.format {
        Some(f) => f.parse::<MeshFormat>()?,
        None => match a.out.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("ply") => MeshFormat::Ply,
            _ => MeshFormat::Obj,
        },
    };
    if !a.iso.is_finite() {
        return Err(CliError::format("--iso must be finite"));
    }
    let sdf = read_sdf(&a.input)?;
    ensure_parent(&a.out)?;
    let mesh = marching_cubes(&sdf, a.iso)?;
    let report = connected_components(&mesh);
    io::write_mesh(&mesh, &a.out, format)?;
    let mut report_path = a.out.with_extension("").into_os_string();
    report_path.push("_components.json");
    write_json(&report, Path::new(&report_path))?;
    println!("{} vertices, {} triangles, {} components", mesh.vertices.len(), mesh.triangles.len(), report.count);
    Ok(())
}

pub fn eval(a: &EvalArgs) -> CliResult<()> {
    let (pm, pf) = read_labelled(&a.pred)?;
    let (tm, tf) = read_labelled(&a.truth)?;
    check_same_grid(&pm, &tm, "prediction vs truth")?;
    if a.samples == 0 {
        return Err(CliError::format("--samples must be >= 1"));
    }
    if !(a.shell_radius >= 1.0) {
        return Err(CliError::format("--shell-radius must be >= 1"));
    }
    ensure_parent(&a.out)?;
    let truth = Truth::new(tm, &tf, a.samples, a.sample_seed)?;
    let (row, _) = score_case(&a.case, &pm, &pf, &truth, a.samples, a.sample_seed, a.shell_radius)?;
    let echo = serde_json::json!({
        "pred": a.pred,
        "truth": a.truth,
        "samples": a.samples,
        "sample_seed": a.sample_seed,
        "shell_radius": a.shell_radius,
    });
    io::write_report(std::slice::from_ref(&row), &echo, &a.out)?;
    Ok(())
}

pub(crate) fn load_phantom_spec(preset: Option<&str>, spec: Option<&Path>, seed: Option<u64>) -> CliResult<PhantomSpec> {
    let mut spec = match (preset, spec) {
        (Some(name), _) => PhantomSpec::preset(name)?,
        (None, Some(path)) => io::read_phantom_spec(path)?,
        (None, None) => return Err(CliError::format("either --preset or --spec is required")),
    };
    if let Some(s) = seed {
        spec.degrade.seed = s;
    }
    spec.validate()?;
    Ok(spec)
}

pub(crate) fn write_phantom(ph: &Phantom, dir: &Path) -> CliResult<()> {
    io::write_volume(&ph.mask, &VolumeHeader::for_volume(&ph.mask, VolumeKind::Mask), dir.join("clean_mask"))?;
    io::write_volume(&ph.sdf, &VolumeHeader::for_volume(&ph.sdf, VolumeKind::Sdf), dir.join("clean_sdf"))?;
    io::write_volume(
        &ph.degraded,
        &VolumeHeader::for_volume(&ph.degraded, VolumeKind::Occupancy),
        dir.join("occupancy"),
    )?;
    Ok(())
}

pub fn phantom(a: &PhantomArgs) -> CliResult<()> {
    let spec = load_phantom_spec(a.preset.as_deref(), a.spec.as_deref(), a.seed)?;
    let ph = spec.generate()?;
    fs::create_dir_all(&a.out).map_err(Error::from)?;
    write_phantom(&ph, &a.out)?;
    io::write_phantom_spec(&spec, a.out.join("phantom.json"))?;
    Ok(())
}
