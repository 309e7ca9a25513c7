use std::fs;

use serde::Serialize;

use super::commands::{
    load_phantom_spec, read_labelled, read_occupancy, score_case, write_json, write_phantom, write_trace, Truth,
};
use super::{load_refine_config, Ablation, CliResult, PipelineArgs, PipelineConfig, PipelineSource};
use crate::energy::TermBreakdown;
use crate::error::Error;
use crate::io::{self, MeshFormat, ReportRow, VolumeHeader, VolumeKind};
use crate::mesher::{connected_components, marching_cubes};
use crate::metrics::{occupancy_from_sdf, SurfaceScores, VolumeScores};
use crate::refine::{init_from_occupancy, refine_sdf, RefineOutcome};
use crate::volume::{BinaryMask, OccupancyVolume, VoxelVolume};

#[derive(Debug, Serialize)]
struct RefineSummary {
    initial_energy: f64,
    final_energy: f64,
    iterations: usize,
    improved: bool,
    initial_terms: TermBreakdown,
    final_terms: TermBreakdown,
}

#[derive(Debug, Serialize)]
struct CaseSummary {
    case: String,
    components: usize,
    volume: Option<VolumeScores>,
    surface: Option<SurfaceScores>,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    config: &'a PipelineConfig,
    degenerate_init: bool,
    refine: Option<RefineSummary>,
    cases: Vec<CaseSummary>,
}

struct Inputs {
    y: OccupancyVolume,
    truth: Option<(BinaryMask, VoxelVolume)>,
    phantom: Option<crate::phantom::Phantom>,
}

fn load_inputs(a: &PipelineArgs) -> CliResult<(PipelineSource, Option<crate::phantom::DegradeSpec>, Inputs)> {
    if let Some(path) = &a.occupancy {
        let y = read_occupancy(path)?;
        let truth = match &a.truth {
            Some(t) => {
                let (m, f) = read_labelled(t)?;
                super::commands::check_same_grid(&y, &m, "occupancy vs truth")?;
                Some((m, f))
            }
            None => None,
        };
        let source = PipelineSource::Occupancy { occupancy: path.clone(), truth: a.truth.clone() };
        return Ok((source, None, Inputs { y, truth, phantom: None }));
    }
    let preset = a.preset.as_deref().or(if a.spec.is_none() { Some("tube64") } else { None });
    let spec = load_phantom_spec(preset, a.spec.as_deref(), a.seed)?;
    let ph = spec.generate()?;
    let source = match preset {
        Some(name) => PipelineSource::Preset(name.to_string()),
        None => PipelineSource::Spec(a.spec.clone().unwrap_or_default()),
    };
    let y = ph.degraded.clone();
    let truth = Some((ph.mask.clone(), ph.sdf.as_volume().clone()));
    Ok((source, Some(spec.degrade), Inputs { y, truth, phantom: Some(ph) }))
}

pub fn run(a: &PipelineArgs) -> CliResult<()> {
    let (source, degrade, inputs) = load_inputs(a)?;
    let disabled = match &a.ablate {
        Ablation::Terms(t) => t.clone(),
        _ => Vec::new(),
    };
    let refine_cfg = load_refine_config(inputs.y.spacing(), &a.energy, &disabled)?;
    let cfg = PipelineConfig {
        source,
        out_dir: a.out.clone(),
        degrade,
        threshold: a.energy.threshold,
        refine: refine_cfg,
        ablation: a.ablate.clone(),
        samples: a.samples,
        sample_seed: a.sample_seed,
        shell_radius: a.shell_radius,
    };
    cfg.validate()?;

    let y = &inputs.y;
    let init = init_from_occupancy(y, cfg.threshold)?;
    let outcome: Option<RefineOutcome> = match cfg.ablation {
        Ablation::Refine => None,
        _ => Some(refine_sdf(&init.sdf, y, None, &cfg.refine)?),
    };
    let refined = outcome.as_ref().map(|o| &o.sdf).unwrap_or(&init.sdf);

    let dir = &cfg.out_dir;
    fs::create_dir_all(dir).map_err(Error::from)?;
    if let Some(ph) = &inputs.phantom {
        write_phantom(ph, dir)?;
    }
    let sdf_header = VolumeHeader::for_volume(&init.sdf, VolumeKind::Sdf);
    io::write_volume(&init.sdf, &sdf_header, dir.join("init_sdf"))?;
    io::write_volume(refined, &sdf_header, dir.join("refined_sdf"))?;
    if let Some(o) = &outcome {
        write_trace(&o.trace, &dir.join("trace.csv"))?;
    }

    let thr = cfg.threshold;
    let cases: [(&str, BinaryMask, VoxelVolume); 3] = [
        ("degraded", y.threshold(thr), y.map(|v| thr - v)),
        ("initial", occupancy_from_sdf(&init.sdf), init.sdf.as_volume().clone()),
        ("refined", occupancy_from_sdf(refined), refined.as_volume().clone()),
    ];
    let truth = match inputs.truth {
        Some((m, f)) => Some(Truth::new(m, &f, cfg.samples, cfg.sample_seed)?),
        None => None,
    };
    let mut rows: Vec<ReportRow> = Vec::new();
    let mut summaries = Vec::new();
    for (name, mask, field) in &cases {
        let (components, volume, surface, mesh) = match &truth {
            Some(t) => {
                let (row, mesh) = score_case(name, mask, field, t, cfg.samples, cfg.sample_seed, cfg.shell_radius)?;
                let out = (row.components, Some(row.volume), row.surface, mesh);
                rows.push(row);
                out
            }
            None => {
                let mesh = marching_cubes(field, 0.0)?;
                (connected_components(&mesh).count, None, None, mesh)
            }
        };
        if *name != "degraded" {
            io::write_mesh(&mesh, dir.join(format!("{name}.obj")), MeshFormat::Obj)?;
        }
        summaries.push(CaseSummary { case: name.to_string(), components, volume, surface });
    }

    let summary = Summary {
        config: &cfg,
        degenerate_init: init.degenerate,
        refine: outcome.as_ref().map(|o| RefineSummary {
            initial_energy: o.initial_energy,
            final_energy: o.final_energy,
            iterations: o.iterations,
            improved: o.improved,
            initial_terms: o.trace.first().map(|e| e.terms).unwrap_or_default(),
            final_terms: o.trace.last().map(|e| e.terms).unwrap_or_default(),
        }),
        cases: summaries,
    };
    if !rows.is_empty() {
        let echo = serde_json::to_value(&cfg).map_err(|e| Error::format(e.to_string()))?;
        io::write_report(&rows, &echo, dir.join("report.csv"))?;
    }
    write_json(&summary, &dir.join("summary.json"))?;
    for c in &summary.cases {
        match c.volume {
            Some(v) => println!("{:<9} components {:>5}  dice {:.4}", c.case, c.components, v.dice),
            None => println!("{:<9} components {:>5}", c.case, c.components),
        }
    }
    Ok(())
}
