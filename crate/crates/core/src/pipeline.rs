//! File-to-file stages driven by the command-line tool. Each stage reads
//! its inputs, runs one library operation and writes its outputs; the
//! returned string is the human-readable summary printed on stdout.
//!
//! Outputs depend only on inputs and the run config, so repeated runs
//! produce byte-identical files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::baselines::{complete_volume, segment_sparse};
use crate::io::{
    load_labels, load_manifest, load_off, load_slices, load_sparse, read_label_pgm, save_labels, save_manifest,
    save_off, save_scalar, save_sparse, write_bytes, write_intensity_pgm, write_json, write_label_pgm,
    write_validity_pgm, RunConfig, SliceEntry, SweepManifest,
};
use crate::losses::{
    adv_loss, max_fd_rel_error, rec_loss, slice_generator_loss, total_loss, volume_generator_loss, AdvRole, LossConfig,
    Norm, SliceOutputs, Stage, VolumeOutputs,
};
use crate::mesh::pair_mesh;
use crate::metrics::{evaluate as score_pairs, EvaluationReport};
use crate::phantom::{make_phantom, simulate_ice_sweep};
use crate::report::{format_report, format_report_csv};
use crate::shapes::{preset, stack_shapes};
use crate::volume::{plan_grid, project_labels, splat_labels, splat_slices};
use crate::{Error, Result, SliceLabelMask, CLASS_NAMES};

/// Bit depth of simulated frames.
const IMAGE_MAXVAL: u16 = 65535;

fn frame_name(prefix: &str, index: usize, count: usize) -> String {
    let width = count.saturating_sub(1).to_string().len().max(3);
    format!("{prefix}_{index:0width$}.pgm")
}

/// Renders the phantom, simulates the sweep and writes everything under
/// `out`: `ct.json`, `labels.json`, `meshes/*.off`, `slices/*.pgm` and
/// `manifest.json`. The run seed drives both anatomy jitter and speckle.
pub fn phantom_gen(cfg: &RunConfig, out: &Path) -> Result<String> {
    let grid = cfg.phantom_grid.grid()?;
    let mut params = cfg.phantom.clone();
    params.seed = cfg.seed;
    let phantom = make_phantom(&params, &grid)?;
    let slices = simulate_ice_sweep(&phantom, &cfg.sweep, cfg.seed)?;

    save_scalar(&out.join("ct.json"), &phantom.ct)?;
    save_labels(&out.join("labels.json"), &phantom.labels)?;
    for m in &phantom.meshes {
        save_off(&out.join("meshes").join(format!("{}_{}.off", m.class_id, CLASS_NAMES[m.class_id as usize])), m)?;
    }

    let n = slices.len();
    let mut entries = Vec::with_capacity(n);
    for (k, s) in slices.iter().enumerate() {
        let g = s.geometry();
        let image = format!("slices/{}", frame_name("image", k, n));
        let validity = format!("slices/{}", frame_name("validity", k, n));
        let labels = format!("slices/{}", frame_name("labels", k, n));
        write_intensity_pgm(&out.join(&image), g.width(), g.height(), s.pixels(), IMAGE_MAXVAL)?;
        write_validity_pgm(&out.join(&validity), g.width(), g.height(), s.validity())?;
        write_label_pgm(&out.join(&labels), g.width(), g.height(), s.labels().unwrap_or(&[]))?;
        entries.push(SliceEntry {
            image,
            pose: g.pose().to_row_major(),
            spacing: [g.spacing().0, g.spacing().1],
            validity: Some(validity),
            labels: Some(labels),
        });
    }
    let manifest = SweepManifest::new(format!("phantom-{}", cfg.seed), Some(grid), entries);
    save_manifest(&out.join("manifest.json"), &manifest)?;

    let mut s = String::new();
    let _ = writeln!(s, "phantom grid {:?} @ {:?} mm", grid.dims, grid.spacing);
    for class in phantom.labels.present_classes() {
        let _ = writeln!(s, "  {:<10} {:>8} voxels", CLASS_NAMES[class as usize], phantom.labels.count(class));
    }
    let _ = writeln!(s, "{n} slices written to {}", out.join("manifest.json").display());
    Ok(s)
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().unwrap_or(Path::new("")).to_path_buf()
}

/// Splats a sweep into `out/sparse.json` and, when the frames carry
/// labels, votes them into `out/seeds.json`. Uses the manifest's grid if
/// present, otherwise plans one from the config.
pub fn build_volume(cfg: &RunConfig, manifest_path: &Path, out: &Path) -> Result<String> {
    let manifest = load_manifest(manifest_path)?;
    let slices = load_slices(&manifest, &manifest_dir(manifest_path))?;
    let grid = match manifest.grid {
        Some(g) => g,
        None => plan_grid(&slices, cfg.grid.spacing, cfg.grid.margin)?,
    };
    let sv = splat_slices(&slices, &grid, cfg.splat)?;
    save_sparse(&out.join("sparse.json"), &sv)?;
    let occupied = sv.occupied_voxels();
    let fraction = occupied as f64 / grid.len() as f64;
    log::info!(
        "occupancy: {occupied} of {} voxels ({:.2}%), total weight {:.3}, {} slice(s) outside",
        grid.len(),
        100.0 * fraction,
        sv.total_occupancy(),
        sv.slices_outside
    );

    let mut s = String::new();
    let _ = writeln!(s, "grid {:?} @ {:?} mm, origin {:?}", grid.dims, grid.spacing, grid.origin);
    let _ = writeln!(s, "occupied voxels: {occupied} ({:.2}%)", 100.0 * fraction);
    let _ = writeln!(s, "slices outside grid: {}", sv.slices_outside);
    if slices.iter().any(|sl| sl.labels().is_some()) {
        let seeds = splat_labels(&slices, &grid)?;
        save_labels(&out.join("seeds.json"), &seeds)?;
        let _ = writeln!(s, "seed labels written to {}", out.join("seeds.json").display());
    }
    let _ = writeln!(s, "sparse volume written to {}", out.join("sparse.json").display());
    Ok(s)
}

pub fn complete(cfg: &RunConfig, sparse: &Path, out: &Path) -> Result<String> {
    let sv = load_sparse(sparse)?;
    let dense = complete_volume(&sv, cfg.completion.sigma_mm, cfg.completion.iterations)?;
    save_scalar(out, &dense)?;
    Ok(format!("dense volume written to {}\n", out.display()))
}

pub fn segment(cfg: &RunConfig, sparse: &Path, seeds: &Path, out: &Path) -> Result<String> {
    let sv = load_sparse(sparse)?;
    let seeds = load_labels(seeds)?;
    let seg = segment_sparse(&sv, &seeds, cfg.segmentation.max_dist_mm)?;
    save_labels(out, &seg)?;
    let mut s = String::new();
    for class in seg.present_classes() {
        let _ = writeln!(s, "  {:<10} {:>8} voxels", CLASS_NAMES[class as usize], seg.count(class));
    }
    let _ = writeln!(s, "segmentation written to {}", out.display());
    Ok(s)
}

/// Projects a label volume onto every frame of a manifest and writes one
/// 8-bit mask per frame (`mask_000.pgm`, ...). Pixels outside a frame's
/// validity mask are background.
pub fn project_mask(labels: &Path, manifest_path: &Path, out: &Path) -> Result<String> {
    let vol = load_labels(labels)?;
    let manifest = load_manifest(manifest_path)?;
    let slices = load_slices(&manifest, &manifest_dir(manifest_path))?;
    let n = slices.len();
    for (k, s) in slices.iter().enumerate() {
        let mut mask = project_labels(&vol, s.geometry());
        for (c, &ok) in mask.classes.iter_mut().zip(s.validity()) {
            if !ok {
                *c = 0;
            }
        }
        let g = s.geometry();
        write_label_pgm(&out.join(frame_name("mask", k, n)), g.width(), g.height(), &mask.classes)?;
    }
    Ok(format!("{n} masks written to {}\n", out.display()))
}

pub fn pair_mesh_files(query: &Path, library: &[PathBuf]) -> Result<String> {
    let q = load_off(query)?;
    let lib = library.iter().map(|p| load_off(p)).collect::<Result<Vec<_>>>()?;
    let (best, dist) = pair_mesh(&q, &lib)?;
    Ok(format!("best {best} {} {dist}\n", library[best].display()))
}

/// Inputs of `evaluate`: a 3D pair, a 2D per-frame comparison, or both.
#[derive(Clone, Debug, Default)]
pub struct EvalInputs {
    pub name: Option<String>,
    pub pred: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub masks: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
}

#[derive(Serialize)]
struct NamedReport<'a> {
    name: &'a str,
    #[serde(flatten)]
    report: &'a EvaluationReport,
}

/// Rendered report in the three output formats.
#[derive(Clone, Debug)]
pub struct EvalOutput {
    pub rows: Vec<(String, EvaluationReport)>,
    pub text: String,
    pub csv: String,
    pub json: String,
}

pub fn evaluate(inputs: &EvalInputs) -> Result<EvalOutput> {
    let label = |kind: &str| match &inputs.name {
        Some(n) => format!("{n} {kind}"),
        None => kind.to_string(),
    };
    let mut rows = Vec::new();
    match (&inputs.masks, &inputs.manifest) {
        (Some(masks), Some(manifest_path)) => {
            let manifest = load_manifest(manifest_path)?;
            let slices = load_slices(&manifest, &manifest_dir(manifest_path))?;
            let n = slices.len();
            let mut preds = Vec::with_capacity(n);
            let mut gts = Vec::with_capacity(n);
            for (k, s) in slices.iter().enumerate() {
                let gt = s
                    .labels()
                    .ok_or_else(|| Error::schema(format!("slices[{k}].labels"), "needed for 2D evaluation"))?;
                let (w, h, pred) = read_label_pgm(&masks.join(frame_name("mask", k, n)))?;
                if (w, h) != (s.geometry().width(), s.geometry().height()) {
                    return Err(Error::validation(format!("mask {k} is {w}x{h}, frame is not")));
                }
                preds.push(SliceLabelMask::new(*s.geometry(), pred)?);
                gts.push(SliceLabelMask::new(*s.geometry(), gt.to_vec())?);
            }
            let pairs: Vec<_> = preds.iter().zip(&gts).collect();
            rows.push((label("2D"), score_pairs(&pairs)?));
        }
        (None, None) => {}
        _ => return Err(Error::validation("2D evaluation needs both --masks and --manifest")),
    }
    match (&inputs.pred, &inputs.gt) {
        (Some(p), Some(g)) => {
            let (p, g) = (load_labels(p)?, load_labels(g)?);
            rows.push((label("3D"), score_pairs(&[(&p, &g)])?));
        }
        (None, None) => {}
        _ => return Err(Error::validation("3D evaluation needs both --pred and --gt")),
    }
    if rows.is_empty() {
        return Err(Error::validation("nothing to evaluate: give --pred/--gt and/or --masks/--manifest"));
    }
    let named: Vec<NamedReport> = rows.iter().map(|(n, r)| NamedReport { name: n, report: r }).collect();
    let mut json = serde_json::to_string_pretty(&named).map_err(|e| Error::Internal(e.to_string()))?;
    json.push('\n');
    Ok(EvalOutput {
        text: format_report(&rows),
        csv: format_report_csv(&rows),
        json,
        rows,
    })
}

/// Writes whichever report files were requested.
pub fn write_report(out: &EvalOutput, text: Option<&Path>, csv: Option<&Path>, json: Option<&Path>) -> Result<()> {
    if let Some(p) = text {
        write_bytes(p, out.text.as_bytes())?;
    }
    if let Some(p) = csv {
        write_bytes(p, out.csv.as_bytes())?;
    }
    if let Some(p) = json {
        write_bytes(p, out.json.as_bytes())?;
    }
    Ok(())
}

/// Scores in (0.02, 0.98), away from the clamp.
fn random_scores(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.02..0.98)).collect()
}

fn random_tensor(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Largest central-difference disagreement over every analytic gradient
/// for one seeded batch.
#[derive(Clone, Debug, Serialize)]
pub struct LossCheck {
    pub terms: Vec<(String, f64)>,
    pub total_3d: f64,
    pub total_2d: f64,
    pub max_fd_rel_error: f64,
}

/// Totals reach ~1e3 under the default λ, so smaller steps let rounding
/// dominate the difference quotient.
const FD_STEP: f64 = 1e-4;
/// Reconstruction gradients are not checked at residuals this small: L1
/// has its kink within the stencil (±2 steps) and the L2 gradient is too
/// close to 0 for a relative comparison.
const SMALL_RESIDUAL: f64 = 3.0 * FD_STEP;

pub fn loss_check_batch(cfg: &LossConfig, seed: u64, batch: usize) -> Result<LossCheck> {
    if batch == 0 {
        return Err(Error::validation("batch must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let real = random_scores(&mut rng, batch);
    let fake_s = random_scores(&mut rng, batch);
    let fake_c = random_scores(&mut rng, batch);
    let fake_r = random_scores(&mut rng, batch);
    let seg = random_tensor(&mut rng, batch);
    let seg_gt = random_tensor(&mut rng, batch);
    let comp = random_tensor(&mut rng, batch);
    let comp_gt = random_tensor(&mut rng, batch);
    let refined = random_tensor(&mut rng, batch);
    let refined_gt = random_tensor(&mut rng, batch);

    let mut worst = 0.0f64;
    let none = |_: usize| false;

    let disc = adv_loss(&real, &fake_s, AdvRole::Discriminator)?;
    worst = worst.max(max_fd_rel_error(
        |x| adv_loss(x, &fake_s, AdvRole::Discriminator).map_or(f64::NAN, |l| l.value),
        &real,
        &disc.grad_real,
        FD_STEP,
        none,
    ));
    worst = worst.max(max_fd_rel_error(
        |x| adv_loss(&real, x, AdvRole::Discriminator).map_or(f64::NAN, |l| l.value),
        &fake_s,
        &disc.grad_fake,
        FD_STEP,
        none,
    ));
    for (pred, gt, norm) in [(&seg, &seg_gt, Norm::L2), (&comp, &comp_gt, Norm::L1)] {
        let r = rec_loss(pred, gt, norm)?;
        let skip = |i: usize| (pred[i] - gt[i]).abs() < SMALL_RESIDUAL;
        worst = worst.max(max_fd_rel_error(
            |x| rec_loss(x, gt, norm).map_or(f64::NAN, |l| l.value),
            pred,
            &r.grad,
            FD_STEP,
            skip,
        ));
    }

    let vol = VolumeOutputs {
        segmentation: &seg,
        segmentation_gt: &seg_gt,
        completion: &comp,
        completion_gt: &comp_gt,
        scores_s: &fake_s,
        scores_c: &fake_c,
    };
    let b3 = volume_generator_loss(&vol, cfg)?;
    let total3 = |v: VolumeOutputs| volume_generator_loss(&v, cfg).map_or(f64::NAN, |b| b.total);
    let grad = |name: &str| b3.gradient(name).map(<[f64]>::to_vec).unwrap_or_default();
    worst = worst.max(max_fd_rel_error(
        |x| total3(VolumeOutputs { segmentation: x, ..vol }),
        &seg,
        &grad("segmentation"),
        FD_STEP,
        |i| (seg[i] - seg_gt[i]).abs() < SMALL_RESIDUAL,
    ));
    worst = worst.max(max_fd_rel_error(
        |x| total3(VolumeOutputs { completion: x, ..vol }),
        &comp,
        &grad("completion"),
        FD_STEP,
        |i| (comp[i] - comp_gt[i]).abs() < SMALL_RESIDUAL,
    ));
    worst = worst.max(max_fd_rel_error(|x| total3(VolumeOutputs { scores_s: x, ..vol }), &fake_s, &grad("scores_s"), FD_STEP, none));
    worst = worst.max(max_fd_rel_error(|x| total3(VolumeOutputs { scores_c: x, ..vol }), &fake_c, &grad("scores_c"), FD_STEP, none));

    let sl = SliceOutputs {
        refined: &refined,
        refined_gt: &refined_gt,
        scores_r: &fake_r,
    };
    let b2 = slice_generator_loss(&sl, cfg)?;
    let total2 = |v: SliceOutputs| slice_generator_loss(&v, cfg).map_or(f64::NAN, |b| b.total);
    let g2 = |name: &str| b2.gradient(name).map(<[f64]>::to_vec).unwrap_or_default();
    worst = worst.max(max_fd_rel_error(
        |x| total2(SliceOutputs { refined: x, ..sl }),
        &refined,
        &g2("refined"),
        FD_STEP,
        |i| (refined[i] - refined_gt[i]).abs() < SMALL_RESIDUAL,
    ));
    worst = worst.max(max_fd_rel_error(|x| total2(SliceOutputs { scores_r: x, ..sl }), &fake_r, &g2("scores_r"), FD_STEP, none));

    let t = b3.terms;
    let t2 = b2.terms;
    let terms = vec![
        ("adv_d".to_string(), disc.value),
        ("rec_s".to_string(), t.rec_s.unwrap_or(f64::NAN)),
        ("adv_s".to_string(), t.adv_s.unwrap_or(f64::NAN)),
        ("rec_c".to_string(), t.rec_c.unwrap_or(f64::NAN)),
        ("adv_c".to_string(), t.adv_c.unwrap_or(f64::NAN)),
        ("rec_r".to_string(), t2.rec_r.unwrap_or(f64::NAN)),
        ("adv_r".to_string(), t2.adv_r.unwrap_or(f64::NAN)),
    ];
    Ok(LossCheck {
        terms,
        total_3d: total_loss(&t, cfg, Stage::Volume3d)?,
        total_2d: total_loss(&t2, cfg, Stage::Slice2d)?,
        max_fd_rel_error: worst,
    })
}

pub fn loss_check(cfg: &RunConfig, batch: usize) -> Result<String> {
    let r = loss_check_batch(&cfg.losses, cfg.seed, batch)?;
    let l = &cfg.losses;
    let mut s = String::new();
    let _ = writeln!(s, "seed {} batch {batch}", cfg.seed);
    let _ = writeln!(
        s,
        "lambdas: rec_s {} adv_s {} rec_c {} adv_c {} rec_r {} adv_r {}",
        l.lambda_rec_s, l.lambda_adv_s, l.lambda_rec_c, l.lambda_adv_c, l.lambda_rec_r, l.lambda_adv_r
    );
    for (name, v) in &r.terms {
        let _ = writeln!(s, "{name:<6} {v:.12}");
    }
    let _ = writeln!(s, "total_3d {:.12}", r.total_3d);
    let _ = writeln!(s, "total_2d {:.12}", r.total_2d);
    let _ = writeln!(s, "max_fd_rel_error {:.3e}", r.max_fd_rel_error);
    Ok(s)
}

pub fn shapes(dims: &[usize], preset_name: &str) -> Result<String> {
    let layers = preset(preset_name)?;
    let ladder = stack_shapes(dims, &layers)?;
    let fmt = |d: &[usize]| d.iter().map(usize::to_string).collect::<Vec<_>>().join("x");
    let mut s = format!("input {}\n", fmt(dims));
    for (i, (l, d)) in layers.iter().zip(&ladder).enumerate() {
        let kind = format!("{:?}", l.kind).to_lowercase();
        let _ = writeln!(s, "layer {:>2} {kind:<6} k{} s{} p{} -> {}", i + 1, l.kernel, l.stride, l.padding, fmt(d));
    }
    Ok(s)
}

/// Writes `cfg` as JSON, for reproducing a run.
pub fn save_config(path: &Path, cfg: &RunConfig) -> Result<()> {
    write_json(path, cfg)
}
