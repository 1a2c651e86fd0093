//! One-hot encodings, Dice, average symmetric surface distance (ASSD) and
//! inter-rater reliability over 2D masks and 3D label volumes.

use serde::{Deserialize, Serialize};

use crate::edt::edt;
use crate::volume::{LabelVolume, SliceLabelMask};
use crate::{Error, Result, NUM_CLASSES};

/// Anything holding a class id per cell of a regular 2D or 3D lattice.
pub trait LabelField {
    /// Lattice extents; 2D fields report a depth of 1.
    fn dims(&self) -> [usize; 3];
    /// Cell spacing in mm per axis.
    fn spacing(&self) -> [f64; 3];
    fn classes(&self) -> &[u8];
}

impl LabelField for LabelVolume {
    fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    fn spacing(&self) -> [f64; 3] {
        self.grid.spacing
    }

    fn classes(&self) -> &[u8] {
        &self.classes
    }
}

impl LabelField for SliceLabelMask {
    fn dims(&self) -> [usize; 3] {
        [self.geometry.width(), self.geometry.height(), 1]
    }

    fn spacing(&self) -> [f64; 3] {
        let (su, sv) = self.geometry.spacing();
        [su, sv, 1.0]
    }

    fn classes(&self) -> &[u8] {
        &self.classes
    }
}

/// Which voxels count as foreground for a binary metric.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassSelector {
    /// A single structure, 1..=6.
    Class(u8),
    /// Union of all structures (classes 1..=6).
    Foreground,
}

impl ClassSelector {
    #[inline]
    pub fn matches(self, c: u8) -> bool {
        match self {
            ClassSelector::Class(k) => c == k,
            ClassSelector::Foreground => c != 0,
        }
    }

    /// The six structures followed by the pooled foreground.
    pub fn all() -> impl Iterator<Item = ClassSelector> {
        (1..NUM_CLASSES as u8)
            .map(ClassSelector::Class)
            .chain(std::iter::once(ClassSelector::Foreground))
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassSelector::Class(k) => crate::CLASS_NAMES.get(k as usize).copied().unwrap_or("?"),
            ClassSelector::Foreground => "Total",
        }
    }
}

/// Per-class scores, channel-major: `data[c * len + i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMap {
    pub channels: usize,
    pub len: usize,
    pub data: Vec<f64>,
}

impl ScoreMap {
    pub fn new(channels: usize, len: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || data.len() != channels * len {
            return Err(Error::validation(format!(
                "score map needs {channels} x {len} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("score map contains non-finite values"));
        }
        Ok(ScoreMap { channels, len, data })
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }
}

/// Binary channel per class.
pub fn one_hot(classes: &[u8], channels: usize) -> Result<ScoreMap> {
    if let Some(bad) = classes.iter().find(|&&c| c as usize >= channels) {
        return Err(Error::validation(format!(
            "class id {bad} does not fit in {channels} channels"
        )));
    }
    let len = classes.len();
    let mut data = vec![0.0; channels * len];
    for (i, &c) in classes.iter().enumerate() {
        data[c as usize * len + i] = 1.0;
    }
    ScoreMap::new(channels, len, data)
}

/// Highest-scoring channel per cell; ties go to the lowest channel index.
pub fn argmax_decode(scores: &ScoreMap) -> Vec<u8> {
    (0..scores.len)
        .map(|i| {
            let mut best = 0usize;
            for c in 1..scores.channels {
                if scores.data[c * scores.len + i] > scores.data[best * scores.len + i] {
                    best = c;
                }
            }
            best as u8
        })
        .collect()
}

fn check_same_shape(a: &impl LabelField, b: &impl LabelField) -> Result<()> {
    if a.dims() != b.dims() || a.classes().len() != b.classes().len() {
        return Err(Error::validation(format!(
            "label maps differ in shape ({:?} vs {:?})",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

fn binary(field: &impl LabelField, sel: ClassSelector) -> Vec<bool> {
    field.classes().iter().map(|&c| sel.matches(c)).collect()
}

/// Dice overlap of two binary masks: 1 when both are empty, 0 when exactly
/// one is.
pub fn dice_masks(pred: &[bool], gt: &[bool]) -> f64 {
    let (mut p, mut g, mut both) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.iter().zip(gt) {
        p += a as usize;
        g += b as usize;
        both += (a && b) as usize;
    }
    if p + g == 0 {
        1.0
    } else {
        2.0 * both as f64 / (p + g) as f64
    }
}

/// `2|P∩G| / (|P| + |G|)` for the selected class.
pub fn dice(pred: &impl LabelField, gt: &impl LabelField, sel: ClassSelector) -> Result<f64> {
    check_same_shape(pred, gt)?;
    Ok(dice_masks(&binary(pred, sel), &binary(gt, sel)))
}

/// Foreground cells with at least one face-adjacent background neighbour.
/// Cells beyond the lattice count as background, except along axes of
/// extent 1 (so a 2D mask is not all surface).
pub fn surface(mask: &[bool], dims: [usize; 3]) -> Vec<bool> {
    let [nx, ny, nz] = dims;
    let at = |i: usize, j: usize, k: usize| mask[i + nx * (j + ny * k)];
    let mut out = vec![false; mask.len()];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                if !at(i, j, k) {
                    continue;
                }
                let mut edge = false;
                if nx > 1 {
                    edge |= i == 0 || i == nx - 1 || !at(i - 1, j, k) || !at(i + 1, j, k);
                }
                if ny > 1 && !edge {
                    edge |= j == 0 || j == ny - 1 || !at(i, j - 1, k) || !at(i, j + 1, k);
                }
                if nz > 1 && !edge {
                    edge |= k == 0 || k == nz - 1 || !at(i, j, k - 1) || !at(i, j, k + 1);
                }
                out[i + nx * (j + ny * k)] = edge;
            }
        }
    }
    out
}

/// ASSD of two binary masks on the same lattice, in mm. `None` when either
/// surface is empty.
pub fn assd_masks(pred: &[bool], gt: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Option<f64> {
    let sp = surface(pred, dims);
    let sg = surface(gt, dims);
    let np = sp.iter().filter(|&&s| s).count();
    let ng = sg.iter().filter(|&&s| s).count();
    if np == 0 || ng == 0 {
        return None;
    }
    let to_gt = edt(dims, spacing, &sg);
    let to_pred = edt(dims, spacing, &sp);
    let mean_pg = sp.iter().zip(&to_gt).filter(|(s, _)| **s).map(|(_, d)| d).sum::<f64>() / np as f64;
    let mean_gp = sg.iter().zip(&to_pred).filter(|(s, _)| **s).map(|(_, d)| d).sum::<f64>() / ng as f64;
    Some(0.5 * (mean_pg + mean_gp))
}

/// Average symmetric surface distance for the selected class, using the
/// ground truth's spacing. `Ok(None)` is the undefined marker.
pub fn assd(pred: &impl LabelField, gt: &impl LabelField, sel: ClassSelector) -> Result<Option<f64>> {
    check_same_shape(pred, gt)?;
    Ok(assd_masks(&binary(pred, sel), &binary(gt, sel), gt.dims(), gt.spacing()))
}

/// Aggregated scores for one structure (or the pooled foreground).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Score {
    /// Mean Dice as a fraction; `None` when nothing was evaluated.
    pub dice: Option<f64>,
    /// Mean ASSD in mm over defined values.
    pub assd: Option<f64>,
    /// Items contributing to the Dice mean.
    pub dice_count: usize,
    /// Items contributing to the ASSD mean.
    pub assd_count: usize,
    /// Comparisons whose ASSD was undefined and therefore excluded.
    pub assd_excluded: usize,
}

/// Scores per structure (LA, LAA, LIPV, LSPV, RIPV, RSPV) plus the pooled
/// foreground total.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub structures: Vec<Score>,
    pub total: Score,
    pub items: usize,
}

impl EvaluationReport {
    pub fn empty() -> Self {
        EvaluationReport {
            structures: vec![Score::default(); NUM_CLASSES - 1],
            total: Score::default(),
            items: 0,
        }
    }

    pub fn score(&self, sel: ClassSelector) -> &Score {
        match sel {
            ClassSelector::Class(k) => &self.structures[k as usize - 1],
            ClassSelector::Foreground => &self.total,
        }
    }

    fn score_mut(&mut self, sel: ClassSelector) -> &mut Score {
        match sel {
            ClassSelector::Class(k) => &mut self.structures[k as usize - 1],
            ClassSelector::Foreground => &mut self.total,
        }
    }

    /// Mean Dice over the structures that have one.
    pub fn mean_structure_dice(&self) -> Option<f64> {
        let vals: Vec<f64> = self.structures.iter().filter_map(|s| s.dice).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

#[derive(Default)]
struct Mean {
    sum: f64,
    n: usize,
}

impl Mean {
    fn push(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    fn get(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

/// Scores prediction/ground-truth pairs. For each structure, pairs where
/// the structure is absent from both maps are skipped; the rest are
/// averaged with equal weight.
pub fn evaluate<L: LabelField>(pairs: &[(&L, &L)]) -> Result<EvaluationReport> {
    let mut report = EvaluationReport::empty();
    report.items = pairs.len();
    for sel in ClassSelector::all() {
        let (mut d, mut a, mut excluded) = (Mean::default(), Mean::default(), 0usize);
        for (pred, gt) in pairs {
            check_same_shape(*pred, *gt)?;
            let p = binary(*pred, sel);
            let g = binary(*gt, sel);
            if !p.iter().any(|&x| x) && !g.iter().any(|&x| x) {
                continue;
            }
            d.push(dice_masks(&p, &g));
            match assd_masks(&p, &g, gt.dims(), gt.spacing()) {
                Some(v) => a.push(v),
                None => excluded += 1,
            }
        }
        *report.score_mut(sel) = Score {
            dice: d.get(),
            assd: a.get(),
            dice_count: d.n,
            assd_count: a.n,
            assd_excluded: excluded,
        };
    }
    Ok(report)
}

/// Inter-rater reliability. Each item holds two or more annotations of the
/// same image. Per item and structure, Dice and ASSD are averaged over all
/// unordered rater pairs (undefined ASSD pairs are excluded and counted);
/// item means are then averaged with equal weight. Items where no rater
/// marked a structure are skipped for that structure.
pub fn irr<L: LabelField>(items: &[Vec<L>]) -> Result<EvaluationReport> {
    for (i, raters) in items.iter().enumerate() {
        if raters.len() < 2 {
            return Err(Error::validation(format!(
                "item {i} has {} annotation(s); inter-rater reliability needs at least 2",
                raters.len()
            )));
        }
        for r in &raters[1..] {
            check_same_shape(&raters[0], r)?;
        }
    }
    let mut report = EvaluationReport::empty();
    report.items = items.len();
    for sel in ClassSelector::all() {
        let (mut d_items, mut a_items, mut excluded) = (Mean::default(), Mean::default(), 0usize);
        for raters in items {
            let masks: Vec<Vec<bool>> = raters.iter().map(|r| binary(r, sel)).collect();
            if masks.iter().all(|m| !m.iter().any(|&x| x)) {
                continue;
            }
            let (dims, spacing) = (raters[0].dims(), raters[0].spacing());
            let (mut d, mut a) = (Mean::default(), Mean::default());
            for x in 0..masks.len() {
                for y in x + 1..masks.len() {
                    d.push(dice_masks(&masks[x], &masks[y]));
                    match assd_masks(&masks[x], &masks[y], dims, spacing) {
                        Some(v) => a.push(v),
                        None => excluded += 1,
                    }
                }
            }
            if let Some(v) = d.get() {
                d_items.push(v);
            }
            if let Some(v) = a.get() {
                a_items.push(v);
            }
        }
        *report.score_mut(sel) = Score {
            dice: d_items.get(),
            assd: a_items.get(),
            dice_count: d_items.n,
            assd_count: a_items.n,
            assd_excluded: excluded,
        };
    }
    Ok(report)
}
