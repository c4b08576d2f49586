//! Multi-focus fusion with a learned analysis operator.
//!
//! For every grid cell the source patch with the largest analyzed ℓ1 norm
//! wins. The winner is denoised by cosparse coding and the local estimates
//! are overlap-added into `Î_F0`. A global pass then lowers
//!
//! ```text
//! E(I) = ‖I − Î_F0‖² + λ′ Σ_p ‖Ω P_p I‖₁
//! ```
//!
//! where `P_p` extracts, scales and centers patch `p`, so the stacked
//! global operator is only ever applied patch by patch.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imageio::ImageBuffer;
use crate::learn::{center_patch, cosparse_code, AdmmState, AnalysisOperator, TrainConfig};
use crate::linalg::{dot, norm1};
use crate::patch::PatchGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    /// Per-patch budget on the analyzed ℓ1 norm (scaled units); patches
    /// above it are counted in the diagnostics.
    pub epsilon: f64,
    pub lambda_local: f64,
    /// When > 0, each candidate is cosparse coded with this λ and the
    /// activity is taken on the code instead of the raw patch.
    pub selection_lambda: f64,
    /// λ′ of the global objective.
    pub lambda_global: f64,
    pub patch_size: usize,
    pub overlap: usize,
    pub global_rounds: usize,
    pub mu: f64,
    pub adaptive_mu: bool,
    pub relaxation: f64,
    pub max_admm_iters: usize,
    pub max_fos_iters: usize,
    pub admm_tol: f64,
    pub cosupport_tol: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            epsilon: 0.1,
            lambda_local: 0.05,
            selection_lambda: 0.05,
            lambda_global: 0.02,
            patch_size: 7,
            overlap: 1,
            global_rounds: 3,
            mu: 1.0,
            adaptive_mu: true,
            relaxation: 1.6,
            max_admm_iters: 1000,
            max_fos_iters: 5,
            admm_tol: 1e-6,
            cosupport_tol: 1e-3,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::invalid(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if !(self.lambda_local >= 0.0) || !(self.lambda_global >= 0.0) || !(self.selection_lambda >= 0.0) {
            return Err(Error::invalid("fusion lambdas must be >= 0"));
        }
        if self.patch_size == 0 || self.overlap >= self.patch_size {
            return Err(Error::invalid(format!(
                "need 0 <= overlap < patch_size, got n={} p={}",
                self.patch_size, self.overlap
            )));
        }
        self.coding(self.lambda_local).validate()
    }

    pub(crate) fn coding(&self, lambda: f64) -> TrainConfig {
        TrainConfig {
            lambda,
            mu: self.mu,
            adaptive_mu: self.adaptive_mu,
            relaxation: self.relaxation,
            max_admm_iters: self.max_admm_iters,
            max_fos_iters: self.max_fos_iters,
            admm_tol: self.admm_tol,
            cosupport_tol: self.cosupport_tol,
            ..TrainConfig::default()
        }
    }
}

/// Values laid out on the patch grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid<T> {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<T>,
}

impl<T> CellGrid<T> {
    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.cells[i * self.cols + j]
    }
}

impl CellGrid<usize> {
    /// `rows cols` header, then one line of integers per grid row.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.rows, self.cols);
        for r in self.cells.chunks(self.cols) {
            let line: Vec<String> = r.iter().map(usize::to_string).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }
}

impl CellGrid<Vec<f64>> {
    /// `rows cols` header, then one line per grid row holding every cell's
    /// K activities back to back.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.rows, self.cols);
        for r in self.cells.chunks(self.cols) {
            let line: Vec<String> = r
                .iter()
                .flat_map(|cell| cell.iter().map(|v| format!("{v:.10e}")))
                .collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FusionDiagnostics {
    pub patches: usize,
    /// Sum over patches of `½‖x − y‖² + λ‖Ωx‖₁` for the local solves.
    pub local_objective: f64,
    /// Sum over patches of `‖Ωx‖₁` for the local solves (scaled units).
    pub local_analyzed_l1: f64,
    /// Local solutions with `‖Ωx‖₁ > ε`.
    pub epsilon_violations: usize,
    /// Largest `|ω_jᵀx|` over rows zeroed by the split variable.
    pub max_cosupport_residual: f64,
    pub mean_admm_iterations: f64,
    pub global_objective_initial: f64,
    pub global_objective_final: f64,
    pub global_rounds_accepted: usize,
}

impl FusionDiagnostics {
    pub fn to_kv(&self) -> String {
        format!(
            "patches={}\nlocal_objective={:.10e}\nlocal_analyzed_l1={:.10e}\nepsilon_violations={}\n\
             max_cosupport_residual={:.6e}\nmean_admm_iterations={:.3}\nglobal_objective_initial={:.10e}\n\
             global_objective_final={:.10e}\nglobal_rounds_accepted={}\n",
            self.patches,
            self.local_objective,
            self.local_analyzed_l1,
            self.epsilon_violations,
            self.max_cosupport_residual,
            self.mean_admm_iterations,
            self.global_objective_initial,
            self.global_objective_final,
            self.global_rounds_accepted
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionResult {
    pub fused: ImageBuffer,
    /// Index of the winning source per grid cell.
    pub winner_map: CellGrid<usize>,
    /// The K activities per grid cell.
    pub activity: CellGrid<Vec<f64>>,
    pub diagnostics: FusionDiagnostics,
}

/// `‖Ω(p − mean(p))‖₁` for a raw patch.
pub fn activity(op: &AnalysisOperator, patch: &[f64]) -> Result<f64> {
    if patch.len() != op.m() {
        return Err(Error::invalid(format!(
            "patch has {} values, operator expects {}",
            patch.len(),
            op.m()
        )));
    }
    let mean = patch.iter().sum::<f64>() / patch.len() as f64;
    let centered: Vec<f64> = patch.iter().map(|v| v - mean).collect();
    Ok(op.analyzed_l1(&centered))
}

/// Winner index (largest activity, smallest index on ties) and all activities.
pub fn select_patch<P: AsRef<[f64]>>(
    op: &AnalysisOperator,
    candidates: &[P],
) -> Result<(usize, Vec<f64>)> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate patches"));
    }
    let acts = candidates
        .iter()
        .map(|c| activity(op, c.as_ref()))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (k, &a) in acts.iter().enumerate().skip(1) {
        if a > acts[best] {
            best = k;
        }
    }
    Ok((best, acts))
}

/// Like [`select_patch`], but every candidate is first cosparse coded
/// (scaled and centered) and the activity is `255·‖Ω x_k‖₁`. Returns the
/// codes as well.
pub fn select_denoised<P: AsRef<[f64]>>(
    op: &AnalysisOperator,
    candidates: &[P],
    coding: &TrainConfig,
) -> Result<(usize, Vec<f64>, Vec<AdmmState>)> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate patches"));
    }
    let mut acts = Vec::with_capacity(candidates.len());
    let mut codes = Vec::with_capacity(candidates.len());
    for c in candidates {
        let mut y = c.as_ref().to_vec();
        if y.len() != op.m() {
            return Err(Error::invalid(format!("patch has {} values, operator expects {}", y.len(), op.m())));
        }
        center_patch(&mut y);
        let st = cosparse_code(op, &y, coding)?;
        acts.push(255.0 * op.analyzed_l1(&st.x));
        codes.push(st);
    }
    let mut best = 0;
    for (k, &a) in acts.iter().enumerate().skip(1) {
        if a > acts[best] {
            best = k;
        }
    }
    Ok((best, acts, codes))
}

/// Pixel-wise mean of the inputs.
pub fn naive_average(images: &[ImageBuffer]) -> Result<ImageBuffer> {
    let first = images
        .first()
        .ok_or_else(|| Error::invalid("no input images"))?;
    for img in images {
        first.same_dims(img)?;
    }
    let k = images.len() as f64;
    let mut out = vec![0.0; first.pixels().len()];
    for img in images {
        for (o, p) in out.iter_mut().zip(img.pixels()) {
            *o += p;
        }
    }
    out.iter_mut().for_each(|o| *o /= k);
    ImageBuffer::new(first.width(), first.height(), out)
}

struct CellSolve {
    winner: usize,
    activities: Vec<f64>,
    estimate: Vec<f64>,
    objective: f64,
    analyzed_l1: f64,
    cosupport_residual: f64,
    iterations: usize,
}

fn check_inputs(op: &AnalysisOperator, images: &[ImageBuffer], cfg: &FusionConfig) -> Result<PatchGrid> {
    cfg.validate()?;
    let first = images
        .first()
        .ok_or_else(|| Error::invalid("fusion needs at least one image"))?;
    for img in &images[1..] {
        first.same_dims(img)?;
    }
    let n = cfg.patch_size;
    if op.m() != n * n {
        return Err(Error::invalid(format!(
            "operator has m={} but patch size {n} needs m={}",
            op.m(),
            n * n
        )));
    }
    PatchGrid::for_image(first, n, cfg.overlap)
}

/// Local stage: per-cell selection and cosparse denoising of the winner,
/// overlap-added into the initial estimate.
pub fn local_fuse(
    op: &AnalysisOperator,
    images: &[ImageBuffer],
    cfg: &FusionConfig,
) -> Result<(ImageBuffer, FusionResult)> {
    let grid = check_inputs(op, images, cfg)?;
    let coding = cfg.coding(cfg.lambda_local);
    let m = grid.patch_len();
    let cells: Vec<(usize, usize)> = (0..grid.grid_rows())
        .flat_map(|i| (0..grid.grid_cols()).map(move |j| (i, j)))
        .collect();

    let solved: Vec<Result<CellSolve>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let candidates: Vec<Vec<f64>> = images
                .iter()
                .map(|img| {
                    let mut buf = vec![0.0; m];
                    grid.read_patch(img, i, j, &mut buf);
                    buf
                })
                .collect();
            let (winner, activities, reused) = if cfg.selection_lambda > 0.0 {
                let (w, acts, mut codes) = select_denoised(op, &candidates, &cfg.coding(cfg.selection_lambda))?;
                let keep = (cfg.selection_lambda == cfg.lambda_local).then(|| codes.swap_remove(w));
                (w, acts, keep)
            } else {
                let (w, acts) = select_patch(op, &candidates)?;
                (w, acts, None)
            };
            let mut y = candidates[winner].clone();
            let mean = center_patch(&mut y);
            let st = match reused {
                Some(st) => st,
                None => cosparse_code(op, &y, &coding)?,
            };
            let objective = crate::learn::coding_objective(op, &st.x, &y, coding.lambda);
            let analyzed = op.analyze(&st.x);
            let cosupport_residual = st
                .v
                .iter()
                .zip(&analyzed)
                .filter(|(v, _)| **v == 0.0)
                .fold(0.0f64, |acc, (_, a)| acc.max(a.abs()));
            let estimate = st.x.iter().map(|x| (x + mean) * 255.0).collect();
            Ok(CellSolve {
                winner,
                activities,
                estimate,
                objective,
                analyzed_l1: norm1(&analyzed),
                cosupport_residual,
                iterations: st.iterations_used,
            })
        })
        .collect();

    let mut estimates = Vec::with_capacity(cells.len());
    let mut winners = Vec::with_capacity(cells.len());
    let mut acts = Vec::with_capacity(cells.len());
    let mut diag = FusionDiagnostics {
        patches: cells.len(),
        ..FusionDiagnostics::default()
    };
    let mut iters = 0usize;
    for s in solved {
        let s = s?;
        diag.local_objective += s.objective;
        diag.local_analyzed_l1 += s.analyzed_l1;
        diag.epsilon_violations += usize::from(s.analyzed_l1 > cfg.epsilon);
        diag.max_cosupport_residual = diag.max_cosupport_residual.max(s.cosupport_residual);
        iters += s.iterations;
        winners.push(s.winner);
        acts.push(s.activities);
        estimates.push(s.estimate);
    }
    diag.mean_admm_iterations = iters as f64 / cells.len() as f64;
    let initial = grid.overlap_add_slices(&estimates);
    let (rows, cols) = (grid.grid_rows(), grid.grid_cols());
    let result = FusionResult {
        fused: initial.clone(),
        winner_map: CellGrid {
            rows,
            cols,
            cells: winners,
        },
        activity: CellGrid {
            rows,
            cols,
            cells: acts,
        },
        diagnostics: diag,
    };
    Ok((initial, result))
}

/// `Σ_p ‖Ω P_p I‖₁` with patches scaled by 1/255 and centered.
pub fn patchwise_analyzed_l1(op: &AnalysisOperator, image: &ImageBuffer, grid: &PatchGrid) -> f64 {
    let m = grid.patch_len();
    let terms: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|c| {
            let mut buf = vec![0.0; m];
            grid.read_patch(image, c / grid.grid_cols(), c % grid.grid_cols(), &mut buf);
            center_patch(&mut buf);
            (0..op.h()).map(|j| dot(op.row(j), &buf).abs()).sum::<f64>()
        })
        .collect();
    terms.iter().sum()
}

/// `‖(I − I0)/255‖² + λ′ Σ_p ‖Ω P_p I‖₁`.
pub fn global_objective(
    op: &AnalysisOperator,
    image: &ImageBuffer,
    initial: &ImageBuffer,
    grid: &PatchGrid,
    lambda_global: f64,
) -> f64 {
    let data: f64 = image
        .pixels()
        .iter()
        .zip(initial.pixels())
        .map(|(a, b)| ((a - b) / 255.0).powi(2))
        .sum();
    data + lambda_global * patchwise_analyzed_l1(op, image, grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalReconstruction {
    pub image: ImageBuffer,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub rounds_accepted: usize,
}

/// Global stage. Each round codes every patch of the current estimate with
/// `λ = λ′`, overlap-adds the codes and solves the quadratic coupling to
/// `Î_F0` in closed form: with cover count `c`, the new pixel is
/// `(I0 + (c/2)·avg) / (1 + c/2)`. A round is kept only if it lowers `E`.
pub fn global_reconstruct(
    op: &AnalysisOperator,
    initial: &ImageBuffer,
    cfg: &FusionConfig,
) -> Result<GlobalReconstruction> {
    cfg.validate()?;
    let n = cfg.patch_size;
    if op.m() != n * n {
        return Err(Error::invalid(format!(
            "operator has m={} but patch size {n} needs m={}",
            op.m(),
            n * n
        )));
    }
    let grid = PatchGrid::for_image(initial, n, cfg.overlap)?;
    let lambda = cfg.lambda_global;
    let e0 = global_objective(op, initial, initial, &grid, lambda);
    if lambda == 0.0 || cfg.global_rounds == 0 {
        return Ok(GlobalReconstruction {
            image: initial.clone(),
            initial_objective: e0,
            final_objective: e0,
            rounds_accepted: 0,
        });
    }
    let coding = cfg.coding(lambda);
    let counts = grid.cover_counts();
    let m = grid.patch_len();

    let mut current = initial.clone();
    let mut e_current = e0;
    let mut accepted = 0;
    for _ in 0..cfg.global_rounds {
        let codes: Vec<Result<Vec<f64>>> = (0..grid.len())
            .into_par_iter()
            .map(|c| {
                let mut y = vec![0.0; m];
                grid.read_patch(&current, c / grid.grid_cols(), c % grid.grid_cols(), &mut y);
                let mean = center_patch(&mut y);
                let st = cosparse_code(op, &y, &coding)?;
                Ok(st.x.iter().map(|x| (x + mean) * 255.0).collect())
            })
            .collect();
        let codes = codes.into_iter().collect::<Result<Vec<_>>>()?;
        let avg = grid.overlap_add_slices(&codes);
        let blended: Vec<f64> = initial
            .pixels()
            .iter()
            .zip(avg.pixels())
            .zip(&counts)
            .map(|((&i0, &a), &c)| {
                let w = 0.5 * f64::from(c);
                (i0 + w * a) / (1.0 + w)
            })
            .collect();
        let candidate = ImageBuffer::new(initial.width(), initial.height(), blended)?;
        let e = global_objective(op, &candidate, initial, &grid, lambda);
        if e >= e_current {
            break;
        }
        current = candidate;
        e_current = e;
        accepted += 1;
    }
    Ok(GlobalReconstruction {
        image: current,
        initial_objective: e0,
        final_objective: e_current,
        rounds_accepted: accepted,
    })
}

/// Local stage, global stage, then a final clamp to [0, 255].
pub fn fuse(images: &[ImageBuffer], op: &AnalysisOperator, cfg: &FusionConfig) -> Result<FusionResult> {
    let (initial, mut result) = local_fuse(op, images, cfg)?;
    let global = global_reconstruct(op, &initial, cfg)?;
    result.diagnostics.global_objective_initial = global.initial_objective;
    result.diagnostics.global_objective_final = global.final_objective;
    result.diagnostics.global_rounds_accepted = global.rounds_accepted;
    result.fused = global.image.clamped();
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageio::{add_gaussian_noise, synthetic_scene};
    use crate::learn::init_operator;
    use crate::linalg::Matrix;

    fn small_cfg(n: usize) -> FusionConfig {
        FusionConfig {
            patch_size: n,
            overlap: 1,
            ..FusionConfig::default()
        }
    }

    #[test]
    fn activity_of_constant_patch_is_zero() {
        let op = init_operator(30, 25, 1).unwrap();
        assert_eq!(activity(&op, &[17.0; 25]).unwrap(), 0.0);
        assert!(activity(&op, &[1.0; 24]).is_err());
    }

    #[test]
    fn activity_matches_direct_loop() {
        let op = init_operator(30, 25, 2).unwrap();
        let p: Vec<f64> = (0..25).map(|i| ((i * 37) % 11) as f64).collect();
        let mean = p.iter().sum::<f64>() / 25.0;
        let mut expected = 0.0;
        for j in 0..30 {
            let mut s = 0.0;
            for k in 0..25 {
                s += op.matrix()[(j, k)] * (p[k] - mean);
            }
            expected += s.abs();
        }
        assert!((activity(&op, &p).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn activity_scales_with_magnitude() {
        let op = init_operator(30, 25, 3).unwrap();
        let p: Vec<f64> = (0..25).map(|i| (i as f64).sin()).collect();
        let a = activity(&op, &p).unwrap();
        let scaled: Vec<f64> = p.iter().map(|v| -2.5 * v).collect();
        assert!((activity(&op, &scaled).unwrap() - 2.5 * a).abs() < 1e-9);
    }

    #[test]
    fn selection_rules() {
        let op = init_operator(30, 25, 4).unwrap();
        let flat = vec![5.0; 25];
        let busy: Vec<f64> = (0..25).map(|i| if i % 2 == 0 { 0.0 } else { 9.0 }).collect();
        assert_eq!(select_patch(&op, &[flat.clone()]).unwrap().0, 0);
        let (k, acts) = select_patch(&op, &[flat.clone(), busy.clone()]).unwrap();
        assert_eq!(k, 1);
        assert_eq!(acts[0], 0.0);
        assert_eq!(select_patch(&op, &[busy.clone(), busy]).unwrap().0, 0);
        assert!(select_patch::<Vec<f64>>(&op, &[]).is_err());
    }

    #[test]
    fn denoised_selection_without_shrinkage_matches_raw() {
        let op = init_operator(30, 25, 4).unwrap();
        let a: Vec<f64> = (0..25).map(|i| ((i * 7) % 11) as f64 * 3.0).collect();
        let b: Vec<f64> = (0..25).map(|i| ((i * 3) % 5) as f64 * 10.0).collect();
        let coding = small_cfg(5).coding(0.0);
        let (k, acts, codes) = select_denoised(&op, &[a.clone(), b.clone()], &coding).unwrap();
        let (k_raw, raw) = select_patch(&op, &[a.clone(), b]).unwrap();
        assert_eq!(k, k_raw);
        assert_eq!(codes.len(), 2);
        for (x, y) in acts.iter().zip(&raw) {
            assert!((x - y).abs() < 1e-6 * y.max(1.0), "{x} vs {y}");
        }
        let (k, _, _) = select_denoised(&op, &[a.clone(), a], &coding).unwrap();
        assert_eq!(k, 0);
        assert!(select_denoised::<Vec<f64>>(&op, &[], &coding).is_err());
    }

    #[test]
    fn identical_clean_inputs_with_no_regularization_reproduce_the_image() {
        let op = init_operator(30, 25, 5).unwrap();
        let img = synthetic_scene(23, 19, 1);
        let cfg = FusionConfig {
            lambda_local: 0.0,
            lambda_global: 0.0,
            ..small_cfg(5)
        };
        let (initial, res) = local_fuse(&op, &[img.clone(), img.clone()], &cfg).unwrap();
        for (a, b) in initial.pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(res.winner_map.cells.iter().all(|&k| k == 0));
        let out = fuse(&[img.clone()], &op, &cfg).unwrap();
        for (a, b) in out.fused.pixels().iter().zip(img.pixels()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn input_validation() {
        let op = init_operator(30, 25, 6).unwrap();
        let a = ImageBuffer::filled(20, 20, 1.0);
        let b = ImageBuffer::filled(21, 20, 1.0);
        assert!(fuse(&[], &op, &small_cfg(5)).is_err());
        assert!(fuse(&[a.clone(), b], &op, &small_cfg(5)).is_err());
        assert!(fuse(&[a], &op, &small_cfg(6)).is_err());
    }

    #[test]
    fn global_zero_lambda_is_identity() {
        let op = init_operator(30, 25, 7).unwrap();
        let img = synthetic_scene(20, 20, 2);
        let cfg = FusionConfig {
            lambda_global: 0.0,
            ..small_cfg(5)
        };
        assert_eq!(global_reconstruct(&op, &img, &cfg).unwrap().image, img);
    }

    #[test]
    fn global_constant_image_stays_constant() {
        let op = init_operator(30, 25, 8).unwrap();
        let img = ImageBuffer::filled(20, 20, 77.0);
        let out = global_reconstruct(&op, &img, &small_cfg(5)).unwrap().image;
        assert!(out.pixels().iter().all(|p| (p - 77.0).abs() < 1e-9));
    }

    #[test]
    fn global_objective_never_increases() {
        let op = init_operator(30, 25, 9).unwrap();
        let img = add_gaussian_noise(&synthetic_scene(24, 24, 3), 10.0, 1).unwrap();
        let cfg = FusionConfig {
            lambda_global: 0.05,
            ..small_cfg(5)
        };
        let g = global_reconstruct(&op, &img, &cfg).unwrap();
        assert!(g.final_objective <= g.initial_objective + 1e-8);
        let grid = PatchGrid::for_image(&img, 5, 1).unwrap();
        let before = patchwise_analyzed_l1(&op, &img, &grid);
        let after = patchwise_analyzed_l1(&op, &g.image, &grid);
        assert!(after <= before);
    }

    #[test]
    fn naive_average_is_pixelwise_mean() {
        let a = ImageBuffer::filled(3, 2, 10.0);
        let b = ImageBuffer::filled(3, 2, 20.0);
        assert!(naive_average(&[a, b]).unwrap().pixels().iter().all(|&p| p == 15.0));
        assert!(naive_average(&[]).is_err());
    }

    #[test]
    fn grid_text_formats() {
        let g = CellGrid {
            rows: 2,
            cols: 2,
            cells: vec![0usize, 1, 1, 0],
        };
        assert_eq!(g.to_text(), "2 2\n0 1\n1 0\n");
        let a = CellGrid {
            rows: 1,
            cols: 2,
            cells: vec![vec![1.0, 2.0], vec![3.0, 4.0]],
        };
        let text = a.to_text();
        assert!(text.starts_with("1 2\n"));
        assert_eq!(text.lines().nth(1).unwrap().split_whitespace().count(), 4);
    }

    #[test]
    fn operator_size_must_match_patch() {
        let op = AnalysisOperator::new(Matrix::identity(16)).unwrap();
        let img = ImageBuffer::filled(10, 10, 0.0);
        assert!(global_reconstruct(&op, &img, &small_cfg(5)).is_err());
        assert!(global_reconstruct(&op, &img, &small_cfg(4)).is_ok());
    }
}
