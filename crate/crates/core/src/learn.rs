//! Analysis operator learning.
//!
//! Training alternates two stages. With the operator fixed, every training
//! signal is cosparse-coded by ADMM on
//!
//! ```text
//! min_x  ½‖x − y‖² + λ‖Ωx‖₁      split as v = Ωx
//! ```
//!
//! where the x-update takes gradient steps of size `1/L` on its smooth
//! subproblem. With the codes fixed, each row `ω_j` is refit to the signals
//! it currently annihilates by taking the smallest eigenvector of their
//! Gram matrix.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imageio::ImageBuffer;
use crate::linalg::{
    axpy, dot, gram, norm1, norm2, normalize, soft_threshold_in_place, spectral_norm_sq, sym_eigen,
    Matrix,
};

/// Accepted deviation of a row norm from 1.
pub const ROW_NORM_TOL: f64 = 1e-10;

/// Header line marking an operator file.
const OPERATOR_HEADER: &str = "# analysis-operator";

/// An `h x m` analysis operator with unit-norm rows, `h >= m`.
///
/// `ΩᵀΩ` and `‖Ω‖₂²` are cached since every coding iteration needs them.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOperator {
    matrix: Matrix,
    normal: Matrix,
    spectral_norm_sq: f64,
}

impl AnalysisOperator {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if matrix.rows() < matrix.cols() || matrix.cols() == 0 {
            return Err(Error::invalid(format!(
                "analysis operator needs h >= m > 0, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        for j in 0..matrix.rows() {
            let n = norm2(matrix.row(j));
            if (n - 1.0).abs() > ROW_NORM_TOL {
                return Err(Error::invalid(format!("row {j} has norm {n}, expected 1")));
            }
        }
        Self::with_caches(matrix)
    }

    /// Normalizes every row, then validates.
    pub fn from_unnormalized(mut matrix: Matrix) -> Result<Self> {
        for j in 0..matrix.rows() {
            if normalize(matrix.row_mut(j)) == 0.0 {
                return Err(Error::invalid(format!("row {j} is zero")));
            }
        }
        AnalysisOperator::new(matrix)
    }

    fn with_caches(matrix: Matrix) -> Result<Self> {
        let normal = gram(&matrix.transpose())?;
        let spectral_norm_sq = spectral_norm_sq(&matrix)?;
        Ok(AnalysisOperator {
            matrix,
            normal,
            spectral_norm_sq,
        })
    }

    /// Number of rows `h`.
    pub fn h(&self) -> usize {
        self.matrix.rows()
    }

    /// Signal dimension `m`.
    pub fn m(&self) -> usize {
        self.matrix.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn row(&self, j: usize) -> &[f64] {
        self.matrix.row(j)
    }

    pub fn spectral_norm_sq(&self) -> f64 {
        self.spectral_norm_sq
    }

    /// `Ωx`.
    pub fn analyze(&self, x: &[f64]) -> Vec<f64> {
        self.matrix.matvec(x)
    }

    /// `‖Ωx‖₁`.
    pub fn analyzed_l1(&self, x: &[f64]) -> f64 {
        (0..self.h()).map(|j| dot(self.row(j), x).abs()).sum()
    }

    pub fn to_text(&self) -> String {
        format!(
            "{OPERATOR_HEADER} h={} m={}\n{}",
            self.h(),
            self.m(),
            self.matrix.to_text()
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let first = text.lines().next().unwrap_or("");
        let rest = first
            .strip_prefix(OPERATOR_HEADER)
            .ok_or_else(|| Error::format(0, "missing `# analysis-operator` header"))?;
        let mut h = None;
        let mut m = None;
        for tok in rest.split_whitespace() {
            if let Some(v) = tok.strip_prefix("h=") {
                h = v.parse::<usize>().ok();
            } else if let Some(v) = tok.strip_prefix("m=") {
                m = v.parse::<usize>().ok();
            }
        }
        let (h, m) = h
            .zip(m)
            .ok_or_else(|| Error::format(0, "operator header needs h=<rows> m=<cols>"))?;
        let matrix = Matrix::from_text(text)?;
        if matrix.rows() != h || matrix.cols() != m {
            return Err(Error::format(
                first.len(),
                format!(
                    "header declares {h}x{m} but matrix is {}x{}",
                    matrix.rows(),
                    matrix.cols()
                ),
            ));
        }
        AnalysisOperator::new(matrix)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Sparsity weight λ.
    pub lambda: f64,
    /// Augmented Lagrangian penalty μ (initial value when adaptive).
    pub mu: f64,
    /// Rebalance μ when one residual exceeds the other threefold.
    pub adaptive_mu: bool,
    /// Over-relaxation factor in (0, 2); 1 is plain ADMM.
    pub relaxation: f64,
    pub max_admm_iters: usize,
    /// Gradient steps per x-update.
    pub max_fos_iters: usize,
    /// Threshold on the primal and dual residuals, and on the x-update
    /// gradient norm.
    pub admm_tol: f64,
    /// `|ω_jᵀx| <= cosupport_tol` counts row `j` as annihilating `x`.
    pub cosupport_tol: f64,
    /// Target signal rank `r`; when set, the final pass reports how many
    /// coded signals have a co-support of rank `m - r`.
    pub rank_target: Option<usize>,
    pub sweeps: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.1,
            mu: 1.0,
            adaptive_mu: true,
            relaxation: 1.6,
            max_admm_iters: 1000,
            max_fos_iters: 5,
            admm_tol: 1e-6,
            cosupport_tol: 1e-3,
            rank_target: None,
            sweeps: 20,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.mu > 0.0) || !self.mu.is_finite() {
            return bad(format!("mu must be > 0, got {}", self.mu));
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return bad(format!("relaxation must be in (0, 2), got {}", self.relaxation));
        }
        if !(self.admm_tol > 0.0) {
            return bad(format!("admm_tol must be > 0, got {}", self.admm_tol));
        }
        if !(self.cosupport_tol > 0.0) {
            return bad(format!("cosupport_tol must be > 0, got {}", self.cosupport_tol));
        }
        if self.max_admm_iters == 0 || self.max_fos_iters == 0 {
            return bad("iteration limits must be >= 1".into());
        }
        if self.sweeps == 0 {
            return bad("sweeps must be >= 1".into());
        }
        Ok(())
    }
}

/// Final iterate of the cosparse-coding ADMM.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub d: Vec<f64>,
    /// `‖Ωx − v‖₂` at exit.
    pub primal_residual: f64,
    /// `μ‖Ωᵀ(v − v_prev)‖₂` at exit.
    pub dual_residual: f64,
    pub iterations_used: usize,
}

/// `½‖x − y‖² + λ‖Ωx‖₁`.
pub fn coding_objective(op: &AnalysisOperator, x: &[f64], y: &[f64], lambda: f64) -> f64 {
    let data: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * data + lambda * op.analyzed_l1(x)
}

/// Rows drawn from a standard normal, then normalized.
pub fn init_operator(h: usize, m: usize, seed: u64) -> Result<AnalysisOperator> {
    if h < m || m == 0 {
        return Err(Error::invalid(format!("operator needs h >= m > 0, got h={h} m={m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut matrix = Matrix::zeros(h, m);
    for j in 0..h {
        random_unit_row(&mut rng, matrix.row_mut(j));
    }
    AnalysisOperator::new(matrix)
}

fn random_unit_row(rng: &mut impl Rng, row: &mut [f64]) {
    loop {
        for v in row.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        if normalize(row) > 1e-8 {
            return;
        }
    }
}

/// Cosparse coding of one signal by ADMM.
pub fn cosparse_code(op: &AnalysisOperator, y: &[f64], cfg: &TrainConfig) -> Result<AdmmState> {
    if y.len() != op.m() {
        return Err(Error::invalid(format!(
            "signal has length {}, operator expects {}",
            y.len(),
            op.m()
        )));
    }
    let (h, m) = (op.h(), op.m());
    let lambda = cfg.lambda;
    let mut mu = cfg.mu;

    let mut x = y.to_vec();
    let mut v = op.analyze(&x);
    let mut d = vec![0.0; h];
    if lambda == 0.0 {
        return Ok(AdmmState {
            x,
            v,
            d,
            primal_residual: 0.0,
            dual_residual: 0.0,
            iterations_used: 0,
        });
    }

    let mut step = 1.0 / (1.0 + mu * op.spectral_norm_sq());
    let mut tau = lambda / mu;
    let mut target = vec![0.0; h];
    let mut rhs = vec![0.0; m];
    let mut grad = vec![0.0; m];
    let mut analyzed = vec![0.0; h];
    let mut v_prev = vec![0.0; h];
    let mut dv = vec![0.0; m];
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut iterations = 0;

    for t in 1..=cfg.max_admm_iters {
        iterations = t;
        // x-update: descend ½‖x − y‖² + (μ/2)‖Ωx − v − d‖²
        for (tg, (vi, di)) in target.iter_mut().zip(v.iter().zip(&d)) {
            *tg = vi + di;
        }
        op.matrix.matvec_t_into(&target, &mut rhs);
        for _ in 0..cfg.max_fos_iters {
            op.normal.matvec_into(&x, &mut grad);
            for k in 0..m {
                grad[k] = (x[k] - y[k]) + mu * (grad[k] - rhs[k]);
            }
            if norm2(&grad) <= cfg.admm_tol {
                break;
            }
            for (xk, gk) in x.iter_mut().zip(&grad) {
                *xk -= step * gk;
            }
        }

        // v-update: shrink Ωx − d, with Ωx over-relaxed against the old v
        op.matrix.matvec_into(&x, &mut analyzed);
        v_prev.copy_from_slice(&v);
        let alpha = cfg.relaxation;
        for ((vi, ai), di) in v.iter_mut().zip(&analyzed).zip(&d) {
            *vi = alpha * ai + (1.0 - alpha) * *vi - di;
        }
        soft_threshold_in_place(&mut v, tau);

        // multiplier update
        let mut p2 = 0.0;
        for (((di, ai), vi), vp) in d.iter_mut().zip(&analyzed).zip(&v).zip(&v_prev) {
            *di -= alpha * ai + (1.0 - alpha) * vp - vi;
            let r = ai - vi;
            p2 += r * r;
        }
        primal = p2.sqrt();
        for (pv, vi) in v_prev.iter_mut().zip(&v) {
            *pv = vi - *pv;
        }
        op.matrix.matvec_t_into(&v_prev, &mut dv);
        dual = mu * norm2(&dv);

        if !primal.is_finite() || !dual.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure {
                iteration: t,
                message: "non-finite iterate in cosparse coding".into(),
            });
        }
        if primal <= cfg.admm_tol && dual <= cfg.admm_tol {
            break;
        }
        if cfg.adaptive_mu {
            // residual balancing; d is the scaled multiplier, so it scales by 1/factor
            let factor = if primal > 3.0 * dual && mu < 1e4 * cfg.mu {
                2.0
            } else if dual > 3.0 * primal && mu > 1e-4 * cfg.mu {
                0.5
            } else {
                1.0
            };
            if factor != 1.0 {
                mu *= factor;
                d.iter_mut().for_each(|e| *e /= factor);
                step = 1.0 / (1.0 + mu * op.spectral_norm_sq());
                tau = lambda / mu;
            }
        }
    }

    Ok(AdmmState {
        x,
        v,
        d,
        primal_residual: primal,
        dual_residual: dual,
        iterations_used: iterations,
    })
}

/// Rows `j` with `|ω_jᵀx| <= eps`.
pub fn cosupport(op: &AnalysisOperator, x: &[f64], eps: f64) -> Vec<usize> {
    (0..op.h())
        .filter(|&j| dot(op.row(j), x).abs() <= eps)
        .collect()
}

/// Numerical rank of the rows of `Ω` listed in `set`: Gram eigenvalues above
/// `1e-10 * λ_max` are counted.
pub fn cosupport_rank(op: &AnalysisOperator, set: &[usize]) -> Result<usize> {
    if set.is_empty() {
        return Ok(0);
    }
    if let Some(&bad) = set.iter().find(|&&j| j >= op.h()) {
        return Err(Error::invalid(format!("row index {bad} out of range")));
    }
    let sub = op.matrix.select_rows(set);
    let g = if sub.rows() <= sub.cols() {
        gram(&sub)?
    } else {
        gram(&sub.transpose())?
    };
    let eig = sym_eigen(&g)?;
    let max = eig.values.last().copied().unwrap_or(0.0);
    if max <= 0.0 {
        return Ok(0);
    }
    Ok(eig.values.iter().filter(|&&v| v > 1e-10 * max).count())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RowUpdate {
    pub row: Vec<f64>,
    /// Number of coded signals the old row annihilated.
    pub support: usize,
    /// True when no signal was annihilated and the row was redrawn.
    pub reinitialized: bool,
}

/// Refits row `j` to the training signals it annihilates.
///
/// `y` and `x` are `m x N` (noisy signals and their codes, one per column).
/// When the smallest eigenvalue of `gram(Y_J)` is repeated, the minimizer
/// closest to the current row is returned.
pub fn update_row(
    op: &AnalysisOperator,
    j: usize,
    y: &Matrix,
    x: &Matrix,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<RowUpdate> {
    refit_row(op, j, y, x, cfg, false, rng)
}

/// As [`update_row`], with the row restricted to zero-mean vectors.
///
/// For mean-subtracted training signals the constant direction annihilates
/// every signal, so the unrestricted update would send every row to it.
pub fn update_row_zero_mean(
    op: &AnalysisOperator,
    j: usize,
    y: &Matrix,
    x: &Matrix,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<RowUpdate> {
    refit_row(op, j, y, x, cfg, true, rng)
}

fn is_zero_mean(v: &[f64]) -> bool {
    v.iter().sum::<f64>().abs() <= 1e-9 * (v.len() as f64).sqrt() * norm2(v).max(f64::MIN_POSITIVE)
}

fn remove_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|e| *e -= mean);
}

fn refit_row(
    op: &AnalysisOperator,
    j: usize,
    y: &Matrix,
    x: &Matrix,
    cfg: &TrainConfig,
    zero_mean: bool,
    rng: &mut impl Rng,
) -> Result<RowUpdate> {
    if j >= op.h() {
        return Err(Error::invalid(format!("row {j} out of range for h={}", op.h())));
    }
    if y.rows() != op.m() || x.rows() != op.m() || y.cols() != x.cols() {
        return Err(Error::invalid(format!(
            "training matrices must both be {}xN, got {}x{} and {}x{}",
            op.m(),
            y.rows(),
            y.cols(),
            x.rows(),
            x.cols()
        )));
    }
    let m = op.m();
    let responses = x.matvec_t(op.row(j));
    let support: Vec<usize> = responses
        .iter()
        .enumerate()
        .filter(|(_, r)| r.abs() <= cfg.cosupport_tol)
        .map(|(i, _)| i)
        .collect();
    if support.is_empty() {
        let mut row = vec![0.0; m];
        loop {
            random_unit_row(rng, &mut row);
            if zero_mean && m > 1 {
                remove_mean(&mut row);
            }
            if normalize(&mut row) > 1e-8 {
                break;
            }
        }
        return Ok(RowUpdate {
            row,
            support: 0,
            reinitialized: true,
        });
    }
    let mut s = gram(&y.select_columns(&support))?;
    let mut current = op.row(j).to_vec();
    if zero_mean && m > 1 {
        // push the constant direction to the top of the spectrum
        let shift = (0..m).map(|k| s[(k, k)]).sum::<f64>() + 1.0;
        let data = s.as_mut_slice();
        data.iter_mut().for_each(|e| *e += shift / m as f64);
        remove_mean(&mut current);
    }
    let eig = sym_eigen(&s)?;
    let scale = eig.values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let floor = eig.values[0] + 1e-9 * scale;
    let mut row = vec![0.0; m];
    for k in (0..m).take_while(|&k| eig.values[k] <= floor) {
        let v = eig.vector(k);
        axpy(dot(&v, &current), &v, &mut row);
    }
    if norm2(&row) <= 1e-8 {
        row = eig.vector(0);
    }
    normalize(&mut row);
    Ok(RowUpdate {
        row,
        support: support.len(),
        reinitialized: false,
    })
}

/// `Σ_{i∈J} (ωᵀy_i)²`.
pub fn row_objective(row: &[f64], y: &Matrix, columns: &[usize]) -> f64 {
    let r = y.select_columns(columns).matvec_t(row);
    dot(&r, &r)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Objective at the initial operator with `x_i = y_i`.
    pub initial_objective: f64,
    /// Total coding objective after each sweep's coding stage.
    pub objective_per_sweep: Vec<f64>,
    /// Mean co-support size of the coded signals, per sweep.
    pub mean_cosparsity_per_sweep: Vec<f64>,
    pub rows_updated_per_sweep: Vec<usize>,
    pub rows_reinitialized_per_sweep: Vec<usize>,
    /// Coding objective under the returned operator.
    pub final_objective: f64,
    pub final_mean_cosparsity: f64,
    /// Fraction of final codes whose co-support has rank `m - r`, when a
    /// rank target is configured.
    pub final_rank_match: Option<f64>,
    pub mean_admm_iterations: f64,
    /// Rows were kept zero-mean because every training signal is.
    pub zero_mean_rows: bool,
}

impl TrainReport {
    pub fn sweeps(&self) -> usize {
        self.objective_per_sweep.len()
    }

    /// `key=value` lines.
    pub fn to_kv(&self) -> String {
        let join_f = |v: &[f64]| v.iter().map(|x| format!("{x:.10e}")).collect::<Vec<_>>().join(",");
        let join_u = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        s.push_str(&format!("sweeps={}\n", self.sweeps()));
        s.push_str(&format!("initial_objective={:.10e}\n", self.initial_objective));
        s.push_str(&format!("objective_per_sweep={}\n", join_f(&self.objective_per_sweep)));
        s.push_str(&format!(
            "mean_cosparsity_per_sweep={}\n",
            join_f(&self.mean_cosparsity_per_sweep)
        ));
        s.push_str(&format!(
            "rows_updated_per_sweep={}\n",
            join_u(&self.rows_updated_per_sweep)
        ));
        s.push_str(&format!(
            "rows_reinitialized_per_sweep={}\n",
            join_u(&self.rows_reinitialized_per_sweep)
        ));
        s.push_str(&format!("final_objective={:.10e}\n", self.final_objective));
        s.push_str(&format!("final_mean_cosparsity={:.6}\n", self.final_mean_cosparsity));
        if let Some(r) = self.final_rank_match {
            s.push_str(&format!("final_rank_match={r:.6}\n"));
        }
        s.push_str(&format!("mean_admm_iterations={:.3}\n", self.mean_admm_iterations));
        s.push_str(&format!("zero_mean_rows={}\n", self.zero_mean_rows));
        s
    }
}

struct CodingPass {
    codes: Vec<Vec<f64>>,
    objective: f64,
    mean_cosparsity: f64,
    mean_iterations: f64,
}

fn coding_pass(op: &AnalysisOperator, signals: &[Vec<f64>], cfg: &TrainConfig) -> Result<CodingPass> {
    let results: Vec<Result<(Vec<f64>, f64, usize, usize)>> = signals
        .par_iter()
        .map(|y| {
            let st = cosparse_code(op, y, cfg)?;
            let f = coding_objective(op, &st.x, y, cfg.lambda);
            let c = cosupport(op, &st.x, cfg.cosupport_tol).len();
            Ok((st.x, f, c, st.iterations_used))
        })
        .collect();
    let n = signals.len() as f64;
    let mut codes = Vec::with_capacity(signals.len());
    let (mut objective, mut cos, mut iters) = (0.0, 0usize, 0usize);
    for r in results {
        let (x, f, c, it) = r?;
        codes.push(x);
        objective += f;
        cos += c;
        iters += it;
    }
    Ok(CodingPass {
        codes,
        objective,
        mean_cosparsity: cos as f64 / n,
        mean_iterations: iters as f64 / n,
    })
}

/// Learns an `h x m` operator from the columns of `y` (`m x N`, `N >= h`).
pub fn train(y: &Matrix, cfg: &TrainConfig, h: usize) -> Result<(AnalysisOperator, TrainReport)> {
    cfg.validate()?;
    let (m, n) = (y.rows(), y.cols());
    if n < h {
        return Err(Error::invalid(format!(
            "need at least h={h} training signals, got {n}"
        )));
    }
    let signals: Vec<Vec<f64>> = (0..n).map(|i| y.column(i)).collect();
    let zero_mean = m > 1 && signals.iter().all(|s| is_zero_mean(s));
    let mut op = init_operator(h, m, cfg.seed)?;
    if zero_mean {
        let mut mat = op.matrix.clone();
        for j in 0..h {
            remove_mean(mat.row_mut(j));
        }
        op = AnalysisOperator::from_unnormalized(mat)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9E37_79B9_7F4A_7C15);

    let mut report = TrainReport {
        initial_objective: signals.iter().map(|s| cfg.lambda * op.analyzed_l1(s)).sum(),
        zero_mean_rows: zero_mean,
        ..TrainReport::default()
    };
    let mut total_iters = 0.0;

    for _ in 0..cfg.sweeps {
        let pass = coding_pass(&op, &signals, cfg)?;
        report.objective_per_sweep.push(pass.objective);
        report.mean_cosparsity_per_sweep.push(pass.mean_cosparsity);
        total_iters += pass.mean_iterations;
        let codes = Matrix::from_columns(&pass.codes)?;

        let mut next = op.matrix.clone();
        let mut reinit = 0;
        for j in 0..h {
            let upd = refit_row(&op, j, y, &codes, cfg, zero_mean, &mut rng)?;
            reinit += usize::from(upd.reinitialized);
            let mut row = upd.row;
            normalize(&mut row);
            next.row_mut(j).copy_from_slice(&row);
        }
        op = AnalysisOperator::new(next)?;
        report.rows_updated_per_sweep.push(h);
        report.rows_reinitialized_per_sweep.push(reinit);
    }

    let last = coding_pass(&op, &signals, cfg)?;
    report.final_objective = last.objective;
    report.final_mean_cosparsity = last.mean_cosparsity;
    report.mean_admm_iterations = (total_iters + last.mean_iterations) / (cfg.sweeps + 1) as f64;
    if let Some(r) = cfg.rank_target {
        let want = m.saturating_sub(r);
        let matches = last
            .codes
            .par_iter()
            .map(|x| cosupport_rank(&op, &cosupport(&op, x, cfg.cosupport_tol)).map(|k| usize::from(k == want)))
            .collect::<Result<Vec<_>>>()?;
        report.final_rank_match = Some(matches.iter().sum::<usize>() as f64 / n as f64);
    }
    Ok((op, report))
}

/// Scales a raw pixel patch to [0, 1] and removes its mean. Returns the mean
/// (in the scaled units).
pub fn center_patch(patch: &mut [f64]) -> f64 {
    let n = patch.len() as f64;
    let mut mean = 0.0;
    for v in patch.iter_mut() {
        *v /= 255.0;
        mean += *v;
    }
    mean /= n;
    patch.iter_mut().for_each(|v| *v -= mean);
    mean
}

/// `count` random `n x n` windows drawn uniformly over images and positions,
/// each scaled by 1/255 and mean-subtracted; returned as an `n² x count`
/// matrix.
pub fn sample_training_patches(
    images: &[ImageBuffer],
    n: usize,
    count: usize,
    seed: u64,
) -> Result<Matrix> {
    if images.is_empty() {
        return Err(Error::invalid("no training images"));
    }
    if count == 0 {
        return Err(Error::invalid("patch count must be positive"));
    }
    if let Some(img) = images.iter().find(|i| i.width() < n || i.height() < n) {
        return Err(Error::invalid(format!(
            "training image {}x{} is smaller than the {n}x{n} patch",
            img.width(),
            img.height()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = n * n;
    let mut out = Matrix::zeros(m, count);
    let mut buf = vec![0.0; m];
    for c in 0..count {
        let img = &images[rng.gen_range(0..images.len())];
        let x0 = rng.gen_range(0..=img.width() - n);
        let y0 = rng.gen_range(0..=img.height() - n);
        for r in 0..n {
            buf[r * n..(r + 1) * n].copy_from_slice(&img.row(y0 + r)[x0..x0 + n]);
        }
        center_patch(&mut buf);
        out.set_column(c, &buf);
    }
    Ok(out)
}

/// Sum of `‖Ωx‖₁` over signals; handy in diagnostics.
pub fn total_analyzed_l1(op: &AnalysisOperator, signals: &[Vec<f64>]) -> f64 {
    signals.iter().map(|s| norm1(&op.analyze(s))).sum()
}
