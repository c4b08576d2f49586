//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use cosfuse::cli::{self, default_training_scenes, noise_seed, run_sweep, RunConfig, SweepRow};
use cosfuse::fuse::{fuse, naive_average, FusionConfig};
use cosfuse::imageio::{add_gaussian_noise, read_pgm, synth_multifocus, synthetic_scene, write_pgm, ImageBuffer};
use cosfuse::learn::{
    coding_objective, cosparse_code, init_operator, row_objective, sample_training_patches, train, update_row,
    AnalysisOperator, TrainConfig,
};
use cosfuse::linalg::{axpy, dot, gram, normalize, soft_threshold, sym_eigen, Matrix};
use cosfuse::metrics::{psnr, q_abf, q_mi};
use cosfuse::patch::PatchGrid;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_operator(h: usize, m: usize, rng: &mut ChaCha8Rng) -> AnalysisOperator {
    let data: Vec<f64> = (0..h * m).map(|_| rng.sample(StandardNormal)).collect();
    AnalysisOperator::from_unnormalized(Matrix::new(h, m, data).unwrap()).unwrap()
}

fn gaussian_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
fn cholesky(a: &[f64], n: usize) -> Vec<f64> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = if i == j { s.sqrt() } else { s / l[j * n + j] };
        }
    }
    l
}

fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut z = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            z[i] -= l[i * n + k] * z[k];
        }
        z[i] /= l[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            z[i] -= l[k * n + i] * z[k];
        }
        z[i] /= l[i * n + i];
    }
    z
}

/// Plain ADMM with the x-subproblem solved exactly through a Cholesky
/// factor of I + μΩᵀΩ, run to a tight tolerance.
fn direct_admm(om: &Matrix, y: &[f64], lambda: f64) -> Vec<f64> {
    let (h, m) = (om.rows(), om.cols());
    let mu = 1.0;
    let mut a = vec![0.0; m * m];
    for r in 0..h {
        let row = om.row(r);
        for i in 0..m {
            for j in 0..m {
                a[i * m + j] += mu * row[i] * row[j];
            }
        }
    }
    for i in 0..m {
        a[i * m + i] += 1.0;
    }
    let l = cholesky(&a, m);
    let mut x = y.to_vec();
    let mut v = om.matvec(&x);
    let mut u = vec![0.0; h];
    for _ in 0..200_000 {
        let target: Vec<f64> = v.iter().zip(&u).map(|(vi, ui)| vi - ui).collect();
        let back = om.matvec_t(&target);
        let rhs: Vec<f64> = y.iter().zip(&back).map(|(yi, bi)| yi + mu * bi).collect();
        x = cholesky_solve(&l, m, &rhs);
        let ax = om.matvec(&x);
        let v_old = v.clone();
        v = ax
            .iter()
            .zip(&u)
            .map(|(a, ui)| {
                let z = a + ui;
                z.signum() * (z.abs() - lambda / mu).max(0.0)
            })
            .collect();
        let mut primal = 0.0;
        for i in 0..h {
            let r = ax[i] - v[i];
            u[i] += r;
            primal += r * r;
        }
        let dv: Vec<f64> = v.iter().zip(&v_old).map(|(a, b)| a - b).collect();
        let dual = mu * om.matvec_t(&dv).iter().map(|e| e * e).sum::<f64>().sqrt();
        if primal.sqrt() < 1e-12 && dual < 1e-12 {
            break;
        }
    }
    x
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let lambdas = [0.01, 0.1, 1.0];
    let cfg = TrainConfig::default();
    let mut worst = 0.0f64;
    for t in 0..50 {
        let op = random_operator(64, 49, &mut rng);
        let y = gaussian_vec(49, &mut rng);
        let lambda = lambdas[t % 3];
        let st = cosparse_code(&op, &y, &TrainConfig { lambda, ..cfg.clone() }).unwrap();
        let got = coding_objective(&op, &st.x, &y, lambda);
        let x_ref = direct_admm(op.matrix(), &y, lambda);
        let want = coding_objective(&op, &x_ref, &y, lambda);
        worst = worst.max((got - want).abs() / want.abs());
    }
    let el = start.elapsed();
    outcome(
        worst <= 1e-5 && el < Duration::from_secs(60),
        format!("worst relative objective gap {worst:.2e} (tol 1e-5), {:.1} s (limit 60 s)", el.as_secs_f64()),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let op = AnalysisOperator::new(Matrix::identity(49)).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let y: Vec<f64> = gaussian_vec(49, &mut rng);
        let lambda = rng.gen_range(0.01..1.0);
        let st = cosparse_code(&op, &y, &TrainConfig { lambda, ..TrainConfig::default() }).unwrap();
        let want = soft_threshold(&y, lambda).unwrap();
        for (a, b) in st.x.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst <= 1e-6, format!("worst l-inf gap {worst:.2e} over 20 trials (tol 1e-6)"))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let m = 49;
    let cfg = TrainConfig::default();
    let mut worst_excess = f64::NEG_INFINITY;
    for t in 0..20 {
        let op = init_operator(64, m, 900 + t).unwrap();
        let j = rng.gen_range(0..64);
        let omega = op.row(j).to_vec();
        let n = 200;
        let size = rng.gen_range(10..=150);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let chosen: Vec<usize> = {
            let mut c = idx[..size].to_vec();
            c.sort_unstable();
            c
        };
        let mut ys = Vec::with_capacity(n);
        let mut xs = Vec::with_capacity(n);
        for i in 0..n {
            let y = gaussian_vec(m, &mut rng);
            let mut x = y.clone();
            let r = dot(&omega, &x);
            if chosen.binary_search(&i).is_ok() {
                axpy(-r, &omega, &mut x);
            } else if r.abs() < 0.1 {
                axpy(0.5 - r, &omega, &mut x);
            }
            ys.push(y);
            xs.push(x);
        }
        let y = Matrix::from_columns(&ys).unwrap();
        let x = Matrix::from_columns(&xs).unwrap();
        let upd = update_row(&op, j, &y, &x, &cfg, &mut rng).unwrap();
        assert_eq!(upd.support, size);
        let best = row_objective(&upd.row, &y, &chosen);
        let s = gram(&y.select_columns(&chosen)).unwrap();
        let mut u = vec![0.0; m];
        let mut su = vec![0.0; m];
        let mut min_random = f64::INFINITY;
        for _ in 0..100_000 {
            for e in u.iter_mut() {
                *e = rng.sample(StandardNormal);
            }
            normalize(&mut u);
            s.matvec_into(&u, &mut su);
            min_random = min_random.min(dot(&u, &su));
        }
        worst_excess = worst_excess.max(best - min_random);
    }
    outcome(
        worst_excess <= 1e-10,
        format!("max(update objective - best of 1e5 random unit rows) = {worst_excess:.3e} over 20 J-sets (tol 1e-10)"),
    )
}

/// Signals exactly annihilated by `ell` random rows of a planted operator,
/// scaled to unit norm.
fn planted_signals(star: &AnalysisOperator, count: usize, ell: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let (h, m) = (star.h(), star.m());
    let mut cols = Vec::with_capacity(count);
    let mut idx: Vec<usize> = (0..h).collect();
    for _ in 0..count {
        idx.shuffle(rng);
        let rows = star.matrix().select_rows(&idx[..ell]);
        let eig = sym_eigen(&rows.transpose().matmul(&rows).unwrap()).unwrap();
        let mut y = vec![0.0; m];
        for k in 0..m - ell {
            axpy(rng.sample(StandardNormal), &eig.vector(k), &mut y);
        }
        normalize(&mut y);
        cols.push(y);
    }
    Matrix::from_columns(&cols).unwrap()
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let star = init_operator(64, 49, 4040).unwrap();
    let ell = 48;
    let y = planted_signals(&star, 500, ell, &mut rng);
    let exact = (0..500)
        .map(|i| {
            let col = y.column(i);
            (0..64).filter(|&j| dot(star.row(j), &col).abs() <= 1e-9).count()
        })
        .min()
        .unwrap();
    let cfg = TrainConfig {
        sweeps: 20,
        seed: 7,
        ..TrainConfig::default()
    };
    let (_, report) = train(&y, &cfg, 64).unwrap();
    let el = start.elapsed();
    let ratio = report.final_objective / report.initial_objective;
    let base = report.mean_cosparsity_per_sweep[0];
    let gain = report.final_mean_cosparsity - base;
    outcome(
        exact >= 20 && ratio < 0.25 && gain >= 5.0 && el < Duration::from_secs(600),
        format!(
            "planted cosparsity {exact}; objective {:.4e} -> {:.4e} (ratio {ratio:.4}, need < 0.25); \
             cosparsity {base:.2} -> {:.2} (gain {gain:.2}, need >= 5); {:.1} s (limit 600 s)",
            report.initial_objective,
            report.final_objective,
            report.final_mean_cosparsity,
            el.as_secs_f64()
        ),
    )
}

const SCENE_SEED: u64 = 7;
const SPLIT: usize = 64;

fn train_scene_operator(n: usize, h: usize) -> AnalysisOperator {
    let scenes = default_training_scenes(128, 0);
    let y = sample_training_patches(&scenes, n, 2000, 0).unwrap();
    let cfg = TrainConfig {
        sweeps: 10,
        ..TrainConfig::default()
    };
    train(&y, &cfg, h).unwrap().0
}

fn criterion_5(op: &AnalysisOperator) -> Outcome {
    let truth = synthetic_scene(128, 128, SCENE_SEED);
    let (i1, i2) = synth_multifocus(&truth, 2.0, SPLIT).unwrap();
    let cfg = FusionConfig::default();
    let result = fuse(&[i1.clone(), i2.clone()], op, &cfg).unwrap();
    let p_fused = psnr(&result.fused, &truth).unwrap();
    let p_in = psnr(&i1, &truth).unwrap().max(psnr(&i2, &truth).unwrap());
    let grid = PatchGrid::for_image(&truth, cfg.patch_size, cfg.overlap).unwrap();
    let n = cfg.patch_size;
    let (mut ok, mut total) = (0, 0);
    for i in 0..grid.grid_rows() {
        for j in 0..grid.grid_cols() {
            let (x0, _) = grid.origin(i, j);
            if x0 + n > SPLIT - n && x0 < SPLIT + n {
                continue;
            }
            let want = if x0 + n <= SPLIT { 0 } else { 1 };
            total += 1;
            ok += usize::from(*result.winner_map.get(i, j) == want);
        }
    }
    let acc = ok as f64 / total as f64;
    outcome(
        p_fused >= p_in + 1.0 && acc >= 0.9,
        format!(
            "PSNR fused {p_fused:.2} dB vs best input {p_in:.2} dB (need +1); winner map {ok}/{total} = {:.1}% (need 90%)",
            100.0 * acc
        ),
    )
}

fn criterion_6(op: &AnalysisOperator) -> Outcome {
    let truth = synthetic_scene(128, 128, SCENE_SEED);
    let (i1, i2) = synth_multifocus(&truth, 2.0, SPLIT).unwrap();
    let seed = 9;
    let noisy = vec![
        add_gaussian_noise(&i1, 15.0, noise_seed(seed, 0)).unwrap(),
        add_gaussian_noise(&i2, 15.0, noise_seed(seed, 1)).unwrap(),
    ];
    let fused = fuse(&noisy, op, &FusionConfig::default()).unwrap().fused;
    let p_fused = psnr(&fused, &truth).unwrap();
    let p_avg = psnr(&naive_average(&noisy).unwrap(), &truth).unwrap();
    outcome(
        p_fused >= p_avg + 1.0,
        format!("sigma=15: PSNR fused {p_fused:.2} dB vs naive average {p_avg:.2} dB (need +1)"),
    )
}

/// True when `v` never increases, except for at most one rise of <= tol.
fn non_increasing_with_slack(v: &[f64], tol: f64) -> bool {
    let rises: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect();
    rises.is_empty() || (rises.len() == 1 && rises[0] <= tol)
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut cfg = RunConfig::default();
    cfg.set("patches", "2000").unwrap();
    cfg.set("sweeps", "10").unwrap();
    let truth = synthetic_scene(128, 128, SCENE_SEED);
    let rows = run_sweep(&cfg, &default_training_scenes(128, 0), &truth).unwrap();
    let at7: Vec<&SweepRow> = rows.iter().filter(|r| r.n == 7).collect();
    let qmi: Vec<f64> = at7.iter().map(|r| r.q_mi).collect();
    let qabf: Vec<f64> = at7.iter().map(|r| r.q_abf).collect();
    let clean: Vec<&SweepRow> = rows.iter().filter(|r| r.sigma == 0.0).collect();
    let best = clean.iter().map(|r| r.q_abf).fold(f64::NEG_INFINITY, f64::max);
    let q7 = clean.iter().find(|r| r.n == 7).unwrap().q_abf;
    let pass = rows.len() == 25
        && non_increasing_with_slack(&qmi, 0.005)
        && non_increasing_with_slack(&qabf, 0.005)
        && best - q7 <= 0.01;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(",");
    let by_n: Vec<String> = clean.iter().map(|r| format!("n{}={:.4}", r.n, r.q_abf)).collect();
    outcome(
        pass,
        format!(
            "n=7 q_mi [{}], q_abf [{}]; sigma=0 q_abf {} (max - n7 = {:.4}, need <= 0.01); {:.0} s",
            fmt(&qmi),
            fmt(&qabf),
            by_n.join(" "),
            best - q7,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn random_triple_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> ImageBuffer {
    match rng.gen_range(0..4) {
        0 => ImageBuffer::from_fn(w, h, |_, _| rng.gen_range(0.0..=255.0)),
        1 => ImageBuffer::filled(w, h, rng.gen_range(0.0..=255.0)),
        2 => {
            let (a, b) = (rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
            ImageBuffer::from_fn(w, h, |x, y| (128.0 + a * x as f64 + b * y as f64).clamp(0.0, 255.0))
        }
        _ => ImageBuffer::from_fn(w, h, |_, _| if rng.gen_bool(0.5) { 0.0 } else { 255.0 }),
    }
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst_abf_id = 0.0f64;
    let mut worst_mi_id = 0.0f64;
    for _ in 0..50 {
        let a = ImageBuffer::from_fn(16, 16, |_, _| f64::from(rng.gen_range(0u8..=255)));
        worst_abf_id = worst_abf_id.max((q_abf(&a, &a, &a).unwrap() - 1.0).abs());
        worst_mi_id = worst_mi_id.max((q_mi(&a, &a, &a).unwrap() - 1.0).abs());
    }
    let mut out_of_range = 0;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..10_000 {
        let (w, h) = (rng.gen_range(3..=24), rng.gen_range(3..=24));
        let a = random_triple_image(w, h, &mut rng);
        let b = random_triple_image(w, h, &mut rng);
        let f = random_triple_image(w, h, &mut rng);
        for v in [q_mi(&a, &b, &f).unwrap(), q_abf(&a, &b, &f).unwrap()] {
            lo = lo.min(v);
            hi = hi.max(v);
            out_of_range += usize::from(!(0.0..=1.0).contains(&v) || !v.is_finite());
        }
    }
    outcome(
        worst_abf_id <= 1e-9 && worst_mi_id <= 1e-12 && out_of_range == 0,
        format!(
            "|q_abf(A,A,A)-1| <= {worst_abf_id:.1e}, |q_mi(A,A,A)-1| <= {worst_mi_id:.1e}; \
             1e4 triples in [{lo:.4}, {hi:.4}], {out_of_range} out of range"
        ),
    )
}

fn run_cli(args: &[&str]) -> i32 {
    let mut sink = Vec::new();
    cli::run_with(std::iter::once("cosfuse").chain(args.iter().copied()), &mut sink)
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let p = |name: &str| d.join(name).display().to_string();
    std::fs::create_dir_all(d.join("train")).unwrap();
    for s in 0..2u64 {
        let img = synthetic_scene(64, 64, 50 + s);
        std::fs::write(d.join("train").join(format!("s{s}.pgm")), write_pgm(&img)).unwrap();
    }
    assert_eq!(run_cli(&["synth", "--out-dir", &p("pair"), "--size", "64", "--seed", "3"]), 0);
    let mut codes = Vec::new();
    for (tag, threads) in [("a", "1"), ("b", "1"), ("c", "8")] {
        codes.push(run_cli(&[
            "train",
            "--images",
            &p("train"),
            "--out",
            &p(&format!("op_{tag}.txt")),
            "--patches",
            "400",
            "--sweeps",
            "3",
            "--seed",
            "5",
            "--threads",
            threads,
        ]));
        codes.push(run_cli(&[
            "fuse",
            &p("pair/i1.pgm"),
            &p("pair/i2.pgm"),
            "--op",
            &p("op_a.txt"),
            "--out",
            &p(&format!("f_{tag}.pgm")),
            "--sigma",
            "15",
            "--seed",
            "9",
            "--threads",
            threads,
        ]));
    }
    let read = |name: &str| std::fs::read(d.join(name)).unwrap_or_default();
    let same = |stem: &str, ext: &str| {
        let a = read(&format!("{stem}_a.{ext}"));
        !a.is_empty() && a == read(&format!("{stem}_b.{ext}")) && a == read(&format!("{stem}_c.{ext}"))
    };
    let checks = [
        ("operator", same("op", "txt")),
        ("fused", same("f", "pgm")),
        ("winners", same("f", "winners.txt")),
        ("activity", same("f", "activity.txt")),
        ("diagnostics", same("f", "diag.txt")),
    ];
    let pass = codes.iter().all(|&c| c == 0) && checks.iter().all(|(_, ok)| *ok);
    let detail: Vec<String> = checks.iter().map(|(k, ok)| format!("{k}={}", if *ok { "same" } else { "DIFF" })).collect();
    outcome(
        pass,
        format!("exit codes {codes:?}; runs a/b (1 thread) and c (8 threads): {}", detail.join(" ")),
    )
}

fn criterion_10() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.gen_range(2..=9);
        let p = rng.gen_range(0..n);
        let w = rng.gen_range(n..=40);
        let h = rng.gen_range(n..=40);
        let img = ImageBuffer::from_fn(w, h, |_, _| rng.gen_range(-300.0..300.0));
        let grid = PatchGrid::for_image(&img, n, p).unwrap();
        let back = grid.overlap_add(&grid.extract(&img).unwrap()).unwrap();
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            worst = worst.max((a - b).abs());
        }
    }
    let mut pgm_ok = true;
    for _ in 0..50 {
        let (w, h) = (rng.gen_range(1..=40), rng.gen_range(1..=40));
        let img = ImageBuffer::from_fn(w, h, |_, _| f64::from(rng.gen_range(0u8..=255)));
        pgm_ok &= read_pgm(&write_pgm(&img)).unwrap() == img;
    }
    outcome(
        worst <= 1e-12 && pgm_ok,
        format!("patch round trip max error {worst:.1e} (tol 1e-12); PGM integer round trip exact: {pgm_ok}"),
    )
}

fn main() {
    // `cargo test` passes harness flags such as --nocapture; listing mode
    // must print nothing.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let names = [
        "solver-oracle equivalence",
        "prox identity",
        "row-update optimality",
        "planted-operator training",
        "fusion correctness",
        "noisy fusion",
        "metric trends",
        "metric unit tests",
        "determinism",
        "round trips",
    ];
    let started = Instant::now();
    let op = train_scene_operator(7, 64);
    eprintln!("(shared 64x49 operator trained in {:.1} s)", started.elapsed().as_secs_f64());
    let runs: Vec<Box<dyn Fn() -> Outcome>> = vec![
        Box::new(criterion_1),
        Box::new(criterion_2),
        Box::new(criterion_3),
        Box::new(criterion_4),
        Box::new(|| criterion_5(&op)),
        Box::new(|| criterion_6(&op)),
        Box::new(criterion_7),
        Box::new(criterion_8),
        Box::new(criterion_9),
        Box::new(criterion_10),
    ];
    let mut failed = Vec::new();
    for (k, (name, run)) in names.iter().zip(&runs).enumerate() {
        let t = Instant::now();
        let o = run();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {status} {name}: {} [{:.1} s]",
            k + 1,
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed.push(k + 1);
        }
    }
    println!(
        "acceptance: {} passed, {} failed, {:.0} s total",
        names.len() - failed.len(),
        failed.len(),
        started.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
