//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any criterion fails.

use lpvred::analysis::{hinf_norm, spectral_abscissa};
use lpvred::bench::{build_msd, MsdConfig};
use lpvred::certify::certify_bound;
use lpvred::io::{model_from_json, ModelJson};
use lpvred::model::difference;
use lpvred::reduction::{balanced_truncate, modal_blocks, Parameterization, SynthesisObjective};
use lpvred::testing::{randn, random_quadratically_stable, random_stable};
use lpvred::{LpvModel64, LtiStateSpace64, ParameterBox, StructureMask};
use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn lpvred(args: &[&str], threads: Option<&str>) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_lpvred"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("LPVRED_THREADS", t),
        None => cmd.env_remove("LPVRED_THREADS"),
    };
    let out = cmd.output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "`lpvred {}` exited with {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).expect("output file")).expect("valid JSON")
}

fn num(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or(f64::NAN)
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().expect("temp dir");
        let root = dir.path().to_path_buf();
        Self { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

fn benchmark_integrity(ws: &Workspace) -> Check {
    let out = ws.path("g10.json");
    let t = Instant::now();
    lpvred(&["generate", "--n", "10", "--n-rho", "1", "--out", p(&out)], None)?;
    let elapsed = t.elapsed();
    let g: LpvModel64 = model_from_json(&std::fs::read_to_string(&out).unwrap()).map_err(|e| e.to_string())?;
    ensure(g.n_x() == 20, format!("order {}", g.n_x()))?;
    let mut worst = f64::NEG_INFINITY;
    for rho in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        worst = worst.max(spectral_abscissa(&g.freeze(&[rho]).unwrap().a).unwrap());
    }
    ensure(worst < 0.0, format!("spectral abscissa {worst}"))?;

    // hand expansion for two blocks: block 1 grounded by spring/damper 1,
    // blocks 1 and 2 coupled by spring/damper 2
    let cfg = MsdConfig::new(2, 1);
    let g2 = build_msd::<f64>(&cfg).map_err(|e| e.to_string())?;
    let mut err = 0.0f64;
    for rho in [-1.0, -0.3, 0.0, 0.7, 1.0] {
        let k = cfg.k0 + cfg.k_rho * rho;
        let (m, d) = (cfg.mass, cfg.damping);
        #[rustfmt::skip]
        let a = DMatrix::from_row_slice(4, 4, &[
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
            -2.0 * k / m, k / m, -2.0 * d / m, d / m,
            k / m, -k / m, d / m, -d / m,
        ]);
        let b = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 0.0, 1.0 / m]);
        let c = DMatrix::from_row_slice(1, 4, &[0.0, 1.0, 0.0, 0.0]);
        let s = g2.freeze(&[rho]).unwrap();
        for (x, y) in [(&s.a, &a), (&s.b, &b), (&s.c, &c)] {
            err = err.max((x - y).amax());
        }
        err = err.max(s.d.amax());
    }
    ensure(err <= 1e-12, format!("N=2 oracle mismatch {err:e}"))?;
    ensure(elapsed < Duration::from_secs(1), format!("generate took {elapsed:?}"))?;
    Ok(format!("order 20, max abscissa {worst:.4}, N=2 deviation {err:e}, generate {elapsed:.2?}"))
}

/// `sigma_max` of a matrix with at most two columns.
fn sigma_max(g: &DMatrix<Complex<f64>>) -> f64 {
    let h = g.adjoint() * g;
    if h.nrows() == 1 {
        return h[(0, 0)].re.sqrt();
    }
    let (a, c, b) = (h[(0, 0)].re, h[(1, 1)].re, h[(0, 1)]);
    ((a + c) / 2.0 + (((a - c) / 2.0).powi(2) + b.norm_sqr()).sqrt()).sqrt()
}

/// Dense sweep through the complex Schur form: `G = C Q (jw - T)^-1 Q^H B + D`.
fn sweep_max(sys: &LtiStateSpace64, points: usize) -> f64 {
    let n = sys.n_x();
    let ac = sys.a.map(|x| Complex::new(x, 0.0));
    let (q, t) = ac.schur().unpack();
    let bq = q.adjoint() * sys.b.map(|x| Complex::new(x, 0.0));
    let cq = sys.c.map(|x| Complex::new(x, 0.0)) * &q;
    let d = sys.d.map(|x| Complex::new(x, 0.0));
    let m = sys.n_u();
    let mut best = sigma_max(&d);
    let mut x = DMatrix::<Complex<f64>>::zeros(n, m);
    let mut eval = |w: f64| {
        let s = Complex::new(0.0, w);
        for col in 0..m {
            for i in (0..n).rev() {
                let mut acc = bq[(i, col)];
                for j in i + 1..n {
                    acc += t[(i, j)] * x[(j, col)];
                }
                x[(i, col)] = acc / (s - t[(i, i)]);
            }
        }
        sigma_max(&(&cq * &x + &d))
    };
    best = best.max(eval(0.0));
    for k in 0..points {
        let w = 10f64.powf(-4.0 + 8.0 * k as f64 / (points - 1) as f64);
        best = best.max(eval(w));
    }
    best
}

fn hinf_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.random_range(2..=10);
        let (n_u, n_y) = (rng.random_range(1..=2), rng.random_range(1..=2));
        let sys = random_stable(&mut rng, n, n_u, n_y);
        let h = hinf_norm(&sys, 1e-8).map_err(|e| e.to_string())?.gamma;
        let s = sweep_max(&sys, 100_000);
        worst = worst.max((h - s).abs() / s);
    }
    let elapsed = t.elapsed();
    ensure(worst <= 1e-4, format!("relative disagreement {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!("max relative disagreement {worst:e} over 100 systems, {elapsed:.1?}"))
}

fn gradient_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = Instant::now();
    let (mut worst, mut compared, mut skipped) = (0.0f64, 0usize, 0usize);
    let mut candidates = 0;
    while candidates < 50 {
        let n = rng.random_range(3..=6);
        let (n_u, n_y) = (rng.random_range(1..=2), rng.random_range(1..=2));
        let g = random_quadratically_stable(&mut rng, n, n_u, n_y, 1);
        let r = rng.random_range(1..=3);
        let mut k = random_quadratically_stable(&mut rng, r, n_u, n_y, 1);
        k.d = lpvred::AffineMatrix::new(randn(&mut rng, n_y, n_u) * 0.3, vec![randn(&mut rng, n_y, n_u) * 0.1]).unwrap();
        let mask = if rng.random_bool(0.5) {
            StructureMask::full(r, n_u, n_y, 1)
        } else {
            StructureMask::modal(r, n_u, n_y, 1)
        };
        let param = Parameterization::new(mask, k.clone()).unwrap();
        let theta = param.pack(&k).unwrap();
        let obj = SynthesisObjective::new(lpvred::model::generalized_plant(&g), param, g.params.grid(3), 1e-12, 1e-6)
            .map_err(|e| e.to_string())?;
        let e = obj.evaluate(&theta);
        if !e.is_stable() {
            continue;
        }
        candidates += 1;
        for (i, pt) in e.points.iter().enumerate() {
            let an = obj.subgradient(&theta, i, pt.omega).map_err(|e| e.to_string())?;
            if !an.smooth {
                skipped += 1;
                continue;
            }
            let fd = obj.fd_point_gradient(&theta, i, 1e-6);
            worst = worst.max((&an.grad - &fd).norm() / fd.norm().max(1e-12));
            compared += 1;
        }
    }
    let elapsed = t.elapsed();
    ensure(worst <= 1e-5, format!("relative gradient error {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!(
        "max relative error {worst:e} at {compared} points ({skipped} repeated-sigma points skipped), {elapsed:.1?}"
    ))
}

fn truncation_bound() -> Check {
    let t = Instant::now();
    let g = build_msd::<f64>(&MsdConfig::new(10, 1)).unwrap();
    let frozen = g.freeze(&[0.0]).unwrap();
    let (red, hsv) = balanced_truncate(&frozen, 4).map_err(|e| e.to_string())?;
    let none = ParameterBox::unit(0);
    let err = difference(&LpvModel64::from_lti(&frozen, none.clone()), &LpvModel64::from_lti(&red, none))
        .unwrap()
        .freeze(&[])
        .unwrap();
    let norm = hinf_norm(&err, 1e-9).map_err(|e| e.to_string())?.gamma;
    let bound = 2.0 * hsv.iter().skip(4).sum::<f64>();
    let elapsed = t.elapsed();
    ensure(norm <= bound + 1e-6, format!("{norm} > {bound}"))?;
    ensure(elapsed < Duration::from_secs(5), format!("took {elapsed:?}"))?;
    Ok(format!("||G - G_r|| = {norm:.6e} <= 2 sum sigma = {bound:.6e}, {elapsed:.2?}"))
}

fn certification_consistency() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t = Instant::now();
    let mut worst_lti = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(1..=6);
        let (n_u, n_y) = (rng.random_range(1..=2), rng.random_range(1..=2));
        let sys = random_stable(&mut rng, n, n_u, n_y);
        let exact = hinf_norm(&sys, 1e-10).map_err(|e| e.to_string())?.gamma;
        let cert = certify_bound(&LpvModel64::from_lti(&sys, ParameterBox::unit(0)), 1e-3, &[vec![]])
            .map_err(|e| e.to_string())?
            .certified_bound;
        let ok = cert >= exact * (1.0 - 1e-9) - 1e-6 && cert <= exact * (1.0 + 1e-3) + 1e-6;
        ensure(ok, format!("LTI certificate {cert} vs norm {exact}"))?;
        worst_lti = worst_lti.max((cert - exact) / exact);
    }
    let mut worst_gap = f64::INFINITY;
    for _ in 0..5 {
        let n = rng.random_range(1..=4);
        let n_rho = rng.random_range(1..=2);
        let m = random_quadratically_stable(&mut rng, n, 1, 1, n_rho);
        let c = certify_bound(&m, 1e-3, &m.params.vertices().unwrap()).map_err(|e| e.to_string())?;
        ensure(
            c.certified_bound >= c.grid_lower_bound,
            format!("LPV certificate {} below grid bound {}", c.certified_bound, c.grid_lower_bound),
        )?;
        worst_gap = worst_gap.min(c.certified_bound / c.grid_lower_bound);
    }
    let elapsed = t.elapsed();
    ensure(elapsed < Duration::from_secs(120), format!("took {elapsed:?}"))?;
    Ok(format!(
        "LTI max relative excess {worst_lti:e}; LPV min certified/grid ratio {worst_gap:.4}, {elapsed:.1?}"
    ))
}

struct Reductions {
    model: PathBuf,
    full: PathBuf,
    modal: PathBuf,
}

fn reduce_args<'a>(model: &'a Path, structure: &'a str, out: &'a Path) -> Vec<&'a str> {
    vec!["reduce", "--model", p(model), "--order", "4", "--structure", structure, "--seed", "42", "--certify", "--out-dir", p(out)]
}

fn reduction_tradeoff(ws: &Workspace, runs: &mut Option<Reductions>) -> Check {
    let model = ws.path("g10.json");
    let (full, modal) = (ws.path("full"), ws.path("modal"));
    let t = Instant::now();
    lpvred(&reduce_args(&model, "full", &full), Some("1"))?;
    lpvred(&reduce_args(&model, "modal", &modal), Some("1"))?;
    let elapsed = t.elapsed();
    *runs = Some(Reductions {
        model,
        full: full.clone(),
        modal: modal.clone(),
    });
    let f = read_json(&full.join("report.json"));
    let m = read_json(&modal.join("report.json"));
    let (fc, mc) = (num(&f, "certified_bound"), num(&m, "certified_bound"));
    let (fg, fb) = (num(&f, "grid_error"), num(&f, "baseline_grid_error"));
    let detail = format!(
        "full: grid {fg:.5e}, certified {fc:.5e}, baseline {fb:.5e}; modal: grid {:.5e}, certified {mc:.5e}; {elapsed:.0?}",
        num(&m, "grid_error")
    );
    ensure(fc < mc, format!("full certified not below modal ({detail})"))?;
    ensure(fg <= fb, format!("full grid error above baseline ({detail})"))?;
    ensure(fc <= 1.0, format!("full certified bound above 1 ({detail})"))?;
    ensure(elapsed < Duration::from_secs(600), format!("too slow ({detail})"))?;
    Ok(detail)
}

fn modal_exactness(runs: &Option<Reductions>) -> Check {
    let runs = runs.as_ref().ok_or("reduction runs unavailable")?;
    let report = read_json(&runs.modal.join("report.json"));
    let j: ModelJson = serde_json::from_value(report["model"].clone()).map_err(|e| e.to_string())?;
    let n = j.a.constant.len();
    let blocks = modal_blocks(n);
    let inside = |i: usize, k: usize| blocks.iter().any(|&(s, w)| i >= s && i < s + w && k >= s && k < s + w);
    let mut checked = 0;
    for term in std::iter::once(&j.a.constant).chain(j.a.coeffs.iter()) {
        for (i, row) in term.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                if !inside(i, k) {
                    ensure(v.to_bits() == 0, format!("A entry ({i}, {k}) = {v:e}"))?;
                    checked += 1;
                }
            }
        }
    }
    Ok(format!("{checked} off-block entries over {} terms are +0.0", j.a.coeffs.len() + 1))
}

fn lft_round_trip() -> Check {
    let g = build_msd::<f64>(&MsdConfig::new(2, 2)).unwrap();
    let lft = g.to_lft();
    let mut worst = 0.0f64;
    let grid = g.params.grid(5);
    for rho in &grid {
        let a = lft.eval(&lft.normalize(rho)).map_err(|e| e.to_string())?;
        let b = g.freeze(rho).unwrap();
        for (x, y) in [(&a.a, &b.a), (&a.b, &b.b), (&a.c, &b.c), (&a.d, &b.d)] {
            worst = worst.max((x - y).amax());
        }
    }
    ensure(grid.len() == 25, "grid size")?;
    ensure(worst <= 1e-12, format!("deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:e} over 25 points, q = {}", lft.q()))
}

fn closed_loop(ws: &Workspace, runs: &Option<Reductions>) -> Check {
    let runs = runs.as_ref().ok_or("reduction runs unavailable")?;
    let t = Instant::now();
    let mut reports = Vec::new();
    for (name, design) in [
        ("G", None),
        ("G_red", Some(runs.full.join("reduced_model.json"))),
        ("G_red_modal", Some(runs.modal.join("reduced_model.json"))),
    ] {
        let out = ws.path(&format!("cl_{name}"));
        let mut args = vec!["closedloop", "--full-model", p(&runs.model), "--seed", "42", "--out-dir", p(&out)];
        if let Some(d) = &design {
            args.extend(["--design-model", p(d)]);
        }
        lpvred(&args, Some("1"))?;
        reports.push((name, read_json(&out.join("report.json"))));
    }
    let elapsed = t.elapsed();
    let summary = reports
        .iter()
        .map(|(n, r)| {
            format!(
                "{n}: stable {}, sse {:.2e}, overshoot {:.4}, settling {:.2}",
                r["stable_on_grid"],
                num(r, "max_steady_state_error"),
                num(r, "max_overshoot"),
                num(r, "max_settling_time")
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    let detail = format!("{summary}; {elapsed:.0?}");
    for (n, r) in &reports[..2] {
        ensure(r["stable_on_grid"] == Value::Bool(true), format!("{n} design not stable on grid ({detail})"))?;
        ensure(num(r, "max_steady_state_error") <= 0.02, format!("{n} steady-state error ({detail})"))?;
    }
    let (red, modal) = (&reports[1].1, &reports[2].1);
    ensure(
        num(modal, "max_overshoot") >= num(red, "max_overshoot"),
        format!("modal design overshoot below G_red design ({detail})"),
    )?;
    ensure(
        num(modal, "max_settling_time") >= num(red, "max_settling_time"),
        format!("modal design settles faster than G_red design ({detail})"),
    )?;
    ensure(elapsed < Duration::from_secs(600), format!("too slow ({detail})"))?;
    Ok(detail)
}

fn determinism(ws: &Workspace, runs: &Option<Reductions>) -> Check {
    let runs = runs.as_ref().ok_or("reduction runs unavailable")?;
    let mut compared = Vec::new();
    for threads in ["2", "0"] {
        for (structure, reference) in [("full", &runs.full), ("modal", &runs.modal)] {
            let out = ws.path(&format!("{structure}_threads{threads}"));
            lpvred(&reduce_args(&runs.model, structure, &out), Some(threads))?;
            let a = std::fs::read(reference.join("report.json")).unwrap();
            let b = std::fs::read(out.join("report.json")).unwrap();
            ensure(a == b, format!("{structure} report differs with LPVRED_THREADS={threads}"))?;
            compared.push(format!("{structure}@{threads}"));
        }
    }
    Ok(format!("reports bit-identical to the single-thread runs: {}", compared.join(", ")))
}

fn main() {
    let ws = Workspace::new();
    let mut runs: Option<Reductions> = None;
    let mut failures = 0;
    let mut report = |id: usize, name: &str, f: &mut dyn FnMut() -> Check| {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {id:>2} {name:<28} {tag} [{:.1?}] {detail}", t.elapsed());
    };
    report(1, "benchmark integrity", &mut || benchmark_integrity(&ws));
    report(2, "H-infinity oracle", &mut hinf_oracle);
    report(3, "gradient correctness", &mut gradient_check);
    report(4, "truncation bound", &mut truncation_bound);
    report(5, "certification consistency", &mut certification_consistency);
    report(6, "reduction trade-off", &mut || reduction_tradeoff(&ws, &mut runs));
    report(7, "modal structure", &mut || modal_exactness(&runs));
    report(8, "LFT round trip", &mut lft_round_trip);
    report(9, "closed-loop ordering", &mut || closed_loop(&ws, &runs));
    report(10, "determinism", &mut || determinism(&ws, &runs));
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
