//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line
//! to stderr (uncaptured) before asserting.

use serde_json::Value;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

const SEED: &str = "1";

struct Step {
    dir: &'static str,
    args: &'static [&'static str],
}

const STEPS: &[Step] = &[
    Step {
        dir: "c1",
        args: &["cv-sweep", "--ensembles", "gaussian", "--n", "300", "--rho", "0.1", "--k", "1..10", "--trials", "1000"],
    },
    Step {
        dir: "c2",
        args: &["rmse-sweep", "--k", "2", "--rho", "0.1,0.3", "--n", "300..1900:400", "--realizations", "200"],
    },
    Step {
        dir: "c3",
        args: &["moments", "--k-max", "10", "--p", "0.1,0.3,0.5,0.7,0.9"],
    },
    Step {
        dir: "c4",
        args: &[
            "cv", "--empirical", "--ensemble", "gaussian", "--m", "100", "--n", "2000", "--k", "10",
            "--supports", "10000", "--gamma-fit",
        ],
    },
    Step {
        dir: "c5",
        args: &[
            "noise-folding", "--ensemble", "row-orthogonal", "--m", "30", "--n", "300", "--sigma-s", "1",
            "--sigma-m", "0", "--draws", "100000",
        ],
    },
    Step {
        dir: "c6",
        args: &[
            "recover", "--ensemble", "gaussian", "--m", "9", "--n", "15", "--k", "3", "--model", "equal",
            "--sigma-s", "0", "--sigma-m", "1", "--normalize-columns", "--trials", "10000",
        ],
    },
    Step {
        dir: "c7",
        args: &[
            "cv", "--empirical", "--ensemble", "gaussian", "--m", "4", "--n", "12", "--k", "2", "--supports",
            "exhaustive",
        ],
    },
];

fn run_suite(root: &Path, threads: Option<&str>) -> PathBuf {
    let _ = std::fs::remove_dir_all(root);
    for step in STEPS {
        let start = Instant::now();
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_snrspread"));
        cmd.arg("--out").arg(root.join(step.dir)).args(["--seed", SEED]);
        if let Some(t) = threads {
            cmd.args(["--threads", t]);
        }
        let out = cmd.args(step.args).output().expect("binary runs");
        assert!(
            out.status.success(),
            "{:?} failed: {}",
            step.args,
            String::from_utf8_lossy(&out.stderr)
        );
        let _ = writeln!(
            std::io::stderr(),
            "  ran {} ({}) in {:.1}s",
            step.dir,
            step.args[0],
            start.elapsed().as_secs_f64()
        );
    }
    root.to_path_buf()
}

fn primary() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| run_suite(&Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance/a"), None))
}

fn verdict(id: u32, pass: bool, detail: String) {
    let _ = writeln!(
        std::io::stderr(),
        "criterion {id}: {} {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id}: {detail}");
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header: Vec<String> = lines.next().unwrap().split(',').map(String::from).collect();
    lines
        .map(|l| header.iter().cloned().zip(l.split(',').map(String::from)).collect())
        .collect()
}

fn read_matrix(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn num(row: &BTreeMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &t in &idx[i..=j] {
            r[t] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    r
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn criterion_1_gaussian_cv_level() {
    let rows = read_csv(&primary().join("c1/cv_table.csv"));
    let gaussian: Vec<_> = rows.iter().filter(|r| r["ensemble"] == "gaussian").collect();
    let worst = gaussian
        .iter()
        .map(|r| rel(num(r, "mean_cv_sqrt_m"), 1.414))
        .fold(0.0, f64::max);
    let ok = gaussian.len() == 30 && worst <= 0.05;
    verdict(
        1,
        ok,
        format!("{} cells, max |c_v·√M / 1.414 − 1| = {worst:.4} (tol 0.05)", gaussian.len()),
    );
}

#[test]
fn criterion_2_rmse_curves() {
    let rows = read_csv(&primary().join("c2/rmse_table.csv"));
    let worst = rows.iter().map(|r| num(r, "rmse")).fold(0.0, f64::max);
    let mut curves: BTreeMap<(String, String), Vec<(f64, f64)>> = BTreeMap::new();
    for r in &rows {
        curves
            .entry((r["ensemble"].clone(), r["rho"].clone()))
            .or_default()
            .push((num(r, "N"), num(r, "rmse")));
    }
    let mut max_rho = f64::NEG_INFINITY;
    for pts in curves.values() {
        let (n, e): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
        max_rho = max_rho.max(spearman(&n, &e));
    }
    let at_300 = |ens: &str, rho: &str| {
        rows.iter()
            .find(|r| r["ensemble"] == ens && r["rho"] == rho && r["N"] == "300")
            .map(|r| num(r, "rmse"))
            .unwrap()
    };
    let rade_ok = ["0.1", "0.3"].iter().all(|rho| at_300("rademacher", rho) <= at_300("gaussian", rho));
    let ok = rows.len() == 30 && curves.len() == 6 && worst <= 0.08 && max_rho < 0.0 && rade_ok;
    verdict(
        2,
        ok,
        format!(
            "max RMSE {worst:.4} (tol 0.08), largest Spearman(N, RMSE) {max_rho:.3} (< 0), Rademacher ≤ Gaussian at N=300: {rade_ok}"
        ),
    );
}

#[test]
fn criterion_3_moment_formulas() {
    let rows = read_csv(&primary().join("c3/moments.csv"));
    let worst = rows.iter().map(|r| num(r, "max_rel_err")).fold(0.0, f64::max);
    let bern = rows.iter().filter(|r| r["ensemble"] == "bernoulli").count();
    let ok = bern == 50 && rows.len() == 60 && worst <= 1e-12;
    verdict(3, ok, format!("{} cells, max relative difference {worst:.3e} (tol 1e-12)", rows.len()));
}

#[test]
fn criterion_4_conditional_gamma_law() {
    let report = read_json(&primary().join("c4/cv.json"));
    let fit = &report["gamma_fit"];
    let ks = fit["ks_distance"].as_f64().unwrap();
    let me = fit["mean_rel_err"].as_f64().unwrap();
    let ve = fit["var_rel_err"].as_f64().unwrap();
    let n = fit["n_samples"].as_u64().unwrap();
    let ok = n == 10_000 && ks <= 0.03 && me <= 0.03 && ve <= 0.03;
    verdict(
        4,
        ok,
        format!("{n} supports, CDF distance {ks:.4} (tol 0.03), mean err {me:.4}, variance err {ve:.4} (tol 0.03)"),
    );
}

#[test]
fn criterion_5_noise_folding() {
    let dir = primary().join("c5");
    let report = read_json(&dir.join("noise_folding.json"));
    let cov = read_matrix(&dir.join("noise_covariance.csv"));
    let level = 300.0 / 30.0;
    let diag_worst = (0..cov.len()).map(|i| rel(cov[i][i], level)).fold(0.0, f64::max);
    let z = report["offdiag_z"].as_f64().unwrap();
    let ok = cov.len() == 30 && diag_worst <= 0.03 && z.abs() <= 3.0 && report["diag_ok"] == true;
    verdict(
        5,
        ok,
        format!("diagonal max rel. error {diag_worst:.4} vs N/M = 10 (tol 0.03), off-diagonal mean z = {z:.2} (|z| ≤ 3)"),
    );
}

fn sym3_eigenvalues(g: [[f64; 3]; 3]) -> [f64; 3] {
    let p1 = g[0][1].powi(2) + g[0][2].powi(2) + g[1][2].powi(2);
    let q = (g[0][0] + g[1][1] + g[2][2]) / 3.0;
    if p1 == 0.0 {
        return [g[0][0], g[1][1], g[2][2]];
    }
    let p2 = (g[0][0] - q).powi(2) + (g[1][1] - q).powi(2) + (g[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let b = |i: usize, j: usize| (g[i][j] - if i == j { q } else { 0.0 }) / p;
    let det = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1)) - b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0))
        + b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
    let phi = (det / 2.0).clamp(-1.0, 1.0).acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    [hi, 3.0 * q - hi - lo, lo]
}

#[test]
fn criterion_6_oracle_bracket() {
    let dir = primary().join("c6");
    let report = read_json(&dir.join("recover.json"));
    let a = read_matrix(&dir.join("recover_matrix.csv"));
    let (m, n) = (a.len(), a[0].len());
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let norm = (0..m).map(|i| a[i][j] * a[i][j]).sum::<f64>().sqrt();
            (0..m).map(|i| a[i][j] / norm).collect()
        })
        .collect();
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
    let mut delta: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let s = [i, j, k];
                let g = std::array::from_fn(|r| std::array::from_fn(|c| dot(&cols[s[r]], &cols[s[c]])));
                let ev = sym3_eigenvalues(g);
                delta = delta.max((ev[0] - 1.0).abs()).max((ev[2] - 1.0).abs());
            }
        }
    }
    let reported = report["delta"].as_f64().unwrap();
    let delta_ok = rel(reported, delta) < 1e-9;
    let ratio = report["ratio"].as_f64().unwrap();
    let slack = 0.01;
    let in_bracket = match report["bracket"].as_array() {
        Some(b) => {
            let (lo, hi) = (b[0].as_f64().unwrap(), b[1].as_f64().unwrap());
            ratio >= lo * (1.0 - slack) && ratio <= hi * (1.0 + slack)
        }
        None => false,
    };
    verdict(
        6,
        delta_ok && in_bracket,
        format!(
            "δ_3 = {reported:.5} (oracle {delta:.5}), η_R/η_O = {ratio:.5}, status {}; the bracket needs δ < 1",
            report["status"]
        ),
    );
}

#[test]
fn criterion_7_exhaustive_spread() {
    let dir = primary().join("c7");
    let a = read_matrix(&dir.join("cv_matrix.csv"));
    let (m, n, k) = (a.len(), a[0].len(), 2usize);
    let frob: f64 = a.iter().flatten().map(|v| v * v).sum();
    let sigma0_sq = frob / m as f64;
    let c = (1.0 / k as f64).sqrt();
    let mut expected = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let power: f64 = (0..m).map(|r| (c * a[r][i] + c * a[r][j]).powi(2)).sum();
            expected.push(power / (m as f64 * sigma0_sq));
        }
    }
    let got: Vec<f64> = std::fs::read_to_string(dir.join("cv_samples.dat"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    let value_err = got.iter().zip(&expected).map(|(g, e)| rel(*g, *e)).fold(0.0, f64::max);
    let cnt = expected.len() as f64;
    let mean = expected.iter().sum::<f64>() / cnt;
    let var = expected.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (cnt - 1.0);
    let stats = &read_json(&dir.join("cv.json"))["empirical"];
    let stat_err = [
        rel(stats["mean"].as_f64().unwrap(), mean),
        rel(stats["variance"].as_f64().unwrap(), var),
        rel(stats["cv"].as_f64().unwrap(), var.sqrt() / mean),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let ok = got.len() == 66 && expected.len() == 66 && value_err <= 1e-12 && stat_err <= 1e-12;
    verdict(
        7,
        ok,
        format!("{} supports, max value rel. diff {value_err:.2e}, max stats rel. diff {stat_err:.2e} (tol 1e-12)", got.len()),
    );
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn criterion_8_determinism() {
    let a = primary();
    let b = run_suite(&Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance/b"), Some("8"));
    let (fa, fb) = (files_under(a), files_under(&b));
    let mut mismatched = Vec::new();
    for rel_path in &fa {
        let (x, y) = (std::fs::read(a.join(rel_path)).unwrap(), std::fs::read(b.join(rel_path)).unwrap_or_default());
        let same = if rel_path.to_string_lossy().ends_with(".manifest.json") {
            let strip = |bytes: &[u8]| {
                let mut v: Value = serde_json::from_slice(bytes).unwrap_or(Value::Null);
                if let Some(o) = v.as_object_mut() {
                    o.remove("execution");
                }
                v
            };
            strip(&x) == strip(&y)
        } else {
            x == y
        };
        if !same {
            mismatched.push(rel_path.display().to_string());
        }
    }
    let ok = fa == fb && mismatched.is_empty() && fa.len() > 20;
    verdict(
        8,
        ok,
        format!("{} files compared across default and --threads 8 runs, mismatches: {mismatched:?}", fa.len()),
    );
}
