use crate::args::{CyclicArgs, HexagonArgs, RandomArgs, SeparationArgs, VerifyArgs};
use crate::output::{curve, scatter, CliError, Output};
use nalgebra::DMatrix;
use serde::Serialize;
use xcforge::cyclic::{clustered_angles, make_cyclic_polygon, uniform_angles, xc_factorize_cyclic, CyclicConfig, CyclicError, CyclicReport};
use xcforge::demo::{hexagon_demo, HexagonReport};
use xcforge::factorization::verify_factorization;
use xcforge::io::{parse_angles, read_matrix_csv, read_text, Series};
use xcforge::random::{factorize_polytope, sample_polytope, PipelineConfig, PipelineError, PipelineReport};
use xcforge::rng::substream;
use xcforge::separation::{separation_row, SeparationRow};
use xcforge::slack::slack_matrix;
use xcforge::{NonnegFactorization, Polytope, VerifyReport};

/// Dense CSV dumps are skipped above this many entries.
const MAX_DENSE: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Failure,
}

#[derive(Debug, Serialize)]
pub struct Failure {
    pub kind: String,
    pub message: String,
}

#[derive(Serialize)]
struct Report<'a, A, R> {
    subcommand: &'static str,
    args: &'a A,
    status: Status,
    runs: Vec<R>,
    outputs: Vec<String>,
}

fn overall<R>(runs: &[R], ok: impl Fn(&R) -> bool) -> Status {
    if runs.iter().all(ok) {
        Status::Pass
    } else {
        Status::Failure
    }
}

fn finish<A: Serialize, R: Serialize>(out: &mut Output, name: &'static str, args: &A, status: Status, runs: Vec<R>) -> Result<Status, CliError> {
    let report = Report { subcommand: name, args, status, runs, outputs: out.files.clone() };
    out.json("report.json", &report)?;
    Ok(status)
}

fn dump_factorization(out: &mut Output, tag: &str, p: &Polytope, f: &NonnegFactorization) -> Result<bool, CliError> {
    if !out.csv {
        return Ok(false);
    }
    if p.n_vertices() * (f.r() + p.n_facets()) > MAX_DENSE {
        return Ok(true);
    }
    let (t, u) = f.to_dense();
    let m = slack_matrix(p).map_err(|e| CliError::Usage(e.to_string()))?.entries;
    out.matrix(&format!("{tag}T.csv"), &t)?;
    out.matrix(&format!("{tag}U.csv"), &u)?;
    out.matrix(&format!("{tag}M.csv"), &m)?;
    Ok(false)
}

#[derive(Serialize)]
struct RandomRun {
    n: usize,
    status: Status,
    failure: Option<Failure>,
    report: Option<PipelineReport>,
    csv_skipped: bool,
}

pub fn random(args: &RandomArgs, out: &mut Output) -> Result<Status, CliError> {
    let mut runs = Vec::new();
    for &n in &args.n {
        let cfg = PipelineConfig {
            dim: args.dim as usize,
            n,
            mode: args.mode,
            seed: args.seed,
            eps: args.eps,
            near_factor: args.near_factor,
            tol: args.tol,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let result = sample_polytope(&cfg).and_then(|p| factorize_polytope(&p, &cfg).map(|r| (p, r)));
        let run = match result {
            Ok((p, (fact, rep))) => {
                let csv_skipped = dump_factorization(out, &format!("n{n}-"), &p, &fact)?;
                println!("random n={n}: pass, r_total={} (r/√n = {:.2}), rel err {:.2e}", rep.r_total, rep.r_over_sqrt_n, rep.verify.rel_err);
                RandomRun { n, status: Status::Pass, failure: None, report: Some(rep), csv_skipped }
            }
            Err(e) => {
                println!("random n={n}: failure ({}): {e}", e.kind());
                RandomRun { n, status: Status::Failure, failure: Some(pipeline_failure(&e)), report: None, csv_skipped: false }
            }
        };
        runs.push(run);
    }
    let done: Vec<(usize, usize)> = runs.iter().filter_map(|r| r.report.as_ref().map(|p| (p.n_vertices, p.r_total))).collect();
    let mut series = vec![scatter("r_total", done.iter().copied())];
    if let Some(c) = done.iter().map(|&(n, r)| r as f64 / (n as f64).sqrt()).reduce(f64::max) {
        let max_root = done.iter().map(|&(n, _)| (n as f64).sqrt()).fold(0.0, f64::max);
        series.push(curve(&format!("{c:.1}·√n"), max_root, |x| c * x));
    }
    out.plot("random polytope: r_total vs √n", "√n (vertices)", "r_total", &series)?;
    let status = overall(&runs, |r| r.status == Status::Pass);
    finish(out, "random", args, status, runs)
}

fn pipeline_failure(e: &PipelineError) -> Failure {
    Failure { kind: e.kind().into(), message: e.to_string() }
}

fn cyclic_kind(e: &CyclicError) -> &'static str {
    match e {
        CyclicError::NotSorted(_) => "not_sorted",
        CyclicError::TooFew(_) => "too_few",
        CyclicError::NotCyclic(_) => "not_cyclic",
        CyclicError::ColorOverflow { .. } => "color_overflow",
        CyclicError::NotSeparated { .. } => "not_separated",
        CyclicError::PreconditionViolated { .. } => "precondition_violated",
        CyclicError::RescaleViolated { .. } => "rescale_violated",
        CyclicError::NegativeK { .. } => "negative_k",
        CyclicError::RankTargetMissed { .. } => "rank_target_missed",
        CyclicError::CirclePrecondition(_) => "circle_precondition",
        CyclicError::Verification { .. } => "verification",
    }
}

#[derive(Serialize)]
struct CyclicRun {
    n: usize,
    model: &'static str,
    status: Status,
    failure: Option<Failure>,
    report: Option<CyclicReport>,
    csv_skipped: bool,
}

pub fn cyclic(args: &CyclicArgs, out: &mut Output) -> Result<Status, CliError> {
    let mut inputs: Vec<(&'static str, Vec<f64>)> = Vec::new();
    if let Some(path) = &args.angles {
        let angles = parse_angles(&read_text(path)?)?;
        inputs.push(("file", angles));
    }
    for (model, sizes) in [("uniform", &args.uniform), ("clustered", &args.clustered)] {
        for &n in sizes.iter().flatten() {
            let mut rng = substream(args.seed, "angles", 0);
            let a = if model == "uniform" { uniform_angles(n, &mut rng) } else { clustered_angles(n, &mut rng) };
            inputs.push((model, a));
        }
    }
    let cfg = CyclicConfig { seed: args.seed, verify_tol: args.tol, ..CyclicConfig::default() };
    let mut runs = Vec::new();
    for (model, angles) in inputs {
        let n = angles.len();
        let p = make_cyclic_polygon(&angles).map_err(|e| CliError::Usage(format!("angles: {e}")))?;
        let run = match xc_factorize_cyclic(&p, &cfg) {
            Ok((fact, rep)) => {
                let csv_skipped = dump_factorization(out, &format!("{model}{n}-"), &p, &fact)?;
                println!("cyclic {model} n={n}: pass, r_total={} (24√n = {:.1}), rel err {:.2e}", rep.r_total, rep.bound_24, rep.verify.rel_err);
                CyclicRun { n, model, status: Status::Pass, failure: None, report: Some(rep), csv_skipped }
            }
            Err(e) => {
                println!("cyclic {model} n={n}: failure ({}): {e}", cyclic_kind(&e));
                let failure = Failure { kind: cyclic_kind(&e).into(), message: e.to_string() };
                CyclicRun { n, model, status: Status::Failure, failure: Some(failure), report: None, csv_skipped: false }
            }
        };
        runs.push(run);
    }
    let done: Vec<(usize, usize)> = runs.iter().filter_map(|r| r.report.as_ref().map(|p| (p.n, p.r_total))).collect();
    let max_root = runs.iter().map(|r| (r.n as f64).sqrt()).fold(0.0, f64::max);
    let series = vec![
        scatter("r_total", done),
        curve("24√n", max_root, |x| 24.0 * x),
        curve("22√n + 36", max_root, |x| 22.0 * x + 36.0),
        curve("n", max_root, |x| x * x),
    ];
    out.plot("cyclic polygon: r_total vs √n", "√n", "r_total", &series)?;
    let status = overall(&runs, |r| r.status == Status::Pass);
    finish(out, "cyclic", args, status, runs)
}

pub fn separation(args: &SeparationArgs, out: &mut Output) -> Result<Status, CliError> {
    let mut rows: Vec<SeparationRow> = Vec::new();
    let mut failures = Vec::new();
    for &r in &args.r_list {
        match separation_row(r) {
            Ok(row) => rows.push(row),
            Err(e) => failures.push(Failure { kind: "separation".into(), message: format!("r={r}: {e}") }),
        }
    }
    let mut w = String::from("r,n,rank_exact,rank_by_elimination,rank_upper,support,nnr_lower,ratio_log2\n");
    println!("{:>5} {:>12} {:>14} {:>14} {:>10}", "r", "rank", "support", "nnr_lower", "ratio_log2");
    for row in &rows {
        let opt = |o: &Option<String>| o.clone().unwrap_or_default();
        w.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.r,
            row.n,
            row.rank_exact,
            row.rank_by_elimination.map(|x| x.to_string()).unwrap_or_default(),
            row.rank_upper,
            row.support,
            opt(&row.nnr_lower),
            row.ratio_log2.map(|x| format!("{x:?}")).unwrap_or_default()
        ));
        println!(
            "{:>5} {:>12} {:>14} {:>14} {:>10}",
            row.r,
            short(&row.rank_exact),
            short(&row.support),
            short(&opt(&row.nnr_lower)),
            row.ratio_log2.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into())
        );
    }
    out.write("table.csv", w.as_bytes())?;
    let pts: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.ratio_log2.map(|x| (r.r as f64, x / r.r as f64))).collect();
    let series = [Series { name: "log2(nnr_lower / rank) / r".into(), points: pts, line: false }];
    out.plot("separation matrix: bound ratio per r", "r", "log2(nnr_lower / rank) / r", &series)?;
    let status = if failures.is_empty() { Status::Pass } else { Status::Failure };
    #[derive(Serialize)]
    struct Tables {
        rows: Vec<SeparationRow>,
        failures: Vec<Failure>,
    }
    finish(out, "separation", args, status, vec![Tables { rows, failures }])
}

/// Decimal string shortened to its leading digits and length.
fn short(s: &str) -> String {
    if s.len() <= 12 {
        s.to_string()
    } else {
        format!("{}…e{}", &s[..4], s.len() - 1)
    }
}

#[derive(Serialize)]
struct VerifyRun {
    rows: usize,
    cols: usize,
    r: usize,
    report: VerifyReport,
}

pub fn verify(args: &VerifyArgs, out: &mut Output) -> Result<Status, CliError> {
    let m = read_matrix_csv(&args.matrix)?;
    let t = read_matrix_csv(&args.t)?;
    let u = read_matrix_csv(&args.u)?;
    if t.nrows() != m.nrows() || u.ncols() != m.ncols() || t.ncols() != u.nrows() {
        return Err(CliError::Usage(format!(
            "shape mismatch: M is {}×{}, T is {}×{}, U is {}×{}",
            m.nrows(),
            m.ncols(),
            t.nrows(),
            t.ncols(),
            u.nrows(),
            u.ncols()
        )));
    }
    if !(args.tol > 0.0) {
        return Err(CliError::Usage(format!("tolerance {} must be positive", args.tol)));
    }
    let f = NonnegFactorization::from_dense(&t, &u);
    let rep = verify_factorization(&m, &f, args.tol).map_err(|e| CliError::Usage(e.to_string()))?;
    println!(
        "verify: {} (max abs err {:.3e}, rel err {:.3e}, min entry {:.3e}, r = {})",
        if rep.pass { "pass" } else { "failure" },
        rep.max_abs_err,
        rep.rel_err,
        rep.min_entry,
        rep.r
    );
    out.plot("verified factorization", "√n (rows)", "r", &[scatter("r", [(m.nrows(), t.ncols())])])?;
    let status = if rep.pass { Status::Pass } else { Status::Failure };
    finish(out, "verify", args, status, vec![VerifyRun { rows: m.nrows(), cols: m.ncols(), r: t.ncols(), report: rep }])
}

pub fn hexagon(args: &HexagonArgs, out: &mut Output) -> Result<Status, CliError> {
    let result = hexagon_demo(args.seed);
    let (runs, status): (Vec<Result<HexagonReport, Failure>>, Status) = match result {
        Ok((_, rep)) => {
            let dense = |v: &Vec<Vec<f64>>| DMatrix::from_fn(v.len(), v.first().map_or(0, |r| r.len()), |i, j| v[i][j]);
            out.matrix("M.csv", &dense(&rep.slack))?;
            out.matrix("T.csv", &dense(&rep.t))?;
            out.matrix("U.csv", &dense(&rep.u))?;
            let ok = rep.verify.pass && rep.r == 5;
            println!("hexagon: r = {} (rank {}), max abs err {:.3e}: {}", rep.r, rep.rank, rep.verify.max_abs_err, if ok { "pass" } else { "failure" });
            (vec![Ok(rep)], if ok { Status::Pass } else { Status::Failure })
        }
        Err(e) => {
            println!("hexagon: failure: {e}");
            (vec![Err(Failure { kind: "rank_target_missed".into(), message: e.to_string() })], Status::Failure)
        }
    };
    let r = runs.iter().filter_map(|r| r.as_ref().ok()).map(|r| (6usize, r.r)).collect::<Vec<_>>();
    out.plot("regular hexagon: factors vs √n", "√n", "r", &[scatter("r", r), curve("n", 6f64.sqrt(), |x| x * x)])?;
    #[derive(Serialize)]
    #[serde(untagged)]
    enum Run {
        Ok(HexagonReport),
        Err { failure: Failure },
    }
    let runs: Vec<Run> = runs.into_iter().map(|r| r.map_or_else(|failure| Run::Err { failure }, Run::Ok)).collect();
    finish(out, "hexagon-demo", args, status, runs)
}
