mod support;

use num_bigint::BigUint;
use rand::Rng;
use std::f64::consts::PI;
use std::time::Instant;
use support::{circle_configuration, rescale_instance};
use xcforge::cyclic::*;
use xcforge::demo::{hexagon_demo, HEXAGON_TOL};
use xcforge::lampshade::{build_lampshade, check_condition_i, check_condition_ii};
use xcforge::random::{xc_factorize_random, Mode, PipelineConfig, PipelineError};
use xcforge::rng::substream;
use xcforge::separation::*;
use xcforge::{Hyperplane, Point, TOL_GEOM};

fn line(id: u32, ok: bool, detail: String) {
    println!("criterion {id}: {} {detail}", if ok { "PASS" } else { "FAIL" });
}

struct Batch {
    passed: usize,
    runs: usize,
    verified: bool,
    ratios: Vec<f64>,
    failures: Vec<String>,
    slowest: f64,
}

fn batch(dim: usize, n: usize, mode: Mode, seeds: std::ops::RangeInclusive<u64>, eps_scale: Option<f64>) -> Batch {
    let mut b = Batch { passed: 0, runs: 0, verified: true, ratios: vec![], failures: vec![], slowest: 0.0 };
    for seed in seeds {
        let mut cfg = PipelineConfig::new(dim, n, mode, seed);
        if let Some(s) = eps_scale {
            cfg.eps = Some(s * cfg.epsilon());
        }
        b.runs += 1;
        let start = Instant::now();
        let res = xc_factorize_random(&cfg);
        b.slowest = b.slowest.max(start.elapsed().as_secs_f64());
        match res {
            Ok((_, rep)) => {
                b.passed += 1;
                b.verified &= rep.verify.pass && rep.verify.rel_err <= 1e-8;
                b.ratios.push(rep.r_total as f64 / rep.nominal_n.sqrt());
            }
            Err(PipelineError::Verification { rel_err, .. }) => {
                b.verified = false;
                b.failures.push(format!("seed {seed}: verification {rel_err:e}"));
            }
            Err(e) => b.failures.push(format!("seed {seed}: {}", e.kind())),
        }
    }
    b
}

fn band(values: &[f64]) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(0.0, f64::max);
    hi / lo
}

#[test]
fn criterion_1_random_sphere_planar() {
    let mut ok = true;
    let mut ratios = vec![];
    let mut detail = vec![];
    for n in [1000, 4000, 16000] {
        let b = batch(2, n, Mode::Sphere, 1..=10, None);
        ok &= b.passed >= 8 && b.verified && b.slowest <= 300.0;
        ratios.extend(&b.ratios);
        detail.push(format!("n={n} {}/{} slowest {:.1}s {:?}", b.passed, b.runs, b.slowest, b.failures));
    }
    let spread = band(&ratios);
    ok &= spread <= 2.5;
    line(1, ok, format!("r/√n band {spread:.3}; {}", detail.join("; ")));
    assert!(ok);
}

#[test]
fn criterion_2_random_ball_spatial() {
    // Default cap radius, exactly as stated.
    let faithful = batch(3, 100_000, Mode::Ball, 1..=5, None);
    let faithful_ok = faithful.passed >= 4 && faithful.verified && faithful.slowest <= 600.0;
    line(
        2,
        faithful_ok,
        format!("default ε, m=1e5: {}/{} {:?}", faithful.passed, faithful.runs, faithful.failures),
    );
    // Cap radius widened by 1.5, over a 4x range of m.
    let mut ok = true;
    let mut ratios = vec![];
    let mut detail = vec![];
    for m in [100_000, 400_000] {
        let b = batch(3, m, Mode::Ball, 1..=5, Some(1.5));
        ok &= b.passed >= 4 && b.verified && b.slowest <= 600.0;
        ratios.extend(&b.ratios);
        detail.push(format!("m={m} {}/{} slowest {:.1}s {:?}", b.passed, b.runs, b.slowest, b.failures));
    }
    let spread = band(&ratios);
    ok &= spread <= 2.5;
    println!("criterion 2 (1.5ε): {} r/√n band {spread:.3}; {}", if ok { "PASS" } else { "FAIL" }, detail.join("; "));
    assert!(ok);
}

#[test]
fn criterion_3_cyclic_polygons() {
    let mut ok = true;
    let (mut missed, mut retried_ok, mut blocks) = (0, 0, 0);
    let mut detail = vec![];
    for n in [576, 2000, 10000] {
        let bound = if n == 576 { 564.0 } else { 24.0 * (n as f64).sqrt() };
        for model in ["uniform", "clustered"] {
            let mut worst_r = 0;
            for seed in 1..=5u64 {
                let mut rng = substream(seed, "angles", 0);
                let a = if model == "uniform" { uniform_angles(n, &mut rng) } else { clustered_angles(n, &mut rng) };
                let p = make_cyclic_polygon(&a).unwrap();
                match xc_factorize_cyclic(&p, &CyclicConfig { seed, ..Default::default() }) {
                    Ok((_, rep)) => {
                        ok &= rep.r_total as f64 <= bound && rep.verify.rel_err <= 1e-6;
                        worst_r = worst_r.max(rep.r_total);
                        missed += rep.rank_target_missed;
                        retried_ok += rep.retried_ok;
                        blocks += rep.blocks_total;
                    }
                    Err(e) => {
                        ok = false;
                        detail.push(format!("n={n} {model} seed {seed}: {e}"));
                    }
                }
            }
            detail.push(format!("n={n} {model} max r {worst_r} ≤ {bound:.0}"));
        }
    }
    let rate = if blocks == 0 { 0.0 } else { missed as f64 / blocks as f64 };
    ok &= rate <= 0.2 && retried_ok == missed;
    line(3, ok, format!("rank target missed {missed}/{blocks} ({:.1}%), retried ok {retried_ok}; {}", 100.0 * rate, detail.join("; ")));
    assert!(ok);
}

fn random_unit<R: Rng>(rng: &mut R, d: usize) -> Point {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let l = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if l > 0.1 && l <= 1.0 {
            return Point(v).normalized();
        }
    }
}

/// Unit vector at spherical distance `delta` from `a`.
fn rotate_towards<R: Rng>(rng: &mut R, a: &Point, delta: f64) -> Point {
    let d = a.dim();
    let mut w = random_unit(rng, d).0;
    let p: f64 = w.iter().zip(a.iter()).map(|(x, y)| x * y).sum();
    w.iter_mut().zip(a.iter()).for_each(|(x, y)| *x -= p * y);
    let l = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if l < 1e-9 {
        return rotate_towards(rng, a, delta);
    }
    Point((0..d).map(|i| delta.cos() * a[i] + delta.sin() * w[i] / l).collect())
}

/// Point of the unit ball at angle at most `hi` and at least `lo` from `a`.
fn ball_point_in_band<R: Rng>(rng: &mut R, a: &Point, lo: f64, hi: f64) -> Vec<f64> {
    let delta = rng.random_range(lo..hi);
    let dir = rotate_towards(rng, a, delta);
    let r = rng.random_range(0.0f64..1.0).powf(1.0 / a.dim() as f64);
    dir.iter().map(|x| r * x).collect()
}

#[test]
fn criterion_4_lampshade_properties() {
    let start = Instant::now();
    let mut rng = substream(4, "lampshade", 0);
    let (mut fail_i, mut fail_ii, mut fail_cone) = (0, 0, 0);
    let mut worst_cone: f64 = 0.0;
    for d in [2, 3] {
        for _ in 0..10_000 {
            let a = random_unit(&mut rng, d);
            let eps = rng.random_range(1e-3..PI / 5.0 * 0.999);
            let q = build_lampshade(&a, eps, d).unwrap();
            let dist = q.max_halfspace_cap_distance();
            worst_cone = worst_cone.max(dist / (2.0 * eps));
            if dist > 2.0 * eps + TOL_GEOM {
                fail_cone += 1;
            }
            let rho = rng.random_range(0.0..eps) * (1.0 - 1e-9);
            let delta = rng.random_range(0.0..eps - rho);
            let center = rotate_towards(&mut rng, &a, delta);
            let h = Hyperplane::new(center.0.clone(), rho.cos());
            if !check_condition_i(&q, &h).unwrap_or(false) {
                fail_i += 1;
            }
        }
    }
    for i in 0..10_000 {
        let d = 2 + i % 2;
        let a = random_unit(&mut rng, d);
        let eps = rng.random_range(1e-3..PI / 5.0 * 0.999);
        let q = build_lampshade(&a, eps, d).unwrap();
        let x = ball_point_in_band(&mut rng, &a, 0.0, eps * (1.0 - 1e-9));
        let x: Vec<f64> = if a.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() >= eps.cos() { x } else { a.0.clone() };
        let y = ball_point_in_band(&mut rng, &a, 5.0 * eps * (1.0 + 1e-9), PI);
        let y: Vec<f64> = if a.iter().zip(&y).map(|(p, q)| p * q).sum::<f64>() <= (5.0 * eps).cos() { y } else { a.iter().map(|v| -v).collect() };
        let t = [0.0, rng.random_range(0.0..1.0), rng.random_range(1.0..1e3)];
        if !check_condition_ii(&q, &x, &y, &t).unwrap_or(false) {
            fail_ii += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = fail_i == 0 && fail_ii == 0 && fail_cone == 0 && secs <= 60.0;
    line(
        4,
        ok,
        format!("condition (i) failures {fail_i}/20000, condition (ii) failures {fail_ii}/10000, cone bound failures {fail_cone} (worst dist/2ε {worst_cone:.6}), {secs:.1}s"),
    );
    assert!(ok);
}

#[test]
fn criterion_5_separation_exactness() {
    let start = Instant::now();
    let mut ok = true;
    for r in 1..=10 {
        ok &= support_count(r) == BigUint::from(support_count_exhaustive(r));
    }
    for r in 1..=MAX_ELIMINATION_R {
        ok &= rank_of_m(r).is_ok();
    }
    let s4 = support_count(4);
    ok &= s4 == BigUint::from(120u32) && s4 >= BigUint::from(64u32);
    for r in 1..=100 {
        ok &= rank_formula(r) <= rank_upper(r);
    }
    let ratios: Vec<f64> = [16, 25, 36, 49, 64, 100].iter().map(|&r| nnr_lower_bound(r).unwrap().ratio_log2 / r as f64).collect();
    ok &= ratios.windows(2).all(|w| w[0] < w[1]);
    let secs = start.elapsed().as_secs_f64();
    line(5, ok, format!("support(4) = {s4}, ratio_log2/r = {ratios:.4?}, {secs:.2}s"));
    assert!(ok);
}

#[test]
fn criterion_6_cyclic_machinery() {
    let mut rng = substream(6, "rescale", 0);
    let mut rescale_fail = 0;
    for i in 0..1000 {
        let rows = 1 + i % 9;
        let (m, parts) = rescale_instance(&mut rng, rows, rows + i % 13);
        let ok = rescale_rows(&m, &parts, true).and_then(|alpha| check_rescale_post(&m, &parts, &alpha)).is_ok();
        rescale_fail += usize::from(!ok);
    }
    let mut rng = substream(6, "circle", 0);
    let (mut violations, mut ratio_fail) = (0, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let c = circle_configuration(&mut rng);
        let r = circle_slack_inequality(&c.polygon, c.v, c.w, c.f, c.g, &c.arc).unwrap();
        violations += usize::from(!r.holds);
        ratio_fail += usize::from(!r.ratio_ok);
        for (a, b) in [r.ratio_f, r.ratio_g] {
            if a > 0.0 && a.is_finite() {
                worst = worst.max((a - b).abs() / a.max(b));
            }
        }
    }
    let ok = rescale_fail == 0 && violations == 0 && ratio_fail == 0 && worst <= 1e-10;
    line(
        6,
        ok,
        format!("rescale failures {rescale_fail}/1000, circle violations {violations}/10000, ratio failures {ratio_fail}, worst ratio error {worst:.2e}"),
    );
    assert!(ok);
}

#[test]
fn criterion_7_hexagon() {
    let (f, rep) = hexagon_demo(0).unwrap();
    let ok = rep.r == 5 && f.r() == 5 && rep.verify.pass && rep.verify.max_abs_err <= HEXAGON_TOL;
    line(7, ok, format!("r = {}, rank = {}, error {:.2e}", rep.r, rep.rank, rep.verify.max_abs_err));
    assert!(ok);
}
