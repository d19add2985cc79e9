//! Random polytopes (sphere and ball models) and their cap-by-cap nonnegative factorization.

use crate::caps::{assign_facets, cap_vertex_sets, color_caps, maximal_separated_set, CapSet, CapsError, MAX_EPS};
use crate::factorization::{verify_factorization, FactorBlock, FactorizationError, NonnegFactorization, Provenance, VerifyReport};
use crate::geometry::{dot, GeometryError, Point, Polytope, TOL_GEOM};
use crate::hull::convex_hull_indexed;
use crate::lampshade::{build_lampshade, lampshade_factorize, CapLabel, LampshadeError, RowSpec};
use crate::rng::substream;
use crate::slack::PolytopeSlack;
use crate::sphere::{angle, smaller_cap_of_hyperplane};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use thiserror::Error;

/// A cap holding more than this multiple of its expected vertex count is flagged.
pub const CAP_VERTEX_FLAG: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sphere,
    Ball,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sphere => "sphere",
            Mode::Ball => "ball",
        })
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "sphere" => Ok(Mode::Sphere),
            "ball" => Ok(Mode::Ball),
            _ => Err(format!("unknown mode `{s}` (expected sphere or ball)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub dim: usize,
    /// Sample size: points on the sphere, or points in the ball.
    pub n: usize,
    pub mode: Mode,
    pub seed: u64,
    /// Cap radius; `None` means `n^{-1/(2(d-1))}` with `n` the nominal vertex count.
    pub eps: Option<f64>,
    pub near_factor: f64,
    pub tol: f64,
}

impl PipelineConfig {
    pub fn new(dim: usize, n: usize, mode: Mode, seed: u64) -> Self {
        PipelineConfig { dim, n, mode, seed, eps: None, near_factor: 5.0, tol: 1e-8 }
    }

    /// Expected order of the vertex count: `n` on the sphere, `m^{(d-1)/(d+1)}` in the ball.
    pub fn nominal_n(&self) -> f64 {
        match self.mode {
            Mode::Sphere => self.n as f64,
            Mode::Ball => (self.n as f64).powf((self.dim as f64 - 1.0) / (self.dim as f64 + 1.0)),
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.eps.unwrap_or_else(|| self.nominal_n().powf(-1.0 / (2.0 * (self.dim as f64 - 1.0))))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |s: String| Err(PipelineError::BadConfig(s));
        if self.dim != 2 && self.dim != 3 {
            return bad(format!("dimension {} is not 2 or 3", self.dim));
        }
        if self.n < self.dim + 1 {
            return bad(format!("need at least {} points, got {}", self.dim + 1, self.n));
        }
        let eps = self.epsilon();
        if !(eps > 0.0 && eps < MAX_EPS) {
            return bad(format!("cap radius {eps} outside (0, π/5)"));
        }
        if !(self.near_factor >= 1.0 && self.near_factor.is_finite()) {
            return bad(format!("near factor {} must be at least 1", self.near_factor));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tolerance {} must be positive", self.tol));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Caps(CapsError),
    #[error("no cap of the cover encapsulates facet {facet} ({unfit} facets unfit)")]
    NoCapFits { facet: usize, unfit: usize },
    #[error("vertex {vertex} lies in the near caps of {first} and {second}, both of color {color}")]
    CapOverflow { color: usize, vertex: usize, first: usize, second: usize },
    #[error("K[{vertex}, {facet}] = {value:e} is negative (color {color}, cap {cap})")]
    NegativeK { color: usize, cap: usize, vertex: usize, facet: usize, value: f64 },
    #[error("lampshade of cap {cap} (color {color}): {source}")]
    Lampshade { color: usize, cap: usize, source: LampshadeError },
    #[error(transparent)]
    Factorization(#[from] FactorizationError),
    #[error("reconstruction check failed: relative error {rel_err:e}, min entry {min_entry:e}")]
    Verification { rel_err: f64, min_entry: f64 },
}

impl PipelineError {
    /// Short name of the breached hypothesis or failing stage.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::BadConfig(_) => "bad_config",
            PipelineError::Geometry(_) => "geometry",
            PipelineError::Caps(_) => "caps",
            PipelineError::NoCapFits { .. } => "no_cap_fits",
            PipelineError::CapOverflow { .. } => "cap_overflow",
            PipelineError::NegativeK { .. } => "negative_k",
            PipelineError::Lampshade { .. } => "lampshade",
            PipelineError::Factorization(_) => "factorization",
            PipelineError::Verification { .. } => "verification",
        }
    }
}

impl From<CapsError> for PipelineError {
    fn from(e: CapsError) -> Self {
        match e {
            CapsError::NoCapFits { facet, unfit } => PipelineError::NoCapFits { facet, unfit },
            e => PipelineError::Caps(e),
        }
    }
}

/// Hull of the sampled points, with the number of points drawn.
pub fn sample_polytope(cfg: &PipelineConfig) -> Result<Polytope, PipelineError> {
    cfg.validate()?;
    let d = cfg.dim;
    let mut rng = substream(cfg.seed, "sample", 0);
    let points: Vec<Point> = (0..cfg.n)
        .map(|_| {
            let dir = gaussian_unit(d, &mut rng);
            match cfg.mode {
                Mode::Sphere => dir,
                Mode::Ball => {
                    let r = rng.random::<f64>().powf(1.0 / d as f64);
                    Point(dir.0.iter().map(|x| x * r).collect())
                }
            }
        })
        .collect();
    Ok(convex_hull_indexed(&points, d)?.polytope)
}

fn gaussian_unit<R: Rng>(d: usize, rng: &mut R) -> Point {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = crate::geometry::norm(&v);
        if n > 1e-12 {
            return Point(v.iter().map(|x| x / n).collect());
        }
    }
}

/// Observed values of the two hypotheses the construction relies on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStats {
    /// Largest angular radius of the smaller cap cut off by a facet hyperplane.
    pub max_facet_cap_radius: f64,
    pub facet_radius_limit: f64,
    pub facet_hypothesis_holds: bool,
    /// Largest number of vertices in one near cap.
    pub max_cap_vertices: usize,
    /// Mean count for uniformly spread vertices.
    pub expected_cap_vertices: f64,
    pub cap_hypothesis_holds: bool,
    pub max_cap_vertices_over_sqrt_n: f64,
}

fn cap_fraction(dim: usize, radius: f64) -> f64 {
    let r = radius.min(PI);
    match dim {
        2 => r / PI,
        _ => (1.0 - r.cos()) / 2.0,
    }
}

/// Facet cap radii against `ε/2` and near-cap vertex counts against `2×` their mean.
pub fn empirical_checks(p: &Polytope, a: &CapSet, near_factor: f64) -> EmpiricalStats {
    stats_from_sets(p, a, near_factor, &cap_vertex_sets(p, a, near_factor))
}

fn stats_from_sets(p: &Polytope, a: &CapSet, near_factor: f64, near: &[Vec<usize>]) -> EmpiricalStats {
    let max_radius = p
        .facets
        .iter()
        .map(|f| smaller_cap_of_hyperplane(&f.plane).map(|c| c.radius).unwrap_or(PI))
        .fold(0.0, f64::max);
    let n = p.n_vertices();
    let max_v = near.iter().map(|s| s.len()).max().unwrap_or(0);
    let expected = n as f64 * cap_fraction(p.dim, near_factor * a.epsilon);
    let limit = 0.5 * a.epsilon;
    EmpiricalStats {
        max_facet_cap_radius: max_radius,
        facet_radius_limit: limit,
        facet_hypothesis_holds: max_radius <= limit,
        max_cap_vertices: max_v,
        expected_cap_vertices: expected,
        cap_hypothesis_holds: max_v as f64 <= CAP_VERTEX_FLAG * expected.max(1.0),
        max_cap_vertices_over_sqrt_n: max_v as f64 / (n as f64).sqrt(),
    }
}

/// Factor counts of one color class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorBreakdown {
    pub color: usize,
    pub caps: usize,
    pub facets: usize,
    /// `|V_c|`, vertices near some cap of the class.
    pub near_vertices: usize,
    /// Number of t-vectors, `max_a |V^a|`.
    pub labels: usize,
    pub far_factors: usize,
    pub k_factors: usize,
    pub t_factors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config: PipelineConfig,
    pub epsilon: f64,
    pub nominal_n: f64,
    pub n_vertices: usize,
    pub n_facets: usize,
    pub caps: usize,
    pub colors: usize,
    pub color_breakdown: Vec<ColorBreakdown>,
    pub stats: EmpiricalStats,
    /// Smallest entry of `K` before clamping.
    pub min_k_entry: f64,
    pub far_factors: usize,
    pub k_factors: usize,
    pub t_factors: usize,
    pub r_total: usize,
    pub r_over_sqrt_n: f64,
    /// `χ·(2|A|R + max_c N_c)` with `R` generators per lampshade.
    pub accounting_bound: usize,
    pub verify: VerifyReport,
}

/// Per-color labels: vertex sets of the caps sorted by distance to the center, ties by index.
pub fn label_near_vertices(p: &Polytope, a: &CapSet, near: &mut [Vec<usize>]) {
    for (c, set) in near.iter_mut().enumerate() {
        let ctr = &a.centers[c];
        let mut keyed: Vec<(f64, usize)> = set.iter().map(|&v| (angle(ctr, &p.vertices[v]), v)).collect();
        keyed.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        *set = keyed.into_iter().map(|(_, v)| v).collect();
    }
}

struct CapJob {
    color: usize,
    cap: usize,
}

struct CapOutput {
    far: NonnegFactorization,
    k: NonnegFactorization,
    min_k: f64,
}

struct ClassData {
    near_rows: Arc<Vec<usize>>,
    far_rows: Arc<Vec<usize>>,
    /// Position in its cap's labelling for each near vertex, indexed by vertex.
    label: Vec<usize>,
    /// Cap containing each near vertex, indexed by vertex.
    owner: Vec<usize>,
}

/// The t-vector block of one color, or an error if two same-color near caps overlap.
fn class_data(n: usize, color: usize, caps: &[usize], near: &[Vec<usize>]) -> Result<ClassData, PipelineError> {
    let mut label = vec![usize::MAX; n];
    let mut owner = vec![usize::MAX; n];
    for &a in caps {
        for (i, &v) in near[a].iter().enumerate() {
            if owner[v] != usize::MAX {
                return Err(PipelineError::CapOverflow { color, vertex: v, first: owner[v], second: a });
            }
            owner[v] = a;
            label[v] = i;
        }
    }
    let near_rows: Vec<usize> = (0..n).filter(|&v| owner[v] != usize::MAX).collect();
    let far_rows: Vec<usize> = (0..n).filter(|&v| owner[v] == usize::MAX).collect();
    Ok(ClassData { near_rows: Arc::new(near_rows), far_rows: Arc::new(far_rows), label, owner })
}

fn cap_factors(
    p: &Polytope,
    a: &CapSet,
    cfg: &PipelineConfig,
    job: &CapJob,
    cols: &[usize],
    near: &[Vec<usize>],
    data: &ClassData,
) -> Result<CapOutput, PipelineError> {
    let (color, cap) = (job.color, job.cap);
    let lamp_err = |source| PipelineError::Lampshade { color, cap, source };
    let label = CapLabel { color, center: cap, near: false };
    let mut out = CapOutput { far: NonnegFactorization::empty(p.n_vertices(), p.n_facets()), k: NonnegFactorization::empty(p.n_vertices(), p.n_facets()), min_k: 0.0 };
    if cols.is_empty() {
        return Ok(out);
    }
    if !data.far_rows.is_empty() {
        let q = build_lampshade(&a.centers[cap], a.epsilon, p.dim).map_err(lamp_err)?;
        let spec = vec![RowSpec::Plain; data.far_rows.len()];
        out.far = lampshade_factorize(p, data.far_rows.clone(), cols, &spec, &q, label).map_err(lamp_err)?;
    }
    let rows: Vec<usize> = data.near_rows.iter().copied().filter(|&v| data.owner[v] != cap).collect();
    if rows.is_empty() {
        return Ok(out);
    }
    let own = &near[cap];
    let mut spec = Vec::with_capacity(rows.len());
    for &v in &rows {
        let s = match own.get(data.label[v]) {
            Some(&x) => RowSpec::Subtract(x),
            None => RowSpec::Plain,
        };
        for &f in cols {
            let kv = match s {
                RowSpec::Subtract(x) => p.slack(v, f) - p.slack(x, f),
                RowSpec::Plain => p.slack(v, f),
            };
            out.min_k = out.min_k.min(kv);
            if kv < -TOL_GEOM {
                return Err(PipelineError::NegativeK { color, cap, vertex: v, facet: f, value: kv });
            }
        }
        spec.push(s);
    }
    let q = build_lampshade(&a.centers[cap], cfg.near_factor * a.epsilon, p.dim).map_err(lamp_err)?;
    out.k = lampshade_factorize(p, Arc::new(rows), cols, &spec, &q, CapLabel { near: true, ..label }).map_err(lamp_err)?;
    Ok(out)
}

/// Samples the polytope for `cfg` and factorizes its slack matrix.
pub fn xc_factorize_random(cfg: &PipelineConfig) -> Result<(NonnegFactorization, PipelineReport), PipelineError> {
    let p = sample_polytope(cfg)?;
    factorize_polytope(&p, cfg)
}

/// Cap-by-cap factorization of the slack matrix of `p`, whose vertices lie in the unit ball.
pub fn factorize_polytope(p: &Polytope, cfg: &PipelineConfig) -> Result<(NonnegFactorization, PipelineReport), PipelineError> {
    cfg.validate()?;
    if p.dim != cfg.dim {
        return Err(PipelineError::BadConfig(format!("polytope has dimension {}, config {}", p.dim, cfg.dim)));
    }
    let (nv, nf) = (p.n_vertices(), p.n_facets());
    let eps = cfg.epsilon();
    let caps = maximal_separated_set(eps, cfg.dim, &mut substream(cfg.seed, "caps", 0))?;
    let coloring = color_caps(&caps);
    let mut near = cap_vertex_sets(p, &caps, cfg.near_factor);
    label_near_vertices(p, &caps, &mut near);
    let stats = stats_from_sets(p, &caps, cfg.near_factor, &near);
    let owner = assign_facets(p, &caps)?;
    let mut cap_facets = vec![Vec::new(); caps.centers.len()];
    for (f, &a) in owner.iter().enumerate() {
        cap_facets[a].push(f);
    }
    let classes = coloring.classes();
    let data: Vec<ClassData> =
        classes.iter().enumerate().map(|(c, members)| class_data(nv, c, members, &near)).collect::<Result<_, _>>()?;
    let jobs: Vec<CapJob> = classes
        .iter()
        .enumerate()
        .flat_map(|(color, members)| members.iter().map(move |&cap| CapJob { color, cap }))
        .collect();
    let outputs = crate::par_map(&jobs, |job| {
        cap_factors(p, &caps, cfg, job, &cap_facets[job.cap], &near, &data[job.color])
    });
    let mut fact = NonnegFactorization::empty(nv, nf);
    let mut breakdown: Vec<ColorBreakdown> = classes
        .iter()
        .enumerate()
        .map(|(color, members)| ColorBreakdown {
            color,
            caps: members.len(),
            facets: members.iter().map(|&a| cap_facets[a].len()).sum(),
            near_vertices: data[color].near_rows.len(),
            labels: members.iter().map(|&a| near[a].len()).max().unwrap_or(0),
            far_factors: 0,
            k_factors: 0,
            t_factors: 0,
        })
        .collect();
    let mut min_k = 0.0f64;
    for (job, out) in jobs.iter().zip(outputs) {
        let out = out?;
        min_k = min_k.min(out.min_k);
        breakdown[job.color].far_factors += out.far.r();
        breakdown[job.color].k_factors += out.k.r();
        fact.extend(out.far);
        fact.extend(out.k);
    }
    for (color, members) in classes.iter().enumerate() {
        let blocks = t_vector_blocks(p, color, members, &near, &cap_facets, &data[color]);
        breakdown[color].t_factors = blocks.len();
        for b in blocks {
            fact.push(b);
        }
    }
    let verify = verify_factorization(&PolytopeSlack { polytope: p }, &fact, cfg.tol)?;
    let r_total = fact.r();
    let generators = 2 * if cfg.dim == 2 { 2 } else { crate::lampshade::OCTAGON };
    let n_max = breakdown.iter().map(|b| b.labels).max().unwrap_or(0);
    let report = PipelineReport {
        config: cfg.clone(),
        epsilon: eps,
        nominal_n: cfg.nominal_n(),
        n_vertices: nv,
        n_facets: nf,
        caps: caps.centers.len(),
        colors: coloring.chi,
        far_factors: breakdown.iter().map(|b| b.far_factors).sum(),
        k_factors: breakdown.iter().map(|b| b.k_factors).sum(),
        t_factors: breakdown.iter().map(|b| b.t_factors).sum(),
        color_breakdown: breakdown,
        stats,
        min_k_entry: min_k,
        r_total,
        r_over_sqrt_n: r_total as f64 / (nv as f64).sqrt(),
        accounting_bound: coloring.chi * (2 * caps.centers.len() * generators + n_max),
        verify,
    };
    if !verify.pass {
        return Err(PipelineError::Verification { rel_err: verify.rel_err, min_entry: verify.min_entry });
    }
    Ok((fact, report))
}

/// One block per label `i`: rows the vertices labelled `i`, columns `F_c`, `U` the vector
/// `t^(i)` (slack of the label-`i` vertex of the cap owning each facet, zero past its size).
fn t_vector_blocks(
    p: &Polytope,
    color: usize,
    members: &[usize],
    near: &[Vec<usize>],
    cap_facets: &[Vec<usize>],
    data: &ClassData,
) -> Vec<FactorBlock> {
    let cols: Vec<usize> = members.iter().flat_map(|&a| cap_facets[a].iter().copied()).collect();
    let k = members.iter().map(|&a| near[a].len()).max().unwrap_or(0);
    if cols.is_empty() {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(k);
    for label in 0..k {
        let rows: Vec<usize> = data.near_rows.iter().copied().filter(|&v| data.label[v] == label).collect();
        let mut u = Vec::with_capacity(cols.len());
        for &a in members {
            for &f in &cap_facets[a] {
                u.push(near[a].get(label).map_or(0.0, |&x| p.slack(x, f).max(0.0)));
            }
        }
        let mut block = FactorBlock {
            t: vec![1.0; rows.len()],
            rows: Arc::new(rows),
            cols: cols.clone(),
            u,
            tags: vec![Provenance::TVector { color, label }],
        };
        block.prune();
        if block.inner() > 0 {
            out.push(block);
        }
    }
    out
}

/// Unit-norm check used by the sphere model.
pub fn max_norm_deviation(p: &Polytope) -> f64 {
    p.vertices.iter().map(|v| (dot(v, v).sqrt() - 1.0).abs()).fold(0.0, f64::max)
}
