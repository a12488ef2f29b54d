//! Convex geometry of the support hull and the face decomposition of the
//! non-critical boundary of I_X.
//!
//! For a finite branch law the reachable-mean body C_X equals the convex hull
//! of the support points: any mean E sum W_i X_i with E sum W_i = 1 is a
//! convex combination of support values, and concentrating the weight on one
//! (atom, index) pair attains each extreme point. Faces of C_X carry offspring
//! mass: N^F counts children landing in an affine subspace F, E(N^F) is the
//! face mass, and alpha_F the mass-weighted barycenter of F's support points.
//!
//! The decomposition classifies affine subspaces F spanned by support points
//! on proper faces. F qualifies when every supporting hyperplane through F
//! captures exactly the mass of F. Since any supporting hyperplane through F
//! touches the hull in a lattice face containing F's points, and each such
//! face is exposed by a hyperplane through F, the quantifier over hyperplanes
//! reduces to an exact mass comparison over lattice faces above F; subsets
//! strictly between lattice faces always fail it (their minimal face carries
//! strictly more mass), so the classified faces are lattice faces. Qualifying
//! faces split into Ftilde (dim >= 1 with mass > 1, restriction is again a
//! supercritical branching walk in lower dimension), Fbar_unit (mass exactly
//! 1, the restricted tree is critical and the level set at alpha_F has
//! dimension 0), and Fbar_point (a point of mass > 1, whose restricted
//! boundary is a Galton-Watson fractal). Each Ftilde face is re-entered
//! recursively with the classification run inside its own affine hull,
//! incrementing the level, for at most d levels.
//!
//! All qualification predicates (mass >= 1, mass equality, mass > 1) are
//! decided in exact rational arithmetic: the unit-mass threshold separates
//! critical from supercritical restrictions and cannot tolerate rounding.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{rat_to_f64, AffineFrame, Hull, Rat};
use crate::law::BranchLaw;
use crate::numerics::{dot, log_sum_exp, norm};
use crate::pressure::{p_tilde_star, phi_spectrum, q_alpha};

/// Geometric tolerance for membership of floating-point queries in faces.
const FACE_TOL: f64 = 1e-9;

/// Classification of a qualifying face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceClass {
    /// dim >= 1 and mass > 1: the restriction branches supercritically.
    Ftilde,
    /// Mass exactly 1: critical restriction, level-set dimension 0.
    FbarUnit,
    /// A point with mass > 1: restricted boundary is a GW fractal.
    FbarPoint,
}

impl std::fmt::Display for FaceClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FaceClass::Ftilde => "ftilde",
            FaceClass::FbarUnit => "fbar_unit",
            FaceClass::FbarPoint => "fbar_point",
        };
        f.write_str(s)
    }
}

/// One classified face of the decomposition.
#[derive(Debug, Clone, Serialize)]
pub struct FaceRecord {
    /// Indices into the law's support points, sorted.
    pub points: Vec<usize>,
    /// Dimension of the affine hull of those points.
    pub dim: usize,
    /// E(N^F), the offspring mass landing on the face.
    pub mass: f64,
    /// Mass-weighted barycenter of the face's support points.
    pub alpha_f: Vec<f64>,
    /// Class of the face.
    pub class: FaceClass,
    /// Recursion level at which the face qualified (1 = in the full hull).
    pub level: usize,
    /// Index of the containing Ftilde record, if qualified in a recursion.
    pub parent: Option<usize>,
    /// Base point of the face's affine frame.
    pub base: Vec<f64>,
    /// Orthogonal direction basis of the affine frame.
    pub basis: Vec<Vec<f64>>,
}

/// Result of the exposed-point mass criterion.
#[derive(Debug, Clone, Serialize)]
pub struct PolytopeReport {
    /// True iff every hull vertex carries mass >= 1 (then I_X = C_X).
    pub holds: bool,
    /// Support-point indices of vertices with mass < 1.
    pub failing: Vec<usize>,
    /// Their coordinates.
    pub failing_vertices: Vec<Vec<f64>>,
}

/// A facet hyperplane of the support hull with its offspring mass.
#[derive(Debug, Clone, Serialize)]
pub struct HyperplaneRecord {
    /// Facet index in the hull.
    pub facet: usize,
    /// Ambient unit outward normal.
    pub normal: Vec<f64>,
    /// Offset: the hyperplane is { x : <normal|x> = offset }.
    pub offset: f64,
    /// E(N^H).
    pub mass: f64,
    /// Whether E(N^H) >= 1 (the hyperplane meets I_X).
    pub in_h_tilde: bool,
}

/// Geometric description of one piece of the boundary decomposition.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PieceKind {
    /// A singleton { alpha_F }.
    Point { at: Vec<f64> },
    /// A segment of a 1-dimensional face; ends flagged closed when the
    /// Legendre value vanishes at an attained (critical) point.
    Interval { a: Vec<f64>, b: Vec<f64>, closed_a: bool, closed_b: bool },
    /// A polygonal approximation of a 2-dimensional region.
    Polygon { vertices: Vec<Vec<f64>> },
}

/// One piece I^F of the boundary decomposition.
#[derive(Debug, Clone, Serialize)]
pub struct PieceRecord {
    /// Index into the face list.
    pub face: usize,
    /// Region description in ambient coordinates.
    pub piece: PieceKind,
}

/// Full report of the boundary decomposition.
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionReport {
    /// All facet hyperplanes with masses and membership in H-tilde.
    pub hyperplanes: Vec<HyperplaneRecord>,
    /// Classified faces.
    pub faces: Vec<FaceRecord>,
    /// The pieces I^F, aligned with `faces`.
    pub pieces: Vec<PieceRecord>,
    /// Whether the relative interiors of the pieces are pairwise disjoint.
    pub disjoint: bool,
    /// Exposed-point mass criterion.
    pub polytope: PolytopeReport,
}

fn exact_mass_barycenter(law: &BranchLaw, s: &BTreeSet<usize>) -> (Rat, Vec<Rat>) {
    let mass = law.mass_of(s);
    let mut acc = vec![Rat::zero(); law.d()];
    for &i in s {
        let w = &law.point_weights()[i];
        for (a, x) in acc.iter_mut().zip(&law.points()[i]) {
            let t = w * x;
            *a = &*a + &t;
        }
    }
    let bary = acc.iter().map(|a| a / &mass).collect();
    (mass, bary)
}

/// Exact frame of a face record's affine hull.
pub fn face_frame(law: &BranchLaw, rec: &FaceRecord) -> AffineFrame {
    let pts: Vec<Vec<Rat>> =
        rec.points.iter().map(|&i| law.points()[i].clone()).collect();
    AffineFrame::from_points(&pts)
}

/// Enumerates and classifies the faces of the boundary decomposition.
///
/// Runs breadth-first over containers: the full support hull first, then each
/// qualified Ftilde face as a container of its own support points. A face
/// seen in several containers keeps its first (lowest-level) classification.
pub fn classify_faces(law: &BranchLaw) -> Result<Vec<FaceRecord>> {
    let one = Rat::one();
    let mut records: Vec<FaceRecord> = Vec::new();
    let mut seen: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut queue: VecDeque<(BTreeSet<usize>, usize, Option<usize>)> = VecDeque::new();
    queue.push_back(((0..law.points().len()).collect(), 0, None));
    while let Some((cpts, level, parent)) = queue.pop_front() {
        let ids: Vec<usize> = cpts.iter().copied().collect();
        let pts: Vec<Vec<Rat>> =
            ids.iter().map(|&i| law.points()[i].clone()).collect();
        let hull = Hull::build(pts)?;
        // A degenerate top-level support lies inside hyperplanes that contain
        // its whole affine hull; each of those carries the full mass.
        let degenerate_top = level == 0 && hull.dim() < law.d();
        let container_mass = law.mass_of(&cpts);
        let lattice: Vec<BTreeSet<usize>> = hull
            .faces
            .iter()
            .map(|f| f.points.iter().map(|&li| ids[li]).collect())
            .collect();
        let lattice_masses: Vec<Rat> =
            lattice.iter().map(|g| law.mass_of(g)).collect();
        let mut cands: Vec<BTreeSet<usize>> = lattice.clone();
        if degenerate_top {
            cands.push(cpts.clone());
        }
        for s in cands {
            let mass = law.mass_of(&s);
            if mass < one {
                continue;
            }
            // Every supporting hyperplane through aff(S) exposes a lattice
            // face containing S; the classification requires all of them to
            // carry exactly the mass of S.
            let mut eq = lattice
                .iter()
                .zip(&lattice_masses)
                .all(|(g, gm)| !s.is_subset(g) || *gm == mass);
            if degenerate_top && container_mass != mass {
                eq = false;
            }
            if !eq {
                continue;
            }
            let spts: Vec<Vec<Rat>> =
                s.iter().map(|&i| law.points()[i].clone()).collect();
            let dim = crate::geometry::affine_rank(&spts);
            let class = if dim >= 1 && mass > one {
                FaceClass::Ftilde
            } else if mass == one {
                FaceClass::FbarUnit
            } else {
                FaceClass::FbarPoint
            };
            let key: Vec<usize> = s.iter().copied().collect();
            if seen.contains_key(&key) {
                continue;
            }
            let (mass_exact, bary) = exact_mass_barycenter(law, &s);
            let frame = AffineFrame::from_points(&spts);
            let base: Vec<f64> = frame.base.iter().map(rat_to_f64).collect();
            let basis: Vec<Vec<f64>> = frame
                .basis
                .iter()
                .map(|b| b.iter().map(rat_to_f64).collect())
                .collect();
            let idx = records.len();
            seen.insert(key.clone(), idx);
            if class == FaceClass::Ftilde {
                queue.push_back((s.clone(), level + 1, Some(idx)));
            }
            records.push(FaceRecord {
                points: key,
                dim,
                mass: rat_to_f64(&mass_exact),
                alpha_f: bary.iter().map(rat_to_f64).collect(),
                class,
                level: level + 1,
                parent,
                base,
                basis,
            });
        }
    }
    Ok(records)
}

/// E sum 1_{H_+}(X_i) for the open positive side of a hull facet, exact.
///
/// `shift` moves the facet plane along its normal (in frame units); the
/// un-shifted mass must vanish on every facet of the support hull.
pub fn positive_side_mass(law: &BranchLaw, facet: usize, shift: &Rat) -> Result<Rat> {
    let hull = law.hull();
    let f = hull.facets.get(facet).ok_or_else(|| {
        Error::Domain(format!("facet index {facet} out of range"))
    })?;
    let normal: Vec<Rat> =
        f.normal.iter().map(|n| Rat::from_integer(n.clone())).collect();
    let threshold = &f.offset + shift;
    let mut mass = Rat::zero();
    for (y, w) in hull.coords.iter().zip(law.point_weights()) {
        let v: Rat = normal
            .iter()
            .zip(y)
            .map(|(n, yi)| n * yi)
            .fold(Rat::zero(), |s, t| s + t);
        if v > threshold {
            mass = &mass + w;
        }
    }
    Ok(mass)
}

/// Checks that every exposed point of the support hull carries mass >= 1,
/// which makes I_X equal to the full hull.
pub fn polytope_criterion(law: &BranchLaw) -> Result<PolytopeReport> {
    let hull = law.hull();
    let one = Rat::one();
    let vertex_ids: Vec<usize> = if hull.dim() == 0 {
        vec![0]
    } else {
        hull.vertex_faces()
            .iter()
            .map(|&fi| *hull.faces[fi].points.iter().next().expect("vertex face"))
            .collect()
    };
    let mut failing = Vec::new();
    for id in vertex_ids {
        let single: BTreeSet<usize> = [id].into_iter().collect();
        if law.mass_of(&single) < one {
            failing.push(id);
        }
    }
    failing.sort_unstable();
    Ok(PolytopeReport {
        holds: failing.is_empty(),
        failing_vertices: failing
            .iter()
            .map(|&i| law.points()[i].iter().map(rat_to_f64).collect())
            .collect(),
        failing,
    })
}

/// Level-set dimension at alpha within a face, via the restricted walk.
///
/// Mass-1 faces give 0 at alpha_F and -inf elsewhere; a point face of mass
/// greater than 1 gives the dimension of its restricted boundary tree; an
/// Ftilde face runs the stationary-tilt solve on the restricted law.
pub fn face_restricted_spectrum(
    law: &BranchLaw,
    rec: &FaceRecord,
    alpha: &[f64],
) -> Result<f64> {
    let frame = face_frame(law, rec);
    let (beta, residual) = frame.coords_f64(alpha);
    if residual > FACE_TOL {
        return Err(Error::Domain(
            "alpha lies outside the affine hull of the face".into(),
        ));
    }
    let restricted = law.restrict_to_face(&frame)?;
    phi_spectrum(&restricted, &beta)
}

/// The boundary cumulant of a face at alpha.
///
/// Dispatches on the class: a point face contributes <lambda|alpha_F>; a
/// mass-1 face the plain restricted cumulant; an Ftilde face the tilted
/// cumulant at the restricted stationary tilt for alpha.
pub fn lambda_f(
    law: &BranchLaw,
    rec: &FaceRecord,
    alpha: &[f64],
    lam: &[f64],
) -> Result<f64> {
    let mass_exact = law.mass_of(&rec.points.iter().copied().collect());
    let at_alpha_f = norm(
        &alpha.iter().zip(&rec.alpha_f).map(|(a, b)| a - b).collect::<Vec<_>>(),
    ) <= FACE_TOL;
    if rec.dim == 0 {
        if !at_alpha_f {
            return Err(Error::Domain(
                "point face only carries its own barycenter".into(),
            ));
        }
        return Ok(dot(lam, &rec.alpha_f));
    }
    let in_face = |p: usize| rec.points.binary_search(&p).is_ok();
    if mass_exact == Rat::one() {
        if !at_alpha_f {
            return Err(Error::Domain(
                "unit-mass face only carries its own barycenter".into(),
            ));
        }
        let exps: Vec<f64> = law
            .terms()
            .iter()
            .filter(|t| in_face(t.point))
            .map(|t| t.logw + dot(lam, &t.x))
            .collect();
        return Ok(log_sum_exp(&exps));
    }
    let frame = face_frame(law, rec);
    let (beta, residual) = frame.coords_f64(alpha);
    if residual > FACE_TOL {
        return Err(Error::Domain(
            "alpha lies outside the affine hull of the face".into(),
        ));
    }
    let restricted = law.restrict_to_face(&frame)?;
    let ip = q_alpha(&restricted, &beta)?;
    let mut exps = Vec::new();
    for t in law.terms() {
        if !in_face(t.point) {
            continue;
        }
        let y: Vec<f64> = frame
            .coords(&law.points()[t.point])
            .expect("face point lies in its own frame")
            .iter()
            .map(rat_to_f64)
            .collect();
        let rel: Vec<f64> = y.iter().zip(&beta).map(|(a, b)| a - b).collect();
        exps.push(t.logw + dot(lam, &t.x) + dot(&ip.q, &rel) - ip.t * t.phi);
    }
    Ok(log_sum_exp(&exps))
}

/// Sign of the restricted Legendre value at frame coordinates `y`.
fn p_star_at(restricted: &BranchLaw, y: &[f64]) -> Result<f64> {
    Ok(p_tilde_star(restricted, y)?.0)
}

/// Bisects for the boundary of { p_star >= 0 } between an inside point `good`
/// and an outside point `bad` (both in frame coordinates of a 1-d face).
fn bisect_boundary(restricted: &BranchLaw, mut good: f64, mut bad: f64) -> Result<f64> {
    for _ in 0..60 {
        let mid = 0.5 * (good + bad);
        if p_star_at(restricted, &[mid])? >= 0.0 {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(0.5 * (good + bad))
}

fn interval_piece(
    law: &BranchLaw,
    rec: &FaceRecord,
) -> Result<(PieceKind, AffineFrame)> {
    let frame = face_frame(law, rec);
    let restricted = law.restrict_to_face(&frame)?;
    let lo = restricted
        .points()
        .iter()
        .map(|p| rat_to_f64(&p[0]))
        .fold(f64::INFINITY, f64::min);
    let hi = restricted
        .points()
        .iter()
        .map(|p| rat_to_f64(&p[0]))
        .fold(f64::NEG_INFINITY, f64::max);
    let (mean, _) = frame.coords_f64(&rec.alpha_f);
    // The Legendre value is concave, positive at the barycenter; an end of
    // the face with nonnegative value is reached by recession (open end),
    // otherwise the zero crossing is attained (closed end).
    let (a, closed_a) = if p_star_at(&restricted, &[lo])? >= 0.0 {
        (lo, false)
    } else {
        (bisect_boundary(&restricted, mean[0], lo)?, true)
    };
    let (b, closed_b) = if p_star_at(&restricted, &[hi])? >= 0.0 {
        (hi, false)
    } else {
        (bisect_boundary(&restricted, mean[0], hi)?, true)
    };
    Ok((
        PieceKind::Interval {
            a: frame.embed_f64(&[a]),
            b: frame.embed_f64(&[b]),
            closed_a,
            closed_b,
        },
        frame,
    ))
}

fn polygon_piece(
    law: &BranchLaw,
    rec: &FaceRecord,
    rays: usize,
) -> Result<(PieceKind, AffineFrame)> {
    let frame = face_frame(law, rec);
    let restricted = law.restrict_to_face(&frame)?;
    let (center, _) = frame.coords_f64(&rec.alpha_f);
    let mut vertices = Vec::with_capacity(rays);
    for k in 0..rays {
        let theta = 2.0 * std::f64::consts::PI * k as f64 / rays as f64;
        let dir = [theta.cos(), theta.sin()];
        let inside = |r: f64| -> Result<bool> {
            let y = [center[0] + r * dir[0], center[1] + r * dir[1]];
            Ok(p_star_at(&restricted, &y)? >= 0.0)
        };
        let mut r_hi = 1.0;
        let mut grow = 0;
        while inside(r_hi)? && grow < 60 {
            r_hi *= 2.0;
            grow += 1;
        }
        let mut r_lo = 0.0;
        for _ in 0..50 {
            let mid = 0.5 * (r_lo + r_hi);
            if inside(mid)? {
                r_lo = mid;
            } else {
                r_hi = mid;
            }
        }
        let y = [center[0] + r_lo * dir[0], center[1] + r_lo * dir[1]];
        vertices.push(frame.embed_f64(&y));
    }
    Ok((PieceKind::Polygon { vertices }, frame))
}

/// Whether ambient point `p` belongs to the included set of a piece.
///
/// Interval interiors always count; interval ends only when closed; points
/// count as themselves; polygon pieces count their strict interior (their
/// boundary status varies along the rim, and disjointness of the open parts
/// is what the decomposition asserts).
fn piece_contains(p: &[f64], piece: &PieceKind, frame: &Option<AffineFrame>) -> bool {
    match piece {
        PieceKind::Point { at } => {
            norm(&p.iter().zip(at).map(|(a, b)| a - b).collect::<Vec<_>>())
                <= FACE_TOL
        }
        PieceKind::Interval { a, b, closed_a, closed_b } => {
            let dirv: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
            let len2 = dot(&dirv, &dirv);
            if len2 == 0.0 {
                return *closed_a
                    && norm(&p.iter().zip(a).map(|(x, y)| x - y).collect::<Vec<_>>())
                        <= FACE_TOL;
            }
            let rel: Vec<f64> = p.iter().zip(a).map(|(x, y)| x - y).collect();
            let t = dot(&rel, &dirv) / len2;
            let proj_dist2 = dot(&rel, &rel) - t * t * len2;
            if proj_dist2 > FACE_TOL * FACE_TOL {
                return false;
            }
            let len = len2.sqrt();
            let s = t * len;
            let (end_a, end_b) = (s.abs() <= FACE_TOL, (s - len).abs() <= FACE_TOL);
            (s > FACE_TOL && s < len - FACE_TOL)
                || (end_a && *closed_a)
                || (end_b && *closed_b)
        }
        PieceKind::Polygon { vertices } => {
            let Some(frame) = frame else { return false };
            let (y, residual) = frame.coords_f64(p);
            if residual > FACE_TOL {
                return false;
            }
            let poly: Vec<Vec<f64>> =
                vertices.iter().map(|v| frame.coords_f64(v).0).collect();
            strictly_inside_polygon(&y, &poly)
        }
    }
}

/// Strict interior test for a simple polygon given in 2-d coordinates, with a
/// margin: points within FACE_TOL of an edge do not count as inside.
fn strictly_inside_polygon(y: &[f64], poly: &[Vec<f64>]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut winding = 0i32;
    for i in 0..n {
        let (a, b) = (&poly[i], &poly[(i + 1) % n]);
        let ex = b[0] - a[0];
        let ey = b[1] - a[1];
        let px = y[0] - a[0];
        let py = y[1] - a[1];
        let cross = ex * py - ey * px;
        let elen = (ex * ex + ey * ey).sqrt().max(1e-30);
        let t = (px * ex + py * ey) / (elen * elen);
        if t >= -FACE_TOL && t <= 1.0 + FACE_TOL && (cross / elen).abs() <= FACE_TOL {
            return false;
        }
        if a[1] <= y[1] {
            if b[1] > y[1] && cross > 0.0 {
                winding += 1;
            }
        } else if b[1] <= y[1] && cross < 0.0 {
            winding -= 1;
        }
    }
    winding != 0
}

fn representative_points(piece: &PieceKind) -> Vec<Vec<f64>> {
    match piece {
        PieceKind::Point { at } => vec![at.clone()],
        PieceKind::Interval { a, b, closed_a, closed_b } => {
            let mut pts = Vec::new();
            for u in [0.25, 0.5, 0.75] {
                pts.push(
                    a.iter().zip(b).map(|(x, y)| x + u * (y - x)).collect(),
                );
            }
            if *closed_a {
                pts.push(a.clone());
            }
            if *closed_b {
                pts.push(b.clone());
            }
            pts
        }
        PieceKind::Polygon { vertices } => {
            let mut pts: Vec<Vec<f64>> = vertices.clone();
            if !vertices.is_empty() {
                let d = vertices[0].len();
                let mut c = vec![0.0; d];
                for v in vertices {
                    for (ci, vi) in c.iter_mut().zip(v) {
                        *ci += vi / vertices.len() as f64;
                    }
                }
                pts.push(c);
            }
            pts
        }
    }
}

/// Full boundary decomposition: facet hyperplanes with masses, the face
/// classification, the pieces I^F, their pairwise disjointness, and the
/// exposed-point criterion.
pub fn boundary_decomposition(law: &BranchLaw) -> Result<DecompositionReport> {
    let faces = classify_faces(law)?;
    let hull = law.hull();
    let one = Rat::one();
    let mut hyperplanes = Vec::new();
    for fi in 0..hull.facets.len() {
        let (normal, offset) = hull.facet_ambient_hyperplane(fi);
        let gset: BTreeSet<usize> = hull.facets[fi].points.iter().copied().collect();
        let mass_exact = law.mass_of(&gset);
        hyperplanes.push(HyperplaneRecord {
            facet: fi,
            normal,
            offset,
            mass: rat_to_f64(&mass_exact),
            in_h_tilde: mass_exact >= one,
        });
    }
    let mut pieces = Vec::with_capacity(faces.len());
    let mut frames: Vec<Option<AffineFrame>> = Vec::with_capacity(faces.len());
    for (idx, rec) in faces.iter().enumerate() {
        let (piece, frame) = match rec.class {
            FaceClass::FbarUnit | FaceClass::FbarPoint => {
                (PieceKind::Point { at: rec.alpha_f.clone() }, None)
            }
            FaceClass::Ftilde => match rec.dim {
                1 => {
                    let (p, f) = interval_piece(law, rec)?;
                    (p, Some(f))
                }
                2 => {
                    let (p, f) = polygon_piece(law, rec, 64)?;
                    (p, Some(f))
                }
                d => {
                    return Err(Error::Unsupported(format!(
                        "piece description for a face of dimension {d}"
                    )))
                }
            },
        };
        pieces.push(PieceRecord { face: idx, piece });
        frames.push(frame);
    }
    let mut disjoint = true;
    'outer: for i in 0..pieces.len() {
        for j in i + 1..pieces.len() {
            let i_in_j = representative_points(&pieces[i].piece)
                .iter()
                .any(|p| piece_contains(p, &pieces[j].piece, &frames[j]));
            let j_in_i = representative_points(&pieces[j].piece)
                .iter()
                .any(|p| piece_contains(p, &pieces[i].piece, &frames[i]));
            if i_in_j || j_in_i {
                disjoint = false;
                break 'outer;
            }
        }
    }
    Ok(DecompositionReport {
        hyperplanes,
        faces,
        pieces,
        disjoint,
        polytope: polytope_criterion(law)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn law_a() -> BranchLaw {
        BranchLaw::from_json(
            r#"{"d": 1, "repr": "explicit", "atoms": [
                {"p": "1", "offspring": [
                    {"x": ["0"], "phi": "1"},
                    {"x": ["1"], "phi": "1"}
                ]}
            ]}"#,
        )
        .unwrap()
    }

    fn square(en: u32) -> BranchLaw {
        BranchLaw::from_json(&format!(
            r#"{{"d": 2, "repr": "iid_compound",
                "n_law": [{{"n": {en}, "p": "1"}}],
                "mu": [
                    {{"x": ["0", "0"], "phi": "1", "p": "0.25"}},
                    {{"x": ["1", "0"], "phi": "1", "p": "0.25"}},
                    {{"x": ["0", "1"], "phi": "1", "p": "0.25"}},
                    {{"x": ["1", "1"], "phi": "1", "p": "0.25"}}
                ]}}"#
        ))
        .unwrap()
    }

    fn count(recs: &[FaceRecord], class: FaceClass, dim: usize) -> usize {
        recs.iter().filter(|r| r.class == class && r.dim == dim).count()
    }

    #[test]
    fn interval_endpoints_are_unit_faces() {
        let recs = classify_faces(&law_a()).unwrap();
        assert_eq!(recs.len(), 2);
        for r in &recs {
            assert_eq!(r.class, FaceClass::FbarUnit);
            assert_eq!(r.dim, 0);
            assert_eq!(r.level, 1);
            assert_relative_eq!(r.mass, 1.0, epsilon = 1e-12);
        }
        let mut ends: Vec<f64> = recs.iter().map(|r| r.alpha_f[0]).collect();
        ends.sort_by(f64::total_cmp);
        assert_eq!(ends, vec![0.0, 1.0]);
    }

    #[test]
    fn square_with_heavy_vertices_classifies_edges_and_corners() {
        let recs = classify_faces(&square(8)).unwrap();
        assert_eq!(count(&recs, FaceClass::Ftilde, 1), 4);
        assert_eq!(count(&recs, FaceClass::FbarPoint, 0), 4);
        assert_eq!(recs.len(), 8);
        for r in &recs {
            match r.class {
                FaceClass::Ftilde => {
                    assert_eq!(r.level, 1);
                    assert_relative_eq!(r.mass, 4.0, epsilon = 1e-12);
                    assert!(r.parent.is_none());
                }
                FaceClass::FbarPoint => {
                    assert_eq!(r.level, 2);
                    assert_relative_eq!(r.mass, 2.0, epsilon = 1e-12);
                    let parent = r.parent.expect("corner comes from an edge");
                    assert_eq!(recs[parent].class, FaceClass::Ftilde);
                    assert!(r.points.iter().all(|p| recs[parent]
                        .points
                        .contains(p)));
                }
                FaceClass::FbarUnit => panic!("no unit faces here"),
            }
        }
    }

    #[test]
    fn square_with_unit_vertices_yields_fbar_unit_corners() {
        let recs = classify_faces(&square(4)).unwrap();
        assert_eq!(count(&recs, FaceClass::Ftilde, 1), 4);
        assert_eq!(count(&recs, FaceClass::FbarUnit, 0), 4);
        for r in recs.iter().filter(|r| r.class == FaceClass::FbarUnit) {
            assert_eq!(r.level, 2);
        }
    }

    #[test]
    fn subcritical_vertices_never_qualify() {
        let recs = classify_faces(&square(3)).unwrap();
        assert_eq!(count(&recs, FaceClass::Ftilde, 1), 4);
        assert_eq!(recs.len(), 4);
        for r in &recs {
            assert_relative_eq!(r.mass, 1.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn cube_classifies_three_levels() {
        let law = BranchLaw::from_json(
            r#"{"d": 3, "repr": "iid_compound",
                "n_law": [{"n": 24, "p": "1"}],
                "mu": [
                    {"x": ["0","0","0"], "phi": "1", "p": "0.125"},
                    {"x": ["1","0","0"], "phi": "1", "p": "0.125"},
                    {"x": ["0","1","0"], "phi": "1", "p": "0.125"},
                    {"x": ["1","1","0"], "phi": "1", "p": "0.125"},
                    {"x": ["0","0","1"], "phi": "1", "p": "0.125"},
                    {"x": ["1","0","1"], "phi": "1", "p": "0.125"},
                    {"x": ["0","1","1"], "phi": "1", "p": "0.125"},
                    {"x": ["1","1","1"], "phi": "1", "p": "0.125"}
                ]}"#,
        )
        .unwrap();
        let recs = classify_faces(&law).unwrap();
        // Square facets (mass 12), then edges (mass 6), then corners (mass 3).
        assert_eq!(count(&recs, FaceClass::Ftilde, 2), 6);
        assert_eq!(count(&recs, FaceClass::Ftilde, 1), 12);
        assert_eq!(count(&recs, FaceClass::FbarPoint, 0), 8);
        assert!(recs
            .iter()
            .filter(|r| r.dim == 2)
            .all(|r| r.level == 1 && (r.mass - 12.0).abs() < 1e-12));
        assert!(recs
            .iter()
            .filter(|r| r.dim == 1)
            .all(|r| r.level == 2 && (r.mass - 6.0).abs() < 1e-12));
        assert!(recs
            .iter()
            .filter(|r| r.dim == 0)
            .all(|r| r.level == 3 && (r.mass - 3.0).abs() < 1e-12));
    }

    #[test]
    fn degenerate_support_enters_through_its_affine_hull() {
        // Support on a segment embedded in the plane: the whole segment is
        // the unique level-1 face, its endpoints qualify inside it.
        let law = BranchLaw::from_json(
            r#"{"d": 2, "repr": "explicit", "atoms": [
                {"p": "1", "offspring": [
                    {"x": ["0", "0"], "phi": "1"},
                    {"x": ["0", "0"], "phi": "1"},
                    {"x": ["1", "1"], "phi": "1"},
                    {"x": ["1", "1"], "phi": "1"}
                ]}
            ]}"#,
        )
        .unwrap();
        let recs = classify_faces(&law).unwrap();
        assert_eq!(count(&recs, FaceClass::Ftilde, 1), 1);
        assert_eq!(count(&recs, FaceClass::FbarPoint, 0), 2);
        let seg = recs.iter().find(|r| r.dim == 1).unwrap();
        assert_eq!(seg.level, 1);
        assert_relative_eq!(seg.mass, 4.0, epsilon = 1e-12);
        for r in recs.iter().filter(|r| r.dim == 0) {
            assert_eq!(r.level, 2);
            assert_relative_eq!(r.mass, 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn facet_positive_sides_carry_no_mass() {
        for law in [law_a(), square(8), square(3)] {
            for fi in 0..law.hull().facets.len() {
                let m = positive_side_mass(&law, fi, &Rat::zero()).unwrap();
                assert!(m.is_zero(), "facet {fi} has positive-side mass {m}");
            }
        }
        // Negative control: shifting a facet plane inward exposes mass.
        let law = square(8);
        let shift = -Rat::new(1.into(), 2.into());
        let exposed = positive_side_mass(&law, 0, &shift).unwrap();
        assert!(exposed > Rat::zero());
    }

    #[test]
    fn exposed_point_criterion_thresholds_at_unit_vertex_mass() {
        assert!(polytope_criterion(&square(8)).unwrap().holds);
        assert!(polytope_criterion(&square(4)).unwrap().holds);
        let report = polytope_criterion(&square(3)).unwrap();
        assert!(!report.holds);
        assert_eq!(report.failing.len(), 4);
        assert!(polytope_criterion(&law_a()).unwrap().holds);
    }

    #[test]
    fn restricted_spectrum_matches_edge_entropy() {
        let law = square(8);
        let recs = classify_faces(&law).unwrap();
        let bottom = recs
            .iter()
            .find(|r| r.dim == 1 && r.alpha_f == vec![0.5, 0.0])
            .expect("bottom edge");
        // Edge law: mass 4 uniform on two points; its spectrum at coordinate
        // a in (0,1) is ln 4 - (ln 2 - H(a)) = ln 2 + H(a).
        for a in [0.15, 0.5, 0.85] {
            let v = face_restricted_spectrum(&law, bottom, &[a, 0.0]).unwrap();
            let entropy = -a * a.ln() - (1.0 - a) * (1.0 - a).ln();
            assert_relative_eq!(
                v,
                std::f64::consts::LN_2 + entropy,
                epsilon = 1e-8
            );
        }
        // At a corner the sub-face takes over: a mass-2 point face.
        let v = face_restricted_spectrum(&law, bottom, &[0.0, 0.0]).unwrap();
        assert_relative_eq!(v, std::f64::consts::LN_2, epsilon = 1e-8);
        // Off the affine hull of the edge is a domain error.
        assert!(face_restricted_spectrum(&law, bottom, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn unit_mass_point_face_spectrum_is_zero() {
        let law = law_a();
        let recs = classify_faces(&law).unwrap();
        let right = recs.iter().find(|r| r.alpha_f == vec![1.0]).unwrap();
        let v = face_restricted_spectrum(&law, right, &[1.0]).unwrap();
        assert!(v.abs() < 1e-12);
    }

    #[test]
    fn boundary_cumulant_dispatch() {
        let law = law_a();
        let recs = classify_faces(&law).unwrap();
        let right = recs.iter().find(|r| r.alpha_f == vec![1.0]).unwrap();
        // Point face: <lambda | alpha_F>.
        let v = lambda_f(&law, right, &[1.0], &[1.0]).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-12);
        assert!(lambda_f(&law, right, &[0.5], &[1.0]).is_err());

        let law = square(8);
        let recs = classify_faces(&law).unwrap();
        let bottom = recs
            .iter()
            .find(|r| r.dim == 1 && r.alpha_f == vec![0.5, 0.0])
            .unwrap();
        // Ftilde branch is normalized at lambda = 0.
        let v = lambda_f(&law, bottom, &[0.5, 0.0], &[0.0, 0.0]).unwrap();
        assert!(v.abs() < 1e-10, "normalization failed: {v}");
        // At the barycenter the stationary tilt vanishes and the cumulant is
        // log((1 + e^{lambda_1}) / 2).
        let v = lambda_f(&law, bottom, &[0.5, 0.0], &[1.0, 0.0]).unwrap();
        assert_relative_eq!(
            v,
            ((1.0 + std::f64::consts::E) / 2.0).ln(),
            epsilon = 1e-8
        );
    }

    #[test]
    fn unit_mass_segment_face_cumulant() {
        // A law with a full segment of mass exactly 1: two in-face points of
        // weight 1/2 each, plus enough off-face mass to stay supercritical.
        let law = BranchLaw::from_json(
            r#"{"d": 2, "repr": "explicit", "atoms": [
                {"p": "0.5", "offspring": [
                    {"x": ["0", "1"], "phi": "1"},
                    {"x": ["0", "0"], "phi": "1"},
                    {"x": ["1", "0"], "phi": "1"}
                ]},
                {"p": "0.5", "offspring": [
                    {"x": ["1", "1"], "phi": "1"},
                    {"x": ["0", "0"], "phi": "1"},
                    {"x": ["1", "0"], "phi": "1"}
                ]}
            ]}"#,
        )
        .unwrap();
        let recs = classify_faces(&law).unwrap();
        let top = recs
            .iter()
            .find(|r| r.dim == 1 && r.alpha_f == vec![0.5, 1.0])
            .expect("top edge has mass 1");
        assert_eq!(top.class, FaceClass::FbarUnit);
        // log E sum 1_F e^{<lambda|X>} at lambda = (1, 0):
        // log(0.5 e^0 + 0.5 e^1) = log((1 + e)/2).
        let v = lambda_f(&law, top, &[0.5, 1.0], &[1.0, 0.0]).unwrap();
        assert_relative_eq!(
            v,
            ((1.0 + std::f64::consts::E) / 2.0).ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn decomposition_of_the_heavy_square() {
        let law = square(8);
        let report = boundary_decomposition(&law).unwrap();
        assert_eq!(report.hyperplanes.len(), 4);
        assert!(report.hyperplanes.iter().all(|h| h.in_h_tilde));
        assert!(report
            .hyperplanes
            .iter()
            .all(|h| (h.mass - 4.0).abs() < 1e-12));
        assert_eq!(report.pieces.len(), 8);
        let intervals = report
            .pieces
            .iter()
            .filter(|p| matches!(p.piece, PieceKind::Interval { .. }))
            .count();
        let points = report
            .pieces
            .iter()
            .filter(|p| matches!(p.piece, PieceKind::Point { .. }))
            .count();
        assert_eq!((intervals, points), (4, 4));
        // Both ends of every edge piece are recession (open) ends: the corner
        // masses are 2, so the Legendre value at the ends is log 2 > 0.
        for p in &report.pieces {
            if let PieceKind::Interval { a, b, closed_a, closed_b } = &p.piece {
                assert!(!closed_a && !closed_b);
                let len = norm(
                    &a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>(),
                );
                assert_relative_eq!(len, 1.0, epsilon = 1e-9);
            }
        }
        assert!(report.disjoint);
        assert!(report.polytope.holds);
    }

    #[test]
    fn decomposition_with_interior_critical_ends() {
        let law = square(3);
        let report = boundary_decomposition(&law).unwrap();
        assert_eq!(report.pieces.len(), 4);
        for p in &report.pieces {
            let PieceKind::Interval { a, b, closed_a, closed_b } = &p.piece else {
                panic!("expected interval pieces only");
            };
            assert!(closed_a && closed_b, "ends attained inside the edge");
            let len =
                norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>());
            assert!(len < 1.0 - 1e-3, "interval must stop inside the edge");
            assert!(len > 0.1);
        }
        assert!(report.disjoint);
        assert!(!report.polytope.holds);
    }

    #[test]
    fn cube_decomposition_is_disjoint() {
        let law = BranchLaw::from_json(
            r#"{"d": 3, "repr": "iid_compound",
                "n_law": [{"n": 24, "p": "1"}],
                "mu": [
                    {"x": ["0","0","0"], "phi": "1", "p": "0.125"},
                    {"x": ["1","0","0"], "phi": "1", "p": "0.125"},
                    {"x": ["0","1","0"], "phi": "1", "p": "0.125"},
                    {"x": ["1","1","0"], "phi": "1", "p": "0.125"},
                    {"x": ["0","0","1"], "phi": "1", "p": "0.125"},
                    {"x": ["1","0","1"], "phi": "1", "p": "0.125"},
                    {"x": ["0","1","1"], "phi": "1", "p": "0.125"},
                    {"x": ["1","1","1"], "phi": "1", "p": "0.125"}
                ]}"#,
        )
        .unwrap();
        let report = boundary_decomposition(&law).unwrap();
        assert_eq!(report.hyperplanes.len(), 6);
        assert_eq!(report.pieces.len(), 26);
        assert!(report.disjoint);
    }
}
