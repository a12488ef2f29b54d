//! Exact convex geometry over the rationals in ambient dimension at most 3.
//!
//! Support points of a branching law are ingested as decimal strings and kept
//! as exact `BigRational` coordinates, so convex position questions (which
//! points span a facet, which faces contain which points) are decided without
//! rounding. The affine hull of the support is carried as a rational frame
//! whose basis vectors are exactly orthogonal and have norm within 1e-8 of 1:
//! orthogonality keeps coordinates exact, and near-unit norms keep frame
//! coordinates metrically faithful so floating-point tolerances transfer.
//!
//! The convex hull is built by brute-force enumeration of candidate supporting
//! hyperplanes (point pairs in the plane, point triples in space) with exact
//! one-side tests. Support sets here are tiny, so the O(n^4) exact method is
//! preferred over incremental construction. The face lattice is recovered as
//! the intersection closure of the facet point sets: every proper face of a
//! polytope is an intersection of the facets containing it.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact rational scalar.
pub type Rat = BigRational;

/// Parses a plain decimal string such as `"1.5"`, `"-0.25"`, `"2"`, or
/// `"1e-3"` into an exact rational.
pub fn parse_decimal(s: &str) -> Result<Rat> {
    let fail = || Error::schema("decimal", format!("`{s}` is not a decimal number"));
    let t = s.trim();
    if t.is_empty() {
        return Err(fail());
    }
    let (mantissa, exp10) = match t.find(['e', 'E']) {
        Some(pos) => {
            let e: i32 = t[pos + 1..].parse().map_err(|_| fail())?;
            (&t[..pos], e)
        }
        None => (t, 0),
    };
    let (sign, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (-1, rest),
        None => (1, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = match digits.find('.') {
        Some(pos) => (&digits[..pos], &digits[pos + 1..]),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(fail());
    }
    if !int_part.bytes().all(|b| b.is_ascii_digit())
        || !frac_part.bytes().all(|b| b.is_ascii_digit())
    {
        return Err(fail());
    }
    let joined = format!("{int_part}{frac_part}");
    let numer: BigInt = joined.parse().map_err(|_| fail())?;
    let mut num = BigInt::from(sign) * numer;
    let mut den = BigInt::from(10u32).pow(frac_part.len() as u32);
    if exp10 >= 0 {
        num *= BigInt::from(10u32).pow(exp10 as u32);
    } else {
        den *= BigInt::from(10u32).pow((-exp10) as u32);
    }
    Ok(Rat::new(num, den))
}

/// Rational to nearest f64.
pub fn rat_to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Rational vector to f64.
pub fn vec_to_f64(v: &[Rat]) -> Vec<f64> {
    v.iter().map(rat_to_f64).collect()
}

fn rat_dot(a: &[Rat], b: &[Rat]) -> Rat {
    a.iter().zip(b).map(|(x, y)| x * y).fold(Rat::zero(), |s, t| s + t)
}

fn rat_sub(a: &[Rat], b: &[Rat]) -> Vec<Rat> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn rat_cross(a: &[Rat], b: &[Rat]) -> Vec<Rat> {
    vec![
        &a[1] * &b[2] - &a[2] * &b[1],
        &a[2] * &b[0] - &a[0] * &b[2],
        &a[0] * &b[1] - &a[1] * &b[0],
    ]
}

/// Affine rank of a point set (dimension of its affine hull).
pub fn affine_rank(points: &[Vec<Rat>]) -> usize {
    if points.len() <= 1 {
        return 0;
    }
    let dirs: Vec<Vec<Rat>> = points[1..].iter().map(|p| rat_sub(p, &points[0])).collect();
    linear_rank(dirs)
}

fn linear_rank(mut rows: Vec<Vec<Rat>>) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let cols = rows[0].len();
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..rows.len()).find(|&r| !rows[r][col].is_zero()) else {
            continue;
        };
        rows.swap(rank, pivot);
        for r in rank + 1..rows.len() {
            if rows[r][col].is_zero() {
                continue;
            }
            let f = &rows[r][col] / &rows[rank][col];
            for c in col..cols {
                let delta = &f * &rows[rank][c];
                rows[r][c] = &rows[r][c] - &delta;
            }
        }
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    rank
}

/// Reduces a rational vector to a primitive integer vector (same direction).
fn primitive(v: &[Rat]) -> Vec<BigInt> {
    let mut lcm = BigInt::one();
    for r in v {
        lcm = lcm.lcm(r.denom());
    }
    let ints: Vec<BigInt> = v.iter().map(|r| r.numer() * (&lcm / r.denom())).collect();
    let mut g = BigInt::zero();
    for i in &ints {
        g = g.gcd(i);
    }
    if g.is_zero() {
        return ints;
    }
    ints.into_iter().map(|i| i / &g).collect()
}

/// Orthogonal rational frame of an affine subspace.
///
/// `basis` vectors are exactly mutually orthogonal with rational norms within
/// 1e-8 of 1, so frame coordinates are exact rationals and near-isometric.
#[derive(Debug, Clone)]
pub struct AffineFrame {
    /// A point of the subspace.
    pub base: Vec<Rat>,
    /// Orthogonal, near-unit basis of the direction space.
    pub basis: Vec<Vec<Rat>>,
    /// Cached squared norms of the basis vectors.
    norm2: Vec<Rat>,
}

impl AffineFrame {
    /// Frame of the affine hull of a nonempty point set.
    pub fn from_points(points: &[Vec<Rat>]) -> AffineFrame {
        assert!(!points.is_empty());
        let base = points[0].clone();
        let mut basis: Vec<Vec<Rat>> = Vec::new();
        let mut norm2: Vec<Rat> = Vec::new();
        for p in &points[1..] {
            let mut v = rat_sub(p, &base);
            for (b, n2) in basis.iter().zip(&norm2) {
                let coef = rat_dot(&v, b) / n2;
                for (vi, bi) in v.iter_mut().zip(b) {
                    let delta = &coef * bi;
                    *vi = &*vi - &delta;
                }
            }
            let n2 = rat_dot(&v, &v);
            if n2.is_zero() {
                continue;
            }
            // Scale to near-unit norm by a rational approximation of
            // 1/sqrt(n2); orthogonality and exactness are preserved.
            let scale = Rat::from_float(rat_to_f64(&n2).sqrt().recip())
                .expect("norm is finite and positive");
            let v: Vec<Rat> = v.iter().map(|x| x * &scale).collect();
            let n2 = rat_dot(&v, &v);
            basis.push(v);
            norm2.push(n2);
        }
        AffineFrame { base, basis, norm2 }
    }

    /// Dimension of the subspace.
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Ambient dimension.
    pub fn ambient_dim(&self) -> usize {
        self.base.len()
    }

    /// Exact frame coordinates of an ambient point, or `None` when the point
    /// lies outside the subspace.
    pub fn coords(&self, x: &[Rat]) -> Option<Vec<Rat>> {
        let rel = rat_sub(x, &self.base);
        let y: Vec<Rat> = self
            .basis
            .iter()
            .zip(&self.norm2)
            .map(|(b, n2)| rat_dot(&rel, b) / n2)
            .collect();
        // Verify x = base + sum y_j b_j exactly.
        let mut recon = rel;
        for (yj, b) in y.iter().zip(&self.basis) {
            for (ri, bi) in recon.iter_mut().zip(b) {
                let delta = yj * bi;
                *ri = &*ri - &delta;
            }
        }
        if recon.iter().all(Rat::is_zero) {
            Some(y)
        } else {
            None
        }
    }

    /// Ambient point from exact frame coordinates.
    pub fn embed(&self, y: &[Rat]) -> Vec<Rat> {
        let mut x = self.base.clone();
        for (yj, b) in y.iter().zip(&self.basis) {
            for (xi, bi) in x.iter_mut().zip(b) {
                let delta = yj * bi;
                *xi = &*xi + &delta;
            }
        }
        x
    }

    /// Ambient point from floating-point frame coordinates.
    pub fn embed_f64(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec_to_f64(&self.base);
        for (yj, b) in y.iter().zip(&self.basis) {
            for (xi, bi) in x.iter_mut().zip(b) {
                *xi += yj * rat_to_f64(bi);
            }
        }
        x
    }

    /// Floating-point frame coordinates of an ambient point, together with
    /// the norm of the residual orthogonal to the subspace.
    pub fn coords_f64(&self, x: &[f64]) -> (Vec<f64>, f64) {
        let base = vec_to_f64(&self.base);
        let rel: Vec<f64> = x.iter().zip(&base).map(|(a, b)| a - b).collect();
        let mut y = Vec::with_capacity(self.basis.len());
        let mut recon = rel.clone();
        for (b, n2) in self.basis.iter().zip(&self.norm2) {
            let bf = vec_to_f64(b);
            let yj = crate::numerics::dot(&rel, &bf) / rat_to_f64(n2);
            for (ri, bi) in recon.iter_mut().zip(&bf) {
                *ri -= yj * bi;
            }
            y.push(yj);
        }
        (y, crate::numerics::norm(&recon))
    }

    /// Ambient representative of a linear functional given in frame
    /// coordinates: the vector q with <q|x - base> = <p|coords(x)> for every
    /// x in the affine hull (q = sum_l (p_l / |b_l|^2) b_l).
    pub fn covector(&self, p: &[f64]) -> Vec<f64> {
        let dim = self.base.len();
        let mut q = vec![0.0; dim];
        for ((pl, b), n2) in p.iter().zip(&self.basis).zip(&self.norm2) {
            let scale = pl / rat_to_f64(n2);
            for (qi, bi) in q.iter_mut().zip(b) {
                *qi += scale * rat_to_f64(bi);
            }
        }
        q
    }
}

/// A facet of the hull, as a hyperplane within the frame of the affine hull.
#[derive(Debug, Clone)]
pub struct Facet {
    /// Primitive integer outward normal in frame coordinates.
    pub normal: Vec<BigInt>,
    /// The facet plane is { y : <normal|y> = offset }.
    pub offset: Rat,
    /// Indices of the hull points lying on the facet plane.
    pub points: BTreeSet<usize>,
    /// Unit outward normal in frame coordinates (for tolerance tests).
    pub unit_normal: Vec<f64>,
    /// Offset matching the unit normal.
    pub unit_offset: f64,
}

/// A proper face of the hull (facets, ridges, down to vertices).
#[derive(Debug, Clone)]
pub struct Face {
    /// Indices of the hull points lying on the face.
    pub points: BTreeSet<usize>,
    /// Dimension of the affine hull of those points.
    pub dim: usize,
    /// Indices of the facets containing the face.
    pub facets: Vec<usize>,
}

/// Position of a query point relative to the hull.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    /// Outside the hull (or off its affine hull).
    Outside,
    /// In the relative interior.
    Interior,
    /// Within tolerance of the proper face with this index.
    OnFace(usize),
}

/// Exact convex hull of a finite point set, with face lattice.
#[derive(Debug, Clone)]
pub struct Hull {
    /// The distinct input points (ambient coordinates).
    pub points: Vec<Vec<Rat>>,
    /// Frame of the affine hull of the points.
    pub frame: AffineFrame,
    /// Exact frame coordinates of each point.
    pub coords: Vec<Vec<Rat>>,
    /// Facets within the frame; empty when the hull is a single point.
    pub facets: Vec<Facet>,
    /// All proper faces, sorted by decreasing dimension then point set.
    pub faces: Vec<Face>,
}

impl Hull {
    /// Builds the hull of a set of distinct points of dimension at most 3.
    pub fn build(points: Vec<Vec<Rat>>) -> Result<Hull> {
        if points.is_empty() {
            return Err(Error::Law("empty support".into()));
        }
        let frame = AffineFrame::from_points(&points);
        let k = frame.dim();
        if k > 3 {
            return Err(Error::Unsupported(format!(
                "convex hulls in dimension {k} (maximum is 3)"
            )));
        }
        let coords: Vec<Vec<Rat>> = points
            .iter()
            .map(|p| frame.coords(p).expect("point lies in its own affine hull"))
            .collect();
        {
            let mut sorted = coords.clone();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != coords.len() {
                return Err(Error::Law("support points are not distinct".into()));
            }
        }
        let facets = build_facets(&coords, k);
        let faces = build_face_lattice(&coords, &facets);
        Ok(Hull { points, frame, coords, facets, faces })
    }

    /// Dimension of the hull.
    pub fn dim(&self) -> usize {
        self.frame.dim()
    }

    /// Locates an ambient floating-point query relative to the hull.
    ///
    /// `tol` is an absolute geometric tolerance (distances in ambient scale).
    pub fn locate(&self, alpha: &[f64], tol: f64) -> Location {
        let (y, residual) = self.frame.coords_f64(alpha);
        if residual > tol {
            return Location::Outside;
        }
        if self.dim() == 0 {
            // Single point: the relative interior is the point itself.
            return if crate::numerics::norm(&y) <= tol {
                Location::Interior
            } else {
                Location::Outside
            };
        }
        let mut on: BTreeSet<usize> = BTreeSet::new();
        for (i, facet) in self.facets.iter().enumerate() {
            let signed = crate::numerics::dot(&facet.unit_normal, &y) - facet.unit_offset;
            if signed > tol {
                return Location::Outside;
            }
            if signed.abs() <= tol {
                on.insert(i);
            }
        }
        if on.is_empty() {
            return Location::Interior;
        }
        let mut meet: Option<BTreeSet<usize>> = None;
        for &i in &on {
            let pts = &self.facets[i].points;
            meet = Some(match meet {
                None => pts.clone(),
                Some(m) => m.intersection(pts).copied().collect(),
            });
        }
        let meet = meet.unwrap();
        if meet.is_empty() {
            // Tolerance picked up two facets with no common face; the query
            // is outside near a ridge of their planes.
            return Location::Outside;
        }
        match self.faces.iter().position(|f| f.points == meet) {
            Some(idx) => Location::OnFace(idx),
            None => Location::Outside,
        }
    }

    /// Face indices of the vertices (dimension-0 faces).
    pub fn vertex_faces(&self) -> Vec<usize> {
        (0..self.faces.len()).filter(|&i| self.faces[i].dim == 0).collect()
    }

    /// Ambient hyperplane of a facet: returns (normal, offset) with the hull
    /// on the side `<normal|x> <= offset`, as floating point.
    pub fn facet_ambient_hyperplane(&self, facet: usize) -> (Vec<f64>, f64) {
        let f = &self.facets[facet];
        // <n|y> = c in frame coordinates pulls back to
        // <sum_j (n_j / |b_j|^2) b_j | x - base> = c.
        let mut m = vec![Rat::zero(); self.frame.ambient_dim()];
        for ((nj, b), n2) in f.normal.iter().zip(&self.frame.basis).zip(&self.frame.norm2) {
            let coef = Rat::from(nj.clone()) / n2;
            for (mi, bi) in m.iter_mut().zip(b) {
                let delta = &coef * bi;
                *mi = &*mi + &delta;
            }
        }
        let c = &f.offset + rat_dot(&m, &self.frame.base);
        // Normalize to a unit normal for reporting.
        let mf = vec_to_f64(&m);
        let n = crate::numerics::norm(&mf);
        (mf.iter().map(|x| x / n).collect(), rat_to_f64(&c) / n)
    }
}

/// Enumerates facets by exact one-side tests over candidate hyperplanes.
fn build_facets(coords: &[Vec<Rat>], k: usize) -> Vec<Facet> {
    if k == 0 {
        return Vec::new();
    }
    let n = coords.len();
    // Candidate normals: in dimension 1 the two directions; otherwise normals
    // of hyperplanes spanned by point pairs (k=2) or triples (k=3).
    let mut candidates: Vec<(Vec<Rat>, usize)> = Vec::new();
    match k {
        1 => {
            for i in 0..n {
                candidates.push((vec![Rat::one()], i));
                candidates.push((vec![-Rat::one()], i));
            }
        }
        2 => {
            for i in 0..n {
                for j in i + 1..n {
                    let e = rat_sub(&coords[j], &coords[i]);
                    candidates.push((vec![e[1].clone(), -&e[0]], i));
                }
            }
        }
        3 => {
            for i in 0..n {
                for j in i + 1..n {
                    for l in j + 1..n {
                        let u = rat_sub(&coords[j], &coords[i]);
                        let v = rat_sub(&coords[l], &coords[i]);
                        let c = rat_cross(&u, &v);
                        if c.iter().all(Rat::is_zero) {
                            continue;
                        }
                        candidates.push((c, i));
                    }
                }
            }
        }
        _ => unreachable!("dimension checked by the caller"),
    }
    // Centroid is strictly interior because the point set spans dimension k.
    let count = Rat::from(BigInt::from(n));
    let centroid: Vec<Rat> = (0..k)
        .map(|c| {
            coords.iter().map(|p| p[c].clone()).fold(Rat::zero(), |s, t| s + t) / &count
        })
        .collect();
    let mut seen: BTreeMap<Vec<BigInt>, Facet> = BTreeMap::new();
    for (normal, through) in candidates {
        let c0 = rat_dot(&normal, &coords[through]);
        let values: Vec<Rat> = coords.iter().map(|p| rat_dot(&normal, p)).collect();
        let max = values.iter().max().unwrap().clone();
        let min = values.iter().min().unwrap().clone();
        // Supporting iff all points lie on one side of the plane through the
        // anchor point; orient the normal outward.
        let (normal, offset, values) = if max == c0 {
            (normal, c0, values)
        } else if min == c0 {
            let neg: Vec<Rat> = normal.iter().map(|x| -x).collect();
            let vals: Vec<Rat> = values.iter().map(|x| -x).collect();
            (neg, -c0, vals)
        } else {
            continue;
        };
        if rat_dot(&normal, &centroid) >= offset {
            // Plane through the centroid: not a proper supporting plane.
            continue;
        }
        let key = primitive(&normal);
        if seen.contains_key(&key) {
            continue;
        }
        let points: BTreeSet<usize> =
            (0..n).filter(|&i| values[i] == offset).collect();
        // A facet's point set must span dimension k-1.
        let pts: Vec<Vec<Rat>> = points.iter().map(|&i| coords[i].clone()).collect();
        if affine_rank(&pts) != k - 1 {
            continue;
        }
        let keyf = vec_to_f64(&key.iter().map(|i| Rat::from(i.clone())).collect::<Vec<_>>());
        let norm = crate::numerics::norm(&keyf);
        let scale = rat_dot(
            &key.iter().map(|i| Rat::from(i.clone())).collect::<Vec<_>>(),
            &normal,
        );
        // offset relative to the primitive normal: <key|y> = offset * |key|^2 / <key|normal> ... recompute directly.
        let unit_normal: Vec<f64> = keyf.iter().map(|x| x / norm).collect();
        let prim_offset = {
            // <normal|y> = offset and key = normal * t for a positive rational
            // t, so <key|y> = offset * t where t = |key|^2 / <key|normal>.
            let key_rat: Vec<Rat> = key.iter().map(|i| Rat::from(i.clone())).collect();
            let t = rat_dot(&key_rat, &key_rat) / &scale;
            &offset * t
        };
        let unit_offset = rat_to_f64(&prim_offset) / norm;
        seen.insert(
            key.clone(),
            Facet { normal: key, offset: prim_offset, points, unit_normal, unit_offset },
        );
    }
    seen.into_values().collect()
}

/// Face lattice as the intersection closure of the facet point sets.
fn build_face_lattice(coords: &[Vec<Rat>], facets: &[Facet]) -> Vec<Face> {
    let mut sets: BTreeSet<BTreeSet<usize>> =
        facets.iter().map(|f| f.points.clone()).collect();
    loop {
        let mut fresh: Vec<BTreeSet<usize>> = Vec::new();
        let all: Vec<&BTreeSet<usize>> = sets.iter().collect();
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                let meet: BTreeSet<usize> =
                    all[i].intersection(all[j]).copied().collect();
                if !meet.is_empty() && !sets.contains(&meet) {
                    fresh.push(meet);
                }
            }
        }
        if fresh.is_empty() {
            break;
        }
        sets.extend(fresh);
    }
    let mut faces: Vec<Face> = sets
        .into_iter()
        .map(|points| {
            let pts: Vec<Vec<Rat>> = points.iter().map(|&i| coords[i].clone()).collect();
            let dim = affine_rank(&pts);
            let facet_ids: Vec<usize> = facets
                .iter()
                .enumerate()
                .filter(|(_, f)| points.is_subset(&f.points))
                .map(|(i, _)| i)
                .collect();
            Face { points, dim, facets: facet_ids }
        })
        .collect();
    faces.sort_by(|a, b| {
        b.dim.cmp(&a.dim).then_with(|| {
            let av: Vec<usize> = a.points.iter().copied().collect();
            let bv: Vec<usize> = b.points.iter().copied().collect();
            av.cmp(&bv)
        })
    });
    faces
}
