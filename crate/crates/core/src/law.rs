//! Finite-support branching laws.
//!
//! A law describes the random vector (N, (X_1, phi_1), ..., (X_N, phi_N)) of
//! a branching random walk: N children, each carrying a displacement X_i in
//! R^d and a strictly positive mark phi_i. Two representations are supported:
//!
//! * `explicit`: finitely many atoms, each an ordered offspring list drawn
//!   with probability p_a;
//! * `iid_compound`: N has a finite integer law and the (X_i, phi_i) are
//!   i.i.d. with a finite value law mu, independent of N.
//!
//! Increments are ingested as decimal strings and kept as exact rationals, so
//! the convex position of the support and the masses E(N^F) of faces are
//! decided without rounding. Every expectation E sum_{i<=N} f(X_i, phi_i)
//! reduces to a weighted sum over a flattened term list: the weight of term
//! (a, i) is p_a in explicit form, and the weight of a value v is E(N) mu(v)
//! in compound form.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{parse_decimal, rat_to_f64, vec_to_f64, AffineFrame, Hull, Rat};

/// One child slot: exact displacement and mark.
#[derive(Debug, Clone, PartialEq)]
pub struct Offspring {
    /// Displacement X_i.
    pub x: Vec<Rat>,
    /// Mark phi_i > 0.
    pub phi: Rat,
}

/// One atom of an explicit law: an offspring list drawn with probability p.
#[derive(Debug, Clone)]
pub struct Atom {
    /// Atom probability.
    pub p: Rat,
    /// Offspring realized when the atom is drawn (may be empty only for
    /// extinction-permitting laws).
    pub offspring: Vec<Offspring>,
}

/// Law representation.
#[derive(Debug, Clone)]
pub enum Repr {
    /// Finitely many atoms with probabilities summing to 1.
    Explicit { atoms: Vec<Atom> },
    /// N with a finite integer law, values i.i.d. from mu independent of N.
    IidCompound {
        /// (n, P(N = n)) pairs.
        n_law: Vec<(usize, Rat)>,
        /// (value, mu(value)) pairs.
        mu: Vec<(Offspring, Rat)>,
    },
}

/// One summand of the expectation functional: E sum f = sum_terms w f(x, phi).
#[derive(Debug, Clone)]
pub struct Term {
    /// Exact weight (p_a for explicit terms, E(N) mu(v) for compound terms).
    pub w: Rat,
    /// Floating-point weight.
    pub weight: f64,
    /// log weight.
    pub logw: f64,
    /// Displacement as floating point.
    pub x: Vec<f64>,
    /// Mark as floating point.
    pub phi: f64,
    /// Index into the distinct support point table.
    pub point: usize,
}

/// A validated finite-support branching law.
#[derive(Debug, Clone)]
pub struct BranchLaw {
    d: usize,
    repr: Repr,
    allow_extinction: bool,
    terms: Vec<Term>,
    points: Vec<Vec<Rat>>,
    point_weights: Vec<Rat>,
    en: Rat,
    min_phi: f64,
    max_phi: f64,
    hull: Hull,
}

/// Diagnostics produced by [`BranchLaw::validate`].
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    /// E(N).
    pub mean_offspring: f64,
    /// True iff the support does not lie in a proper affine subspace, so the
    /// pressure is strictly convex in every direction.
    pub nondegenerate: bool,
    /// Affine dimension actually spanned by the support.
    pub full_dim: usize,
    /// Human-readable diagnostics.
    pub messages: Vec<String>,
}

/// A law tilted by exp(<q|x - alpha> - t phi): the sampling law of one spine
/// step, with total mass 1 exactly when t solves the implicit pressure
/// equation.
#[derive(Debug, Clone)]
pub struct FiniteTiltedLaw {
    /// Per-term tilted entries, aligned with the law's term list.
    pub entries: Vec<TiltedEntry>,
    /// Sum of the entry weights (= E Sigma_alpha(q, t)).
    pub total: f64,
    cumulative: Vec<f64>,
}

/// One tilted term.
#[derive(Debug, Clone)]
pub struct TiltedEntry {
    /// w_term * e^psi.
    pub weight: f64,
    /// Displacement.
    pub x: Vec<f64>,
    /// Mark.
    pub phi: f64,
    /// psi = <q|x - alpha> - t phi (the per-child tilt exponent).
    pub psi: f64,
}

impl FiniteTiltedLaw {
    /// Samples an entry index proportionally to the weights.
    pub fn sample(&self, rng: &mut impl rand::Rng) -> usize {
        let u: f64 = rng.gen::<f64>() * self.total;
        self.cumulative.partition_point(|&c| c < u).min(self.entries.len() - 1)
    }
}

// JSON configuration mirror of the law schema.

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LawConfig {
    d: usize,
    repr: String,
    #[serde(default)]
    atoms: Option<Vec<AtomConfig>>,
    #[serde(default)]
    n_law: Option<Vec<NLawConfig>>,
    #[serde(default)]
    mu: Option<Vec<MuConfig>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomConfig {
    p: String,
    offspring: Vec<OffspringConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OffspringConfig {
    x: Vec<String>,
    phi: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NLawConfig {
    n: usize,
    p: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MuConfig {
    x: Vec<String>,
    phi: String,
    p: String,
}

fn parse_offspring(field: &str, cfg: &OffspringConfig, d: usize) -> Result<Offspring> {
    if cfg.x.len() != d {
        return Err(Error::schema(
            format!("{field}.x"),
            format!("expected {d} coordinates, got {}", cfg.x.len()),
        ));
    }
    let x = cfg
        .x
        .iter()
        .map(|s| parse_decimal(s))
        .collect::<Result<Vec<Rat>>>()
        .map_err(|e| Error::schema(format!("{field}.x"), e.to_string()))?;
    let phi = parse_decimal(&cfg.phi)
        .map_err(|e| Error::schema(format!("{field}.phi"), e.to_string()))?;
    if !phi.is_positive() {
        return Err(Error::schema(format!("{field}.phi"), "phi must be > 0"));
    }
    Ok(Offspring { x, phi })
}

/// Checks a probability vector sums to 1 within 1e-12 and renormalizes it to
/// an exact total of 1 (so downstream exact mass comparisons stay exact).
fn normalize_probs(field: &str, probs: &mut [Rat]) -> Result<bool> {
    let total: Rat = probs.iter().fold(Rat::zero(), |s, p| s + p);
    if (rat_to_f64(&total) - 1.0).abs() > 1e-12 {
        return Err(Error::schema(
            field.to_string(),
            format!("probabilities sum to {}, not 1", rat_to_f64(&total)),
        ));
    }
    if total.is_one() {
        return Ok(false);
    }
    for p in probs.iter_mut() {
        *p = &*p / &total;
    }
    Ok(true)
}

impl BranchLaw {
    /// Parses and validates a law from its JSON description.
    pub fn from_json(text: &str) -> Result<BranchLaw> {
        let cfg: LawConfig = serde_json::from_str(text)
            .map_err(|e| Error::schema("law", e.to_string()))?;
        Self::from_config(cfg)
    }

    fn from_config(cfg: LawConfig) -> Result<BranchLaw> {
        if cfg.d == 0 {
            return Err(Error::schema("d", "dimension must be at least 1"));
        }
        let repr = match cfg.repr.as_str() {
            "explicit" => {
                let atoms_cfg = cfg.atoms.ok_or_else(|| {
                    Error::schema("atoms", "required for repr \"explicit\"")
                })?;
                if cfg.n_law.is_some() || cfg.mu.is_some() {
                    return Err(Error::schema(
                        "n_law",
                        "not allowed for repr \"explicit\"",
                    ));
                }
                if atoms_cfg.is_empty() {
                    return Err(Error::schema("atoms", "must be nonempty"));
                }
                let mut atoms = Vec::with_capacity(atoms_cfg.len());
                for (ai, a) in atoms_cfg.iter().enumerate() {
                    let p = parse_decimal(&a.p)
                        .map_err(|e| Error::schema(format!("atoms[{ai}].p"), e.to_string()))?;
                    if !p.is_positive() {
                        return Err(Error::schema(
                            format!("atoms[{ai}].p"),
                            "probability must be > 0",
                        ));
                    }
                    if a.offspring.is_empty() {
                        return Err(Error::schema(
                            format!("atoms[{ai}].offspring"),
                            "must be nonempty (P(N >= 1) = 1)",
                        ));
                    }
                    let offspring = a
                        .offspring
                        .iter()
                        .enumerate()
                        .map(|(oi, o)| {
                            parse_offspring(&format!("atoms[{ai}].offspring[{oi}]"), o, cfg.d)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    atoms.push(Atom { p, offspring });
                }
                Repr::Explicit { atoms }
            }
            "iid_compound" => {
                let n_cfg = cfg.n_law.ok_or_else(|| {
                    Error::schema("n_law", "required for repr \"iid_compound\"")
                })?;
                let mu_cfg = cfg.mu.ok_or_else(|| {
                    Error::schema("mu", "required for repr \"iid_compound\"")
                })?;
                if cfg.atoms.is_some() {
                    return Err(Error::schema(
                        "atoms",
                        "not allowed for repr \"iid_compound\"",
                    ));
                }
                if n_cfg.is_empty() || mu_cfg.is_empty() {
                    return Err(Error::schema("n_law", "n_law and mu must be nonempty"));
                }
                let mut n_law = Vec::with_capacity(n_cfg.len());
                for (i, e) in n_cfg.iter().enumerate() {
                    if e.n == 0 {
                        return Err(Error::schema(
                            format!("n_law[{i}].n"),
                            "offspring count 0 not allowed (P(N >= 1) = 1)",
                        ));
                    }
                    let p = parse_decimal(&e.p)
                        .map_err(|er| Error::schema(format!("n_law[{i}].p"), er.to_string()))?;
                    if !p.is_positive() {
                        return Err(Error::schema(
                            format!("n_law[{i}].p"),
                            "probability must be > 0",
                        ));
                    }
                    n_law.push((e.n, p));
                }
                let mut mu = Vec::with_capacity(mu_cfg.len());
                for (i, e) in mu_cfg.iter().enumerate() {
                    let v = parse_offspring(
                        &format!("mu[{i}]"),
                        &OffspringConfig { x: e.x.clone(), phi: e.phi.clone() },
                        cfg.d,
                    )?;
                    let p = parse_decimal(&e.p)
                        .map_err(|er| Error::schema(format!("mu[{i}].p"), er.to_string()))?;
                    if !p.is_positive() {
                        return Err(Error::schema(
                            format!("mu[{i}].p"),
                            "probability must be > 0",
                        ));
                    }
                    mu.push((v, p));
                }
                Repr::IidCompound { n_law, mu }
            }
            other => {
                return Err(Error::schema(
                    "repr",
                    format!("unknown representation `{other}`"),
                ))
            }
        };
        Self::assemble(cfg.d, repr, false)
    }

    /// Builds a law from an in-memory representation (used for restrictions).
    pub fn assemble(d: usize, mut repr: Repr, allow_extinction: bool) -> Result<BranchLaw> {
        if d > 3 {
            return Err(Error::Unsupported(format!(
                "laws in dimension {d} (exact geometry supports up to 3)"
            )));
        }
        // Normalize probabilities to an exact total of 1.
        match &mut repr {
            Repr::Explicit { atoms } => {
                let mut ps: Vec<Rat> = atoms.iter().map(|a| a.p.clone()).collect();
                normalize_probs("atoms[*].p", &mut ps)?;
                for (a, p) in atoms.iter_mut().zip(ps) {
                    a.p = p;
                }
                if !allow_extinction && atoms.iter().any(|a| a.offspring.is_empty()) {
                    return Err(Error::Law(
                        "empty offspring list requires extinction support".into(),
                    ));
                }
            }
            Repr::IidCompound { n_law, mu } => {
                let mut ps: Vec<Rat> = n_law.iter().map(|(_, p)| p.clone()).collect();
                normalize_probs("n_law[*].p", &mut ps)?;
                for (e, p) in n_law.iter_mut().zip(ps) {
                    e.1 = p;
                }
                let mut ps: Vec<Rat> = mu.iter().map(|(_, p)| p.clone()).collect();
                normalize_probs("mu[*].p", &mut ps)?;
                for (e, p) in mu.iter_mut().zip(ps) {
                    e.1 = p;
                }
                if !allow_extinction && n_law.iter().any(|&(n, _)| n == 0) {
                    return Err(Error::Law(
                        "P(N = 0) > 0 requires extinction support".into(),
                    ));
                }
            }
        }
        // E(N), exactly.
        let en: Rat = match &repr {
            Repr::Explicit { atoms } => atoms
                .iter()
                .map(|a| &a.p * Rat::from(BigInt::from(a.offspring.len())))
                .fold(Rat::zero(), |s, t| s + t),
            Repr::IidCompound { n_law, .. } => n_law
                .iter()
                .map(|(n, p)| p * Rat::from(BigInt::from(*n)))
                .fold(Rat::zero(), |s, t| s + t),
        };
        if !allow_extinction && en <= Rat::one() {
            return Err(Error::Law(format!(
                "E(N) = {} but supercritical branching (E(N) > 1) is required",
                rat_to_f64(&en)
            )));
        }
        if en.is_zero() {
            return Err(Error::Law("law has no offspring at all".into()));
        }
        // Flatten into terms and the distinct support point table.
        let mut points: Vec<Vec<Rat>> = Vec::new();
        let mut point_weights: Vec<Rat> = Vec::new();
        let mut terms: Vec<Term> = Vec::new();
        let mut push_term = |x: &Vec<Rat>, phi: &Rat, w: Rat| {
            let point = match points.iter().position(|p| p == x) {
                Some(i) => i,
                None => {
                    points.push(x.clone());
                    point_weights.push(Rat::zero());
                    points.len() - 1
                }
            };
            point_weights[point] = &point_weights[point] + &w;
            let weight = rat_to_f64(&w);
            terms.push(Term {
                weight,
                logw: weight.ln(),
                w,
                x: vec_to_f64(x),
                phi: rat_to_f64(phi),
                point,
            });
        };
        match &repr {
            Repr::Explicit { atoms } => {
                for a in atoms {
                    for o in &a.offspring {
                        push_term(&o.x, &o.phi, a.p.clone());
                    }
                }
            }
            Repr::IidCompound { mu, .. } => {
                for (v, p) in mu {
                    push_term(&v.x, &v.phi, &en * p);
                }
            }
        }
        if terms.is_empty() {
            return Err(Error::Law("law has no offspring at all".into()));
        }
        let min_phi = terms.iter().map(|t| t.phi).fold(f64::INFINITY, f64::min);
        let max_phi = terms.iter().map(|t| t.phi).fold(0.0f64, f64::max);
        let hull = Hull::build(points.clone())?;
        Ok(BranchLaw {
            d,
            repr,
            allow_extinction,
            terms,
            points,
            point_weights,
            en,
            min_phi,
            max_phi,
            hull,
        })
    }

    /// Ambient dimension of the displacements.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Representation.
    pub fn repr(&self) -> &Repr {
        &self.repr
    }

    /// True when the law may realize N = 0 (face restrictions).
    pub fn allow_extinction(&self) -> bool {
        self.allow_extinction
    }

    /// The flattened expectation terms.
    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Distinct support points, exact.
    pub fn points(&self) -> &[Vec<Rat>] {
        &self.points
    }

    /// Exact mass E(#{i : X_i = points[k]}) per support point.
    pub fn point_weights(&self) -> &[Rat] {
        &self.point_weights
    }

    /// E(N), exact.
    pub fn en_exact(&self) -> &Rat {
        &self.en
    }

    /// E(N) as floating point.
    pub fn en(&self) -> f64 {
        rat_to_f64(&self.en)
    }

    /// Smallest mark in the support.
    pub fn min_phi(&self) -> f64 {
        self.min_phi
    }

    /// Largest mark in the support.
    pub fn max_phi(&self) -> f64 {
        self.max_phi
    }

    /// Exact convex hull of the support with its face lattice.
    pub fn hull(&self) -> &Hull {
        &self.hull
    }

    /// Exact mass E(N^S) of a set of support point indices.
    pub fn mass_of(&self, point_ids: &BTreeSet<usize>) -> Rat {
        point_ids
            .iter()
            .map(|&i| self.point_weights[i].clone())
            .fold(Rat::zero(), |s, t| s + t)
    }

    /// Structural diagnostics.
    pub fn validate(&self) -> ValidationReport {
        let full_dim = self.hull.dim();
        let nondegenerate = full_dim == self.d;
        let mut messages = Vec::new();
        if !nondegenerate {
            messages.push(format!(
                "support spans affine dimension {full_dim} < d = {}; the pressure is \
                 degenerate along the orthogonal directions",
                self.d
            ));
        }
        if self.allow_extinction {
            messages.push("law permits extinction (face restriction)".into());
        }
        if self.en <= Rat::one() {
            messages.push(format!(
                "E(N) = {} is not supercritical",
                rat_to_f64(&self.en)
            ));
        }
        ValidationReport {
            mean_offspring: self.en(),
            nondegenerate,
            full_dim,
            messages,
        }
    }

    /// E sum_{i=1}^N f(X_i, phi_i).
    pub fn expect_sum(&self, mut f: impl FnMut(&[f64], f64) -> f64) -> f64 {
        self.terms.iter().map(|t| t.weight * f(&t.x, t.phi)).sum()
    }

    /// Tilted law with weights w_term * exp(<q|x - alpha> - t phi).
    pub fn tilt(&self, q: &[f64], alpha: &[f64], t: f64) -> Result<FiniteTiltedLaw> {
        debug_assert_eq!(q.len(), self.d);
        debug_assert_eq!(alpha.len(), self.d);
        let mut entries = Vec::with_capacity(self.terms.len());
        let mut cumulative = Vec::with_capacity(self.terms.len());
        let mut total = 0.0f64;
        for term in &self.terms {
            let psi = crate::numerics::dot(q, &term.x)
                - crate::numerics::dot(q, alpha)
                - t * term.phi;
            let exponent = term.logw + psi;
            if exponent > 700.0 {
                return Err(Error::Domain(format!(
                    "tilt exponent {exponent:.1} overflows for |q| = {:.3e}, t = {t:.3e}",
                    crate::numerics::norm(q)
                )));
            }
            let weight = exponent.exp();
            total += weight;
            cumulative.push(total);
            entries.push(TiltedEntry { weight, x: term.x.clone(), phi: term.phi, psi });
        }
        Ok(FiniteTiltedLaw { entries, total, cumulative })
    }

    /// Law of (N^F, X_F - alpha_F, phi_F): children whose displacement lies on
    /// the affine subspace spanned by `frame`, re-expressed in the frame's
    /// direction coordinates (the frame base plays the role of alpha_F).
    pub fn restrict_to_face(&self, frame: &AffineFrame) -> Result<BranchLaw> {
        if frame.ambient_dim() != self.d {
            return Err(Error::Domain(format!(
                "face frame lives in dimension {}, law in {}",
                frame.ambient_dim(),
                self.d
            )));
        }
        // Exact membership per distinct support point.
        let coords: Vec<Option<Vec<Rat>>> =
            self.points.iter().map(|p| frame.coords(p)).collect();
        let mass: Rat = self
            .point_weights
            .iter()
            .zip(&coords)
            .filter(|(_, c)| c.is_some())
            .map(|(w, _)| w.clone())
            .fold(Rat::zero(), |s, t| s + t);
        if mass.is_zero() {
            return Err(Error::Domain("no mass on face".into()));
        }
        let target_d = frame.dim();
        match &self.repr {
            Repr::Explicit { atoms } => {
                let mut restricted = Vec::with_capacity(atoms.len());
                let mut any_dropped = false;
                for a in atoms {
                    let offspring: Vec<Offspring> = a
                        .offspring
                        .iter()
                        .filter_map(|o| {
                            frame.coords(&o.x).map(|y| Offspring { x: y, phi: o.phi.clone() })
                        })
                        .collect();
                    if offspring.len() < a.offspring.len() {
                        any_dropped = true;
                    }
                    restricted.push(Atom { p: a.p.clone(), offspring });
                }
                Self::assemble(
                    target_d,
                    Repr::Explicit { atoms: restricted },
                    self.allow_extinction || any_dropped,
                )
            }
            Repr::IidCompound { n_law, mu } => {
                // Thinning keeps the compound structure: each child lands on
                // the face independently with probability mu(F), so N^F given
                // N = n is Binomial(n, mu(F)) and the values are i.i.d. from
                // the normalized restriction of mu.
                let on_face: Vec<Option<Vec<Rat>>> =
                    mu.iter().map(|(v, _)| frame.coords(&v.x)).collect();
                let mu_f: Rat = mu
                    .iter()
                    .zip(&on_face)
                    .filter(|(_, c)| c.is_some())
                    .map(|((_, p), _)| p.clone())
                    .fold(Rat::zero(), |s, t| s + t);
                let complement = Rat::one() - &mu_f;
                let mut n_mass: std::collections::BTreeMap<usize, Rat> =
                    std::collections::BTreeMap::new();
                for (n, p) in n_law {
                    for k in 0..=*n {
                        let binom = num_integer::binomial(BigInt::from(*n), BigInt::from(k));
                        let prob = p
                            * Rat::from(binom)
                            * pow_rat(&mu_f, k)
                            * pow_rat(&complement, n - k);
                        if prob.is_zero() {
                            continue;
                        }
                        let e = n_mass.entry(k).or_insert_with(Rat::zero);
                        *e = &*e + &prob;
                    }
                }
                let restricted_mu: Vec<(Offspring, Rat)> = mu
                    .iter()
                    .zip(&on_face)
                    .filter_map(|((v, p), c)| {
                        c.as_ref().map(|y| {
                            (Offspring { x: y.clone(), phi: v.phi.clone() }, p / &mu_f)
                        })
                    })
                    .collect();
                let n_law_f: Vec<(usize, Rat)> = n_mass.into_iter().collect();
                let dropped = mu_f != Rat::one();
                Self::assemble(
                    target_d,
                    Repr::IidCompound { n_law: n_law_f, mu: restricted_mu },
                    self.allow_extinction || dropped,
                )
            }
        }
    }

    /// Expands a compound law into explicit atoms (one per (n, value
    /// sequence)); errors when the expansion would exceed 10^5 atoms.
    pub fn to_explicit(&self) -> Result<BranchLaw> {
        match &self.repr {
            Repr::Explicit { .. } => Ok(self.clone()),
            Repr::IidCompound { n_law, mu } => {
                let mut count: usize = 0;
                for (n, _) in n_law {
                    let seqs = mu.len().checked_pow(*n as u32).unwrap_or(usize::MAX);
                    count = count.saturating_add(seqs);
                }
                if count > 100_000 {
                    return Err(Error::Unsupported(format!(
                        "explicit expansion needs {count} atoms (cap 100000)"
                    )));
                }
                let mut atoms = Vec::with_capacity(count);
                for (n, pn) in n_law {
                    if *n == 0 {
                        atoms.push(Atom { p: pn.clone(), offspring: Vec::new() });
                        continue;
                    }
                    // Enumerate mu^n sequences in lexicographic order.
                    let mut idx = vec![0usize; *n];
                    loop {
                        let mut p = pn.clone();
                        let mut offspring = Vec::with_capacity(*n);
                        for &i in &idx {
                            p = &p * &mu[i].1;
                            offspring.push(mu[i].0.clone());
                        }
                        atoms.push(Atom { p, offspring });
                        // Increment the mixed-radix counter.
                        let mut pos = *n;
                        loop {
                            if pos == 0 {
                                break;
                            }
                            pos -= 1;
                            idx[pos] += 1;
                            if idx[pos] < mu.len() {
                                break;
                            }
                            idx[pos] = 0;
                        }
                        if pos == 0 && idx[0] == 0 {
                            break;
                        }
                    }
                }
                Self::assemble(self.d, Repr::Explicit { atoms }, self.allow_extinction)
            }
        }
    }
}

fn pow_rat(r: &Rat, k: usize) -> Rat {
    let mut out = Rat::one();
    for _ in 0..k {
        out = out * r;
    }
    out
}
