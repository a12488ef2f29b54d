//! Pressures, implicit pressures, Legendre duals, and dimension spectra.
//!
//! The pressure of a law is P(q) = log E sum_i e^{<q|X_i>}, a smooth strictly
//! convex function whose concave-convention Legendre transform
//! P*(alpha) = inf_q P(q) - <q|alpha> is the level-set dimension spectrum in
//! the unit metric. The set I_X = {P* >= 0} is convex and compact.
//!
//! For the random ultrametric built from the marks, the relevant object is
//! the implicit pressure: given a tilt q and a center alpha, t(q) is the
//! unique root of E sum_i exp(<q|X_i - alpha> - t phi_i) = 1. Its gradient is
//! (beta - alpha)/lambda where beta = E-tilted mean displacement and lambda =
//! E-tilted mean mark (the Lyapunov exponent); the entropy h is minus the
//! tilted mean of the exponent psi_i = <q|X_i - alpha> - t phi_i, and
//! t - <q|grad t> = h/lambda. Minimizing t over q (the point q_alpha) yields
//! the dimension of the level set E(X, alpha) in the d_phi metric.
//!
//! Legendre values on the boundary of the support hull are recession limits,
//! never attained at finite q; they equal the Legendre value of the law
//! restricted to the boundary face. The solver therefore locates alpha in the
//! exact support hull first: strictly inside, a damped Newton iteration
//! attains the infimum; on a proper face, the terms are restricted to that
//! face and the transform recurses in lower dimension. This replaces any
//! divergence-threshold heuristic with an exact combinatorial decision, while
//! a norm cap on the iterates remains as a solver guard.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{rat_to_f64, AffineFrame, Hull, Location, Rat};
use crate::law::BranchLaw;
use crate::numerics::{dot, log_sum_exp, minimize_convex, norm, softmax};

/// Geometric tolerance for hull membership (absolute, ambient scale).
pub const GEOM_TOL: f64 = 1e-9;
/// Tolerance separating interior / zero / negative Legendre values.
pub const VALUE_TOL: f64 = 1e-8;
/// Iterate norm beyond which a minimization is declared non-attained.
pub const NORM_CAP: f64 = 1e3;

/// Value, gradient, and optional Hessian of a convex function at a point.
#[derive(Debug, Clone, Serialize)]
pub struct ConvexEval {
    /// Function value.
    pub value: f64,
    /// Gradient.
    pub gradient: Vec<f64>,
    /// Row-major Hessian when second order was requested.
    pub hessian: Option<Vec<f64>>,
}

/// A solved point of the implicit pressure equation.
#[derive(Debug, Clone, Serialize)]
pub struct ImplicitPressurePoint {
    /// Tilt.
    pub q: Vec<f64>,
    /// Center.
    pub alpha: Vec<f64>,
    /// The implicit pressure value: E sum exp(<q|x - alpha> - t phi) = 1.
    pub t: f64,
    /// Gradient of t in q: (beta - alpha) / lambda.
    pub gradient: Vec<f64>,
    /// Entropy: minus the tilted mean of the exponent psi.
    pub h: f64,
    /// Lyapunov exponent: tilted mean mark.
    pub lambda: f64,
    /// Tilted mean displacement.
    pub beta: Vec<f64>,
}

/// Classification of alpha relative to I_X.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MembershipClass {
    /// P*(alpha) > 0, attained at finite q.
    Interior,
    /// P*(alpha) = 0, attained at finite q (critical boundary).
    BoundaryCrit,
    /// alpha in boundary of I_X with the infimum a recession limit.
    BoundaryNoncrit,
    /// P*(alpha) < 0 or alpha outside the support hull.
    Outside,
}

impl std::fmt::Display for MembershipClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MembershipClass::Interior => "interior",
            MembershipClass::BoundaryCrit => "boundary_crit",
            MembershipClass::BoundaryNoncrit => "boundary_noncrit",
            MembershipClass::Outside => "outside",
        };
        f.write_str(s)
    }
}

/// Result of [`membership_ix`].
#[derive(Debug, Clone, Serialize)]
pub struct Membership {
    /// Class of alpha.
    pub class: MembershipClass,
    /// P*(alpha) (may be -inf outside the support hull).
    pub p_star: f64,
    /// Attaining tilt, when one exists.
    pub q: Option<Vec<f64>>,
}

/// One row of a spectrum table.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumRow {
    /// Level vector.
    pub alpha: Vec<f64>,
    /// Whether alpha lies in I_X.
    pub in_ix: bool,
    /// Membership class.
    pub class: MembershipClass,
    /// P*(alpha): dimension in the unit metric on I_X, -inf outside the hull.
    pub dim_unit: f64,
    /// Dimension in the d_phi metric (implicit-pressure spectrum).
    pub dim_phi: f64,
    /// Minimizing tilt q_alpha when alpha is interior or critical.
    pub q_alpha: Option<Vec<f64>>,
    /// Implicit pressure value at q_alpha.
    pub t: Option<f64>,
}

/// Which metric a spectrum is reported for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Unit metric: P_X^*(alpha).
    Unit,
    /// Random ultrametric d_phi: P_{X,phi,alpha}^*(0).
    Phi,
}

/// P(q) = log E sum e^{<q|x>} with derivatives up to `order`.
pub fn p_tilde(law: &BranchLaw, q: &[f64], order: u8) -> ConvexEval {
    let exps: Vec<f64> =
        law.terms().iter().map(|t| t.logw + dot(q, &t.x)).collect();
    let sm = softmax(&exps);
    let d = law.d();
    let mut gradient = vec![0.0; d];
    for (w, t) in sm.weights.iter().zip(law.terms()) {
        for (g, xi) in gradient.iter_mut().zip(&t.x) {
            *g += w * xi;
        }
    }
    let hessian = if order >= 2 {
        let mut h = vec![0.0; d * d];
        for (w, t) in sm.weights.iter().zip(law.terms()) {
            for j in 0..d {
                for k in 0..d {
                    h[j * d + k] += w * t.x[j] * t.x[k];
                }
            }
        }
        for j in 0..d {
            for k in 0..d {
                h[j * d + k] -= gradient[j] * gradient[k];
            }
        }
        Some(h)
    } else {
        None
    };
    ConvexEval { value: sm.log_z, gradient, hessian }
}

/// Concave-convention Legendre transform of a log-sum-exp function
/// f(q) = lse(logw_i + <q|x_i>) at alpha: inf_q f(q) - <q|alpha>.
///
/// `term_point[i]` indexes the distinct point of term i in `hull`. Strictly
/// inside the hull the infimum is attained and found by damped Newton in the
/// hull's frame coordinates; on a proper face it equals the transform of the
/// face-restricted terms (recursion); outside it is -inf.
fn legendre(
    logw: &[f64],
    term_point: &[usize],
    hull: &Hull,
    alpha: &[f64],
    what: &str,
) -> Result<(f64, Option<Vec<f64>>)> {
    match hull.locate(alpha, GEOM_TOL) {
        Location::Outside => Ok((f64::NEG_INFINITY, None)),
        Location::Interior => {
            let k = hull.dim();
            if k == 0 {
                // All mass on one point equal to alpha: constant in q.
                return Ok((log_sum_exp(logw), Some(vec![0.0; alpha.len()])));
            }
            // Work in frame coordinates: y_i exact-to-f64 per point.
            let ys: Vec<Vec<f64>> = hull
                .coords
                .iter()
                .map(|c| c.iter().map(rat_to_f64).collect())
                .collect();
            let (y_alpha, _) = hull.frame.coords_f64(alpha);
            let objective = |p: &[f64]| {
                let exps: Vec<f64> = logw
                    .iter()
                    .zip(term_point)
                    .map(|(lw, &pt)| lw + dot(p, &ys[pt]))
                    .collect();
                let sm = softmax(&exps);
                let mut grad = vec![0.0; k];
                for (w, &pt) in sm.weights.iter().zip(term_point) {
                    for (g, yi) in grad.iter_mut().zip(&ys[pt]) {
                        *g += w * yi;
                    }
                }
                let mut hess = vec![0.0; k * k];
                for (w, &pt) in sm.weights.iter().zip(term_point) {
                    for j in 0..k {
                        for l in 0..k {
                            hess[j * k + l] += w * ys[pt][j] * ys[pt][l];
                        }
                    }
                }
                for j in 0..k {
                    for l in 0..k {
                        hess[j * k + l] -= grad[j] * grad[l];
                    }
                }
                let value = sm.log_z - dot(p, &y_alpha);
                for (g, ya) in grad.iter_mut().zip(&y_alpha) {
                    *g -= ya;
                }
                (value, grad, hess)
            };
            let min = minimize_convex(&vec![0.0; k], objective, NORM_CAP, what)?;
            Ok((min.value, Some(hull.frame.covector(&min.x))))
        }
        Location::OnFace(face_id) => {
            let face = &hull.faces[face_id];
            let ids: Vec<usize> = face.points.iter().copied().collect();
            let sub_points: Vec<Vec<Rat>> =
                ids.iter().map(|&i| hull.points[i].clone()).collect();
            let mut sub_logw = Vec::new();
            let mut sub_term_point = Vec::new();
            for (lw, &pt) in logw.iter().zip(term_point) {
                if let Some(new_idx) = ids.iter().position(|&i| i == pt) {
                    sub_logw.push(*lw);
                    sub_term_point.push(new_idx);
                }
            }
            let sub_hull = Hull::build(sub_points)?;
            let (value, _) = legendre(&sub_logw, &sub_term_point, &sub_hull, alpha, what)?;
            Ok((value, None))
        }
    }
}

/// P*(alpha) = inf_q P(q) - <q|alpha>, with the attaining q when one exists.
pub fn p_tilde_star(law: &BranchLaw, alpha: &[f64]) -> Result<(f64, Option<Vec<f64>>)> {
    let logw: Vec<f64> = law.terms().iter().map(|t| t.logw).collect();
    let term_point: Vec<usize> = law.terms().iter().map(|t| t.point).collect();
    legendre(&logw, &term_point, law.hull(), alpha, "p_tilde_star")
}

/// Classifies alpha relative to I_X = {P* >= 0}.
pub fn membership_ix(law: &BranchLaw, alpha: &[f64]) -> Result<Membership> {
    let location = law.hull().locate(alpha, GEOM_TOL);
    let (p_star, q) = p_tilde_star(law, alpha)?;
    let class = match location {
        Location::Outside => MembershipClass::Outside,
        Location::Interior => {
            if p_star > VALUE_TOL {
                MembershipClass::Interior
            } else if p_star >= -VALUE_TOL {
                MembershipClass::BoundaryCrit
            } else {
                MembershipClass::Outside
            }
        }
        Location::OnFace(_) => {
            if p_star >= -VALUE_TOL {
                MembershipClass::BoundaryNoncrit
            } else {
                MembershipClass::Outside
            }
        }
    };
    Ok(Membership { class, p_star, q })
}

/// Solves the implicit pressure equation at (q, alpha).
pub fn implicit_pressure(
    law: &BranchLaw,
    q: &[f64],
    alpha: &[f64],
) -> Result<ImplicitPressurePoint> {
    let base: Vec<f64> = law
        .terms()
        .iter()
        .map(|t| t.logw + dot(q, &t.x) - dot(q, alpha))
        .collect();
    let phis: Vec<f64> = law.terms().iter().map(|t| t.phi).collect();
    // G(t) = log E Sigma_alpha(q, t) is strictly decreasing with
    // G'(t) = -(tilted mean of phi).
    let g = |t: f64| {
        let exps: Vec<f64> =
            base.iter().zip(&phis).map(|(b, p)| b - t * p).collect();
        let sm = softmax(&exps);
        let mean_phi: f64 =
            sm.weights.iter().zip(&phis).map(|(w, p)| w * p).sum();
        (sm.log_z, -mean_phi)
    };
    let hint = g(0.0).0 / law.min_phi();
    let t = crate::numerics::decreasing_root(g, hint, "implicit_pressure")?;
    let exps: Vec<f64> = base.iter().zip(&phis).map(|(b, p)| b - t * p).collect();
    let sm = softmax(&exps);
    let d = law.d();
    let mut beta = vec![0.0; d];
    let mut lambda = 0.0;
    let mut h = 0.0;
    for ((w, term), b) in sm.weights.iter().zip(law.terms()).zip(&base) {
        for (bi, xi) in beta.iter_mut().zip(&term.x) {
            *bi += w * xi;
        }
        lambda += w * term.phi;
        // psi excludes the law weight: psi = <q|x - alpha> - t phi.
        let psi = (b - term.logw) - t * term.phi;
        h -= w * psi;
    }
    let gradient: Vec<f64> =
        beta.iter().zip(alpha).map(|(b, a)| (b - a) / lambda).collect();
    Ok(ImplicitPressurePoint {
        q: q.to_vec(),
        alpha: alpha.to_vec(),
        t,
        gradient,
        h,
        lambda,
        beta,
    })
}

/// Full softmax moments needed for the implicit-pressure Hessian.
fn implicit_with_hessian(
    law: &BranchLaw,
    q: &[f64],
    alpha: &[f64],
) -> Result<(ImplicitPressurePoint, Vec<f64>)> {
    let ip = implicit_pressure(law, q, alpha)?;
    let d = law.d();
    let exps: Vec<f64> = law
        .terms()
        .iter()
        .map(|t| t.logw + dot(q, &t.x) - dot(q, alpha) - ip.t * t.phi)
        .collect();
    let sm = softmax(&exps);
    // Centered softmax moments of u = x - alpha and phi.
    let mut m_uu = vec![0.0; d * d];
    let mut m_uphi = vec![0.0; d];
    let mut m_phi2 = 0.0;
    let mut m_u = vec![0.0; d];
    let mut m_phi = 0.0;
    for (w, term) in sm.weights.iter().zip(law.terms()) {
        let u: Vec<f64> = term.x.iter().zip(alpha).map(|(x, a)| x - a).collect();
        for j in 0..d {
            m_u[j] += w * u[j];
            m_uphi[j] += w * u[j] * term.phi;
            for k in 0..d {
                m_uu[j * d + k] += w * u[j] * u[k];
            }
        }
        m_phi += w * term.phi;
        m_phi2 += w * term.phi * term.phi;
    }
    // F(q,t) = lse; t_qq = [F_qq + F_qt g^T + g F_qt^T + F_tt g g^T] / lambda
    // with g = grad t, F_qq = Cov(u), F_qt = -Cov(u, phi), F_tt = Var(phi).
    let gvec = &ip.gradient;
    let mut hess = vec![0.0; d * d];
    for j in 0..d {
        for k in 0..d {
            let f_qq = m_uu[j * d + k] - m_u[j] * m_u[k];
            let f_qt_j = -(m_uphi[j] - m_u[j] * m_phi);
            let f_qt_k = -(m_uphi[k] - m_u[k] * m_phi);
            let f_tt = m_phi2 - m_phi * m_phi;
            hess[j * d + k] = (f_qq
                + f_qt_j * gvec[k]
                + gvec[j] * f_qt_k
                + f_tt * gvec[j] * gvec[k])
                / ip.lambda;
        }
    }
    Ok((ip, hess))
}

/// Finds the unique stationary tilt q_alpha minimizing q -> t(q); the value
/// there is the d_phi-metric dimension of the level set at alpha.
pub fn q_alpha(law: &BranchLaw, alpha: &[f64]) -> Result<ImplicitPressurePoint> {
    let m = membership_ix(law, alpha)?;
    if !matches!(
        m.class,
        MembershipClass::Interior | MembershipClass::BoundaryCrit
    ) {
        return Err(Error::Domain(format!(
            "no interior stationary point: alpha is {} for I_X",
            m.class
        )));
    }
    let objective = |qv: &[f64]| match implicit_with_hessian(law, qv, alpha) {
        Ok((ip, hess)) => (ip.t, ip.gradient, hess),
        Err(_) => (f64::INFINITY, vec![0.0; law.d()], vec![0.0; law.d() * law.d()]),
    };
    let min = minimize_convex(&vec![0.0; law.d()], objective, NORM_CAP, "q_alpha")?;
    implicit_pressure(law, &min.x, alpha)
}

/// The tilted cumulant Lambda_psi(lam) = log E sum e^{<lam|x> + psi},
/// where psi is taken at the implicit-pressure solution for (q, alpha).
pub fn lambda_psi(
    law: &BranchLaw,
    q: &[f64],
    alpha: &[f64],
    lam: &[f64],
    order: u8,
) -> Result<ConvexEval> {
    let ip = implicit_pressure(law, q, alpha)?;
    let exps: Vec<f64> = law
        .terms()
        .iter()
        .map(|t| {
            let psi = dot(q, &t.x) - dot(q, alpha) - ip.t * t.phi;
            t.logw + psi + dot(lam, &t.x)
        })
        .collect();
    let sm = softmax(&exps);
    let d = law.d();
    let mut gradient = vec![0.0; d];
    for (w, t) in sm.weights.iter().zip(law.terms()) {
        for (g, xi) in gradient.iter_mut().zip(&t.x) {
            *g += w * xi;
        }
    }
    let hessian = if order >= 2 {
        let mut h = vec![0.0; d * d];
        for (w, t) in sm.weights.iter().zip(law.terms()) {
            for j in 0..d {
                for k in 0..d {
                    h[j * d + k] += w * t.x[j] * t.x[k];
                }
            }
        }
        for j in 0..d {
            for k in 0..d {
                h[j * d + k] -= gradient[j] * gradient[k];
            }
        }
        Some(h)
    } else {
        None
    };
    Ok(ConvexEval { value: sm.log_z, gradient, hessian })
}

/// Legendre transform of Lambda_psi: inf_lam Lambda(lam) - <lam|target>.
pub fn lambda_psi_star(
    law: &BranchLaw,
    q: &[f64],
    alpha: &[f64],
    target: &[f64],
) -> Result<(f64, Option<Vec<f64>>)> {
    let ip = implicit_pressure(law, q, alpha)?;
    let logw: Vec<f64> = law
        .terms()
        .iter()
        .map(|t| t.logw + dot(q, &t.x) - dot(q, alpha) - ip.t * t.phi)
        .collect();
    let term_point: Vec<usize> = law.terms().iter().map(|t| t.point).collect();
    legendre(&logw, &term_point, law.hull(), target, "lambda_psi_star")
}

/// Lambda_psi^*(grad Lambda_psi(lam)) evaluated without a solver:
/// returns (grad Lambda_psi(lam), Lambda(lam) - <lam|grad>).
pub fn rate_at_grad(
    law: &BranchLaw,
    q: &[f64],
    alpha: &[f64],
    lam: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let ev = lambda_psi(law, q, alpha, lam, 1)?;
    let rate = ev.value - dot(lam, &ev.gradient);
    Ok((ev.gradient, rate))
}

/// Dimension of E(X, alpha) in the d_phi metric, on all of I_X: via q_alpha
/// in the critical domain, by face restriction on the non-critical boundary.
pub fn phi_spectrum(law: &BranchLaw, alpha: &[f64]) -> Result<f64> {
    let m = membership_ix(law, alpha)?;
    match m.class {
        MembershipClass::Outside => Ok(f64::NEG_INFINITY),
        MembershipClass::Interior | MembershipClass::BoundaryCrit => {
            Ok(q_alpha(law, alpha)?.t.max(0.0))
        }
        MembershipClass::BoundaryNoncrit => {
            let Location::OnFace(face_id) = law.hull().locate(alpha, GEOM_TOL) else {
                return Ok(f64::NEG_INFINITY);
            };
            let face = &law.hull().faces[face_id];
            let pts: Vec<Vec<Rat>> = face
                .points
                .iter()
                .map(|&i| law.hull().points[i].clone())
                .collect();
            let frame = AffineFrame::from_points(&pts);
            let restricted = law.restrict_to_face(&frame)?;
            let (target, _) = frame.coords_f64(alpha);
            phi_spectrum(&restricted, &target)
        }
    }
}

/// Spectrum rows over a grid of levels.
pub fn spectrum_table(law: &BranchLaw, grid: &[Vec<f64>]) -> Result<Vec<SpectrumRow>> {
    grid.iter().map(|alpha| spectrum_row(law, alpha)).collect()
}

/// One spectrum row.
pub fn spectrum_row(law: &BranchLaw, alpha: &[f64]) -> Result<SpectrumRow> {
    let m = membership_ix(law, alpha)?;
    let in_ix = m.class != MembershipClass::Outside;
    let dim_unit = if in_ix { m.p_star.max(0.0) } else { m.p_star };
    let (dim_phi, q_a, t) = match m.class {
        MembershipClass::Outside => (f64::NEG_INFINITY, None, None),
        MembershipClass::Interior | MembershipClass::BoundaryCrit => {
            let ip = q_alpha(law, alpha)?;
            (ip.t.max(0.0), Some(ip.q.clone()), Some(ip.t))
        }
        MembershipClass::BoundaryNoncrit => (phi_spectrum(law, alpha)?, None, None),
    };
    Ok(SpectrumRow {
        alpha: alpha.to_vec(),
        in_ix,
        class: m.class,
        dim_unit,
        dim_phi,
        q_alpha: q_a,
        t,
    })
}

/// inf over a connected polyline K of the pointwise spectrum, densified to a
/// mesh of spacing at most 1e-3.
pub fn ek_set_spectrum(
    law: &BranchLaw,
    polyline: &[Vec<f64>],
    metric: Metric,
) -> Result<f64> {
    if polyline.is_empty() {
        return Err(Error::Domain("empty target set".into()));
    }
    for v in polyline {
        let m = membership_ix(law, v)?;
        if m.class == MembershipClass::Outside {
            return Err(Error::Domain(format!(
                "polyline vertex {v:?} lies outside I_X"
            )));
        }
    }
    let eval = |alpha: &[f64]| -> Result<f64> {
        match metric {
            Metric::Unit => Ok(membership_ix(law, alpha)?.p_star.max(0.0)),
            Metric::Phi => phi_spectrum(law, alpha),
        }
    };
    let mut best = f64::INFINITY;
    best = best.min(eval(&polyline[0])?);
    for seg in polyline.windows(2) {
        let (a, b) = (&seg[0], &seg[1]);
        let len = norm(&b.iter().zip(a).map(|(x, y)| x - y).collect::<Vec<_>>());
        let steps = (len / 1e-3).ceil().max(1.0) as usize;
        for s in 1..=steps {
            let u = s as f64 / steps as f64;
            let p: Vec<f64> =
                a.iter().zip(b).map(|(x, y)| x + u * (y - x)).collect();
            best = best.min(eval(&p)?);
        }
    }
    Ok(best)
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

    fn law_b() -> BranchLaw {
        BranchLaw::from_json(
            r#"{"d": 1, "repr": "explicit", "atoms": [
                {"p": "1", "offspring": [
                    {"x": ["1"], "phi": "1"},
                    {"x": ["2"], "phi": "2"}
                ]}
            ]}"#,
        )
        .unwrap()
    }

    /// Binary entropy in nats.
    fn entropy(a: f64) -> f64 {
        -a * a.ln() - (1.0 - a) * (1.0 - a).ln()
    }

    #[test]
    fn pressure_closed_forms() {
        let law = law_a();
        let e0 = p_tilde(&law, &[0.0], 2);
        assert_relative_eq!(e0.value, std::f64::consts::LN_2, epsilon = 1e-12);
        assert_relative_eq!(e0.gradient[0], 0.5, epsilon = 1e-12);
        let e1 = p_tilde(&law, &[1.0], 0);
        assert_relative_eq!(e1.value, (1.0 + std::f64::consts::E).ln(), epsilon = 1e-12);
        let em = p_tilde(&law, &[-1.0], 1);
        let logistic = (-1.0f64).exp() / (1.0 + (-1.0f64).exp());
        assert_relative_eq!(em.gradient[0], logistic, epsilon = 1e-12);
    }

    #[test]
    fn legendre_interior_and_boundary() {
        let law = law_a();
        let (v, q) = p_tilde_star(&law, &[0.5]).unwrap();
        assert_relative_eq!(v, std::f64::consts::LN_2, epsilon = 1e-10);
        assert!(q.unwrap()[0].abs() < 1e-8);
        let (v, q) = p_tilde_star(&law, &[0.25]).unwrap();
        assert_relative_eq!(v, 0.5623351446188083, epsilon = 1e-10);
        assert_relative_eq!(q.unwrap()[0], (1.0f64 / 3.0).ln(), epsilon = 1e-8);
        let (v, q) = p_tilde_star(&law, &[1.0]).unwrap();
        assert_relative_eq!(v, 0.0, epsilon = 1e-12);
        assert!(q.is_none());
        let (v, q) = p_tilde_star(&law, &[1.2]).unwrap();
        assert_eq!(v, f64::NEG_INFINITY);
        assert!(q.is_none());
    }

    #[test]
    fn membership_classes() {
        let law = law_a();
        assert_eq!(
            membership_ix(&law, &[0.5]).unwrap().class,
            MembershipClass::Interior
        );
        assert_eq!(
            membership_ix(&law, &[1.0]).unwrap().class,
            MembershipClass::BoundaryNoncrit
        );
        assert_eq!(
            membership_ix(&law, &[1.2]).unwrap().class,
            MembershipClass::Outside
        );
    }

    #[test]
    fn membership_detects_attained_critical_boundary() {
        // Heavily asymmetric law: P* goes negative inside the support hull,
        // so the zero level is crossed at an interior point where the
        // infimum is attained.
        let law = BranchLaw::from_json(
            r#"{"d": 1, "repr": "explicit", "atoms": [
                {"p": "0.99", "offspring": [
                    {"x": ["0"], "phi": "1"},
                    {"x": ["0"], "phi": "1"}
                ]},
                {"p": "0.01", "offspring": [
                    {"x": ["1"], "phi": "1"}
                ]}
            ]}"#,
        )
        .unwrap();
        // P*(1) = log E(N^{x=1}) = log 0.01 < 0: alpha = 1 is outside I_X.
        assert_eq!(
            membership_ix(&law, &[1.0]).unwrap().class,
            MembershipClass::Outside
        );
        // Bisect for the zero crossing of P* between the mean and 1.
        let (mut lo, mut hi) = (0.02, 0.999);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if p_tilde_star(&law, &[mid]).unwrap().0 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let crit = 0.5 * (lo + hi);
        let m = membership_ix(&law, &[crit]).unwrap();
        assert_eq!(m.class, MembershipClass::BoundaryCrit);
        assert!(m.q.is_some(), "critical boundary value must be attained");
    }

    #[test]
    fn implicit_pressure_roots() {
        let law = law_a();
        let ip = implicit_pressure(&law, &[0.0], &[0.3]).unwrap();
        assert_relative_eq!(ip.t, std::f64::consts::LN_2, epsilon = 1e-12);
        let law_b = law_b();
        let golden = ((1.0 + 5.0f64.sqrt()) / 2.0).ln();
        let ip = implicit_pressure(&law_b, &[0.0], &[0.0]).unwrap();
        assert_relative_eq!(ip.t, golden, epsilon = 1e-12);
    }

    #[test]
    fn implicit_pressure_residual_is_tiny() {
        let law = law_b();
        for q in [-1.0, -0.3, 0.0, 0.7, 2.0] {
            for alpha in [1.1, 1.5, 1.9] {
                let ip = implicit_pressure(&law, &[q], &[alpha]).unwrap();
                let total = law.tilt(&[q], &[alpha], ip.t).unwrap().total;
                assert!((total - 1.0).abs() <= 1e-12, "residual {}", total - 1.0);
            }
        }
    }

    #[test]
    fn unit_metric_reduction() {
        // phi = 1: t(q) = P(q) - q alpha exactly.
        let law = law_a();
        for q in [-2.0, -0.5, 0.0, 1.0, 3.0] {
            for alpha in [0.1, 0.5, 0.9] {
                let ip = implicit_pressure(&law, &[q], &[alpha]).unwrap();
                let p = p_tilde(&law, &[q], 0).value - q * alpha;
                assert_relative_eq!(ip.t, p, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn entropy_lyapunov_identity() {
        for law in [law_a(), law_b()] {
            for q in [-1.0, 0.0, 0.8] {
                for alpha in [0.2, 0.5, 1.4] {
                    let ip = implicit_pressure(&law, &[q], &[alpha]).unwrap();
                    let lhs = ip.h / ip.lambda;
                    let rhs = ip.t - q * ip.gradient[0];
                    assert_relative_eq!(lhs, rhs, epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn implicit_gradient_matches_finite_differences() {
        let law = law_b();
        let q = [0.4];
        let alpha = [1.3];
        let ip = implicit_pressure(&law, &q, &alpha).unwrap();
        let eps = 1e-6;
        let tp = implicit_pressure(&law, &[q[0] + eps], &alpha).unwrap().t;
        let tm = implicit_pressure(&law, &[q[0] - eps], &alpha).unwrap().t;
        let fd = (tp - tm) / (2.0 * eps);
        assert_relative_eq!(ip.gradient[0], fd, epsilon = 1e-6);
    }

    #[test]
    fn q_alpha_closed_forms() {
        let law = law_a();
        let ip = q_alpha(&law, &[0.5]).unwrap();
        assert!(ip.q[0].abs() < 1e-7);
        assert_relative_eq!(ip.t, std::f64::consts::LN_2, epsilon = 1e-8);
        assert!(norm(&ip.gradient) <= 1e-7);
        let ip = q_alpha(&law, &[0.25]).unwrap();
        assert_relative_eq!(ip.q[0], (1.0f64 / 3.0).ln(), epsilon = 1e-6);
        assert_relative_eq!(ip.t, entropy(0.25), epsilon = 1e-8);
        assert_relative_eq!(ip.beta[0], 0.25, epsilon = 1e-7);
        // X = phi law: spectrum value P*(alpha)/alpha.
        let ip = q_alpha(&law_b(), &[1.5]).unwrap();
        assert_relative_eq!(ip.t, std::f64::consts::LN_2 / 1.5, epsilon = 1e-6);
    }

    #[test]
    fn q_alpha_rejects_non_critical_levels() {
        let law = law_a();
        assert!(q_alpha(&law, &[1.0]).is_err());
        assert!(q_alpha(&law, &[1.2]).is_err());
    }

    #[test]
    fn lambda_psi_values() {
        let law = law_a();
        let ev = lambda_psi(&law, &[0.0], &[0.5], &[0.0], 1).unwrap();
        assert!(ev.value.abs() < 1e-12);
        assert_relative_eq!(ev.gradient[0], 0.5, epsilon = 1e-12);
        let ev = lambda_psi(&law, &[0.0], &[0.5], &[1.0], 0).unwrap();
        let expect = ((1.0 + std::f64::consts::E) / 2.0).ln();
        assert_relative_eq!(ev.value, expect, epsilon = 1e-12);
    }

    #[test]
    fn lambda_psi_star_values() {
        let law = law_a();
        let (rate, lam) = lambda_psi_star(&law, &[0.0], &[0.5], &[0.5]).unwrap();
        assert!(rate.abs() < 1e-10);
        assert!(lam.unwrap()[0].abs() < 1e-7);
        let (rate, lam) = lambda_psi_star(&law, &[0.0], &[0.5], &[1.0]).unwrap();
        assert_relative_eq!(rate, -std::f64::consts::LN_2, epsilon = 1e-10);
        assert!(lam.is_none());
        let (rate, _) = lambda_psi_star(&law, &[0.0], &[0.5], &[0.75]).unwrap();
        assert_relative_eq!(
            rate,
            entropy(0.75) - std::f64::consts::LN_2,
            epsilon = 1e-8
        );
    }

    #[test]
    fn rate_at_gradient_closed_form() {
        let law = law_a();
        let (target, rate) = rate_at_grad(&law, &[0.0], &[0.5], &[1.0]).unwrap();
        let e = std::f64::consts::E;
        assert_relative_eq!(target[0], e / (1.0 + e), epsilon = 1e-12);
        assert_relative_eq!(rate, -0.1109440716717774, epsilon = 1e-10);
        // Consistency with the solver-based transform.
        let (rate2, _) = lambda_psi_star(&law, &[0.0], &[0.5], &target).unwrap();
        assert_relative_eq!(rate, rate2, epsilon = 1e-8);
    }

    #[test]
    fn spectrum_rows_cover_all_classes() {
        let law = law_a();
        let rows =
            spectrum_table(&law, &[vec![0.5], vec![1.0], vec![1.2]]).unwrap();
        assert!(rows[0].in_ix);
        assert_eq!(rows[0].class, MembershipClass::Interior);
        assert_relative_eq!(rows[0].dim_unit, std::f64::consts::LN_2, epsilon = 1e-8);
        assert_relative_eq!(rows[0].dim_phi, std::f64::consts::LN_2, epsilon = 1e-8);
        // alpha = 1: on the face {1} with E(N^F) = 1, so dimension 0.
        assert!(rows[1].in_ix);
        assert_eq!(rows[1].class, MembershipClass::BoundaryNoncrit);
        assert!(rows[1].dim_unit.abs() < 1e-10);
        assert!(rows[1].dim_phi.abs() < 1e-10);
        assert!(!rows[2].in_ix);
        assert_eq!(rows[2].dim_phi, f64::NEG_INFINITY);
    }

    #[test]
    fn unit_and_phi_spectra_agree_when_phi_is_one() {
        let law = law_a();
        for alpha in [0.05, 0.25, 0.5, 0.75, 0.95] {
            let row = spectrum_row(&law, &[alpha]).unwrap();
            assert_relative_eq!(row.dim_unit, row.dim_phi, epsilon = 1e-8);
        }
    }

    #[test]
    fn boundary_spectrum_recurses_into_edge_laws() {
        // Square law with E(N) = 8: on the bottom edge the restriction is a
        // 1-d uniform law with E(N^F) = 4; its entropy spectrum at the edge
        // midpoint is ln 4.
        let law = BranchLaw::from_json(
            r#"{"d": 2, "repr": "iid_compound",
                "n_law": [{"n": 8, "p": "1"}],
                "mu": [
                    {"x": ["0", "0"], "phi": "1", "p": "0.25"},
                    {"x": ["1", "0"], "phi": "1", "p": "0.25"},
                    {"x": ["0", "1"], "phi": "1", "p": "0.25"},
                    {"x": ["1", "1"], "phi": "1", "p": "0.25"}
                ]}"#,
        )
        .unwrap();
        let row = spectrum_row(&law, &[0.5, 0.0]).unwrap();
        assert_eq!(row.class, MembershipClass::BoundaryNoncrit);
        assert_relative_eq!(row.dim_unit, (4.0f64).ln(), epsilon = 1e-8);
        assert_relative_eq!(row.dim_phi, (4.0f64).ln(), epsilon = 1e-8);
        // A vertex of the square: restriction of the edge law to its own
        // endpoint, E = 2, dimension ln 2.
        let row = spectrum_row(&law, &[0.0, 0.0]).unwrap();
        assert_relative_eq!(row.dim_phi, std::f64::consts::LN_2, epsilon = 1e-8);
    }

    #[test]
    fn ek_set_minimum() {
        let law = law_a();
        let v =
            ek_set_spectrum(&law, &[vec![0.5]], Metric::Unit).unwrap();
        assert_relative_eq!(v, std::f64::consts::LN_2, epsilon = 1e-8);
        let v = ek_set_spectrum(&law, &[vec![0.25], vec![0.5]], Metric::Unit).unwrap();
        assert_relative_eq!(v, entropy(0.25), epsilon = 1e-6);
        let v = ek_set_spectrum(&law, &[vec![0.3], vec![0.7]], Metric::Phi).unwrap();
        assert_relative_eq!(v, entropy(0.3), epsilon = 1e-6);
        assert!(ek_set_spectrum(&law, &[vec![1.2]], Metric::Unit).is_err());
    }

    #[test]
    fn pressure_is_convex_on_random_pairs() {
        let law = law_b();
        let mut rng = crate::rng::stream(9, crate::rng::PURPOSE_TRIAL, 0);
        use rand::Rng;
        for _ in 0..200 {
            let q1 = rng.gen_range(-5.0..5.0);
            let q2 = rng.gen_range(-5.0..5.0);
            let mid = 0.5 * (q1 + q2);
            let lhs = p_tilde(&law, &[mid], 0).value;
            let rhs =
                0.5 * (p_tilde(&law, &[q1], 0).value + p_tilde(&law, &[q2], 0).value);
            assert!(lhs <= rhs + 1e-12);
        }
    }
}
