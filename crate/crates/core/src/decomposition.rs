//! Greedy splitting of an integral 0-current into a residual atomic part
//! `X` and a filling `S` of short segments, `T = X + boundary(S)`.
//!
//! At every step the closest admissible pair `(y, z)` (positive-negative,
//! positive-boundary or boundary-negative) is joined by a segment as long as
//! its length does not exceed `alpha_1 = alpha^(1/(n-p))`. Pair lengths are
//! filed into the dyadic-in-exponent scales `(alpha_{k+1}, alpha_k]`, with
//! `alpha_k = alpha^(k/(n-p))`, giving the scale ledger used by the mass
//! estimates.

use serde::Serialize;

use crate::constants::Constants;
use crate::currents::{OneCurrent, ZeroCurrent};
use crate::error::{invalid, Error, Result};
use crate::flat::{pair_min, Endpoint};
use crate::geometry::Domain;
use crate::jacobian::{circle_energy, enclosed_winding, plaquette_vorticity};
use crate::lattice::LatticeField;
use crate::scalar::Real;

/// Smallest accepted `n - p`.
pub const MIN_GAP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecompParams<F> {
    pub n: u32,
    pub p: F,
    pub alpha: F,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Admissibility<F> {
    pub ok: bool,
    pub lhs: F,
    pub rhs: F,
}

/// Checks `alpha > sqrt(3)/2`, `n - p <= 1/4` and
/// `p (n-p)/(n-1) * a/(a alpha^2 - 1) <= (1-alpha)(2 alpha^2 - 1)/(4 alpha)`
/// with `a = alpha^(-1/(n-p))`. Both sides of the last inequality are returned.
pub fn check_admissible<F: Real>(n: u32, p: F, alpha: F) -> Admissibility<F> {
    let nf = F::of(n as f64);
    let gap = nf - p;
    let one = F::one();
    let two = F::of(2.0);
    // a / (a alpha^2 - 1) = 1 / (alpha^2 - alpha^(1/gap)); stays finite for tiny gaps
    let tail = (alpha.ln() / gap).exp();
    let lhs = p * gap / (nf - one) / (alpha * alpha - tail);
    let rhs = (one - alpha) * (two * alpha * alpha - one) / (F::of(4.0) * alpha);
    let ok = alpha > F::of(3f64.sqrt() / 2.0)
        && alpha < one
        && gap > F::zero()
        && gap <= F::of(0.25)
        && lhs > F::zero()
        && lhs <= rhs;
    Admissibility { ok, lhs, rhs }
}

impl<F: Real> DecompParams<F> {
    pub fn new(n: u32, p: F, alpha: F) -> Result<Self> {
        let nf = F::of(n as f64);
        if n < 2 {
            return Err(invalid("n must be at least 2"));
        }
        if !(p > nf - F::one() && p < nf) {
            return Err(invalid("p must lie in (n-1, n)"));
        }
        if !(alpha > F::zero() && alpha < F::one()) {
            return Err(invalid("alpha must lie in (0, 1)"));
        }
        if nf - p < F::of(MIN_GAP) {
            return Err(Error::ScaleUnderflow);
        }
        Ok(DecompParams { n, p, alpha })
    }

    pub fn gap(&self) -> F {
        F::of(self.n as f64) - self.p
    }

    /// `ln alpha_1 = ln(alpha) / (n - p)`.
    pub fn log_alpha1(&self) -> F {
        self.alpha.ln() / self.gap()
    }

    /// `alpha^(k/(n-p))`, evaluated in log space.
    pub fn alpha_k(&self, k: u32) -> F {
        (F::of(k as f64) * self.log_alpha1()).exp()
    }

    pub fn alpha1(&self) -> Result<F> {
        let a1 = self.alpha_k(1);
        if a1 <= F::zero() || !a1.is_normal() {
            return Err(Error::ScaleUnderflow);
        }
        Ok(a1)
    }

    pub fn admissibility(&self) -> Admissibility<F> {
        check_admissible(self.n, self.p, self.alpha)
    }

    /// Scale index `k >= 1` with `alpha_{k+1} < d <= alpha_k`.
    pub fn scale_of(&self, d: F) -> u32 {
        let la = self.log_alpha1();
        let mut k = (d.ln() / la).floor().to_u32().unwrap_or(u32::MAX - 1).max(1);
        // repair rounding at bin edges
        while k > 1 && d > self.alpha_k(k) {
            k -= 1;
        }
        while d <= self.alpha_k(k + 1) {
            k += 1;
        }
        k
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScaleEntry<F> {
    pub k: u32,
    pub alpha_k: F,
    /// Pairs whose positive end is an interior atom (k >= 1); `X(X+)` at k = 0.
    pub e: u64,
    /// Pairs whose negative end is an interior atom (k >= 1); `-X(X-)` at k = 0.
    pub e_prime: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaleLedger<F> {
    pub entries: Vec<ScaleEntry<F>>,
    /// `max{k : e_k > 0}`.
    pub k_max: u32,
    /// `max{k : e'_k > 0}`.
    pub k_max_prime: u32,
}

impl<F: Real> ScaleLedger<F> {
    /// Partial sums `S_k = e_0 + ... + e_k`.
    pub fn partial_sums(&self) -> Vec<u64> {
        self.entries
            .iter()
            .scan(0u64, |acc, e| {
                *acc += e.e;
                Some(*acc)
            })
            .collect()
    }

    pub fn partial_sums_prime(&self) -> Vec<u64> {
        self.entries
            .iter()
            .scan(0u64, |acc, e| {
                *acc += e.e_prime;
                Some(*acc)
            })
            .collect()
    }

    /// CSV table `k,alpha_k,e_k,e_prime_k`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,alpha_k,e_k,e_prime_k\n");
        for e in &self.entries {
            s.push_str(&format!("{},{},{},{}\n", e.k, e.alpha_k, e.e, e.e_prime));
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairStep<F, const D: usize> {
    pub y: Endpoint<F, D>,
    pub z: Endpoint<F, D>,
    pub distance: F,
    pub scale: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionResult<F, const D: usize> {
    pub x: ZeroCurrent<F, D>,
    /// Segments in creation order, each stored as `[z, y]` so that its
    /// boundary is `delta_y - delta_z`.
    pub s: OneCurrent<F, D>,
    pub ledger: ScaleLedger<F>,
    pub trace: Vec<PairStep<F, D>>,
    pub alpha1: F,
}

pub fn decompose<F: Real, const D: usize>(
    t: &ZeroCurrent<F, D>,
    domain: &impl Domain<F, D>,
    params: &DecompParams<F>,
) -> Result<DecompositionResult<F, D>> {
    if t.atoms().iter().any(|a| !a.point.is_finite()) {
        return Err(invalid("non-finite atom coordinates"));
    }
    let alpha1 = params.alpha1()?;
    let mut x = t.restrict(domain);
    let mut s = OneCurrent::zero();
    let mut trace = Vec::new();
    let budget = x.total_mass();

    while let Some(m) = pair_min(&x, domain) {
        if m.distance > alpha1 {
            break;
        }
        if trace.len() as i64 >= budget {
            return Err(Error::Internal("decomposition did not terminate within its mass budget".into()));
        }
        let (y, z) = (m.y.point(), m.z.point());
        s.push(z, y, 1);
        let mut step = ZeroCurrent::zero();
        if let Endpoint::Atom(p) = m.y {
            step.push(p, 1);
        }
        if let Endpoint::Atom(p) = m.z {
            step.push(p, -1);
        }
        x = x.sub(&step);
        trace.push(PairStep { y: m.y, z: m.z, distance: m.distance, scale: params.scale_of(m.distance) });
    }

    let ledger = build_ledger(&x, &trace, params);
    Ok(DecompositionResult { x, s, ledger, trace, alpha1 })
}

fn build_ledger<F: Real, const D: usize>(
    x: &ZeroCurrent<F, D>,
    trace: &[PairStep<F, D>],
    params: &DecompParams<F>,
) -> ScaleLedger<F> {
    let top = trace.iter().map(|s| s.scale).max().unwrap_or(0);
    let mut entries: Vec<ScaleEntry<F>> = (0..=top)
        .map(|k| ScaleEntry { k, alpha_k: params.alpha_k(k), e: 0, e_prime: 0 })
        .collect();
    for a in x.atoms() {
        if a.mult > 0 {
            entries[0].e += a.mult as u64;
        } else {
            entries[0].e_prime += a.mult.unsigned_abs();
        }
    }
    for st in trace {
        let k = st.scale as usize;
        if !st.y.is_boundary() {
            entries[k].e += 1;
        }
        if !st.z.is_boundary() {
            entries[k].e_prime += 1;
        }
    }
    let last = |f: &dyn Fn(&ScaleEntry<F>) -> u64| {
        entries.iter().filter(|e| f(e) > 0).map(|e| e.k).max().unwrap_or(0)
    };
    let k_max = last(&|e| e.e);
    let k_max_prime = last(&|e| e.e_prime);
    ScaleLedger { entries, k_max, k_max_prime }
}

/// Both sides of the three quantitative estimates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundsReport<F> {
    pub c: F,
    pub c_sharp: F,
    pub rescaled_energy: F,
    pub mass_x: F,
    pub mass_s: F,
    /// `M(X) <= C E`.
    pub mass_rhs: F,
    /// `M(S) <= C alpha alpha^(1/(2(n-p))) E`.
    pub flat_rhs: F,
    /// Same without the proof's extra factor alpha.
    pub flat_rhs_theorem_form: F,
    pub sharp_lhs: F,
    pub sharp_rhs: F,
    pub mass_holds: bool,
    pub flat_holds: bool,
    pub sharp_holds: bool,
}

impl<F: Real> BoundsReport<F> {
    pub fn all_hold(&self) -> bool {
        self.mass_holds && self.flat_holds && self.sharp_holds
    }
}

/// `C(n, alpha, p) = 8 alpha / ((1-alpha)^2 (2 alpha^2 - 1)) / ((n-1)^{p/2} omega_{n-1})`.
pub fn mass_constant<F: Real>(params: &DecompParams<F>) -> F {
    let k = Constants::<F>::new(params.n);
    let one = F::one();
    let a = params.alpha;
    let nm1 = F::of(params.n as f64) - one;
    F::of(8.0) * a / ((one - a) * (one - a) * (F::of(2.0) * a * a - one)) / (nm1.powf(params.p / F::of(2.0)) * k.omega)
}

/// Evaluates the three estimates for a decomposition of `T`.
///
/// `input_mass` is `M(T)` and `rescaled_energy` is `(n-p) int |grad u|^p`
/// for a map whose Jacobian is `gamma_n T`.
pub fn verify_bounds<F: Real, const D: usize>(
    result: &DecompositionResult<F, D>,
    input_mass: F,
    rescaled_energy: F,
    params: &DecompParams<F>,
) -> Result<BoundsReport<F>> {
    let adm = params.admissibility();
    if !adm.ok {
        return Err(Error::Inadmissible { lhs: adm.lhs.as_f64(), rhs: adm.rhs.as_f64() });
    }
    let k = Constants::<F>::new(params.n);
    let one = F::one();
    let two = F::of(2.0);
    let nm1 = F::of(params.n as f64) - one;
    let gap = params.gap();
    let c = mass_constant(params);
    let c_sharp = c * F::of(params.n as f64) * nm1.powf(params.p / two - one) * k.omega;
    let mass_x = F::of_i64(result.x.total_mass());
    let mass_s = result.s.mass();
    let e = rescaled_energy;

    let mass_rhs = c * e;
    let decay = (params.alpha.ln() / (two * gap)).exp();
    let flat_rhs = c * params.alpha * decay * e;
    let flat_rhs_theorem_form = c * decay * e;

    let two_gap = two.powf(gap) - one;
    let sharp_lhs = nm1.powf(params.p / two) * k.omega * (params.alpha * mass_x - params.p * two_gap / nm1);
    let log_ratio = input_mass.max(one).ln() / gap.ln().abs();
    let sharp_rhs = (one + c_sharp * (two_gap / gap.sqrt()) * (one + two * log_ratio)) * e;

    Ok(BoundsReport {
        c,
        c_sharp,
        rescaled_energy: e,
        mass_x,
        mass_s,
        mass_rhs,
        flat_rhs,
        flat_rhs_theorem_form,
        sharp_lhs,
        sharp_rhs,
        mass_holds: mass_x <= mass_rhs,
        flat_holds: mass_s <= flat_rhs,
        sharp_holds: sharp_lhs <= sharp_rhs,
    })
}

/// Both sides of the weighted partial-sum inequality
/// `sum_k max(S_k - a_{k+1}, 0)^beta / S_k^(beta-1) lambda^k
///   >= (2 lambda - 1)/(2 lambda) sum_k a_k lambda^k`, with `a_{K+1} = 0`.
pub fn lemma_ai_check(a: &[u64], beta: f64, lambda: f64) -> Result<(f64, f64)> {
    if !(beta > 1.0 && beta < 2.0) {
        return Err(invalid("beta must lie in (1, 2)"));
    }
    if !(lambda > 0.75 && lambda < 1.0) {
        return Err(invalid("lambda must lie in (3/4, 1)"));
    }
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    let mut s = 0u64;
    let mut lam_k = 1.0;
    for (k, &ak) in a.iter().enumerate() {
        s += ak;
        let next = a.get(k + 1).copied().unwrap_or(0);
        if s > 0 {
            let top = s.saturating_sub(next) as f64;
            lhs += top.powf(beta) / (s as f64).powf(beta - 1.0) * lam_k;
        }
        rhs += ak as f64 * lam_k;
        lam_k *= lambda;
    }
    Ok((lhs, (2.0 * lambda - 1.0) / (2.0 * lambda) * rhs))
}

/// Both sides of the circle estimate
/// `int_Gamma |grad u|^p >= 2^p |*Ju(A)|^p / H^1(Gamma)^(p-1)` for a 2-D
/// S^1 field, a circle `Gamma` of radius `r` and the enclosed disk `A`.
/// `*Ju(A)` is `pi` times the enclosed plaquette winding; the left side is a
/// trapezoidal rule on the bilinear interpolant.
pub fn boundary_energy_lower_bound(field: &LatticeField, center: [f64; 2], r: f64, p: f64) -> Result<(f64, f64)> {
    if !(p > 1.0 && p < 2.0) || !(r > 0.0) {
        return Err(invalid("need p in (1, 2) and r > 0"));
    }
    let h = field.lattice().h;
    let vort = plaquette_vorticity(field)?;
    for a in vort.current.atoms() {
        let rho = (a.point.0[0] - center[0]).hypot(a.point.0[1] - center[1]);
        if (rho - r).abs() < 2.0 * h {
            return Err(Error::TooClose(format!("vortex at {:?} is within 2h of the circle", a.point.0)));
        }
    }
    let d = enclosed_winding(&vort, center, r);
    let samples = ((8.0 * std::f64::consts::TAU * r / h).ceil() as usize).max(64);
    let lhs = circle_energy(field, center, r, p, samples)?;
    let jac = std::f64::consts::PI * d.unsigned_abs() as f64;
    let len = std::f64::consts::TAU * r;
    let rhs = 2f64.powf(p) * jac.powf(p) / len.powf(p - 1.0);
    Ok((lhs, rhs))
}
