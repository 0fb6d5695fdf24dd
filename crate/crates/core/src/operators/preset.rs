//! The operator catalog, addressable by string id.
//!
//! * `twist-k`   — `Delta u + sigma_k(D^2 u) = c` split as the convex
//!   `tr(M) - c` plus the weakly concave `sigma_k(M)` with the power gauge.
//! * `twisted-ma` — the twisted Monge-Ampere split
//!   `-(det(-D^2_y u))^(1/n) + eps tr(D^2_x u)` (convex) plus
//!   `(det(D^2_x u))^(1/n) - eps tr(D^2_x u)` (concave), identity gauge,
//!   declared on the band `E_{lambda,kappa}`.
//! * `convex-concave` — a smooth uniformly elliptic convex part plus a
//!   smooth concave degenerate elliptic part built from diagonal
//!   exponentials, with the identity gauge.
//! * `laplace`   — the Laplacian alone; useful for linear sanity checks.
//! * `custom`    — expression-defined parts over the matrix invariants.

use super::expr::Expr;
use super::{
    BlockShape, DomainSet, Gauge, MatrixFn, SpatialFn, TwistedOperator,
};
use crate::envelope::EnvelopeSet;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::sym::SymMatrix;
use serde::{Deserialize, Serialize};

pub const PRESET_IDS: [&str; 5] = ["twist-k", "twisted-ma", "convex-concave", "laplace", "custom"];

/// Parameters for building a preset; unknown keys are rejected when parsed
/// from configuration files.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetSpec {
    pub preset: String,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Symmetric-polynomial order for `twist-k`, leading block size for
    /// `twisted-ma`.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub ell: Option<usize>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub kappa: Option<f64>,
    /// Constant right-hand side folded into the convex part of `twist-k`.
    #[serde(default)]
    pub rhs: Option<f64>,
    /// Eigenvalue box override for the declared domain.
    #[serde(default)]
    pub domain_lo: Option<f64>,
    #[serde(default)]
    pub domain_hi: Option<f64>,
    /// Custom operator: expressions for the convex and concave parts.
    #[serde(default)]
    pub fcup: Option<String>,
    #[serde(default)]
    pub fcap: Option<String>,
    /// Custom operator gauge: "identity" or "power:<k>".
    #[serde(default)]
    pub gauge: Option<String>,
    /// Optional x-dependent right-hand side expression in `x`, `y`.
    #[serde(default)]
    pub rhs_expr: Option<String>,
}

fn default_dim() -> usize {
    2
}

impl Default for PresetSpec {
    fn default() -> Self {
        Self {
            preset: "twist-k".into(),
            dim: 2,
            k: None,
            ell: None,
            eps: None,
            lambda: None,
            kappa: None,
            rhs: None,
            domain_lo: None,
            domain_hi: None,
            fcup: None,
            fcap: None,
            gauge: None,
            rhs_expr: None,
        }
    }
}

impl PresetSpec {
    pub fn named(preset: &str) -> Self {
        Self {
            preset: preset.into(),
            ..Self::default()
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut v = 1.0;
    for i in 0..k {
        v = v * (n - i) as f64 / (i + 1) as f64;
    }
    v
}

/// `Delta u + sigma_k(D^2 u) = c`, with the constant folded into the convex
/// part so that `F_cap = sigma_k` carries the power gauge on `U = [0, inf)`.
pub fn twist_k<T: Real>(dim: usize, k: usize, c: f64) -> Result<TwistedOperator<T>> {
    if k < 1 || k > dim {
        return Err(Error::Config(format!(
            "twist-k needs 1 <= k <= dim, got k = {k}, dim = {dim}"
        )));
    }
    let (lo, hi) = (0.1, 2.0);
    Ok(TwistedOperator {
        name: format!("twist-{k} (n = {dim})"),
        dim,
        convex_part: MatrixFn::Affine {
            grad: SymMatrix::identity(dim),
            offset: T::of(-c),
        },
        concave_part: MatrixFn::SigmaK { k },
        gauge: Gauge::Power { k: k as u32 },
        domain: DomainSet::EigenBox {
            dim,
            lo: T::of(lo),
            hi: T::of(hi),
        },
        // slope of tr is 1 on unit-trace directions; the sigma_k part adds
        // at most sigma_{k-1} of the remaining eigenvalues on the box
        lambda_min: T::one(),
        lambda_max: T::of(1.0 + binomial(dim - 1, k - 1) * hi.powi(k as i32 - 1)),
        rhs: None,
    })
}

/// The twisted Monge-Ampere split on the band `E_{lambda,kappa}`.
pub fn twisted_ma<T: Real>(
    k: usize,
    ell: usize,
    eps: f64,
    lambda: f64,
    kappa: f64,
) -> Result<TwistedOperator<T>> {
    let shape = BlockShape::new(k, ell)?;
    let n = shape.dim();
    let set = EnvelopeSet::new(shape, T::of(lambda), T::of(kappa))?;
    // Degenerate ellipticity of the concave part needs eps no larger than
    // the smallest slope of (det pi_k)^(1/n) on the band.
    let cap_slope_min = (1.0 / n as f64) * lambda.powf(k as f64 / n as f64 + 1.0);
    if eps <= 0.0 || eps > cap_slope_min {
        return Err(Error::Config(format!(
            "twisted-ma needs 0 < eps <= {cap_slope_min:.4} for lambda = {lambda} so the concave part stays elliptic"
        )));
    }
    let cup_slope_min = (1.0 / n as f64) * lambda.powf(ell as f64 / n as f64 + 1.0);
    let cup_slope_max = (1.0 / n as f64) * lambda.powf(-(ell as f64) / n as f64 - 1.0);
    let cap_slope_max = (1.0 / n as f64) * lambda.powf(-(k as f64) / n as f64 - 1.0);
    Ok(TwistedOperator {
        name: format!("twisted Monge-Ampere (k = {k}, l = {ell})"),
        dim: n,
        convex_part: MatrixFn::BlockDetCup {
            shape,
            eps: T::of(eps),
        },
        concave_part: MatrixFn::BlockDetCap {
            shape,
            eps: T::of(eps),
        },
        gauge: Gauge::Identity,
        domain: DomainSet::Band(set),
        lambda_min: T::of(eps.min(cup_slope_min)),
        lambda_max: T::of(eps + cup_slope_max + cap_slope_max),
        rhs: None,
    })
}

/// Smooth convex + smooth concave with the identity gauge.
pub fn convex_concave<T: Real>(dim: usize, a: f64, b: f64) -> Result<TwistedOperator<T>> {
    if a < 0.0 || b < 0.0 {
        return Err(Error::Config("weights must be nonnegative".into()));
    }
    Ok(TwistedOperator {
        name: format!("convex-concave (n = {dim})"),
        dim,
        convex_part: MatrixFn::DiagExpConvex {
            dim,
            weight: T::of(a),
        },
        concave_part: MatrixFn::DiagExpConcave {
            dim,
            weight: T::of(b),
        },
        gauge: Gauge::Identity,
        domain: DomainSet::EigenBox {
            dim,
            lo: T::of(-1.0),
            hi: T::of(1.0),
        },
        lambda_min: T::one(),
        lambda_max: T::of(1.0 + (a + b) * std::f64::consts::E),
        rhs: None,
    })
}

/// The Laplacian alone.
pub fn laplace<T: Real>(dim: usize) -> TwistedOperator<T> {
    TwistedOperator {
        name: format!("laplace (n = {dim})"),
        dim,
        convex_part: MatrixFn::Affine {
            grad: SymMatrix::identity(dim),
            offset: T::zero(),
        },
        concave_part: MatrixFn::Zero,
        gauge: Gauge::Identity,
        domain: DomainSet::All { dim },
        lambda_min: T::one(),
        lambda_max: T::one(),
        rhs: None,
    }
}

fn parse_gauge(s: &str) -> Result<Gauge> {
    if s == "identity" {
        return Ok(Gauge::Identity);
    }
    if let Some(k) = s.strip_prefix("power:") {
        let k: u32 = k
            .parse()
            .map_err(|_| Error::Config(format!("bad gauge exponent in `{s}`")))?;
        if k < 1 {
            return Err(Error::Config("power gauge needs k >= 1".into()));
        }
        return Ok(Gauge::Power { k });
    }
    Err(Error::Config(format!(
        "unknown gauge `{s}` (expected `identity` or `power:<k>`)"
    )))
}

/// Builds an operator from a preset specification.
pub fn build<T: Real>(spec: &PresetSpec) -> Result<TwistedOperator<T>> {
    let mut op = match spec.preset.as_str() {
        "twist-k" => {
            let k = spec.k.unwrap_or(2);
            twist_k::<T>(spec.dim, k, spec.rhs.unwrap_or(1.0))?
        }
        "twisted-ma" => twisted_ma::<T>(
            spec.k.unwrap_or(1),
            spec.ell.unwrap_or(1),
            spec.eps.unwrap_or(0.1),
            spec.lambda.unwrap_or(0.5),
            spec.kappa.unwrap_or(4.0),
        )?,
        "convex-concave" => convex_concave::<T>(
            spec.dim,
            spec.eps.unwrap_or(0.2),
            spec.lambda.unwrap_or(0.2),
        )?,
        "laplace" => laplace::<T>(spec.dim),
        "custom" => {
            let fcup_src = spec
                .fcup
                .as_ref()
                .ok_or_else(|| Error::Config("custom preset needs `fcup`".into()))?;
            let fcap_src = spec.fcap.as_deref().unwrap_or("0");
            let gauge = parse_gauge(spec.gauge.as_deref().unwrap_or("identity"))?;
            TwistedOperator {
                name: format!("custom ({fcup_src}) + ({fcap_src})"),
                dim: spec.dim,
                convex_part: MatrixFn::Custom {
                    dim: spec.dim,
                    expr: Expr::parse(fcup_src)?,
                },
                concave_part: MatrixFn::Custom {
                    dim: spec.dim,
                    expr: Expr::parse(fcap_src)?,
                },
                gauge,
                domain: DomainSet::EigenBox {
                    dim: spec.dim,
                    lo: T::of(spec.domain_lo.unwrap_or(0.1)),
                    hi: T::of(spec.domain_hi.unwrap_or(2.0)),
                },
                lambda_min: T::of(1e-8),
                lambda_max: T::of(1e8),
                rhs: None,
            }
        }
        other => {
            return Err(Error::Config(format!(
                "unknown preset `{other}`; available presets: {}",
                PRESET_IDS.join(", ")
            )));
        }
    };
    if spec.preset != "custom" {
        if let (Some(lo), Some(hi)) = (spec.domain_lo, spec.domain_hi) {
            if !matches!(op.domain, DomainSet::Band(_)) {
                op.domain = DomainSet::EigenBox {
                    dim: op.dim,
                    lo: T::of(lo),
                    hi: T::of(hi),
                };
            }
        }
    }
    if let Some(src) = &spec.rhs_expr {
        op.rhs = Some(SpatialFn::Expr(Expr::parse(src)?));
    }
    op.validate()?;
    Ok(op)
}

/// Human-readable description of a preset: the split, the gauge and the
/// declared domain.
pub fn describe(id: &str) -> Result<String> {
    let text = match id {
        "twist-k" => "\
twist-k (parameters: dim, k, rhs)
  equation      Delta u + sigma_k(D^2 u) = rhs        (default rhs = 1)
  convex part   F_cup(M) = tr(M) - rhs                (linear, uniformly elliptic)
  concave part  F_cap(M) = sigma_k(M)                 (weakly concave)
  gauge         G(x) = x^(1/k) on U = [0, inf),
                Q(x) = min(1, (1/k) |x|^(1/k - 1))
  domain        eigenvalue box [0.1, 2.0] (inside the k-convex cone; override
                with domain_lo / domain_hi)
  note          the estimate machinery applies where sigma_k(D^2 u) > 0"
            .to_string(),
        "twisted-ma" => "\
twisted-ma (parameters: k, ell, eps, lambda, kappa)
  equation      log det(D^2_x u) - log det(-D^2_y u) = 0, written at the
                (1/n)-root scale and split with an eps trace term:
  convex part   F_cup(M) = -(det(-pi_l M))^(1/n) + eps tr(pi_k M)
  concave part  F_cap(M) = (det(pi_k M))^(1/n) - eps tr(pi_k M)
  gauge         identity (F_cap is already concave)
  domain        band E(lambda, kappa): lambda I <= pi_k(M) <= (1/lambda) I,
                lambda I <= -pi_l(M) <= (1/lambda) I, ||M|| <= kappa
  note          outside the band, use the envelope extension of F_cup; its
                minorant slopes are I_k on the x-block and a band matrix on
                the y-block, giving the trace-norm sandwich
                lambda tr(P) <= env(M+P) - env(M) <= (1/lambda) tr(P)"
            .to_string(),
        "convex-concave" => "\
convex-concave (parameters: dim, eps = convex weight, lambda = concave weight)
  convex part   F_cup(M) = tr M + a * sum_i exp(m_ii)
  concave part  F_cap(M) = -b * sum_i exp(-m_ii)
  gauge         identity
  domain        eigenvalue box [-1, 1]"
            .to_string(),
        "laplace" => "\
laplace (parameters: dim)
  equation      Delta u = f
  convex part   F_cup(M) = tr(M); no concave part
  gauge         identity
  domain        unconstrained"
            .to_string(),
        "custom" => "\
custom (parameters: dim, fcup, fcap, gauge, domain_lo, domain_hi)
  fcup / fcap   scalar expressions over the matrix invariants
                  tr, det, sigma1 .. sigma<dim>
                with numbers, + - * / ^ and parentheses, e.g.
                  \"tr - 1\"            (shifted trace)
                  \"sigma2\"            (second symmetric polynomial)
                  \"0.5*tr + sigma2^2\"
  gauge         \"identity\" or \"power:<k>\"
  domain        eigenvalue box [domain_lo, domain_hi], default [0.1, 2.0]
  rhs_expr      optional expression in x, y subtracted as a position-dependent
                right-hand side, e.g. \"1 + 0.1*x*y\"
  note          derivatives fall back to central finite differences"
            .to_string(),
        other => {
            return Err(Error::Config(format!(
                "unknown preset `{other}`; available presets: {}",
                PRESET_IDS.join(", ")
            )));
        }
    };
    Ok(text)
}
