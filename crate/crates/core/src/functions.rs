//! Volatility, weight and drift functions, and the name registry used by
//! campaign configs.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Number of probe points used to spot-check a declared bound.
const PROBE_COUNT: usize = 10_000;
const PROBE_RANGE: f64 = 50.0;

/// Names resolvable by [`ScalarFn::from_name`] and [`DriftFn::from_name`].
pub const REGISTRY: [&str; 4] = ["zero", "one", "cos", "inv_quad"];

/// A bounded real function of one real variable, used both as volatility `σ`
/// and as the weight `f` of the quadratic-variation process.
#[derive(Clone)]
pub enum ScalarFn {
    Zero,
    Constant(f64),
    Cos,
    /// `1 / (1 + x²)`
    InvQuad,
    Custom {
        name: Arc<str>,
        bound: f64,
        eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl ScalarFn {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "zero" => Ok(ScalarFn::Zero),
            "one" => Ok(ScalarFn::Constant(1.0)),
            "cos" => Ok(ScalarFn::Cos),
            "inv_quad" => Ok(ScalarFn::InvQuad),
            other => Err(Error::UnknownFunction(other.to_string())),
        }
    }

    /// Registers a user function after spot-checking `|f(x)| ≤ bound` on a
    /// 10⁴-point probe set over `[-50, 50]`.
    pub fn custom(
        name: &str,
        bound: f64,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(bound.is_finite() && bound >= 0.0) {
            return Err(Error::BoundViolated {
                name: name.into(),
                bound,
                x: f64::NAN,
                value: f64::NAN,
            });
        }
        for k in 0..PROBE_COUNT {
            let x = -PROBE_RANGE + 2.0 * PROBE_RANGE * k as f64 / (PROBE_COUNT - 1) as f64;
            let value = eval(x);
            if !value.is_finite() || value.abs() > bound {
                return Err(Error::BoundViolated {
                    name: name.into(),
                    bound,
                    x,
                    value,
                });
            }
        }
        Ok(ScalarFn::Custom {
            name: name.into(),
            bound,
            eval: Arc::new(eval),
        })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Constant(c) => *c,
            ScalarFn::Cos => x.cos(),
            ScalarFn::InvQuad => 1.0 / (1.0 + x * x),
            ScalarFn::Custom { eval, .. } => eval(x),
        }
    }

    /// `R = sup |f|`.
    pub fn bound(&self) -> f64 {
        match self {
            ScalarFn::Zero => 0.0,
            ScalarFn::Constant(c) => c.abs(),
            ScalarFn::Cos | ScalarFn::InvQuad => 1.0,
            ScalarFn::Custom { bound, .. } => *bound,
        }
    }

    pub fn name(&self) -> String {
        match self {
            ScalarFn::Zero => "zero".into(),
            ScalarFn::Constant(c) if *c == 1.0 => "one".into(),
            ScalarFn::Constant(c) => format!("const({c})"),
            ScalarFn::Cos => "cos".into(),
            ScalarFn::InvQuad => "inv_quad".into(),
            ScalarFn::Custom { name, .. } => name.to_string(),
        }
    }

    /// True when the function is identically zero.
    pub fn is_zero(&self) -> bool {
        matches!(self, ScalarFn::Zero) || matches!(self, ScalarFn::Constant(c) if *c == 0.0)
    }
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarFn({})", self.name())
    }
}

/// Drift density `M(s, t, W(s, t))`.
#[derive(Clone)]
pub enum DriftFn {
    Zero,
    /// `M = g(W)` for a registered scalar function `g`.
    OfSheet(ScalarFn),
    Custom {
        name: Arc<str>,
        eval: Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>,
    },
}

impl DriftFn {
    pub fn from_name(name: &str) -> Result<Self> {
        match ScalarFn::from_name(name)? {
            ScalarFn::Zero => Ok(DriftFn::Zero),
            g => Ok(DriftFn::OfSheet(g)),
        }
    }

    pub fn custom(name: &str, eval: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        DriftFn::Custom {
            name: name.into(),
            eval: Arc::new(eval),
        }
    }

    #[inline]
    pub fn eval(&self, s: f64, t: f64, w: f64) -> f64 {
        match self {
            DriftFn::Zero => 0.0,
            DriftFn::OfSheet(g) => g.eval(w),
            DriftFn::Custom { eval, .. } => eval(s, t, w),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            DriftFn::Zero => true,
            DriftFn::OfSheet(g) => g.is_zero(),
            DriftFn::Custom { .. } => false,
        }
    }

    pub fn name(&self) -> String {
        match self {
            DriftFn::Zero => "zero".into(),
            DriftFn::OfSheet(g) => g.name(),
            DriftFn::Custom { name, .. } => name.to_string(),
        }
    }
}

impl fmt::Debug for DriftFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DriftFn({})", self.name())
    }
}
