use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{QmcError, Result};

/// Closed-form sample count with the constants it was evaluated at.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleBudget {
    pub n: u64,
    pub formula_name: String,
    pub dims: Vec<usize>,
    pub target: f64,
    /// Every constant the formula reads, defaults filled in.
    pub constants: BTreeMap<String, f64>,
    /// Unrounded value and the branches of min/max expressions.
    pub aux: BTreeMap<String, f64>,
}

impl SampleBudget {
    /// Re-evaluate from the stored inputs.
    pub fn recompute(&self) -> Result<SampleBudget> {
        sample_budget(&self.formula_name, &self.dims, self.target, &self.constants)
    }
}

pub const DEFAULT_C: f64 = 100.0;
pub const DEFAULT_K: f64 = 1.0;

/// Every formula accepted by [`sample_budget`].
pub const FORMULAS: &[&str] = &[
    "hhj_fidelity",
    "ow16_trace",
    "bow17_fidelity",
    "bow17_trace",
    "bow17_l2",
    "thm1_fidelity",
    "thm1_trace",
    "thm1_explicit",
    "thm2_fidelity",
    "thm2_trace",
    "thm3_test",
    "thm4_multipartite",
];

fn dims_exact(name: &str, dims: &[usize], n: usize) -> Result<()> {
    if dims.len() != n {
        return Err(QmcError::InvalidArgument(format!(
            "{name} takes {n} dimension(s), got {}",
            dims.len()
        )));
    }
    Ok(())
}

/// `(d_A^2 + d_C^2) d_B^2 ln(d_A d_B d_C / delta) / delta`.
fn thm1_log_branch(d: [f64; 3], delta: f64) -> f64 {
    let [a, b, c] = d;
    (a * a + c * c) * b * b * (a * b * c / delta).ln() / delta
}

/// Tester cost when the pair `(x, y)` is the one estimated and `z` is the
/// remaining factor: `x^2 y^2 ln(x y / delta) / delta + x y z / eps^2` with
/// `delta = eps^2 / (400 x y z)`.
fn thm3_branch(x: f64, y: f64, z: f64, eps: f64) -> f64 {
    let delta = eps * eps / (400.0 * x * y * z);
    x * x * y * y * (x * y / delta).ln() / delta + x * y * z / (eps * eps)
}

/// Evaluate a named sample-complexity formula.
///
/// `constants` may set `C` (default 100) and `k` (default 1, only read by
/// `hhj_fidelity`). `hhj_fidelity` and `thm1_explicit` carry their own
/// factor 100 and ignore `C`. The result is `max(1, ceil(value))`.
pub fn sample_budget(
    formula_name: &str,
    dims: &[usize],
    target: f64,
    constants: &BTreeMap<String, f64>,
) -> Result<SampleBudget> {
    if !FORMULAS.contains(&formula_name) {
        return Err(QmcError::UnknownFormula(formula_name.to_string()));
    }
    if !(target > 0.0) || !target.is_finite() {
        return Err(QmcError::InvalidArgument(format!(
            "target must be positive, got {target}"
        )));
    }
    if dims.is_empty() || dims.contains(&0) {
        return Err(QmcError::InvalidArgument(
            "dimensions must be positive".into(),
        ));
    }
    let get = |key: &str, default: f64| constants.get(key).copied().unwrap_or(default);
    let mut used = BTreeMap::new();
    let mut aux = BTreeMap::new();
    let c = get("C", DEFAULT_C);
    let f: Vec<f64> = dims.iter().map(|&d| d as f64).collect();
    let t = target;

    let value = match formula_name {
        "hhj_fidelity" => {
            dims_exact(formula_name, dims, 1)?;
            let k = get("k", DEFAULT_K);
            used.insert("k".to_string(), k);
            let d = f[0];
            100.0 * k * d * d * (d / t).ln() / t
        }
        "ow16_trace" => {
            dims_exact(formula_name, dims, 1)?;
            used.insert("C".to_string(), c);
            c * f[0] * f[0] / (t * t)
        }
        "bow17_fidelity" => {
            dims_exact(formula_name, dims, 1)?;
            used.insert("C".to_string(), c);
            c * f[0] / t
        }
        "bow17_trace" => {
            dims_exact(formula_name, dims, 1)?;
            used.insert("C".to_string(), c);
            c * f[0] / (t * t)
        }
        "bow17_l2" => {
            used.insert("C".to_string(), c);
            c / (t * t)
        }
        "thm1_fidelity" => {
            dims_exact(formula_name, dims, 3)?;
            used.insert("C".to_string(), c);
            let d = [f[0], f[1], f[2]];
            let log_branch = thm1_log_branch(d, t);
            let poly_branch = (d[0] * d[0] + d[2] * d[2]) * d[1] * d[1] / t.powi(4);
            aux.insert("branch_log".to_string(), c * log_branch);
            aux.insert("branch_poly".to_string(), c * poly_branch);
            c * log_branch.min(poly_branch)
        }
        "thm1_trace" => {
            // First branch: fidelity route at delta = eps^2 / 2. Second: the
            // trace-norm tomography route.
            dims_exact(formula_name, dims, 3)?;
            used.insert("C".to_string(), c);
            let d = [f[0], f[1], f[2]];
            let delta = t * t / 2.0;
            let log_branch = thm1_log_branch(d, delta);
            let poly_branch = (d[0] * d[0] + d[2] * d[2]) * d[1] * d[1] / t.powi(4);
            aux.insert("delta".to_string(), delta);
            aux.insert("branch_log".to_string(), c * log_branch);
            aux.insert("branch_poly".to_string(), c * poly_branch);
            c * log_branch.min(poly_branch)
        }
        "thm1_explicit" => {
            dims_exact(formula_name, dims, 3)?;
            let (a, b, cc) = (f[0], f[1], f[2]);
            let ab = 100.0 * a * a * b * b * (a * b / t).ln() / t;
            let bc = 100.0 * b * b * cc * cc * (b * cc / t).ln() / t;
            aux.insert("term_ab".to_string(), ab);
            aux.insert("term_bc".to_string(), bc);
            ab + bc
        }
        "thm2_fidelity" => {
            dims_exact(formula_name, dims, 3)?;
            used.insert("C".to_string(), c);
            c * (f[0] + f[2]) * f[1] / t
        }
        "thm2_trace" => {
            dims_exact(formula_name, dims, 3)?;
            used.insert("C".to_string(), c);
            c * (f[0] + f[2]) * f[1] / (t * t)
        }
        "thm3_test" => {
            dims_exact(formula_name, dims, 3)?;
            used.insert("C".to_string(), c);
            let (a, b, cc) = (f[0], f[1], f[2]);
            let via_bc = thm3_branch(b, cc, a, t);
            let via_ab = thm3_branch(a, b, cc, t);
            aux.insert("delta".to_string(), t * t / (400.0 * a * b * cc));
            aux.insert("branch_bc".to_string(), c * via_bc);
            aux.insert("branch_ab".to_string(), c * via_ab);
            c * via_bc.min(via_ab)
        }
        "thm4_multipartite" => {
            if dims.len() < 3 {
                return Err(QmcError::InvalidArgument(
                    "thm4_multipartite needs at least 3 parts".into(),
                ));
            }
            used.insert("C".to_string(), c);
            let m = dims.len() as f64;
            let delta_i = t / (8.0 * m * m);
            aux.insert("delta_i".to_string(), delta_i);
            let worst = f
                .windows(2)
                .map(|w| {
                    let pair = w[0] * w[1];
                    pair * pair * m.ln() * (pair / delta_i).ln() / delta_i
                })
                .fold(f64::NEG_INFINITY, f64::max);
            c * worst
        }
        _ => unreachable!(),
    };
    aux.insert("raw".to_string(), value);
    let n = if value.is_nan() {
        return Err(QmcError::InvalidArgument(format!(
            "{formula_name} evaluated to NaN"
        )));
    } else if value >= u64::MAX as f64 {
        u64::MAX
    } else {
        (value.ceil() as u64).max(1)
    };
    Ok(SampleBudget {
        n,
        formula_name: formula_name.to_string(),
        dims: dims.to_vec(),
        target,
        constants: used,
        aux,
    })
}

/// [`sample_budget`] with default constants.
pub fn default_budget(formula_name: &str, dims: &[usize], target: f64) -> Result<SampleBudget> {
    sample_budget(formula_name, dims, target, &BTreeMap::new())
}
