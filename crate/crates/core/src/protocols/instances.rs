//! Promise instances for the certification and testing simulations.

use rand::Rng;

use crate::error::{QmcError, Result};
use crate::linalg::{fidelity_psd, SystemLayout};
use crate::petz::petz_distance;
use crate::states::{random_full_rank, random_pure, DensityOperator, MarkovBlock, MarkovStructure};

#[derive(Clone, Debug)]
pub struct FarInstance {
    pub state: DensityOperator,
    /// Measured distance, always `>= goal`.
    pub achieved: f64,
    /// Position on the perturbation path.
    pub t: f64,
    pub redraws: usize,
}

const GRID: usize = 16;
const BISECT_ITERS: usize = 80;
const BISECT_REL_TOL: f64 = 1e-6;
const MAX_DRAWS: usize = 8;

/// First point on `t in (0, 1]` where `f` reaches `goal`, refined by
/// bisection from above. `f` need not be monotone; only the returned point is
/// guaranteed to satisfy `f >= goal`.
fn first_crossing<T>(
    mut f: impl FnMut(f64) -> Result<(T, f64)>,
    goal: f64,
) -> Result<std::result::Result<(T, f64, f64), f64>> {
    let mut lo = 0.0;
    let mut best = 0.0f64;
    for j in 1..=GRID {
        let t = j as f64 / GRID as f64;
        let (x, v) = f(t)?;
        best = best.max(v);
        if v < goal {
            lo = t;
            continue;
        }
        let (mut hi, mut hx, mut hv) = (t, x, v);
        for _ in 0..BISECT_ITERS {
            if hv <= goal * (1.0 + BISECT_REL_TOL) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let (mx, mv) = f(mid)?;
            if mv >= goal {
                hi = mid;
                hx = mx;
                hv = mv;
            } else {
                lo = mid;
            }
        }
        return Ok(Ok((hx, hv, hi)));
    }
    Ok(Err(best))
}

fn mixed_structure(
    base: &MarkovStructure,
    toward: &[(DensityOperator, DensityOperator)],
    t: f64,
) -> Result<MarkovStructure> {
    let blocks = base
        .blocks()
        .iter()
        .zip(toward)
        .map(|(b, (l, r))| {
            Ok(MarkovBlock {
                weight: b.weight,
                left: b.left.mix(l, t)?,
                right: b.right.mix(r, t)?,
                b_left: b.b_left,
                b_right: b.b_right,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MarkovStructure::new(base.d_a(), base.d_c(), blocks)
}

/// A Markov chain with the same block structure as `base` whose infidelity
/// from `base.assemble()` is at least `goal` (and within a relative `1e-6`
/// of it when the path is continuous). Only the block factors move, so the
/// result is an exact Markov chain.
pub fn qmc_far_instance<R: Rng + ?Sized>(
    base: &MarkovStructure,
    goal: f64,
    rng: &mut R,
) -> Result<FarInstance> {
    let sigma = base.assemble()?;
    let mut best = 0.0f64;
    for draw in 0..MAX_DRAWS {
        // Pure factors reach further from a full-rank base.
        let toward = base
            .blocks()
            .iter()
            .map(|b| {
                let l = random_pure(b.left.dim(), rng)?.with_layout(b.left.layout().clone())?;
                let r = random_pure(b.right.dim(), rng)?.with_layout(b.right.layout().clone())?;
                Ok((l, r))
            })
            .collect::<Result<Vec<_>>>()?;
        let found = first_crossing(
            |t| {
                let rho = mixed_structure(base, &toward, t)?.assemble()?;
                let v = (1.0 - fidelity_psd(rho.matrix(), sigma.matrix())?).max(0.0);
                Ok((rho, v))
            },
            goal,
        )?;
        match found {
            Ok((state, achieved, t)) => {
                return Ok(FarInstance {
                    state,
                    achieved,
                    t,
                    redraws: draw,
                })
            }
            Err(reached) => best = best.max(reached),
        }
    }
    Err(QmcError::InfeasibleTarget {
        target: goal,
        reached: best,
    })
}

/// A state `(1 - t) rho + t W` whose Petz self-distance
/// `||x - Petz(x_AB, x_BC)||_1` is at least `eps`.
pub fn markov_far_instance<R: Rng + ?Sized>(
    rho: &DensityOperator,
    eps: f64,
    rng: &mut R,
) -> Result<FarInstance> {
    if rho.layout().arity() != 3 {
        return Err(QmcError::WrongArity {
            expected: 3,
            found: rho.layout().arity(),
        });
    }
    let layout: SystemLayout = rho.layout().clone();
    let mut best = 0.0f64;
    for draw in 0..MAX_DRAWS {
        let w = if draw % 2 == 0 {
            random_pure(rho.dim(), rng)?.with_layout(layout.clone())?
        } else {
            random_full_rank(layout.clone(), rng)?
        };
        let found = first_crossing(
            |t| {
                let x = rho.mix(&w, t)?;
                let v = petz_distance(&x)?;
                Ok((x, v))
            },
            eps,
        )?;
        match found {
            Ok((state, achieved, t)) => {
                return Ok(FarInstance {
                    state,
                    achieved,
                    t,
                    redraws: draw,
                })
            }
            Err(reached) => best = best.max(reached),
        }
    }
    Err(QmcError::InfeasibleTarget {
        target: eps,
        reached: best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::petz::cmi;
    use crate::states::{random_qmc, BlockSpec, QmcSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn far_qmc_stays_markov() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for d_b in [2usize, 3] {
            let spec = BlockSpec::random(d_b, &mut rng);
            let base = MarkovStructure::random(2, 2, &spec, &mut rng).unwrap();
            let far = qmc_far_instance(&base, 0.1, &mut rng).unwrap();
            let sigma = base.assemble().unwrap();
            let v = 1.0 - fidelity_psd(far.state.matrix(), sigma.matrix()).unwrap();
            assert!(v >= 0.1 && v <= 0.1 * (1.0 + 1e-5), "{v}");
            assert!(cmi(&far.state).unwrap() < 1e-9);
            assert!(petz_distance(&far.state).unwrap() < 1e-8);
        }
    }

    #[test]
    fn far_from_markov_meets_eps() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let layout = SystemLayout::new(vec![2, 2, 2]).unwrap();
        for _ in 0..3 {
            let q = random_qmc(&layout, &QmcSpec::Random, &mut rng).unwrap();
            let far = markov_far_instance(&q, 0.3, &mut rng).unwrap();
            let d = petz_distance(&far.state).unwrap();
            assert!(d >= 0.3 && d < 0.3 * (1.0 + 1e-5), "{d}");
        }
    }

    #[test]
    fn unreachable_goal_is_infeasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let base = MarkovStructure::random(2, 2, &BlockSpec::new(vec![(1, 2)]), &mut rng).unwrap();
        assert!(matches!(
            qmc_far_instance(&base, 2.0, &mut rng),
            Err(QmcError::InfeasibleTarget { .. })
        ));
    }
}
