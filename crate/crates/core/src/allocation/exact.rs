//! Numeric maximiser of `phi` over per-RIS powers.
//!
//! Works in normalised powers `x_k = p_k / p_avg` on the set
//! `{ sum_k M_k x_k = sum_k M_k, x_k >= floor }` with a spectral projected
//! gradient ascent (Barzilai-Borwein steps, nonmonotone Armijo search).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{allocate_average, PerRisPowers};
use crate::analysis::{objective_phi_per_ris, stationarity_residual};
use crate::error::NotConverged;
use crate::scenario::LargeScale;
use crate::{Error, Result};

const ARMIJO: f64 = 1e-4;
const NONMONOTONE_WINDOW: usize = 10;
const ROUNDING_SLACK: f64 = 1e-14;
const STEP_MIN: f64 = 1e-12;
const STEP_MAX: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactOptions {
    /// Stop when `|P(x + g) - x| <= tol |g(uniform)|`.
    pub tol: f64,
    pub max_iterations: usize,
    /// Lower bound on `p_k / p_avg`.
    pub floor: f64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            tol: 1e-10,
            max_iterations: 100_000,
            floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub powers: PerRisPowers,
    pub phi: f64,
    pub iterations: usize,
    pub projected_gradient_norm: f64,
    /// Per-element gradient of `phi` at the solution, one value per RIS.
    pub residuals: Vec<f64>,
}

impl ExactSolution {
    /// `(max - min) / max` of the residuals over RISs above the floor.
    pub fn residual_spread(&self) -> f64 {
        spread(&self.residuals)
    }
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::MIN, f64::max);
    let min = v.iter().copied().fold(f64::MAX, f64::min);
    if max == 0.0 {
        0.0
    } else {
        (max - min) / max.abs()
    }
}

struct Problem<'a> {
    ls: &'a LargeScale,
    elements: &'a [usize],
    weights: Vec<f64>,
    slots: f64,
    p_avg: f64,
    sigma_z_sq: f64,
    floor: f64,
    scale: f64,
}

impl Problem<'_> {
    fn powers(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|x| x * self.p_avg).collect()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(
            objective_phi_per_ris(self.ls, self.elements, &self.powers(x), self.sigma_z_sq)?
                / self.scale,
        )
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let r = stationarity_residual(self.ls, self.elements, &self.powers(x), self.sigma_z_sq)?;
        Ok(r.iter()
            .zip(&self.weights)
            .map(|(r, m)| self.p_avg * m * r / self.scale)
            .collect())
    }

    /// Euclidean projection onto `{ sum M x = slots, x >= floor }`.
    fn project(&self, y: &[f64]) -> Vec<f64> {
        let k = y.len();
        let mut fixed = vec![false; k];
        loop {
            let mut num = -self.slots;
            let mut den = 0.0;
            for i in 0..k {
                if fixed[i] {
                    num += self.weights[i] * self.floor;
                } else {
                    num += self.weights[i] * y[i];
                    den += self.weights[i] * self.weights[i];
                }
            }
            let tau = if den > 0.0 { num / den } else { 0.0 };
            let mut changed = false;
            for i in 0..k {
                if !fixed[i] && y[i] - tau * self.weights[i] < self.floor {
                    fixed[i] = true;
                    changed = true;
                }
            }
            if !changed {
                return (0..k)
                    .map(|i| {
                        if fixed[i] {
                            self.floor
                        } else {
                            y[i] - tau * self.weights[i]
                        }
                    })
                    .collect();
            }
        }
    }

    fn projected_step(&self, x: &[f64], g: &[f64], step: f64) -> Vec<f64> {
        let y: Vec<f64> = x.iter().zip(g).map(|(x, g)| x + step * g).collect();
        self.project(&y).iter().zip(x).map(|(p, x)| p - x).collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

/// Maximises `phi` starting from uniform powers.
pub fn solve_exact(
    ls: &LargeScale,
    elements: &[usize],
    p_avg: f64,
    sigma_z_sq: f64,
    opts: &ExactOptions,
) -> Result<ExactSolution> {
    solve_from(ls, elements, p_avg, sigma_z_sq, opts, None)
}

fn solve_from(
    ls: &LargeScale,
    elements: &[usize],
    p_avg: f64,
    sigma_z_sq: f64,
    opts: &ExactOptions,
    start: Option<&[f64]>,
) -> Result<ExactSolution> {
    super::check_lengths(ls, elements)?;
    if !(p_avg > 0.0) || !p_avg.is_finite() {
        return Err(Error::domain("p_avg", p_avg, "must be positive and finite"));
    }
    if !(sigma_z_sq > 0.0) {
        return Err(Error::domain("sigma_z^2", sigma_z_sq, "must be positive"));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::domain(
            "solver tolerance",
            opts.tol,
            "must be positive",
        ));
    }
    let weights: Vec<f64> = elements.iter().map(|&m| m as f64).collect();
    let slots: f64 = weights.iter().sum();
    if !(opts.floor >= 0.0) || opts.floor * slots >= slots {
        return Err(Error::domain(
            "power floor",
            opts.floor,
            "must lie in [0, 1)",
        ));
    }
    let uniform = vec![1.0; elements.len()];
    let mut problem = Problem {
        ls,
        elements,
        weights,
        slots,
        p_avg,
        sigma_z_sq,
        floor: opts.floor,
        scale: 1.0,
    };
    let f_uniform = problem.value(&uniform)?;
    problem.scale = if f_uniform > 0.0 { f_uniform } else { 1.0 };

    let finish = |x: &[f64], iterations: usize, pg: f64| -> Result<ExactSolution> {
        let p = problem.powers(x);
        let powers = PerRisPowers::new(p.clone(), elements, p_avg)?;
        Ok(ExactSolution {
            phi: objective_phi_per_ris(ls, elements, &p, sigma_z_sq)?,
            residuals: stationarity_residual(ls, elements, &p, sigma_z_sq)?,
            powers,
            iterations,
            projected_gradient_norm: pg,
        })
    };

    let reference = norm(&problem.gradient(&uniform)?);
    if elements.len() == 1 || reference == 0.0 {
        let x = allocate_average(elements, 1.0)?.into_vec();
        return finish(&x, 0, 0.0);
    }
    let threshold = opts.tol * reference;

    let mut x = match start {
        Some(s) => problem.project(s),
        None => uniform,
    };
    let mut f = problem.value(&x)?;
    let mut g = problem.gradient(&x)?;
    let mut history = vec![f];
    let mut best = (f, x.clone());
    let mut pg_norm = norm(&problem.projected_step(&x, &g, 1.0));
    let mut step = {
        let inf = problem
            .projected_step(&x, &g, 1.0)
            .iter()
            .fold(0.0f64, |a, b| a.max(b.abs()));
        if inf > 0.0 {
            (1.0 / inf).clamp(STEP_MIN, STEP_MAX)
        } else {
            1.0
        }
    };

    for it in 0..opts.max_iterations {
        if pg_norm <= threshold {
            return finish(&x, it, pg_norm);
        }
        let d = problem.projected_step(&x, &g, step);
        let slope = dot(&g, &d);
        let f_ref = history.iter().copied().fold(f64::MIN, f64::max);
        let mut lambda = 1.0;
        let (x_new, f_new) = loop {
            let trial: Vec<f64> = x
                .iter()
                .zip(&d)
                .map(|(x, d)| (x + lambda * d).max(problem.floor))
                .collect();
            let f_trial = problem.value(&trial)?;
            // values within rounding of the reference count as no decrease
            let slack = ROUNDING_SLACK * f_ref.abs();
            if f_trial >= f_ref + ARMIJO * lambda * slope - slack || lambda < 1e-20 {
                break (trial, f_trial);
            }
            lambda *= 0.5;
        };
        let g_new = problem.gradient(&x_new)?;
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sty = dot(&s, &y);
        step = if sty < 0.0 {
            (dot(&s, &s) / -sty).clamp(STEP_MIN, STEP_MAX)
        } else {
            STEP_MAX
        };
        x = x_new;
        f = f_new;
        g = g_new;
        if f > best.0 {
            best = (f, x.clone());
        }
        history.push(f);
        if history.len() > NONMONOTONE_WINDOW {
            history.remove(0);
        }
        pg_norm = norm(&problem.projected_step(&x, &g, 1.0));
    }
    if pg_norm <= threshold {
        return finish(&x, opts.max_iterations, pg_norm);
    }
    let best_powers = problem.powers(&best.1);
    Err(Error::NotConverged(Box::new(NotConverged {
        iterations: opts.max_iterations,
        residuals: stationarity_residual(ls, elements, &best_powers, sigma_z_sq)?,
        best_powers,
        projected_gradient_norm: pg_norm,
    })))
}

/// [`solve_exact`] with default options and the given tolerance.
pub fn allocate_exact_numeric(
    ls: &LargeScale,
    elements: &[usize],
    p_avg: f64,
    sigma_z_sq: f64,
    tol: f64,
) -> Result<PerRisPowers> {
    let opts = ExactOptions {
        tol,
        ..ExactOptions::default()
    };
    Ok(solve_exact(ls, elements, p_avg, sigma_z_sq, &opts)?.powers)
}

/// Solutions from the uniform start and from random feasible starts.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiStartReport {
    /// Highest-`phi` solution found.
    pub best: ExactSolution,
    pub solutions: Vec<ExactSolution>,
    /// `(max phi - min phi) / max phi` across starts.
    pub phi_spread: f64,
    /// Largest relative power difference from `best` across starts.
    pub power_spread: f64,
}

pub fn exact_multistart(
    ls: &LargeScale,
    elements: &[usize],
    p_avg: f64,
    sigma_z_sq: f64,
    opts: &ExactOptions,
    random_starts: usize,
    seed: u64,
) -> Result<MultiStartReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut solutions = vec![solve_from(ls, elements, p_avg, sigma_z_sq, opts, None)?];
    for _ in 0..random_starts {
        let start: Vec<f64> = (0..elements.len())
            .map(|_| rng.random_range(0.2..5.0))
            .collect();
        let slots: f64 = elements.iter().map(|&m| m as f64).sum();
        let spent: f64 = start.iter().zip(elements).map(|(x, &m)| x * m as f64).sum();
        let start: Vec<f64> = start.iter().map(|x| x * slots / spent).collect();
        solutions.push(solve_from(
            ls,
            elements,
            p_avg,
            sigma_z_sq,
            opts,
            Some(&start),
        )?);
    }
    let best = solutions
        .iter()
        .max_by(|a, b| a.phi.total_cmp(&b.phi))
        .cloned()
        .expect("at least one start");
    let phis: Vec<f64> = solutions.iter().map(|s| s.phi).collect();
    let power_spread = solutions
        .iter()
        .flat_map(|s| {
            s.powers
                .as_slice()
                .iter()
                .zip(best.powers.as_slice())
                .map(|(a, b)| (a - b).abs() / b)
        })
        .fold(0.0, f64::max);
    Ok(MultiStartReport {
        phi_spread: spread(&phis),
        best,
        solutions,
        power_spread,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::{allocate_large_m, allocate_moderate_snr_with_fallback};
    use crate::scenario::{cascaded_large_scale, two_ris_scenario};
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn symmetric_layout_stays_uniform() {
        let ls = LargeScale::from_beta_sq(vec![1e-10, 1e-10, 1e-10]).unwrap();
        let sol = solve_exact(&ls, &[8, 8, 8], 1e-4, 1e-14, &ExactOptions::default()).unwrap();
        for p in sol.powers.as_slice() {
            assert!(rel(*p, 1e-4) < 1e-12);
        }
    }

    #[test]
    fn single_ris_gets_average_power() {
        let ls = LargeScale::from_beta_sq(vec![1e-10]).unwrap();
        let sol = solve_exact(&ls, &[50], 2e-3, 1e-14, &ExactOptions::default()).unwrap();
        assert_eq!(sol.powers.as_slice(), &[2e-3]);
    }

    #[test]
    fn two_ris_layout_converges_to_stationary_point() {
        let s =
            two_ris_scenario(50.0, 25.0, 320, 32, crate::scenario::dbm_to_watts(-13.0)).unwrap();
        let ls = cascaded_large_scale(&s).unwrap();
        let sol = solve_exact(
            &ls,
            &s.elements(),
            s.p_avg,
            s.sigma_z_sq,
            &ExactOptions::default(),
        )
        .unwrap();
        sol.powers.check(&s.elements(), s.p_avg).unwrap();
        assert!(sol.residual_spread() < 1e-6, "{:?}", sol.residuals);
        let report = exact_multistart(
            &ls,
            &s.elements(),
            s.p_avg,
            s.sigma_z_sq,
            &ExactOptions::default(),
            4,
            9,
        )
        .unwrap();
        assert!(report.phi_spread < 1e-9);
        assert!(report.power_spread < 1e-5);
    }

    #[test]
    fn projection_is_feasible_and_idempotent() {
        let ls = LargeScale::from_beta_sq(vec![1.0, 1.0, 1.0]).unwrap();
        let problem = Problem {
            ls: &ls,
            elements: &[1, 2, 3],
            weights: vec![1.0, 2.0, 3.0],
            slots: 6.0,
            p_avg: 1.0,
            sigma_z_sq: 1.0,
            floor: 1e-6,
            scale: 1.0,
        };
        let p = problem.project(&[10.0, -4.0, 0.5]);
        let spent: f64 = p.iter().zip(&problem.weights).map(|(a, b)| a * b).sum();
        assert!((spent - 6.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= 1e-6));
        let q = problem.project(&p);
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn iteration_cap_reports_best_iterate() {
        let ls = LargeScale::from_beta_sq(vec![1e-10, 1e-12]).unwrap();
        let opts = ExactOptions {
            tol: 1e-300,
            max_iterations: 3,
            ..ExactOptions::default()
        };
        match solve_exact(&ls, &[10, 10], 1e-4, 1e-14, &opts) {
            Err(Error::NotConverged(nc)) => {
                assert_eq!(nc.iterations, 3);
                assert_eq!(nc.best_powers.len(), 2);
                assert_eq!(nc.residuals.len(), 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn low_snr_optimum_favours_the_stronger_link() {
        // per-element SNR of -20 dB and -10 dB: the maximiser of phi gives the
        // weak RIS less power, unlike every closed form
        let ls = LargeScale::from_beta_sq(vec![1e-12, 1e-11]).unwrap();
        let sol = solve_exact(&ls, &[32, 32], 1e-4, 1e-14, &ExactOptions::default()).unwrap();
        let p = sol.powers.as_slice();
        assert!(p[0] < 0.5 * p[1], "{p:?}");
        let eq29 = crate::allocation::allocate_equal_m(&ls, 2, 1e-4).unwrap();
        assert!(eq29.as_slice()[0] > eq29.as_slice()[1]);
        assert!(sol.residual_spread() < 1e-6);
    }

    #[test]
    fn moderate_snr_agrees_with_closed_form() {
        // per-element SNR 20 dB and 26 dB, M = [100, 100]
        let ls = LargeScale::from_beta_sq(vec![1e-8, 4e-8]).unwrap();
        let sol = solve_exact(&ls, &[100, 100], 1e-4, 1e-14, &ExactOptions::default()).unwrap();
        let eq27 = crate::allocation::allocate_moderate_snr(&ls, &[100, 100], 1e-4).unwrap();
        for (a, b) in sol.powers.as_slice().iter().zip(eq27.as_slice()) {
            assert!(rel(*a, *b) < 0.05, "{a} vs {b}");
        }
    }

    fn arb_layout() -> impl Strategy<Value = (Vec<f64>, Vec<usize>)> {
        prop::collection::vec((1e-12f64..1e-9, 2usize..200), 2..5)
            .prop_map(|v| v.into_iter().unzip())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn exact_dominates_closed_forms((b, m) in arb_layout(), p_dbm in -30.0f64..0.0) {
            let p = crate::scenario::dbm_to_watts(p_dbm);
            let sigma = 1e-14;
            let ls = LargeScale::from_beta_sq(b).unwrap();
            let sol = solve_exact(&ls, &m, p, sigma, &ExactOptions::default()).unwrap();
            let candidates = [
                allocate_average(&m, p).unwrap(),
                allocate_moderate_snr_with_fallback(&ls, &m, p).unwrap().0,
                allocate_large_m(&ls, &m, p).unwrap(),
            ];
            for c in candidates {
                let phi = objective_phi_per_ris(&ls, &m, c.as_slice(), sigma).unwrap();
                prop_assert!(sol.phi >= phi * (1.0 - 1e-9), "{} < {}", sol.phi, phi);
            }
        }

        #[test]
        fn exact_is_monotone_in_link_gain_at_moderate_snr(
            b in prop::collection::vec(1e-9f64..1e-6, 2..5),
            m in 2usize..200,
        ) {
            // per-element estimation SNR >= 10 dB on every RIS
            let ls = LargeScale::from_beta_sq(b.clone()).unwrap();
            let m = vec![m; b.len()];
            let sol = solve_exact(&ls, &m, 1e-4, 1e-14, &ExactOptions::default()).unwrap();
            let p = sol.powers.as_slice();
            for i in 0..b.len() {
                for j in 0..b.len() {
                    if b[i] <= b[j] {
                        prop_assert!(p[i] >= p[j] * (1.0 - 1e-6));
                    }
                }
            }
        }
    }
}
