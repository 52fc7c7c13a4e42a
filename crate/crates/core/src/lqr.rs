//! Discrete-time LQR for predecessor gap regulation.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::dynamics::{ActuatorLimits, VehicleState};
use crate::error::{Error, Result};

/// Solves the discrete algebraic Riccati equation by fixed-point iteration
/// from `P = Q`. Returns `(P, K)` with `K = (R + BᵀPB)⁻¹ BᵀPA`.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::invalid("inconsistent Riccati dimensions"));
    }
    if r.clone().cholesky().is_none() {
        return Err(Error::invalid("R must be symmetric positive definite"));
    }
    check_stabilizable(a, b)?;

    let at = a.transpose();
    let mut p = q.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let gain = gain_from(&p, a, b, r)?;
        let next = q + &at * &p * a - &at * &p * b * &gain;
        let next = (&next + next.transpose()) * 0.5;
        residual = (&next - &p).norm();
        p = next;
        if !residual.is_finite() {
            break;
        }
        if residual < tol {
            let k = gain_from(&p, a, b, r)?;
            return Ok((p, k));
        }
    }
    Err(Error::RiccatiNoConvergence {
        iterations: max_iter,
        residual,
    })
}

fn gain_from(p: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let bt = b.transpose();
    let s = r + &bt * p * b;
    let rhs = &bt * p * a;
    s.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::invalid("R + BᵀPB is singular"))
}

/// PBH test: every eigenvalue with `|λ| >= 1` must keep `[A − λI, B]` full rank.
pub fn check_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    let ac: DMatrix<Complex<f64>> = a.map(|x| Complex::new(x, 0.0));
    let bc: DMatrix<Complex<f64>> = b.map(|x| Complex::new(x, 0.0));
    for lambda in a.complex_eigenvalues().iter() {
        if lambda.norm() < 1.0 - 1e-12 {
            continue;
        }
        let mut pbh = DMatrix::<Complex<f64>>::zeros(n, n + b.ncols());
        pbh.view_mut((0, 0), (n, n))
            .copy_from(&(&ac - DMatrix::<Complex<f64>>::identity(n, n) * *lambda));
        pbh.view_mut((0, n), (n, b.ncols())).copy_from(&bc);
        let sv = pbh.svd(false, false).singular_values;
        let scale = sv.iter().copied().fold(1.0, f64::max);
        if sv.iter().filter(|s| **s > 1e-10 * scale).count() < n {
            return Err(Error::NotStabilizable(format!("uncontrollable mode at λ = {lambda}")));
        }
    }
    Ok(())
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|l| l.norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqrConfig {
    /// Diagonal of Q over (spacing error, relative speed).
    pub q: [f64; 2],
    pub r: f64,
    /// Desired bumper gap to the predecessor, m.
    pub h_target: f64,
    /// Speed held by the platoon lead while the LQR mode is active, m/s.
    pub cruise_speed: f64,
    /// Proportional gain of the lead's cruise loop, 1/s.
    pub lead_kp: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LqrConfig {
    fn default() -> Self {
        Self {
            q: [1.0, 0.5],
            r: 1.0,
            h_target: 8.0,
            cruise_speed: 28.0,
            lead_kp: 0.6,
            tol: 1e-12,
            max_iter: 200_000,
        }
    }
}

/// A solved gap-regulation design for one control period.
#[derive(Debug, Clone, PartialEq)]
pub struct LqrDesign {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: f64,
    pub k: [f64; 2],
    pub dt: f64,
    pub config: LqrConfig,
}

impl LqrDesign {
    /// Double integrator on `(e_s, e_v)` driven by the relative acceleration.
    pub fn new(config: LqrConfig, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::config("lqr.dt", "must be positive"));
        }
        if !(config.r > 0.0) || config.q.iter().any(|q| !(*q >= 0.0)) {
            return Err(Error::config("lqr", "need q >= 0 and r > 0"));
        }
        let a = DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.5 * dt * dt, dt]);
        let q = DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&config.q));
        let r = DMatrix::from_element(1, 1, config.r);
        let (_, k) = solve_dare(&a, &b, &q, &r, config.tol, config.max_iter)?;
        Ok(Self {
            k: [k[(0, 0)], k[(0, 1)]],
            a,
            b,
            q,
            r: config.r,
            dt,
            config,
        })
    }

    pub fn closed_loop(&self) -> DMatrix<f64> {
        let k = DMatrix::from_row_slice(1, 2, &self.k);
        &self.a - &self.b * k
    }

    /// Follower acceleration for spacing error `e_s` and relative speed `e_v`.
    pub fn feedback(&self, e_s: f64, e_v: f64) -> f64 {
        self.k[0] * e_s + self.k[1] * e_v
    }
}

/// Acceleration commands for a single-lane platoon ordered front to back.
/// The lead holds the cruise speed; each follower regulates its gap to the
/// vehicle ahead.
pub fn lqr_follow(platoon: &[&VehicleState], design: &LqrDesign, limits: &ActuatorLimits) -> Result<Vec<f64>> {
    let Some(lead) = platoon.first() else {
        return Ok(Vec::new());
    };
    if platoon.iter().any(|s| s.lane != lead.lane) {
        return Err(Error::PlatoonNotSingleLane);
    }
    if platoon.windows(2).any(|w| w[0].s < w[1].s) {
        return Err(Error::invalid("platoon must be ordered by decreasing s"));
    }
    let cfg = &design.config;
    let mut out = Vec::with_capacity(platoon.len());
    out.push(limits.clamp_accel(cfg.lead_kp * (cfg.cruise_speed - lead.v)));
    for w in platoon.windows(2) {
        let (pred, me) = (w[0], w[1]);
        let e_s = pred.rear() - me.front() - cfg.h_target;
        let e_v = pred.v - me.v;
        out.push(limits.clamp_accel(design.feedback(e_s, e_v)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::VehicleKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const DT: f64 = 1.0 / 15.0;

    #[test]
    fn zero_dynamics_fix_p_at_q() {
        let a = DMatrix::zeros(2, 2);
        let b = DMatrix::from_row_slice(2, 1, &[0.3, 1.0]);
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::identity(1, 1);
        let (p, k) = solve_dare(&a, &b, &q, &r, 1e-12, 10).unwrap();
        assert_eq!(p, q);
        assert!(k.iter().all(|x| *x == 0.0));
    }

    /// Scalar-arithmetic Riccati iteration for a 2x2 system with one input.
    fn oracle_gain(dt: f64, q: [f64; 2], r: f64) -> [f64; 2] {
        let a = [[1.0, dt], [0.0, 1.0]];
        let b = [0.5 * dt * dt, dt];
        let mut p = [[q[0], 0.0], [0.0, q[1]]];
        let gain = |p: &[[f64; 2]; 2]| {
            let pb = [p[0][0] * b[0] + p[0][1] * b[1], p[1][0] * b[0] + p[1][1] * b[1]];
            let s = r + b[0] * pb[0] + b[1] * pb[1];
            // BᵀPA = (PB)ᵀA since P is symmetric.
            [
                (pb[0] * a[0][0] + pb[1] * a[1][0]) / s,
                (pb[0] * a[0][1] + pb[1] * a[1][1]) / s,
            ]
        };
        loop {
            let k = gain(&p);
            let mut next = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    let mut atpa = 0.0;
                    for u in 0..2 {
                        for v in 0..2 {
                            atpa += a[u][i] * p[u][v] * a[v][j];
                        }
                    }
                    let atpb_i = (0..2).map(|u| a[u][i] * (p[u][0] * b[0] + p[u][1] * b[1])).sum::<f64>();
                    let qij = if i == j { q[i] } else { 0.0 };
                    next[i][j] = qij + atpa - atpb_i * k[j];
                }
            }
            let diff = (0..2)
                .flat_map(|i| (0..2).map(move |j| (i, j)))
                .map(|(i, j)| (next[i][j] - p[i][j]).powi(2))
                .sum::<f64>()
                .sqrt();
            p = next;
            if diff < 1e-12 {
                return gain(&p);
            }
        }
    }

    #[test]
    fn double_integrator_gain_matches_oracle() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, DT, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.5 * DT * DT, DT]);
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::identity(1, 1);
        let (_, k) = solve_dare(&a, &b, &q, &r, 1e-12, 200_000).unwrap();
        let expected = oracle_gain(DT, [1.0, 1.0], 1.0);
        assert!((k[(0, 0)] - expected[0]).abs() < 1e-8, "{} vs {}", k[(0, 0)], expected[0]);
        assert!((k[(0, 1)] - expected[1]).abs() < 1e-8);
    }

    #[test]
    fn uncontrollable_unstable_mode_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.2, 0.0, 0.0, 0.5]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::identity(1, 1);
        assert!(matches!(solve_dare(&a, &b, &q, &r, 1e-10, 1000), Err(Error::NotStabilizable(_))));
    }

    #[test]
    fn non_convergence_is_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, DT, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.5 * DT * DT, DT]);
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::identity(1, 1);
        assert!(matches!(
            solve_dare(&a, &b, &q, &r, 1e-12, 3),
            Err(Error::RiccatiNoConvergence { iterations: 3, .. })
        ));
    }

    #[test]
    fn random_designs_are_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..25 {
            let n = rng.gen_range(1..=4);
            let m = rng.gen_range(1..=n);
            let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.5..1.5));
            let b = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0));
            let mq = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let q = mq.transpose() * &mq + DMatrix::identity(n, n) * 0.1;
            let r = DMatrix::identity(m, m);
            let (_, k) = solve_dare(&a, &b, &q, &r, 1e-10, 100_000).unwrap();
            assert!(spectral_radius(&(&a - &b * k)) < 1.0);
        }
    }

    fn car(id: u32, s: f64, v: f64) -> VehicleState {
        VehicleState {
            id,
            lane: 1,
            s,
            y: 6.0,
            heading: 0.0,
            v,
            a: 0.0,
            length: 3.5,
            width: 1.7,
            kind: VehicleKind::Cav,
            in_platoon: true,
        }
    }

    #[test]
    fn equilibrium_gives_zero_and_gap_excess_accelerates() {
        let design = LqrDesign::new(LqrConfig::default(), DT).unwrap();
        let limits = ActuatorLimits::default();
        assert_eq!(design.feedback(0.0, 0.0), 0.0);
        // Binary-exact positions so the spacing error is exactly zero.
        let spacing = 3.5 + 8.0;
        let lead = car(0, 100.0, 28.0);
        let f1 = car(1, 100.0 - spacing, 28.0);
        let f2 = car(2, 100.0 - 2.0 * spacing, 28.0);
        let cmds = lqr_follow(&[&lead, &f1, &f2], &design, &limits).unwrap();
        assert_eq!(cmds, vec![0.0, 0.0, 0.0]);

        let far = car(1, 100.0 - spacing - 2.0, 28.0);
        let cmds = lqr_follow(&[&lead, &far], &design, &limits).unwrap();
        assert!((cmds[1] - design.k[0] * 2.0).abs() < 1e-12 && cmds[1] > 0.0);

        let mut other_lane = car(1, 80.0, 28.0);
        other_lane.lane = 2;
        assert!(matches!(
            lqr_follow(&[&lead, &other_lane], &design, &limits),
            Err(Error::PlatoonNotSingleLane)
        ));
    }

    #[test]
    fn leader_speed_step_spacing_error_decays() {
        let design = LqrDesign::new(LqrConfig::default(), DT).unwrap();
        assert!(spectral_radius(&design.closed_loop()) < 1.0);
        // Discrete gap model: the predecessor jumps 2 m/s faster at t = 0.
        let (mut e_s, mut e_v) = (0.0, 2.0);
        let mut settled_at = None;
        for k in 0..(15 * 20) {
            let u = design.feedback(e_s, e_v).clamp(-5.0, 3.0);
            e_s += e_v * DT - 0.5 * u * DT * DT;
            e_v -= u * DT;
            if e_s.abs() < 0.1 {
                settled_at.get_or_insert(k);
            } else {
                settled_at = None;
            }
        }
        let t = settled_at.expect("spacing error never settled") as f64 * DT;
        assert!(t <= 10.0, "settled after {t} s");
    }
}
