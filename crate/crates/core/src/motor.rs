//! Induction machine steady-state equivalent circuit and the discretized
//! acceleration timeline.
//!
//! Everything here is per-unit on the motor's own base: impedances on
//! `Z_base = V²/S_rated`, torque on `S_rated/ω_s`. With synchronous speed
//! equal to one per-unit, airgap power and electrical torque coincide.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::netmodel::MotorParams;

/// Default minimum accelerating torque, p.u.
pub const DEFAULT_STALL_MARGIN: f64 = 0.02;

/// Thevenin equivalent of the stator and magnetizing branch seen from the
/// rotor terminals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheveninEquivalent {
    /// `|V_th / V|²`.
    pub u_th_coeff: f64,
    pub r_th: f64,
    pub x_th: f64,
}

pub fn thevenin_at_slip(p: &MotorParams) -> Result<TheveninEquivalent> {
    if !(p.xm > 0.0) || !p.xm.is_finite() {
        return Err(Error::param("xm", "magnetizing reactance must be positive and finite"));
    }
    let zm = Complex64::new(0.0, p.xm);
    let zs = Complex64::new(p.rs, p.xls);
    let den = zs + zm;
    let ratio = zm / den;
    let zth = zm * zs / den;
    Ok(TheveninEquivalent {
        u_th_coeff: ratio.norm_sqr(),
        r_th: zth.re,
        x_th: zth.im,
    })
}

fn check_slip(s: f64) -> Result<()> {
    if s > 0.0 && s <= 1.0 {
        Ok(())
    } else {
        Err(Error::param("slip", format!("must lie in (0, 1], got {s}")))
    }
}

/// Electrical torque at slip `s` and squared terminal voltage `u`.
pub fn electrical_torque(th: &TheveninEquivalent, x_lr: f64, r_r: f64, s: f64, u: f64) -> Result<f64> {
    check_slip(s)?;
    let rs = r_r / s;
    let d = (th.r_th + rs).powi(2) + (th.x_th + x_lr).powi(2);
    Ok(rs * th.u_th_coeff * u / d)
}

/// Input admittance `(G, B)` with `P = G·U`, `Q = B·U`; `B > 0` when the
/// machine consumes reactive power.
pub fn input_admittance(p: &MotorParams, s: f64) -> Result<(f64, f64)> {
    check_slip(s)?;
    let y = 1.0 / input_impedance(p, s);
    Ok((y.re, -y.im))
}

pub fn input_impedance(p: &MotorParams, s: f64) -> Complex64 {
    let zm = Complex64::new(0.0, p.xm);
    let zr = Complex64::new(p.rr / s, p.xlr);
    Complex64::new(p.rs, p.xls) + zm * zr / (zm + zr)
}

/// Time to cross one slip step of width `ds` under constant accelerating
/// torque.
pub fn step_time(t_ele: f64, t_mec: f64, kd: f64, s: f64, h: f64, ds: f64, margin: f64) -> Result<f64> {
    if !(ds > 0.0) {
        return Err(Error::param("slip_step", "must be positive"));
    }
    dt_from_acc(t_ele - t_mec - kd * (1.0 - s), h, ds, margin, 0)
}

fn dt_from_acc(t_acc: f64, h: f64, ds: f64, margin: f64, step: usize) -> Result<f64> {
    if t_acc <= margin || t_acc.is_nan() {
        return Err(Error::Stall { step, t_acc, margin });
    }
    Ok(2.0 * h * ds / t_acc)
}

/// Steady-state slip at nominal voltage, or 1 (locked rotor) when the load
/// exceeds the electrical torque at every slip.
pub fn running_slip(p: &MotorParams) -> Result<f64> {
    match rated_slip(p) {
        Ok(s) => Ok(s.max(1e-6)),
        Err(Error::Stall { .. }) => Ok(1.0),
        Err(e) => Err(e),
    }
}

/// Slip at which electrical torque at `u = 1` meets the load on the stable
/// (low-slip) side of the torque curve.
pub fn rated_slip(p: &MotorParams) -> Result<f64> {
    let th = thevenin_at_slip(p)?;
    let acc = |s: f64| {
        electrical_torque(&th, p.xlr, p.rr, s, 1.0).unwrap() - p.mech.torque(s) - p.kd * (1.0 - s)
    };
    let mut lo = 1e-12;
    if acc(lo) >= 0.0 {
        return Ok(0.0);
    }
    let n = 4000;
    let mut hi = None;
    for i in 1..=n {
        // geometric scan from 1e-12 to 1
        let s = 10f64.powf(-12.0 + 12.0 * i as f64 / n as f64);
        if acc(s) > 0.0 {
            hi = Some(s);
            break;
        }
        lo = s;
    }
    let mut hi = hi.ok_or(Error::Stall {
        step: 1,
        t_acc: acc(1.0),
        margin: 0.0,
    })?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if acc(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Number of slip steps from standstill that stay above the rated slip.
pub fn default_k_max(s_rated: f64, ds: f64) -> usize {
    let q = (1.0 - s_rated) / ds;
    let k = q.floor();
    let k = if (q - k).abs() < 1e-12 { k - 1.0 } else { k };
    (k.max(1.0)) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlipGrid {
    pub ds: f64,
    /// `S_k = 1 − (k−1)·Δs`, `k = 1..=k_max`.
    pub slips: Vec<f64>,
}

impl SlipGrid {
    pub fn new(ds: f64, k_max: usize) -> Result<SlipGrid> {
        if !(ds > 0.0 && ds < 1.0) {
            return Err(Error::param("slip_step", "must lie in (0, 1)"));
        }
        if k_max == 0 {
            return Err(Error::param("k_max", "must be positive"));
        }
        let slips: Vec<f64> = (0..k_max).map(|k| 1.0 - k as f64 * ds).collect();
        if *slips.last().unwrap() <= 1e-12 {
            return Err(Error::param(
                "k_max",
                format!("{k_max} steps of {ds} reach zero slip"),
            ));
        }
        Ok(SlipGrid { ds, slips })
    }

    pub fn k_max(&self) -> usize {
        self.slips.len()
    }
}

/// Per-step linear coefficients of one motor's start.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlipStepModel {
    pub grid: SlipGrid,
    /// `T^ele_k = c_k · U`.
    pub c: Vec<f64>,
    pub g: Vec<f64>,
    pub b: Vec<f64>,
    pub t_mec: Vec<f64>,
    /// `Kd·(1 − S_k)`.
    pub friction: Vec<f64>,
    pub h: f64,
}

impl SlipStepModel {
    pub fn new(p: &MotorParams, grid: SlipGrid) -> Result<SlipStepModel> {
        let th = thevenin_at_slip(p)?;
        let mut m = SlipStepModel {
            c: Vec::new(),
            g: Vec::new(),
            b: Vec::new(),
            t_mec: Vec::new(),
            friction: Vec::new(),
            h: p.h,
            grid,
        };
        for &s in &m.grid.slips {
            m.c.push(electrical_torque(&th, p.xlr, p.rr, s, 1.0)?);
            let (g, b) = input_admittance(p, s)?;
            m.g.push(g);
            m.b.push(b);
            m.t_mec.push(p.mech.torque(s));
            m.friction.push(p.kd * (1.0 - s));
        }
        Ok(m)
    }

    /// Builds the model on the default grid: `k_max` from the rated slip
    /// unless given.
    pub fn for_motor(p: &MotorParams, ds: f64, k_max: Option<usize>) -> Result<SlipStepModel> {
        let k = match k_max {
            Some(k) => k,
            None => match rated_slip(p) {
                Ok(s) => default_k_max(s, ds),
                Err(Error::Stall { .. }) => default_k_max(0.0, ds),
                Err(e) => return Err(e),
            },
        };
        SlipStepModel::new(p, SlipGrid::new(ds, k)?)
    }

    pub fn k_max(&self) -> usize {
        self.grid.k_max()
    }

    /// Torque the motor must overcome at step `k` (0-based).
    pub fn load(&self, k: usize) -> f64 {
        self.t_mec[k] + self.friction[k]
    }

    /// `2·H·Δs`.
    pub fn time_scale(&self) -> f64 {
        2.0 * self.h * self.grid.ds
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedule {
    pub dt: Vec<f64>,
    /// Cumulative elapsed time at the end of each step.
    pub t: Vec<f64>,
}

impl Schedule {
    pub fn total(&self) -> f64 {
        self.t.last().copied().unwrap_or(0.0)
    }
}

/// Per-step duration and cumulative time for the given squared voltages.
pub fn acceleration_schedule(model: &SlipStepModel, u: &[f64], margin: f64) -> Result<Schedule> {
    if u.len() != model.k_max() {
        return Err(Error::param(
            "u",
            format!("expected {} voltages, got {}", model.k_max(), u.len()),
        ));
    }
    let mut dt = Vec::with_capacity(u.len());
    let mut t = Vec::with_capacity(u.len());
    let mut acc = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        let t_acc = model.c[k] * uk - model.load(k);
        let d = dt_from_acc(t_acc, model.h, model.grid.ds, margin, k + 1)?;
        acc += d;
        dt.push(d);
        t.push(acc);
    }
    Ok(Schedule { dt, t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::{MechLoad, MechLoadKind};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    pub(crate) fn reference_motor() -> MotorParams {
        MotorParams {
            rs: 0.036,
            xls: 0.064,
            rr: 0.03425,
            xlr: 0.064,
            xm: 1.40425,
            h: 0.198,
            kd: 0.0,
            rated_va: 4000.0,
            mech: MechLoad {
                kind: MechLoadKind::Linear,
                t_nom: 2.2 / (4000.0 / (2.0 * std::f64::consts::PI * 25.0)),
            },
        }
    }

    /// Airgap torque and stator current from a direct nodal solution of the
    /// equivalent circuit at terminal voltage `v`.
    fn circuit(p: &MotorParams, s: f64, v: f64) -> (f64, Complex64) {
        let zs = Complex64::new(p.rs, p.xls);
        let zr = Complex64::new(p.rr / s, p.xlr);
        let zm = Complex64::new(0.0, p.xm);
        // node equation at the magnetizing node: (V - Vm)/zs = Vm/zm + Vm/zr
        let vm = (v / zs) / (1.0 / zs + 1.0 / zm + 1.0 / zr);
        let ir = vm / zr;
        let is = (v - vm) / zs;
        (ir.norm_sqr() * p.rr / s, is)
    }

    #[test]
    fn reference_motor_thevenin() {
        let th = thevenin_at_slip(&reference_motor()).unwrap();
        assert!((th.u_th_coeff - 0.9142).abs() < 1e-4);
        assert!((th.r_th - 0.0329).abs() < 1e-4);
        assert!((th.x_th - 0.0620).abs() < 1e-4);
    }

    #[test]
    fn ideal_stator_and_large_xm() {
        let mut p = reference_motor();
        p.rs = 0.0;
        p.xls = 0.0;
        let th = thevenin_at_slip(&p).unwrap();
        assert_eq!(th.u_th_coeff, 1.0);
        assert_eq!(th.r_th, 0.0);
        assert_eq!(th.x_th, 0.0);

        let mut p = reference_motor();
        p.xm = 1e9;
        let th = thevenin_at_slip(&p).unwrap();
        assert!((th.u_th_coeff - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_xm_rejected() {
        let mut p = reference_motor();
        p.xm = 0.0;
        assert!(thevenin_at_slip(&p).is_err());
    }

    #[test]
    fn locked_rotor_torque_matches_circuit() {
        let p = reference_motor();
        let th = thevenin_at_slip(&p).unwrap();
        let t = electrical_torque(&th, p.xlr, p.rr, 1.0, 1.0).unwrap();
        let (oracle, _) = circuit(&p, 1.0, 1.0);
        assert!((t - oracle).abs() < 1e-9);
        assert!((t - 1.536).abs() < 1e-3);
        assert_eq!(electrical_torque(&th, p.xlr, p.rr, 1.0, 0.0).unwrap(), 0.0);
        assert!(electrical_torque(&th, p.xlr, p.rr, 0.0, 1.0).is_err());
    }

    #[test]
    fn admittance_power_matches_circuit() {
        let p = reference_motor();
        let (g, b) = input_admittance(&p, 1.0).unwrap();
        let (_, is) = circuit(&p, 1.0, 1.0);
        let s = Complex64::new(1.0, 0.0) * is.conj();
        assert!((g - s.re).abs() < 1e-9);
        assert!((b - s.im).abs() < 1e-9);
        assert!(g > 0.0 && b > 0.0);
    }

    #[test]
    fn series_limit_of_admittance() {
        let mut p = reference_motor();
        p.xm = 1e12;
        let (g, _) = input_admittance(&p, 1.0).unwrap();
        let r = p.rs + p.rr;
        let x = p.xls + p.xlr;
        assert_relative_eq!(g, r / (r * r + x * x), max_relative = 1e-9);
    }

    #[test]
    fn power_factor_angle_falls_along_grid() {
        let p = reference_motor();
        let m = SlipStepModel::for_motor(&p, 0.05, None).unwrap();
        let angles: Vec<f64> = m.g.iter().zip(&m.b).map(|(g, b)| (b / g).atan()).collect();
        assert!(angles.windows(2).all(|w| w[1] < w[0]), "{angles:?}");
    }

    #[test]
    fn step_time_cases() {
        let dt = step_time(0.5, 0.0, 0.0, 1.0, 0.198, 0.05, 0.02).unwrap();
        assert!((dt - 0.0396).abs() < 1e-15);
        assert!(matches!(
            step_time(0.02, 0.0, 0.0, 1.0, 0.198, 0.05, 0.02),
            Err(Error::Stall { .. })
        ));
        let half = step_time(0.25, 0.0, 0.0, 1.0, 0.198, 0.05, 0.02).unwrap();
        assert!((half - 2.0 * dt).abs() < 1e-15);
    }

    fn constant_model(t_acc: f64, steps: usize) -> SlipStepModel {
        let grid = SlipGrid::new(0.05, steps).unwrap();
        SlipStepModel {
            c: vec![t_acc; steps],
            g: vec![1.0; steps],
            b: vec![1.0; steps],
            t_mec: vec![0.0; steps],
            friction: vec![0.0; steps],
            h: 0.198,
            grid,
        }
    }

    #[test]
    fn schedule_cumulative_sum() {
        let m = constant_model(0.5, 3);
        let s = acceleration_schedule(&m, &[1.0; 3], 0.02).unwrap();
        for (a, b) in s.t.iter().zip([0.0396, 0.0792, 0.1188]) {
            assert!((a - b).abs() < 1e-12);
        }
        let err = acceleration_schedule(&m, &[1.0, 0.01, 1.0], 0.02).unwrap_err();
        assert!(matches!(err, Error::Stall { step: 2, .. }));
    }

    #[test]
    fn reference_motor_grid() {
        let p = reference_motor();
        let s = rated_slip(&p).unwrap();
        assert!((s - 0.003247).abs() < 1e-5, "{s}");
        let m = SlipStepModel::for_motor(&p, 0.05, None).unwrap();
        assert_eq!(m.k_max(), 19);
        assert!((m.grid.slips[18] - 0.1).abs() < 1e-12);
        assert!(m.c.iter().all(|&c| c > 0.0));
    }

    #[test]
    fn default_k_max_edges() {
        assert_eq!(default_k_max(0.0, 0.05), 19);
        assert_eq!(default_k_max(0.01, 0.05), 19);
        assert_eq!(default_k_max(0.06, 0.05), 18);
    }

    fn params() -> impl Strategy<Value = MotorParams> {
        (0.001..0.2f64, 0.01..0.3f64, 0.005..0.2f64, 0.01..0.3f64, 0.5..5.0f64).prop_map(
            |(rs, xls, rr, xlr, xm)| MotorParams {
                rs,
                xls,
                rr,
                xlr,
                xm,
                ..reference_motor()
            },
        )
    }

    proptest! {
        #[test]
        fn torque_is_linear_in_u(p in params(), s in 0.01..1.0f64, u in 0.01..1.2f64) {
            let th = thevenin_at_slip(&p).unwrap();
            let a = electrical_torque(&th, p.xlr, p.rr, s, u).unwrap();
            let b = electrical_torque(&th, p.xlr, p.rr, s, 2.0 * u).unwrap();
            prop_assert!((b - 2.0 * a).abs() <= 1e-12 * b.abs().max(1.0));
        }

        #[test]
        fn stator_balance(p in params(), s in 0.01..1.0f64) {
            let (g, _) = input_admittance(&p, s).unwrap();
            let (t, is) = circuit(&p, s, 1.0);
            let airgap = g - is.norm_sqr() * p.rs;
            prop_assert!((airgap - t).abs() < 1e-9);
        }

        #[test]
        fn schedule_strictly_increasing(t_acc in 0.05..3.0f64, steps in 1usize..19) {
            let m = constant_model(t_acc, steps);
            let s = acceleration_schedule(&m, &vec![1.0; steps], 0.02).unwrap();
            prop_assert!(s.dt.iter().all(|&d| d > 0.0));
            prop_assert!(s.t.windows(2).all(|w| w[1] > w[0]));
        }
    }
}
