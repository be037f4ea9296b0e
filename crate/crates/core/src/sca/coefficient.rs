//! Coefficient block: `(phi_t, phi_r, rho)` for a fixed beamformer.

use std::f64::consts::LN_2;

use crate::channel::{CVector, ChannelSet, C64};
use crate::config::SystemConfig;
use crate::convex::{
    embed_complex, solve, ComplexAffine, Constraint, ConvexProgram, LinearForm, ObjectiveTerm,
    QuadraticForm, SolveStatus,
};
use crate::error::{Error, Result};
use crate::system_model::{Beamformer, StarRisProfile};

use super::{ElementSupport, SubproblemState};

/// Result of one convexified coefficient solve.
#[derive(Clone, Debug)]
pub struct CoefficientUpdate {
    pub profile: StarRisProfile,
    pub rho: Vec<f64>,
    /// Surrogate objective (spectral efficiency plus linearized penalty).
    pub inner_value: f64,
    pub status: SolveStatus,
    pub newton_steps: usize,
}

/// Real-variable layout of the coefficient program.
#[derive(Clone, Debug)]
pub(crate) struct CoefficientLayout {
    pub t_offset: Vec<Option<usize>>,
    pub r_offset: Vec<Option<usize>>,
    /// Scaled slack `rho_k / rho0_k`; `None` for pinned users.
    pub rho_index: Vec<Option<usize>>,
}

/// `u_ki(phi_r) = d[k][i] + sum_n e[k][i][n] phi_r,n`, and the primary
/// analogue `v_k(phi_t)`, all divided by the noise amplitude.
pub(crate) struct LinearTerms {
    pub d: Vec<Vec<C64>>,
    pub e: Vec<Vec<CVector>>,
    pub d0: Vec<C64>,
    pub e0: Vec<CVector>,
}

pub(crate) fn linear_terms(w: &Beamformer, channels: &ChannelSet, sigma: f64) -> LinearTerms {
    let k_users = channels.num_users();
    let cols: Vec<CVector> = (0..k_users).map(|i| w.column(i)).collect();
    let d = (0..k_users)
        .map(|k| cols.iter().map(|wi| channels.h[k].dotc(wi) / sigma).collect())
        .collect();
    let e = (0..k_users)
        .map(|k| cols.iter().map(|wi| &channels.cascaded[k] * wi / C64::from(sigma)).collect())
        .collect();
    let d0 = cols.iter().map(|wi| channels.h0.dotc(wi) / sigma).collect();
    let e0 = cols
        .iter()
        .map(|wi| &channels.cascaded_primary * wi / C64::from(sigma))
        .collect();
    LinearTerms { d, e, d0, e0 }
}

fn affine(constant: C64, e: &CVector, offsets: &[Option<usize>]) -> ComplexAffine {
    let mut f = ComplexAffine::constant(constant);
    for (n, off) in offsets.iter().enumerate() {
        if let Some(o) = off {
            f.push(*o, e[n]);
        }
    }
    f
}

/// Users with a usable expansion point; the rest are pinned to `rho = 0`.
fn active_users(state: &SubproblemState, u0: &[C64]) -> Vec<bool> {
    state
        .rho
        .iter()
        .zip(u0)
        .map(|(&r, u)| r > 0.0 && u.norm_sqr() > 1e-300)
        .collect()
}

pub(crate) fn build_coefficient_program(
    w: &Beamformer,
    profile: &StarRisProfile,
    state: &SubproblemState,
    penalty: f64,
    channels: &ChannelSet,
    cfg: &SystemConfig,
    support: &ElementSupport,
) -> Result<(ConvexProgram, CoefficientLayout)> {
    let n_el = channels.num_elements();
    let k_users = channels.num_users();
    if profile.num_elements() != n_el || support.len() != n_el || state.rho.len() != k_users {
        return Err(Error::Shape("coefficient subproblem inputs disagree in size".into()));
    }
    let sigma = cfg.noise_power().sqrt();
    let budget = cfg.interference_budget() / cfg.noise_power() - 1.0;
    if !(budget > 0.0) {
        return Err(Error::SubproblemInfeasible(
            "interference budget is below the primary noise floor".into(),
        ));
    }
    let terms = linear_terms(w, channels, sigma);

    let mut next = 0;
    let mut t_offset = vec![None; n_el];
    let mut r_offset = vec![None; n_el];
    for n in 0..n_el {
        if support.transmit[n] {
            t_offset[n] = Some(next);
            next += 2;
        }
        if support.reflect[n] {
            r_offset[n] = Some(next);
            next += 2;
        }
    }
    let u0: Vec<C64> = (0..k_users)
        .map(|k| terms.d[k][k] + (0..n_el).map(|n| profile.phi_r[n] * terms.e[k][k][n]).sum::<C64>())
        .collect();
    let active = active_users(state, &u0);
    let mut rho_index = vec![None; k_users];
    for k in 0..k_users {
        if active[k] {
            rho_index[k] = Some(next);
            next += 1;
        }
    }
    let dim = next;
    let mut p = ConvexProgram::new(dim);

    for k in 0..k_users {
        let Some(ri) = rho_index[k] else { continue };
        let rho0 = state.rho[k];
        p.maximize(ObjectiveTerm::Log {
            weight: 1.0 / LN_2,
            arg: LinearForm::new(vec![(ri, rho0)], 0.0),
        });
        // sum_{i != k} |u_ki|^2 + 1 <= |u_kk|^2 / rho_k, right side linearized
        let mut squares = Vec::new();
        for i in (0..k_users).filter(|&i| i != k) {
            squares.extend(affine(terms.d[k][i], &terms.e[k][i], &r_offset).parts());
        }
        let mut signal = affine(terms.d[k][k], &terms.e[k][k], &r_offset);
        let c0 = u0[k].conj();
        signal.constant *= c0;
        signal.terms.iter_mut().for_each(|t| t.1 *= c0);
        let mut linear = signal.real_part().scaled(-2.0 / rho0);
        linear.constant += 1.0;
        linear.add(ri, u0[k].norm_sqr() / rho0);
        p.subject_to(Constraint::Quadratic(QuadraticForm::sum_of_squares(&squares, &linear)));
        p.subject_to(Constraint::Bounds {
            var: ri,
            lower: 0.0,
            upper: f64::INFINITY,
        });
    }

    // interference at the primary receiver, scaled by the budget
    let scale = budget.sqrt().recip();
    let squares: Vec<LinearForm> = (0..k_users)
        .flat_map(|k| affine(terms.d0[k], &terms.e0[k], &t_offset).parts())
        .map(|f| f.scaled(scale))
        .collect();
    p.subject_to(Constraint::Quadratic(QuadraticForm::sum_of_squares(
        &squares,
        &LinearForm::constant(-1.0),
    )));

    // energy per element, and the linearized penalty
    // C (|phi_t|^2 + |phi_r|^2 - 1) >= C (2 Re(phi0^* phi) - |phi0|^2 - 1)
    let mut pen = LinearForm::default();
    for n in 0..n_el {
        let mut sq = Vec::new();
        pen.constant -= penalty;
        for (off, z0) in [(t_offset[n], profile.phi_t[n]), (r_offset[n], profile.phi_r[n])] {
            if let Some(o) = off {
                sq.push(LinearForm::var(o));
                sq.push(LinearForm::var(o + 1));
                pen.add(o, 2.0 * penalty * z0.re);
                pen.add(o + 1, 2.0 * penalty * z0.im);
                pen.constant -= penalty * z0.norm_sqr();
            }
        }
        if !sq.is_empty() {
            p.subject_to(Constraint::Quadratic(QuadraticForm::sum_of_squares(
                &sq,
                &LinearForm::constant(-1.0),
            )));
        }
    }
    p.maximize(ObjectiveTerm::Affine(pen));

    let mut x0 = vec![0.0; dim];
    for n in 0..n_el {
        if let Some(o) = t_offset[n] {
            x0[o..o + 2].copy_from_slice(&embed_complex(&[profile.phi_t[n]]));
        }
        if let Some(o) = r_offset[n] {
            x0[o..o + 2].copy_from_slice(&embed_complex(&[profile.phi_r[n]]));
        }
    }
    for ri in rho_index.iter().flatten() {
        x0[*ri] = 0.99;
    }
    let p = p.with_warm_start(x0);
    Ok((
        p,
        CoefficientLayout {
            t_offset,
            r_offset,
            rho_index,
        },
    ))
}

/// One convexified coefficient solve around `profile` for fixed `w`.
///
/// `state.rho` is the expansion point of the SINR slacks; `penalty` is the
/// energy-penalty weight in bits/s/Hz. Elements outside `support` keep zero
/// coefficients.
pub fn solve_coefficient_subproblem(
    w: &Beamformer,
    profile: &StarRisProfile,
    state: &SubproblemState,
    penalty: f64,
    channels: &ChannelSet,
    cfg: &SystemConfig,
    support: &ElementSupport,
) -> Result<CoefficientUpdate> {
    let (program, layout) = build_coefficient_program(w, profile, state, penalty, channels, cfg, support)?;
    let out = solve(&program, cfg.solver_tolerance)?;
    if out.status == SolveStatus::Infeasible {
        return Err(Error::SubproblemInfeasible("coefficient subproblem has no interior".into()));
    }
    let n_el = channels.num_elements();
    let x = &out.x_star;
    let read = |off: Option<usize>| off.map_or(C64::new(0.0, 0.0), |o| C64::new(x[o], x[o + 1]));
    let phi_t = CVector::from_iterator(n_el, layout.t_offset.iter().map(|&o| read(o)));
    let phi_r = CVector::from_iterator(n_el, layout.r_offset.iter().map(|&o| read(o)));
    let rho = layout
        .rho_index
        .iter()
        .zip(&state.rho)
        .map(|(ri, r0)| ri.map_or(0.0, |i| r0 * x[i]))
        .collect();
    Ok(CoefficientUpdate {
        profile: StarRisProfile { phi_t, phi_r },
        rho,
        inner_value: out.objective_value,
        status: out.status,
        newton_steps: out.iterations,
    })
}
