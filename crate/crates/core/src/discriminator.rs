//! Laser/magnetic separation from spectra measured on two Zeeman transitions.
//!
//! A transition with sensitivity `k` sees `S = S_L + k²κ²S_δB`, with
//! `κ = μ_B/ħ`. Two transitions with different `k` give a 2×2 linear system.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::psd::{union_grid, PsdModel};

/// Bohr magneton (J/T).
pub const MU_B: f64 = 9.274_010_078_3e-24;
/// Reduced Planck constant (J·s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// `μ_B/ħ` in rad/(s·T).
pub const MU_B_OVER_HBAR: f64 = MU_B / HBAR;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeemanTransition {
    /// Ground-state magnetic quantum number m.
    pub m_s: f64,
    /// Excited-state magnetic quantum number m′.
    pub m_d: f64,
    #[serde(default = "default_g_s")]
    pub g_s: f64,
    #[serde(default = "default_g_d")]
    pub g_d: f64,
}

fn default_g_s() -> f64 {
    2.0
}

fn default_g_d() -> f64 {
    1.2
}

fn to_ratio(x: f64) -> Result<Ratio<i64>> {
    Ratio::approximate_float(x).ok_or_else(|| Error::InvalidArgument(format!("{x} has no rational form")))
}

impl ZeemanTransition {
    pub fn new(m_s: f64, m_d: f64) -> Self {
        Self {
            m_s,
            m_d,
            g_s: default_g_s(),
            g_d: default_g_d(),
        }
    }

    /// m = −½ → m′ = −½.
    pub fn s12() -> Self {
        Self::new(-0.5, -0.5)
    }

    /// m = −½ → m′ = −5/2.
    pub fn s13() -> Self {
        Self::new(-0.5, -2.5)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_s.abs() != 0.5 {
            return Err(Error::InvalidArgument(format!("|m| must be 1/2, got {}", self.m_s)));
        }
        let twice = 2.0 * self.m_d;
        if twice.fract() != 0.0 || (twice as i64) % 2 == 0 || self.m_d.abs() > 2.5 {
            return Err(Error::InvalidArgument(format!(
                "m′ must be a half-integer in [-5/2, 5/2], got {}",
                self.m_d
            )));
        }
        Ok(())
    }

    /// `k = g_d·m′ − g_s·m` in exact rational arithmetic.
    pub fn sensitivity_exact(&self) -> Result<Ratio<i64>> {
        Ok(to_ratio(self.g_d)? * to_ratio(self.m_d)? - to_ratio(self.g_s)? * to_ratio(self.m_s)?)
    }

    pub fn sensitivity(&self) -> f64 {
        self.g_d * self.m_d - self.g_s * self.m_s
    }
}

/// `k` for a transition; exact when every input has a small rational form.
pub fn sensitivity(tr: &ZeemanTransition) -> Ratio<i64> {
    tr.sensitivity_exact().expect("Landé factors and quantum numbers are rational")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Discrimination {
    pub grid: Vec<f64>,
    /// Laser frequency-noise PSD `S_L` (rad²/Hz).
    pub laser: PsdModel,
    /// Magnetic-field PSD `S_δB` (T²/Hz).
    pub magnetic: PsdModel,
    /// `true` where a negative `S_L` was clamped to zero.
    pub laser_clamped: Vec<bool>,
    /// `true` where a negative `S_δB` was clamped to zero.
    pub magnetic_clamped: Vec<bool>,
}

/// Union of both grids restricted to their common range.
pub fn common_grid(a: &PsdModel, b: &PsdModel) -> Result<Vec<f64>> {
    let lo = a.grid()[0].max(b.grid()[0]);
    let hi = a.grid().last().unwrap().min(*b.grid().last().unwrap());
    if lo > hi {
        return Err(Error::NoOverlap);
    }
    Ok(union_grid(a.grid(), b.grid())
        .into_iter()
        .filter(|&w| w >= lo && w <= hi)
        .collect())
}

/// Solve `S_a = S_L + k_a²κ²S_δB`, `S_b = S_L + k_b²κ²S_δB` pointwise.
pub fn discriminate_with(
    s_a: &PsdModel,
    tr_a: &ZeemanTransition,
    s_b: &PsdModel,
    tr_b: &ZeemanTransition,
) -> Result<Discrimination> {
    let ka = tr_a.sensitivity();
    let kb = tr_b.sensitivity();
    let dk = kb * kb - ka * ka;
    if dk == 0.0 {
        return Err(Error::InvalidArgument("transitions have equal magnetic sensitivity".into()));
    }
    let grid = common_grid(s_a, s_b)?;
    let k2 = MU_B_OVER_HBAR * MU_B_OVER_HBAR;
    let mut laser = Vec::with_capacity(grid.len());
    let mut magnetic = Vec::with_capacity(grid.len());
    let mut lc = Vec::with_capacity(grid.len());
    let mut mc = Vec::with_capacity(grid.len());
    for &w in &grid {
        let (a, b) = (s_a.eval(w), s_b.eval(w));
        let sb = (b - a) / (dk * k2);
        let sl = a - ka * ka * (b - a) / dk;
        lc.push(sl < 0.0);
        mc.push(sb < 0.0);
        laser.push(sl.max(0.0));
        magnetic.push(sb.max(0.0));
    }
    let clamped = lc.iter().zip(&mc).filter(|(a, b)| **a || **b).count();
    if clamped > 0 {
        log::warn!("{clamped} of {} separated PSD values were negative and clamped to zero", grid.len());
    }
    Ok(Discrimination {
        laser: PsdModel::new(grid.clone(), laser)?,
        magnetic: PsdModel::new(grid.clone(), magnetic)?,
        grid,
        laser_clamped: lc,
        magnetic_clamped: mc,
    })
}

/// Default pair: `s12` on m = −½ → −½ and `s13` on m = −½ → −5/2.
pub fn discriminate(s13: &PsdModel, s12: &PsdModel) -> Result<Discrimination> {
    discriminate_with(s12, &ZeemanTransition::s12(), s13, &ZeemanTransition::s13())
}

/// Forward map `S = S_L + k²κ²S_δB` on the union of both grids.
pub fn recompose(laser: &PsdModel, magnetic: &PsdModel, tr: &ZeemanTransition) -> Result<PsdModel> {
    let k = tr.sensitivity();
    let c = k * k * MU_B_OVER_HBAR * MU_B_OVER_HBAR;
    let grid = union_grid(laser.grid(), magnetic.grid());
    let values = grid.iter().map(|&w| laser.eval(w) + c * magnetic.eval(w)).collect();
    PsdModel::new(grid, values)
}
