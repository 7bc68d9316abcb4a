//! Reductions of a joint electron-nuclear amplitude: joint energy spectra,
//! channel-resolved KER spectra, filtered momentum maps, the emission
//! correlation parameter C(KER), fringe visibilities and the ATI comb.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dissoc::JointAmplitude;
use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::holography::{self, Extremum, Pmd};
use crate::ion1d::d_plus_right_left;
use crate::propagator::Channel;
use crate::qubits::ParityPureState;
use crate::units;

pub const DEFAULT_KER_BIN_EV: f64 = 0.05;
pub const DEFAULT_EE_BIN_EV: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelSel {
    G,
    U,
    Both,
}

impl ChannelSel {
    pub fn includes(self, ch: Channel) -> bool {
        matches!((self, ch), (ChannelSel::Both, _) | (ChannelSel::G, Channel::G) | (ChannelSel::U, Channel::U))
    }
}

/// Uniform bins `[start + i·width, start + (i+1)·width)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub start: f64,
    pub width: f64,
    pub n: usize,
}

impl Binning {
    pub fn new(start: f64, width: f64, n: usize) -> Result<Self> {
        if !(width > 0.0) || !start.is_finite() {
            return Err(Error::invalid("bin width must be positive"));
        }
        Ok(Binning { start, width, n })
    }

    /// Bins from `start` wide enough to hold `max`.
    pub fn covering(start: f64, max: f64, width: f64) -> Result<Self> {
        let n = (((max - start) / width).floor() as usize) + 1;
        Self::new(start, width, n)
    }

    pub fn index(&self, v: f64) -> Option<usize> {
        let f = ((v - self.start) / self.width).floor();
        if f >= 0.0 && (f as usize) < self.n {
            Some(f as usize)
        } else {
            None
        }
    }

    pub fn center(&self, i: usize) -> f64 {
        self.start + (i as f64 + 0.5) * self.width
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.center(i)).collect()
    }
}

fn ker_ev(joint: &JointAmplitude, k: usize) -> f64 {
    units::au_to_ev(joint.ker_au(k))
}

fn electron_ev(joint: &JointAmplitude, p: usize) -> f64 {
    let (x, y) = joint.momentum(p);
    units::au_to_ev(0.5 * (x * x + y * y))
}

/// Yield over (KER, E_e) bins, row-major in KER.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointEnergySpectrum {
    pub ker: Binning,
    pub ee: Binning,
    pub yields: Vec<f64>,
}

impl JointEnergySpectrum {
    pub fn get(&self, i_ker: usize, i_ee: usize) -> f64 {
        self.yields[i_ker * self.ee.n + i_ee]
    }

    pub fn total(&self) -> f64 {
        self.yields.iter().sum()
    }

    pub fn ker_marginal(&self) -> Vec<f64> {
        self.yields.chunks(self.ee.n.max(1)).map(|r| r.iter().sum()).collect()
    }

    pub fn ee_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.ee.n];
        for r in self.yields.chunks(self.ee.n.max(1)) {
            out.iter_mut().zip(r).for_each(|(o, v)| *o += v);
        }
        out
    }
}

/// Bins `|amplitude|²·cell` by KER and E_e [eV], summed over channels. The
/// bin ranges start at zero and cover every grid point, so the total equals
/// the joint norm.
pub fn joint_energy_spectrum(joint: &JointAmplitude, ker_bin_ev: f64, ee_bin_ev: f64) -> Result<JointEnergySpectrum> {
    let max_ker = (0..joint.k.n).map(|k| ker_ev(joint, k)).fold(0.0, f64::max);
    let max_ee = (0..joint.n_p()).map(|p| electron_ev(joint, p)).fold(0.0, f64::max);
    let ker = Binning::covering(0.0, max_ker, ker_bin_ev)?;
    let ee = Binning::covering(0.0, max_ee, ee_bin_ev)?;
    let mut yields = vec![0.0; ker.n * ee.n];
    let cell = joint.cell();
    let kb: Vec<usize> = (0..joint.k.n).map(|k| ker.index(ker_ev(joint, k)).unwrap_or(ker.n - 1)).collect();
    for p in 0..joint.n_p() {
        let eb = ee.index(electron_ev(joint, p)).unwrap_or(ee.n - 1);
        for (k, &ik) in kb.iter().enumerate() {
            let w = (joint.amp(Channel::G, p, k).norm_sqr() + joint.amp(Channel::U, p, k).norm_sqr()) * cell;
            yields[ik * ee.n + eb] += w;
        }
    }
    Ok(JointEnergySpectrum { ker, ee, yields })
}

/// Channel-resolved KER yields per bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KerSpectrum {
    pub bins: Binning,
    pub g: Vec<f64>,
    pub u: Vec<f64>,
}

impl KerSpectrum {
    pub fn channel(&self, sel: ChannelSel) -> Vec<f64> {
        match sel {
            ChannelSel::G => self.g.clone(),
            ChannelSel::U => self.u.clone(),
            ChannelSel::Both => self.g.iter().zip(&self.u).map(|(a, b)| a + b).collect(),
        }
    }

    /// Path-A weight `α² = Y_u/(Y_u + Y_g)`; `None` where the total yield is zero.
    pub fn alpha_sq(&self) -> Vec<Option<f64>> {
        self.g.iter().zip(&self.u).map(|(g, u)| if g + u > 0.0 { Some(u / (g + u)) } else { None }).collect()
    }

    /// Path-B weight `β² = 1 − α²`.
    pub fn beta_sq(&self) -> Vec<Option<f64>> {
        self.alpha_sq().into_iter().map(|a| a.map(|a| 1.0 - a)).collect()
    }

    /// Integrated `(Y_g, Y_u)` over bins whose centre lies in `[lo, hi)`.
    pub fn window_yields(&self, lo: f64, hi: f64) -> (f64, f64) {
        (0..self.bins.n).filter(|&i| (lo..hi).contains(&self.bins.center(i))).fold((0.0, 0.0), |(a, b), i| (a + self.g[i], b + self.u[i]))
    }

    /// KER windows `[lo, lo + width)` inside `range`, stepped by one bin,
    /// whose channel yields are within `min_ratio` (smaller over larger) of
    /// each other. Sorted by total yield, largest first.
    pub fn balanced_windows(&self, range: (f64, f64), width: f64, min_ratio: f64) -> Vec<(f64, f64)> {
        let mut out: Vec<((f64, f64), f64)> = Vec::new();
        let mut lo = range.0;
        while lo + width <= range.1 + 1e-12 {
            let (g, u) = self.window_yields(lo, lo + width);
            if g > 0.0 && u > 0.0 && g.min(u) / g.max(u) >= min_ratio {
                out.push(((lo, lo + width), g + u));
            }
            lo += self.bins.width;
        }
        out.sort_by(|a, b| b.1.total_cmp(&a.1));
        out.into_iter().map(|(w, _)| w).collect()
    }

    /// Both channels smoothed with a centred boxcar of `half` bins.
    pub fn smoothed(&self, half: usize) -> KerSpectrum {
        KerSpectrum { bins: self.bins, g: holography::smooth(&self.g, half), u: holography::smooth(&self.u, half) }
    }

    /// First KER above the u-channel maximum where g overtakes u, linearly
    /// interpolated between bin centres.
    pub fn dominance_crossing(&self) -> Option<f64> {
        let start = (0..self.bins.n).max_by(|&a, &b| self.u[a].total_cmp(&self.u[b]))?;
        let diff = |i: usize| self.g[i] - self.u[i];
        (start..self.bins.n.saturating_sub(1)).find(|&i| diff(i) <= 0.0 && diff(i + 1) > 0.0).map(|i| {
            let (a, b) = (diff(i), diff(i + 1));
            self.bins.center(i) + self.bins.width * a / (a - b)
        })
    }
}

pub fn ker_spectrum(joint: &JointAmplitude, bin_ev: f64) -> Result<KerSpectrum> {
    let max_ker = (0..joint.k.n).map(|k| ker_ev(joint, k)).fold(0.0, f64::max);
    let bins = Binning::covering(0.0, max_ker, bin_ev)?;
    let mut g = vec![0.0; bins.n];
    let mut u = vec![0.0; bins.n];
    let cell = joint.cell();
    for k in 0..joint.k.n {
        let i = bins.index(ker_ev(joint, k)).unwrap_or(bins.n - 1);
        for p in 0..joint.n_p() {
            g[i] += joint.amp(Channel::G, p, k).norm_sqr() * cell;
            u[i] += joint.amp(Channel::U, p, k).norm_sqr() * cell;
        }
    }
    Ok(KerSpectrum { bins, g, u })
}

/// Electron momentum density, row-major in `p_x` for 2D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumMap {
    pub px: Grid1D,
    pub py: Option<Grid1D>,
    pub data: Vec<f64>,
}

impl MomentumMap {
    pub fn cell(&self) -> f64 {
        self.px.step * self.py.map_or(1.0, |g| g.step)
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().sum::<f64>() * self.cell()
    }

    /// Normalized 2D distribution for arc sampling.
    pub fn to_pmd(&self) -> Result<Pmd> {
        let py = self.py.ok_or_else(|| Error::invalid("a one-dimensional map has no arcs"))?;
        Pmd::from_raw(self.px, py, self.data.clone())
    }
}

/// K indices with KER in `[lo, hi)`.
fn ker_window(joint: &JointAmplitude, window: (f64, f64)) -> Result<Vec<usize>> {
    let ks: Vec<usize> = (0..joint.k.n).filter(|&k| (window.0..window.1).contains(&ker_ev(joint, k))).collect();
    if ks.is_empty() {
        return Err(Error::invalid(format!("KER window [{}, {}) eV holds no grid points", window.0, window.1)));
    }
    Ok(ks)
}

/// `Σ_K |amplitude|² dK` over KER in `[lo, hi)` and the selected channels.
pub fn pmd_filtered(joint: &JointAmplitude, window: (f64, f64), sel: ChannelSel) -> Result<MomentumMap> {
    let ks = ker_window(joint, window)?;
    let data = (0..joint.n_p())
        .map(|p| {
            Channel::BOTH.iter().filter(|&&c| sel.includes(c)).map(|&c| ks.iter().map(|&k| joint.amp(c, p, k).norm_sqr()).sum::<f64>()).sum::<f64>()
                * joint.k.step
        })
        .collect();
    Ok(MomentumMap { px: joint.px, py: joint.py, data })
}

/// Electron acceptance: within `cone` of the ±x axis. Defaults to π/6.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleCuts {
    pub cone: f64,
}

impl Default for AngleCuts {
    fn default() -> Self {
        AngleCuts { cone: PI / 6.0 }
    }
}

impl AngleCuts {
    /// `Some(+1)` right, `Some(-1)` left, `None` outside both cones.
    pub fn side(&self, px: f64, py: f64) -> Option<f64> {
        if px == 0.0 {
            return None;
        }
        let angle = py.abs().atan2(px.abs());
        if angle < self.cone {
            Some(px.signum())
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationCurve {
    pub bins: Binning,
    /// `C` per bin; `None` below the yield threshold.
    pub c: Vec<Option<f64>>,
    pub n_same: Vec<f64>,
    pub n_opp: Vec<f64>,
    /// `√((1 − C²)/n_eff)` with the Kish effective count of the cell weights.
    pub sigma: Vec<Option<f64>>,
}

impl CorrelationCurve {
    /// Sign changes of C between consecutive defined bins with centres in `[lo, hi]`.
    pub fn sign_changes(&self, lo: f64, hi: f64) -> usize {
        let vals: Vec<f64> =
            (0..self.bins.n).filter(|&i| (lo..=hi).contains(&self.bins.center(i))).filter_map(|i| self.c[i]).filter(|v| *v != 0.0).collect();
        vals.windows(2).filter(|w| w[0].signum() != w[1].signum()).count()
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// How E_e slices are combined into one C per KER bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EeWeighting {
    /// Pool counts over E_e, i.e. weight each slice by its yield.
    #[default]
    Yield,
    /// Mean of the per-slice C over E_e bins of width `ee_bin_ev` that hold
    /// yield.
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationOptions {
    pub ker_bin_ev: f64,
    pub ee_bin_ev: f64,
    pub cuts: AngleCuts,
    pub weighting: EeWeighting,
    /// Bins with `N₊ + N₋` at or below this fraction of the largest bin are masked.
    pub rel_threshold: f64,
}

impl Default for CorrelationOptions {
    fn default() -> Self {
        CorrelationOptions {
            ker_bin_ev: DEFAULT_KER_BIN_EV,
            ee_bin_ev: DEFAULT_EE_BIN_EV,
            cuts: AngleCuts::default(),
            weighting: EeWeighting::Yield,
            rel_threshold: 1e-3,
        }
    }
}

/// `C = (N₊ − N₋)/(N₊ + N₋)` per KER bin. The D⁺ side comes from the g/u
/// amplitudes at each electron momentum cell, the electron side from the
/// sign of `p_x` inside the cone cut.
pub fn correlation_curve(joint: &JointAmplitude, opts: &CorrelationOptions) -> Result<CorrelationCurve> {
    let max_ker = (0..joint.k.n).map(|k| ker_ev(joint, k)).fold(0.0, f64::max);
    let max_ee = (0..joint.n_p()).map(|p| electron_ev(joint, p)).fold(0.0, f64::max);
    let bins = Binning::covering(0.0, max_ker, opts.ker_bin_ev)?;
    let ee = Binning::covering(0.0, max_ee, opts.ee_bin_ev)?;
    let nb = bins.n;
    let mut same = vec![0.0; nb];
    let mut opp = vec![0.0; nb];
    let mut sum_w2 = vec![0.0; nb];
    // per (KER bin, E_e bin) counts for the flat weighting
    let mut slices = vec![(0.0, 0.0); nb * ee.n];
    let sides: Vec<Option<(f64, usize)>> = (0..joint.n_p())
        .map(|p| {
            let (x, y) = joint.momentum(p);
            let e = ee.index(electron_ev(joint, p)).unwrap_or(ee.n - 1);
            opts.cuts.side(x, y).map(|s| (s, e))
        })
        .collect();
    for k in 0..joint.k.n {
        let i = bins.index(ker_ev(joint, k)).unwrap_or(nb - 1);
        for (p, side) in sides.iter().enumerate() {
            let Some((e_side, ie)) = *side else { continue };
            let (r, l) = d_plus_right_left(joint.amp(Channel::G, p, k), joint.amp(Channel::U, p, k));
            let (wr, wl) = (r.norm_sqr(), l.norm_sqr());
            let (ws, wo) = if e_side > 0.0 { (wr, wl) } else { (wl, wr) };
            same[i] += ws;
            opp[i] += wo;
            sum_w2[i] += ws * ws + wo * wo;
            let sl = &mut slices[i * ee.n + ie];
            sl.0 += ws;
            sl.1 += wo;
        }
    }
    let peak = same.iter().zip(&opp).map(|(a, b)| a + b).fold(0.0, f64::max);
    let mut c = Vec::with_capacity(nb);
    let mut sigma = Vec::with_capacity(nb);
    for i in 0..nb {
        let t = same[i] + opp[i];
        if !(t > 0.0 && t > opts.rel_threshold * peak) {
            c.push(None);
            sigma.push(None);
            continue;
        }
        let v = match opts.weighting {
            EeWeighting::Yield => (same[i] - opp[i]) / t,
            EeWeighting::Flat => {
                let row = &slices[i * ee.n..(i + 1) * ee.n];
                let vals: Vec<f64> = row.iter().filter(|(a, b)| a + b > 0.0).map(|(a, b)| (a - b) / (a + b)).collect();
                vals.iter().sum::<f64>() / vals.len() as f64
            }
        };
        let n_eff = t * t / sum_w2[i];
        c.push(Some(v));
        sigma.push(Some(((1.0 - v * v).max(0.0) / n_eff).sqrt()));
    }
    let cell = joint.cell();
    Ok(CorrelationCurve { bins, c, n_same: same.into_iter().map(|v| v * cell).collect(), n_opp: opp.into_iter().map(|v| v * cell).collect(), sigma })
}

/// Fringe visibility along `arc`; re-exported from the holography toy model.
pub use crate::holography::{visibility, Arc};

/// Two-source fringe visibility of a 1D momentum density at source
/// separation `s`: `2|Σ P(p) e^{ips}| / Σ P(p)`. A pattern
/// `1 + V cos(p s)` spanning many periods returns `V`.
pub fn fringe_visibility_1d(map: &MomentumMap, separation: f64) -> Result<f64> {
    if map.py.is_some() {
        return Err(Error::invalid("fringe_visibility_1d needs a one-dimensional map"));
    }
    let total: f64 = map.data.iter().sum();
    if !(total > 0.0) {
        return Err(Error::invalid("empty momentum map"));
    }
    let f: Complex64 = map.data.iter().enumerate().map(|(i, &v)| Complex64::from_polar(v, map.px.point(i) * separation)).sum();
    Ok(2.0 * f.norm() / total)
}

/// Channel-resolved versus both-channel fringe visibility in one KER window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EraserComparison {
    pub window: (f64, f64),
    pub yield_g: f64,
    pub yield_u: f64,
    /// Source separation [a.u.] (1D) or shell energies [eV] used (2D).
    pub probe: Vec<f64>,
    pub v_g: f64,
    pub v_u: f64,
    /// Yield-weighted mean of `v_g` and `v_u`.
    pub v_channels: f64,
    pub v_both: f64,
}

impl EraserComparison {
    pub fn weight_ratio(&self) -> f64 {
        self.yield_g.min(self.yield_u) / self.yield_g.max(self.yield_u)
    }

    pub fn restoration(&self) -> f64 {
        self.v_channels / self.v_both
    }
}

/// 1D eraser comparison. The probe separation is the one in
/// `[s_min, s_max]` (step `ds`) that maximizes the channel-resolved
/// visibility; the both-channel map is evaluated at the same separation.
pub fn eraser_1d(joint: &JointAmplitude, window: (f64, f64), s_min: f64, s_max: f64, ds: f64) -> Result<EraserComparison> {
    if !(ds > 0.0 && s_max >= s_min) {
        return Err(Error::invalid("bad separation scan"));
    }
    let g = pmd_filtered(joint, window, ChannelSel::G)?;
    let u = pmd_filtered(joint, window, ChannelSel::U)?;
    let both = pmd_filtered(joint, window, ChannelSel::Both)?;
    let (yg, yu) = (g.norm(), u.norm());
    let n = ((s_max - s_min) / ds).floor() as usize + 1;
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for i in 0..n {
        let s = s_min + i as f64 * ds;
        let vg = fringe_visibility_1d(&g, s)?;
        let vu = fringe_visibility_1d(&u, s)?;
        let vc = (vg * yg + vu * yu) / (yg + yu);
        if best.is_none_or(|b| vc > b.3) {
            best = Some((s, vg, vu, vc));
        }
    }
    let (s, v_g, v_u, v_channels) = best.expect("non-empty scan");
    Ok(EraserComparison { window, yield_g: yg, yield_u: yu, probe: vec![s], v_g, v_u, v_channels, v_both: fringe_visibility_1d(&both, s)? })
}

/// 2D eraser comparison: shell-arc visibility averaged over the given
/// shell energies [eV], each arc covering one fringe period of a two-source
/// pattern with displacement `d` either side of `p_x = 0`.
pub fn eraser_2d(joint: &JointAmplitude, window: (f64, f64), shells_ev: &[f64], d: f64, smooth_half: usize) -> Result<EraserComparison> {
    if shells_ev.is_empty() {
        return Err(Error::invalid("no shells given"));
    }
    let maps = [ChannelSel::G, ChannelSel::U, ChannelSel::Both].map(|s| pmd_filtered(joint, window, s));
    let [g, u, both] = maps;
    let (g, u, both) = (g?, u?, both?);
    let (yg, yu) = (g.norm(), u.norm());
    let (pg, pu, pb) = (g.to_pmd()?, u.to_pmd()?, both.to_pmd()?);
    let res = joint.px.step / 4.0;
    let mut acc = [0.0; 3];
    for &e in shells_ev {
        let arc = Arc::fringe_window((2.0 * units::ev_to_au(e)).sqrt(), d, res);
        for (a, p) in acc.iter_mut().zip([&pg, &pu, &pb]) {
            *a += visibility(p, &arc, smooth_half, 0.0)?.unwrap_or(0.0);
        }
    }
    let m = shells_ev.len() as f64;
    let (v_g, v_u, v_both) = (acc[0] / m, acc[1] / m, acc[2] / m);
    Ok(EraserComparison {
        window,
        yield_g: yg,
        yield_u: yu,
        probe: shells_ev.to_vec(),
        v_g,
        v_u,
        v_channels: (v_g * yg + v_u * yu) / (yg + yu),
        v_both,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyAxis {
    /// Photoelectron energy E_e.
    Electron,
    /// `E_e + KER`, constant along the diagonals of the joint spectrum.
    Total,
}

/// Kernel density estimate of the yield on `grid` [eV] with Gaussian width
/// `sigma_ev`. Momentum points are uniform, so the sum over points already
/// carries the `dp/dE` Jacobian.
pub fn energy_density(joint: &JointAmplitude, axis: EnergyAxis, grid: &Grid1D, sigma_ev: f64) -> Result<Vec<f64>> {
    if !(sigma_ev > 0.0) {
        return Err(Error::invalid("kernel width must be positive"));
    }
    let cell = joint.cell();
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for p in 0..joint.n_p() {
        let ee = electron_ev(joint, p);
        match axis {
            EnergyAxis::Electron => {
                let w: f64 = (0..joint.k.n).map(|k| joint.amp(Channel::G, p, k).norm_sqr() + joint.amp(Channel::U, p, k).norm_sqr()).sum();
                pts.push((ee, w * cell));
            }
            EnergyAxis::Total => {
                for k in 0..joint.k.n {
                    let w = joint.amp(Channel::G, p, k).norm_sqr() + joint.amp(Channel::U, p, k).norm_sqr();
                    pts.push((ee + ker_ev(joint, k), w * cell));
                }
            }
        }
    }
    let norm = 1.0 / (sigma_ev * (2.0 * PI).sqrt());
    let reach = 6.0 * sigma_ev;
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok((0..grid.n)
        .map(|i| {
            let e = grid.point(i);
            let lo = pts.partition_point(|q| q.0 < e - reach);
            pts[lo..].iter().take_while(|q| q.0 <= e + reach).map(|&(x, w)| w * (-(e - x).powi(2) / (2.0 * sigma_ev * sigma_ev)).exp()).sum::<f64>()
                * norm
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtiComb {
    pub peaks_ev: Vec<f64>,
    /// Median of consecutive peak spacings.
    pub spacing_ev: f64,
}

/// Peaks of a density `values` on `grid`, found on a log scale among
/// points above `rel_floor` times the maximum, with spacing statistics.
pub fn comb_from_density(grid: &Grid1D, values: &[f64], rel_floor: f64, prominence: f64) -> Result<AtiComb> {
    let peak = values.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::invalid("empty spectrum"));
    }
    let floor = rel_floor * peak;
    let curve: Vec<(f64, f64)> = values.iter().enumerate().map(|(i, &v)| (grid.point(i), v.max(floor).ln())).collect();
    let peaks: Vec<f64> = holography::local_extrema(&curve, Extremum::Max, prominence);
    if peaks.len() < 2 {
        return Err(Error::invalid(format!("found {} comb peaks; need at least two", peaks.len())));
    }
    let mut diffs: Vec<f64> = peaks.windows(2).map(|w| w[1] - w[0]).collect();
    diffs.sort_by(f64::total_cmp);
    let m = diffs.len();
    let spacing_ev = if m % 2 == 1 { diffs[m / 2] } else { 0.5 * (diffs[m / 2 - 1] + diffs[m / 2]) };
    Ok(AtiComb { peaks_ev: peaks, spacing_ev })
}

/// ATI comb of the joint distribution along `axis`: kernel width
/// `sigma_ev`, scan to `e_max_ev` in 0.01 eV steps.
pub fn ati_comb(joint: &JointAmplitude, axis: EnergyAxis, sigma_ev: f64, e_max_ev: f64) -> Result<AtiComb> {
    let grid = Grid1D::new(0.0, (e_max_ev / 0.01).ceil() as usize + 1, 0.01)?;
    let rho = energy_density(joint, axis, &grid, sigma_ev)?;
    comb_from_density(&grid, &rho, 1e-4, 0.02)
}

/// Relative L1 distance between `P_a(p, K, side)` and `P_b(−p, K, −side)`,
/// with `side` the D⁺ direction. Zero for a CEP 0/π pair of an exactly
/// reflection-symmetric model.
pub fn reflection_mismatch(a: &JointAmplitude, b: &JointAmplitude) -> Result<f64> {
    if a.shape() != b.shape() || a.px != b.px || a.py != b.py || a.k != b.k {
        return Err(Error::invalid("joint amplitudes live on different grids"));
    }
    let (mut diff, mut total) = (0.0, 0.0);
    for p in 0..a.n_p() {
        let q = a.mirror_index(p);
        for k in 0..a.k.n {
            let (ar, al) = d_plus_right_left(a.amp(Channel::G, p, k), a.amp(Channel::U, p, k));
            let (br, bl) = d_plus_right_left(b.amp(Channel::G, q, k), b.amp(Channel::U, q, k));
            diff += (ar.norm_sqr() - bl.norm_sqr()).abs() + (al.norm_sqr() - br.norm_sqr()).abs();
            total += ar.norm_sqr() + al.norm_sqr();
        }
    }
    if !(total > 0.0) {
        return Err(Error::invalid("empty joint amplitude"));
    }
    Ok(diff / total)
}

/// Joint amplitude of a two-qubit parity state per K point: electron
/// `|r⟩` with radial profile `profile(|p|)` on `p_x > 0` plus an amplitude
/// `√leak · leak_profile(|p|)` on `p_x < 0` (zero leak is perfect
/// localization), and the ion `|u⟩` entering the U channel with the
/// simulation's orbital sign (D⁺ right is `(G + U)/√2`).
pub fn synthetic_joint(
    px: Grid1D,
    k: Grid1D,
    reduced_mass: f64,
    state_at: impl Fn(usize) -> Option<ParityPureState>,
    profile: impl Fn(f64) -> f64,
    leak: f64,
    leak_profile: impl Fn(f64) -> f64,
) -> Result<JointAmplitude> {
    if !(0.0..=0.5).contains(&leak) {
        return Err(Error::invalid("leak must lie in [0, 1/2]"));
    }
    let mut joint = JointAmplitude::zeros(px, None, k, reduced_mass)?;
    let (main, minor) = ((1.0 - leak).sqrt(), leak.sqrt());
    for ik in 0..k.n {
        let Some(state) = state_at(ik) else { continue };
        let c = state.amplitudes();
        for ip in 0..px.n {
            let x = px.point(ip);
            if x == 0.0 {
                continue;
            }
            let (f, h) = (profile(x.abs()), leak_profile(x.abs()));
            // r(p), l(p) = r(-p); g = (r + l)/√2, u = (r - l)/√2
            let (r, l) = if x > 0.0 { (main * f, minor * h) } else { (minor * h, main * f) };
            let eg = FRAC_1_SQRT_2 * (r + l);
            let eu = FRAC_1_SQRT_2 * (r - l);
            // basis |electron, ion⟩ = {gg, gu, ug, uu}
            let ion_g = c[0] * eg + c[2] * eu;
            let ion_u = c[1] * eg + c[3] * eu;
            let ig = joint.index(Channel::G, ip, ik);
            let iu = joint.index(Channel::U, ip, ik);
            joint.data[ig] = ion_g;
            joint.data[iu] = -ion_u;
        }
    }
    Ok(joint)
}
