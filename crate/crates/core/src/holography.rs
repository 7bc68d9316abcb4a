//! Two-source holography toy model. Each source emits an ATI comb of
//! spherical waves; in momentum space an order is a Gaussian energy shell
//! times a Gaussian transverse envelope, and the two sources at `x = ±d`
//! interfere with a parity factor `s·(-1)ⁿ`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::qubits::Sector;
use crate::units;

/// Ionization potential of D₂ used for the default comb offset [eV].
pub const DEFAULT_IP_EV: f64 = 15.47;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoloConfig {
    /// Source displacement [a.u.].
    pub d: f64,
    pub n_min: u32,
    pub n_max: u32,
    /// Photon energy [a.u.].
    pub photon_energy: f64,
    /// Comb offset, `E_n = n ħω + e_offset` [a.u.].
    pub e_offset: f64,
    /// One amplitude per order, `n_min..=n_max`.
    pub amplitudes: Vec<f64>,
    /// Gaussian standard deviation of each energy shell [a.u.].
    pub shell_width: f64,
    /// Transverse envelope width σ_⊥ [a.u.].
    pub sigma_perp: f64,
    pub parity: Sector,
    /// Drop the source at `-d`.
    #[serde(default)]
    pub single_source: bool,
    pub px: Grid1D,
    pub py: Grid1D,
}

impl Default for HoloConfig {
    /// 515 nm, orders 8..=12 above the U_P-shifted threshold at 7.7e13 W/cm²,
    /// amplitudes `exp(-k/2)`.
    fn default() -> Self {
        let hw = units::ev_to_au(units::photon_energy(515.0).unwrap_or(2.407));
        let up = units::ev_to_au(units::ponderomotive_energy_ev(7.7e13, 515.0).unwrap_or(1.9));
        HoloConfig {
            d: 10.0,
            n_min: 8,
            n_max: 12,
            photon_energy: hw,
            e_offset: -(units::ev_to_au(DEFAULT_IP_EV) + up),
            amplitudes: (0..5).map(|k| (-0.5 * k as f64).exp()).collect(),
            shell_width: units::ev_to_au(0.4),
            sigma_perp: 2.0,
            parity: Sector::Even,
            single_source: false,
            px: Grid1D { min: -1.2, n: 481, step: 0.005 },
            py: Grid1D { min: -1.2, n: 481, step: 0.005 },
        }
    }
}

impl HoloConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_min > self.n_max {
            return Err(Error::invalid("empty photon-order set"));
        }
        let count = (self.n_max - self.n_min + 1) as usize;
        if self.amplitudes.len() != count {
            return Err(Error::invalid(format!("{} amplitudes for {count} orders", self.amplitudes.len())));
        }
        if self.amplitudes.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::invalid("order amplitudes must be non-negative"));
        }
        if !(self.d > 0.0 && self.sigma_perp > 0.0 && self.shell_width > 0.0 && self.photon_energy > 0.0) {
            return Err(Error::invalid("d, sigma_perp, shell_width and photon energy must be positive"));
        }
        if self.shell_energy(self.n_min) <= 0.0 {
            return Err(Error::invalid(format!("order {} lies below threshold", self.n_min)));
        }
        if self.px.n < 2 || self.py.n < 2 {
            return Err(Error::invalid("momentum grid needs at least two points per axis"));
        }
        Ok(())
    }

    pub fn orders(&self) -> impl Iterator<Item = u32> {
        self.n_min..=self.n_max
    }

    /// `E_n` [a.u.].
    pub fn shell_energy(&self, n: u32) -> f64 {
        n as f64 * self.photon_energy + self.e_offset
    }

    pub fn shell_momentum(&self, n: u32) -> f64 {
        (2.0 * self.shell_energy(n)).sqrt()
    }

    pub fn with_parity(&self, parity: Sector) -> Self {
        HoloConfig { parity, ..self.clone() }
    }
}

/// Model amplitude `M(p)`.
pub fn amplitude(config: &HoloConfig, px: f64, py: f64) -> Complex64 {
    let e = 0.5 * (px * px + py * py);
    let env = (-py * py / (2.0 * config.sigma_perp * config.sigma_perp)).exp();
    let w2 = 2.0 * config.shell_width * config.shell_width;
    let fwd = Complex64::from_polar(1.0, px * config.d);
    let bwd = fwd.conj();
    config
        .orders()
        .zip(&config.amplitudes)
        .map(|(n, &a)| {
            let de = e - config.shell_energy(n);
            let shell = a * (-de * de / w2).exp() * env;
            let s = config.parity.sign() * if n % 2 == 0 { 1.0 } else { -1.0 };
            if config.single_source {
                fwd * shell
            } else {
                (fwd + bwd * s) * shell
            }
        })
        .sum()
}

/// Real distribution over `(p_x, p_y)`, row-major in `p_x`. `data` is
/// normalized to unit max; `scale` is the factor divided out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmd {
    pub px: Grid1D,
    pub py: Grid1D,
    pub data: Vec<f64>,
    pub scale: f64,
}

impl Pmd {
    /// Normalizes `raw` to unit max.
    pub fn from_raw(px: Grid1D, py: Grid1D, raw: Vec<f64>) -> Result<Self> {
        if raw.len() != px.n * py.n {
            return Err(Error::invalid("data does not match the momentum grid"));
        }
        let peak = raw.iter().cloned().fold(0.0, f64::max);
        let scale = if peak > 0.0 { peak } else { 1.0 };
        Ok(Pmd { px, py, data: raw.into_iter().map(|v| v / scale).collect(), scale })
    }

    pub fn from_fn(px: Grid1D, py: Grid1D, f: impl Fn(f64, f64) -> f64 + Sync) -> Result<Self> {
        let raw = (0..px.n * py.n).into_par_iter().map(|i| f(px.point(i / py.n), py.point(i % py.n))).collect();
        Self::from_raw(px, py, raw)
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.data[ix * self.py.n + iy]
    }

    pub fn raw(&self, ix: usize, iy: usize) -> f64 {
        self.get(ix, iy) * self.scale
    }

    pub fn same_grid(&self, other: &Pmd) -> bool {
        self.px == other.px && self.py == other.py
    }

    /// Largest radius whose full circle lies inside the grid.
    pub fn max_radius(&self) -> f64 {
        [-self.px.min, self.px.max(), -self.py.min, self.py.max()].into_iter().fold(f64::INFINITY, f64::min)
    }

    /// Catmull-Rom bicubic interpolation, indices clamped at the edges;
    /// `None` outside the grid.
    pub fn at(&self, px: f64, py: f64) -> Option<f64> {
        let fx = (px - self.px.min) / self.px.step;
        let fy = (py - self.py.min) / self.py.step;
        if !(fx >= 0.0 && fy >= 0.0) || fx > (self.px.n - 1) as f64 || fy > (self.py.n - 1) as f64 {
            return None;
        }
        let ix = (fx.floor() as usize).min(self.px.n - 2);
        let iy = (fy.floor() as usize).min(self.py.n - 2);
        let wx = catmull_rom(fx - ix as f64);
        let wy = catmull_rom(fy - iy as f64);
        let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
        let mut v = 0.0;
        for (a, wa) in wx.iter().enumerate() {
            let jx = clamp(ix as isize + a as isize - 1, self.px.n);
            for (b, wb) in wy.iter().enumerate() {
                let jy = clamp(iy as isize + b as isize - 1, self.py.n);
                v += wa * wb * self.get(jx, jy);
            }
        }
        Some(v)
    }

    /// Samples along `arc`, returning `(p_x, value)` pairs.
    pub fn sample_arc(&self, arc: &Arc) -> Result<Vec<(f64, f64)>> {
        arc.points()
            .map(|(x, y)| self.at(x, y).map(|v| (x, v)).ok_or_else(|| Error::invalid(format!("arc point ({x:.3}, {y:.3}) outside the grid"))))
            .collect()
    }
}

// Weights of samples at offsets -1, 0, 1, 2 for fractional position t.
fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [0.5 * (-t3 + 2.0 * t2 - t), 0.5 * (3.0 * t3 - 5.0 * t2 + 2.0), 0.5 * (-3.0 * t3 + 4.0 * t2 + t), 0.5 * (t3 - t2)]
}

pub fn pmd(config: &HoloConfig) -> Result<Pmd> {
    config.validate()?;
    Pmd::from_fn(config.px, config.py, |x, y| amplitude(config, x, y).norm_sqr())
}

/// Weighted pointwise sum of the unnormalized distributions.
pub fn incoherent_sum_weighted(a: &Pmd, wa: f64, b: &Pmd, wb: f64) -> Result<Pmd> {
    if !a.same_grid(b) {
        return Err(Error::invalid("momentum grids differ"));
    }
    if !(wa >= 0.0 && wb >= 0.0) {
        return Err(Error::invalid("weights must be non-negative"));
    }
    let raw = a.data.iter().zip(&b.data).map(|(x, y)| wa * x * a.scale + wb * y * b.scale).collect();
    Pmd::from_raw(a.px, a.py, raw)
}

pub fn incoherent_sum(a: &Pmd, b: &Pmd) -> Result<Pmd> {
    incoherent_sum_weighted(a, 1.0, b, 1.0)
}

/// Circular arc `|p| = radius`, polar angle from `+p_x` in `[phi_min, phi_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub radius: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub samples: usize,
}

impl Arc {
    /// Upper half circle, sampled finer than `resolution` in arc length.
    pub fn upper_half(radius: f64, resolution: f64) -> Self {
        let samples = ((std::f64::consts::PI * radius / resolution).ceil() as usize).max(16) + 1;
        Arc { radius, phi_min: 0.0, phi_max: std::f64::consts::PI, samples }
    }

    /// Arc centred on `+p_y` spanning `p_x ∈ [-span, span]` (clipped to the
    /// half circle). Used for fringe contrast: along it `p_y` varies least.
    pub fn transverse(radius: f64, span: f64, resolution: f64) -> Self {
        let half = (span / radius).min(1.0).asin();
        let samples = ((2.0 * half * radius / resolution).ceil() as usize).max(16) + 1;
        let c = std::f64::consts::FRAC_PI_2;
        Arc { radius, phi_min: c - half, phi_max: c + half, samples }
    }

    /// Transverse arc covering one full fringe period on either side of `p_x = 0`.
    pub fn fringe_window(radius: f64, d: f64, resolution: f64) -> Self {
        Self::transverse(radius, std::f64::consts::PI / d, resolution)
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = self.samples.max(2);
        (0..n).map(move |i| {
            let phi = self.phi_min + (self.phi_max - self.phi_min) * i as f64 / (n - 1) as f64;
            (self.radius * phi.cos(), self.radius * phi.sin())
        })
    }
}

/// Centred boxcar of half-width `half` samples, shrinking at the ends.
pub fn smooth(values: &[f64], half: usize) -> Vec<f64> {
    if half == 0 {
        return values.to_vec();
    }
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// `(max - min)/(max + min)` of `values` after [`smooth`]; `None` if the
/// mean falls below `threshold` or the input is empty.
pub fn visibility_of(values: &[f64], half: usize, threshold: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let s = smooth(values, half);
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    if !(mean > threshold) {
        return None;
    }
    let (lo, hi) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    Some((hi - lo) / (hi + lo))
}

/// Fringe visibility of `pmd` along `arc`; kernel half-width in samples.
pub fn visibility(pmd: &Pmd, arc: &Arc, half: usize, threshold: f64) -> Result<Option<f64>> {
    let v: Vec<f64> = pmd.sample_arc(arc)?.into_iter().map(|(_, v)| v).collect();
    Ok(visibility_of(&v, half, threshold))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremum {
    Min,
    Max,
}

/// Relative tolerance below which neighbouring samples count as equal.
pub const FLAT_TOL: f64 = 1e-10;

/// Default minimum prominence of a reported extremum, relative to the
/// curve's range.
pub const PROMINENCE: f64 = 1e-2;

/// Local extrema of a sampled curve, abscissae sorted ascending. Flat runs
/// collapse to their midpoint; min/max pairs whose depth is below
/// `prominence` times the curve range are removed smallest first, as are
/// extrema within that depth of an endpoint.
pub fn local_extrema(curve: &[(f64, f64)], kind: Extremum, prominence: f64) -> Vec<f64> {
    let (lo, hi) = curve.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let tol = FLAT_TOL * lo.abs().max(hi.abs());
    let mut runs: Vec<(f64, f64)> = Vec::new();
    let mut i = 0;
    while i < curve.len() {
        let mut j = i;
        while j + 1 < curve.len() && (curve[j + 1].1 - curve[i].1).abs() <= tol {
            j += 1;
        }
        runs.push((0.5 * (curve[i].0 + curve[j].0), curve[i].1));
        i = j + 1;
    }
    if runs.len() < 3 {
        return Vec::new();
    }
    // (x, value, is_min); endpoints first and last with is_min unused
    let mut ext: Vec<(f64, f64, bool)> = vec![(runs[0].0, runs[0].1, false)];
    for k in 1..runs.len() - 1 {
        let (l, c, r) = (runs[k - 1].1, runs[k].1, runs[k + 1].1);
        if c < l && c < r {
            ext.push((runs[k].0, c, true));
        } else if c > l && c > r {
            ext.push((runs[k].0, c, false));
        }
    }
    ext.push((runs[runs.len() - 1].0, runs[runs.len() - 1].1, false));
    let thr = prominence * (hi - lo);
    loop {
        let n = ext.len();
        if n <= 2 {
            break;
        }
        // smallest interior pair
        let pair = (1..n - 2).map(|k| (k, (ext[k].1 - ext[k + 1].1).abs())).min_by(|a, b| a.1.total_cmp(&b.1));
        let first = (ext[1].1 - ext[0].1).abs();
        let last = (ext[n - 2].1 - ext[n - 1].1).abs();
        let best_pair = pair.map(|p| p.1).unwrap_or(f64::INFINITY);
        let m = best_pair.min(first).min(last);
        if !(m < thr) {
            break;
        }
        if m == first {
            ext.remove(1);
        } else if m == last {
            ext.remove(n - 2);
        } else if let Some((k, _)) = pair {
            ext.drain(k..k + 2);
        }
    }
    let want_min = kind == Extremum::Min;
    let mut out: Vec<f64> = ext[1..ext.len() - 1].iter().filter(|e| e.2 == want_min).map(|e| e.0).collect();
    out.sort_by(f64::total_cmp);
    out
}

// Arc samples per grid cell along shells.
const SAMPLES_PER_CELL: usize = 4;

fn shell_arc(pmd: &Pmd, energy: f64) -> Result<Arc> {
    if !(energy > 0.0) {
        return Err(Error::invalid("shell energy must be positive"));
    }
    let radius = (2.0 * energy).sqrt();
    if radius > pmd.max_radius() {
        return Err(Error::invalid(format!("shell |p| = {radius:.4} lies outside the grid")));
    }
    let res = pmd.px.step.min(pmd.py.step) / SAMPLES_PER_CELL as f64;
    Ok(Arc::upper_half(radius, res))
}

/// Shell samples smoothed with a boxcar one grid cell wide, which removes
/// the cell-periodic ripple of bilinear interpolation.
fn shell_curve(pmd: &Pmd, energy: f64) -> Result<Vec<(f64, f64)>> {
    let raw = pmd.sample_arc(&shell_arc(pmd, energy)?)?;
    let v: Vec<f64> = raw.iter().map(|p| p.1).collect();
    Ok(raw.iter().zip(smooth(&v, SAMPLES_PER_CELL / 2)).map(|(p, s)| (p.0, s)).collect())
}

/// `p_x` positions of local minima along the upper half of the shell
/// `|p| = √(2E)`, sorted ascending.
pub fn fringe_minima(pmd: &Pmd, shell_energy: f64) -> Result<Vec<f64>> {
    Ok(local_extrema(&shell_curve(pmd, shell_energy)?, Extremum::Min, PROMINENCE))
}

pub fn fringe_maxima(pmd: &Pmd, shell_energy: f64) -> Result<Vec<f64>> {
    Ok(local_extrema(&shell_curve(pmd, shell_energy)?, Extremum::Max, PROMINENCE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn cfg() -> HoloConfig {
        HoloConfig::default()
    }

    /// Single order `n` with the given parity.
    fn single_order(n: u32, parity: Sector) -> HoloConfig {
        HoloConfig { n_min: n, n_max: n, amplitudes: vec![1.0], parity, ..cfg() }
    }

    #[test]
    fn defaults_are_valid() {
        let c = cfg();
        c.validate().unwrap();
        assert!((units::au_to_ev(c.photon_energy) - 2.407).abs() < 0.005);
        assert!(c.shell_momentum(c.n_max) < 1.1);
    }

    #[test]
    fn validation_errors() {
        assert!(pmd(&HoloConfig { n_min: 9, n_max: 8, ..cfg() }).is_err());
        assert!(HoloConfig { d: 0.0, ..cfg() }.validate().is_err());
        assert!(HoloConfig { amplitudes: vec![1.0], ..cfg() }.validate().is_err());
        assert!(HoloConfig { n_min: 2, n_max: 6, ..cfg() }.validate().is_err());
    }

    #[test]
    fn single_source_has_no_px_fringes() {
        let c = HoloConfig { single_source: true, ..cfg() };
        // |M|² then depends on |p| and p_y only: compare mirrored p_x at equal |p|, p_y
        for &(x, y) in &[(0.3, 0.4), (0.11, 0.6), (0.7, 0.2)] {
            let a = amplitude(&c, x, y).norm_sqr();
            let b = amplitude(&c, -x, y).norm_sqr();
            assert!((a - b).abs() <= 1e-14 * a.max(1e-300));
        }
        // and along a fringe window it is smooth (only the p_y envelope varies)
        let p = pmd(&c).unwrap();
        let r = c.shell_momentum(10);
        let v = visibility(&p, &Arc::fringe_window(r, c.d, 0.002), 0, 1e-6).unwrap().unwrap();
        assert!(v < 0.05, "{v}");
    }

    #[test]
    fn even_and_odd_angular_factors() {
        let even = single_order(10, Sector::Even);
        let odd = single_order(10, Sector::Odd);
        let single = HoloConfig { single_source: true, ..even.clone() };
        for &(x, y) in &[(0.05, 0.8), (0.31, 0.7), (-0.2, 0.75)] {
            let base = amplitude(&single, x, y).norm_sqr();
            let e = amplitude(&even, x, y).norm_sqr();
            let o = amplitude(&odd, x, y).norm_sqr();
            assert!((e - 4.0 * base * (x * 10.0f64).cos().powi(2)).abs() < 1e-12);
            assert!((o - 4.0 * base * (x * 10.0f64).sin().powi(2)).abs() < 1e-12);
            assert!((e + o - 4.0 * base).abs() < 1e-12);
        }
    }

    #[test]
    fn cos_squared_minima() {
        let g = Grid1D::new(-1.0, 401, 0.005).unwrap();
        let p = Pmd::from_fn(g, g, |x, _| (10.0 * x).cos().powi(2)).unwrap();
        let m = fringe_minima(&p, 0.5 * 0.8 * 0.8).unwrap();
        let expect: Vec<f64> = (-3..3).map(|k| (k as f64 + 0.5) * PI / 10.0).filter(|x: &f64| x.abs() < 0.8).collect();
        assert_eq!(m.len(), expect.len(), "{m:?}");
        for (a, b) in m.iter().zip(&expect) {
            assert!((a - b).abs() < g.step, "{a} vs {b}");
        }
    }

    #[test]
    fn constant_pattern_has_no_minima() {
        let g = Grid1D::new(-1.0, 101, 0.02).unwrap();
        let p = Pmd::from_fn(g, g, |_, _| 3.0).unwrap();
        assert!(fringe_minima(&p, 0.2).unwrap().is_empty());
        assert!(visibility(&p, &Arc::upper_half(0.5, 0.01), 0, 0.0).unwrap().unwrap() < 1e-15);
    }

    #[test]
    fn shell_outside_grid_rejected() {
        let p = pmd(&cfg()).unwrap();
        assert!(fringe_minima(&p, 2.0).is_err());
        assert!(fringe_minima(&p, -0.1).is_err());
    }

    #[test]
    fn minima_match_dense_analytic_scan() {
        for parity in [Sector::Even, Sector::Odd] {
            let c = cfg().with_parity(parity);
            let p = pmd(&c).unwrap();
            for n in c.orders() {
                let e = c.shell_energy(n);
                let got = fringe_minima(&p, e).unwrap();
                // dense scan of the model amplitude itself along the same shell
                let arc = Arc::upper_half(c.shell_momentum(n), 1e-4);
                let curve: Vec<(f64, f64)> = arc.points().map(|(x, y)| (x, amplitude(&c, x, y).norm_sqr())).collect();
                let want = local_extrema(&curve, Extremum::Min, PROMINENCE);
                assert_eq!(got.len(), want.len(), "n={n} {parity:?}");
                for (a, b) in got.iter().zip(&want) {
                    assert!((a - b).abs() < c.px.step, "n={n}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn complementary_parities() {
        let a = pmd(&cfg().with_parity(Sector::Even)).unwrap();
        let b = pmd(&cfg().with_parity(Sector::Odd)).unwrap();
        let c = cfg();
        for n in c.orders() {
            let e = c.shell_energy(n);
            let mins = fringe_minima(&a, e).unwrap();
            let maxs = fringe_maxima(&b, e).unwrap();
            assert!(!mins.is_empty());
            for m in &mins {
                let nearest = maxs.iter().map(|x| (x - m).abs()).fold(f64::INFINITY, f64::min);
                assert!(nearest < c.px.step, "n={n}: min {m} has no max within a cell ({nearest})");
            }
        }
    }

    #[test]
    fn eraser_washout() {
        let c = cfg();
        let a = pmd(&c.with_parity(Sector::Even)).unwrap();
        let b = pmd(&c.with_parity(Sector::Odd)).unwrap();
        let sum = incoherent_sum(&a, &b).unwrap();
        let only_a = incoherent_sum_weighted(&a, 1.0, &b, 0.0).unwrap();
        for n in c.orders() {
            let arc = Arc::fringe_window(c.shell_momentum(n), c.d, 0.002);
            let va = visibility(&a, &arc, 0, 1e-6).unwrap().unwrap();
            let vb = visibility(&b, &arc, 0, 1e-6).unwrap().unwrap();
            let vs = visibility(&sum, &arc, 0, 1e-6).unwrap().unwrap();
            let v10 = visibility(&only_a, &arc, 0, 1e-6).unwrap().unwrap();
            assert!(va > 0.5 && vb > 0.5, "n={n}: {va} {vb}");
            assert!(vs < 0.05, "n={n}: {vs}");
            assert!((v10 - va).abs() < 1e-12);
        }
    }

    #[test]
    fn single_order_sum_is_flat_on_shell() {
        let e = single_order(10, Sector::Even);
        let o = single_order(10, Sector::Odd);
        let r = e.shell_momentum(10);
        let arc = Arc::upper_half(r, 1e-3);
        let vals: Vec<f64> = arc.points().map(|(x, y)| amplitude(&e, x, y).norm_sqr() + amplitude(&o, x, y).norm_sqr()).collect();
        let env: Vec<f64> = arc.points().map(|(_, y)| (-y * y / (e.sigma_perp * e.sigma_perp)).exp()).collect();
        let ratio: Vec<f64> = vals.iter().zip(&env).map(|(v, w)| v / w).collect();
        assert!(visibility_of(&ratio, 0, 0.0).unwrap() < 1e-12);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let a = pmd(&cfg()).unwrap();
        let b = pmd(&HoloConfig { px: Grid1D::new(-1.2, 121, 0.02).unwrap(), ..cfg() }).unwrap();
        assert!(incoherent_sum(&a, &b).is_err());
    }

    proptest! {
        #[test]
        fn pmd_mirror_symmetric(x in -1.0f64..1.0, y in -1.0f64..1.0, odd: bool) {
            let c = cfg().with_parity(if odd { Sector::Odd } else { Sector::Even });
            let v = amplitude(&c, x, y).norm_sqr();
            for (sx, sy) in [(-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)] {
                let w = amplitude(&c, sx * x, sy * y).norm_sqr();
                prop_assert!((v - w).abs() <= 1e-12 * v.max(1e-300));
            }
        }

        #[test]
        fn visibility_scale_invariant(s in 1e-6f64..1e6, seed in 0u64..1000) {
            let vals: Vec<f64> = (0..64).map(|i| 1.5 + ((i as f64) * 0.3 + seed as f64).sin()).collect();
            let scaled: Vec<f64> = vals.iter().map(|v| v * s).collect();
            let a = visibility_of(&vals, 2, 0.0).unwrap();
            let b = visibility_of(&scaled, 2, 0.0).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
