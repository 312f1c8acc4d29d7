//! Daubechies scaling and wavelet functions tabulated by the cascade algorithm.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;

use crate::error::{KplError, Result};

/// Dyadic refinement depth of the cached tables.
pub const CASCADE_DEPTH: u32 = 12;

const DB1: [f64; 2] = [FRAC_1_SQRT_2, FRAC_1_SQRT_2];
const DB2: [f64; 4] = [
    0.482962913144534143,
    0.836516303737807906,
    0.224143868042013381,
    -0.129409522551260381,
];
const DB3: [f64; 6] = [
    0.332670552950082616,
    0.806891509311092576,
    0.45987750211849157,
    -0.135011020010254589,
    -0.0854412738820266617,
    0.0352262918857095366,
];
const DB4: [f64; 8] = [
    0.230377813308896501,
    0.714846570552915647,
    0.630880767929858908,
    -0.0279837694168598542,
    -0.187034811719093084,
    0.0308413818355607636,
    0.0328830116668851997,
    -0.0105974017850690321,
];
const DB5: [f64; 10] = [
    0.160102397974192914,
    0.603829269797189671,
    0.724308528437772928,
    0.138428145901320732,
    -0.242294887066382032,
    -0.0322448695846383746,
    0.0775714938400457135,
    -0.00624149021279827427,
    -0.0125807519990819995,
    0.00333572528547377128,
];

/// Orthonormal low-pass filter with `vanishing_moments` vanishing moments.
pub fn lowpass_filter(vanishing_moments: usize) -> Result<&'static [f64]> {
    match vanishing_moments {
        1 => Ok(&DB1),
        2 => Ok(&DB2),
        3 => Ok(&DB3),
        4 => Ok(&DB4),
        5 => Ok(&DB5),
        other => Err(KplError::invalid(format!(
            "unsupported number of vanishing moments {other} (expected 1..=5)"
        ))),
    }
}

/// Quadrature-mirror high-pass filter `g_k = (-1)^k h_{L-1-k}`.
pub fn highpass_filter(low: &[f64]) -> Vec<f64> {
    let len = low.len();
    (0..len)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * low[len - 1 - k]
        })
        .collect()
}

/// Scaling function φ and wavelet ψ sampled at multiples of `2^-CASCADE_DEPTH`
/// over their common support `[0, 2N - 1]`.
#[derive(Debug, Clone)]
pub struct CascadeTables {
    pub support: f64,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    steps_per_unit: usize,
}

impl CascadeTables {
    pub fn build(vanishing_moments: usize) -> Result<Self> {
        let h = lowpass_filter(vanishing_moments)?;
        let g = highpass_filter(h);
        let len = h.len();
        let span = len - 1;
        let unit = 1usize << CASCADE_DEPTH;
        let size = span * unit + 1;
        let sqrt2 = std::f64::consts::SQRT_2;

        let mut phi = vec![0.0; size];
        if span == 1 {
            // Haar: eigenproblem at the integers is degenerate; φ = 1 on [0, 1).
            phi[0] = 1.0;
        } else {
            // φ at interior integers 1..span-1 is the eigenvector of
            // A_{ki} = √2 h_{2k-i} for eigenvalue 1, normalized to unit sum.
            let inner = span - 1;
            let mut a = DMatrix::<f64>::zeros(inner, inner);
            for k in 1..span {
                for i in 1..span {
                    let j = 2 * k as isize - i as isize;
                    if j >= 0 && (j as usize) < len {
                        a[(k - 1, i - 1)] = sqrt2 * h[j as usize];
                    }
                }
            }
            let values = unit_eigenvector(&a)?;
            for (offset, v) in values.iter().enumerate() {
                phi[(offset + 1) * unit] = *v;
            }
        }

        // Refine level by level: φ(t) = √2 Σ_j h_j φ(2t - j).
        for level in 1..=CASCADE_DEPTH {
            let step = unit >> level;
            let mut idx = step;
            while idx < size {
                if (idx / step) % 2 == 1 {
                    let mut acc = 0.0;
                    for (j, hj) in h.iter().enumerate() {
                        let pos = 2 * idx as isize - (j * unit) as isize;
                        if pos >= 0 && (pos as usize) < size {
                            acc += hj * phi[pos as usize];
                        }
                    }
                    phi[idx] = sqrt2 * acc;
                }
                idx += step;
            }
        }

        // ψ(t) = √2 Σ_k g_k φ(2t - k)
        let mut psi = vec![0.0; size];
        for (idx, out) in psi.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, gk) in g.iter().enumerate() {
                let pos = 2 * idx as isize - (k * unit) as isize;
                if pos >= 0 && (pos as usize) < size {
                    acc += gk * phi[pos as usize];
                }
            }
            *out = sqrt2 * acc;
        }

        Ok(Self {
            support: span as f64,
            phi,
            psi,
            steps_per_unit: unit,
        })
    }

    fn lookup(&self, table: &[f64], t: f64) -> f64 {
        if !(t >= 0.0) || t >= self.support {
            return 0.0;
        }
        let x = t * self.steps_per_unit as f64;
        let lo = x.floor() as usize;
        let w = x - lo as f64;
        let a = table[lo];
        let b = table.get(lo + 1).copied().unwrap_or(0.0);
        a + w * (b - a)
    }

    pub fn phi_at(&self, t: f64) -> f64 {
        self.lookup(&self.phi, t)
    }

    pub fn psi_at(&self, t: f64) -> f64 {
        self.lookup(&self.psi, t)
    }
}

fn unit_eigenvector(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    // Solve (A - I) v = 0 with the extra row Σ v = 1 in least squares form.
    let n = a.nrows();
    let mut sys = DMatrix::<f64>::zeros(n + 1, n);
    for r in 0..n {
        for c in 0..n {
            sys[(r, c)] = a[(r, c)] - if r == c { 1.0 } else { 0.0 };
        }
    }
    for c in 0..n {
        sys[(n, c)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::<f64>::zeros(n + 1);
    rhs[n] = 1.0;
    let normal = sys.transpose() * &sys;
    let b = sys.transpose() * rhs;
    let sol = normal
        .lu()
        .solve(&b)
        .ok_or_else(|| KplError::numeric("cascade initialization is singular"))?;
    Ok(sol.iter().copied().collect())
}

/// One wavelet-family atom: `2^{j/2} base(2^j θ - shift)` folded onto
/// `[0, 1]` by symmetric reflection, then scaled to unit L² norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveletAtom {
    pub is_scaling: bool,
    pub scale: u32,
    pub shift: i64,
    pub norm_factor: f64,
}

impl WaveletAtom {
    fn raw(&self, tables: &CascadeTables, t: f64) -> f64 {
        let dil = (1u64 << self.scale) as f64;
        let u = dil * t - self.shift as f64;
        let base = if self.is_scaling {
            tables.phi_at(u)
        } else {
            tables.psi_at(u)
        };
        dil.sqrt() * base
    }

    /// Sum of the atom over every mirror image of `theta` under the even,
    /// 2-periodic extension of `[0, 1]`.
    pub fn folded(&self, tables: &CascadeTables, theta: f64) -> f64 {
        let dil = (1u64 << self.scale) as f64;
        let low = self.shift as f64 / dil;
        let high = (self.shift as f64 + tables.support) / dil;
        let m_lo = ((low - 1.0) / 2.0).floor() as i64 - 1;
        let m_hi = ((high + 1.0) / 2.0).ceil() as i64 + 1;
        let mut acc = 0.0;
        for m in m_lo..=m_hi {
            let shifted = theta + 2.0 * m as f64;
            if shifted > low && shifted < high {
                acc += self.raw(tables, shifted);
            }
            let mirrored = 2.0 * m as f64 - theta;
            if mirrored > low && mirrored < high {
                acc += self.raw(tables, mirrored);
            }
        }
        acc
    }
}

/// Enumerate atoms whose support meets `(0, 1)`: scaling functions at scale
/// 0, then wavelets at scales `0..=levels`.
pub fn enumerate_atoms(support: usize, levels: u32) -> Vec<WaveletAtom> {
    let mut atoms = Vec::new();
    let s = support as i64;
    for shift in -(s - 1)..=0 {
        atoms.push(WaveletAtom {
            is_scaling: true,
            scale: 0,
            shift,
            norm_factor: 1.0,
        });
    }
    for scale in 0..=levels {
        let top = (1i64 << scale) - 1;
        for shift in -(s - 1)..=top {
            atoms.push(WaveletAtom {
                is_scaling: false,
                scale,
                shift,
                norm_factor: 1.0,
            });
        }
    }
    atoms
}
