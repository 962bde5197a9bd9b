//! Shepp-Logan phantoms used as a stand-in for brain slices.

use crate::rng::Rng;
use crate::tensor::RealTensor;

/// One ellipse: centre, semi-axes, rotation in degrees, additive intensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub x0: f64,
    pub y0: f64,
    pub a: f64,
    pub b: f64,
    pub phi_deg: f64,
    pub intensity: f64,
}

const fn e(intensity: f64, a: f64, b: f64, x0: f64, y0: f64, phi_deg: f64) -> Ellipse {
    Ellipse {
        x0,
        y0,
        a,
        b,
        phi_deg,
        intensity,
    }
}

/// Modified (higher-contrast) Shepp-Logan table.
pub const SHEPP_LOGAN: [Ellipse; 10] = [
    e(1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    e(-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    e(-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    e(-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    e(0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    e(0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    e(0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    e(0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    e(0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    e(0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// Rasterizes `ellipses` on `[-1, 1]²` sampled at pixel centres (y up),
/// then min-max normalizes to `[0, 1]`.
pub fn render(ellipses: &[Ellipse], h: usize, w: usize) -> RealTensor {
    let mut img = RealTensor::zeros(&[h, w]);
    let data = img.data_mut();
    for el in ellipses {
        let (s, c) = el.phi_deg.to_radians().sin_cos();
        for i in 0..h {
            let y = 1.0 - (i as f64 + 0.5) / h as f64 * 2.0 - el.y0;
            for j in 0..w {
                let x = (j as f64 + 0.5) / w as f64 * 2.0 - 1.0 - el.x0;
                let u = x * c + y * s;
                let v = -x * s + y * c;
                if (u / el.a).powi(2) + (v / el.b).powi(2) <= 1.0 {
                    data[i * w + j] += el.intensity;
                }
            }
        }
    }
    let (lo, hi) = (img.min(), img.max());
    if hi > lo {
        img.map(|v| (v - lo) / (hi - lo))
    } else {
        img.map(|_| 0.0)
    }
}

/// The standard 10-ellipse phantom, normalized to `[0, 1]`.
pub fn shepp_logan(h: usize, w: usize) -> RealTensor {
    render(&SHEPP_LOGAN, h, w)
}

/// A randomly perturbed phantom standing in for one subject: ellipse
/// centres, axes, angles and the inner-structure intensities move a little.
pub fn jittered_ellipses(rng: &mut Rng) -> Vec<Ellipse> {
    let mut out = SHEPP_LOGAN.to_vec();
    let scale = 1.0 + 0.06 * (rng.uniform() - 0.5);
    for (k, el) in out.iter_mut().enumerate() {
        el.a *= scale * (1.0 + 0.08 * (rng.uniform() - 0.5));
        el.b *= scale * (1.0 + 0.08 * (rng.uniform() - 0.5));
        if k >= 2 {
            el.x0 += 0.04 * (rng.uniform() - 0.5);
            el.y0 += 0.04 * (rng.uniform() - 0.5);
            el.phi_deg += 6.0 * (rng.uniform() - 0.5);
            el.intensity *= 1.0 + 0.5 * (rng.uniform() - 0.5);
        }
    }
    out
}

/// `slices` adjacent slices of one subject. Structures shrink towards the
/// ends of the volume, as in an axial stack through a head.
pub fn phantom_volume(h: usize, w: usize, slices: usize, rng: &mut Rng) -> Vec<RealTensor> {
    let base = jittered_ellipses(rng);
    (0..slices)
        .map(|s| {
            let z = if slices > 1 {
                2.0 * s as f64 / (slices - 1) as f64 - 1.0
            } else {
                0.0
            };
            let slice: Vec<Ellipse> = base
                .iter()
                .enumerate()
                .map(|(k, el)| {
                    // Inner structures change faster than the skull.
                    let rate = if k < 2 { 0.08 } else { 0.25 };
                    let f = (1.0 - rate * z * z).max(0.1);
                    Ellipse {
                        a: el.a * f,
                        b: el.b * f,
                        y0: el.y0 + 0.02 * z,
                        ..*el
                    }
                })
                .collect();
            render(&slice, h, w)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn in_unit_range() {
        let p = shepp_logan(64, 64);
        assert_eq!(p.min(), 0.0);
        assert_eq!(p.max(), 1.0);
    }

    fn mirror_diff(p: &RealTensor) -> f64 {
        let (h, w) = p.dims2().unwrap();
        let mut diff = 0.0;
        for i in 0..h {
            for j in 0..w {
                diff += (p.at(&[i, j]) - p.at(&[i, w - 1 - j])).abs();
            }
        }
        diff / (h * w) as f64
    }

    #[test]
    fn centred_ellipses_are_mirror_symmetric() {
        let centred: Vec<Ellipse> = SHEPP_LOGAN
            .iter()
            .filter(|e| e.x0 == 0.0 && e.phi_deg == 0.0)
            .copied()
            .collect();
        assert_eq!(centred.len(), 6);
        assert_eq!(mirror_diff(&render(&centred, 64, 64)), 0.0);
        // The two oblique ellipses and the small bottom pair differ in size,
        // so the full phantom is only roughly symmetric.
        assert!(mirror_diff(&shepp_logan(64, 64)) < 0.02);
    }

    #[test]
    fn volumes_are_seeded() {
        let a = phantom_volume(16, 16, 3, &mut Rng::new(4));
        let b = phantom_volume(16, 16, 3, &mut Rng::new(4));
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }
}
