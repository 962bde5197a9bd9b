use ganrecon::kspace::{
    data_consistency, forward, make_mask, render, shepp_logan, zero_fill, AcqPair, Mask, Scheme, Target,
    SHEPP_LOGAN,
};
use ganrecon::tensor::{fft2, ifft2};
use ganrecon::{ComplexTensor, RealTensor};
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn random_image(h: usize, w: usize, seed: u64) -> ComplexTensor {
    let mut rng = ganrecon::Rng::new(seed);
    ComplexTensor::from_fn(&[h, w], |_| c(rng.normal(), rng.normal()))
}

#[test]
fn full_mask_forward_is_fft() {
    let x = random_image(8, 6, 1);
    let y = forward(&x, &Mask::full(8, 6)).unwrap();
    assert_eq!(y, fft2(&x).unwrap());
    assert!(zero_fill(&y).unwrap().max_abs_diff(&x).unwrap() < 1e-12);
}

#[test]
fn zero_image_gives_zero_kspace() {
    let m = make_mask(Scheme::Radial, (16, 16), Target::Rate(0.3), 0.0, 2).unwrap();
    let y = forward(&ComplexTensor::zeros(&[16, 16]), &m).unwrap();
    assert!(y.data().iter().all(|v| *v == c(0.0, 0.0)));
}

#[test]
fn row_zero_mask_zeroes_other_rows() {
    let grid = RealTensor::from_fn(&[4, 4], |i| if i < 4 { 1.0 } else { 0.0 });
    let m = Mask::from_binary(grid, Scheme::Cartesian, Target::Acceleration(4.0)).unwrap();
    let y = forward(&random_image(4, 4, 3), &m).unwrap();
    for i in 1..4 {
        for j in 0..4 {
            assert_eq!(y.at(&[i, j]), c(0.0, 0.0));
        }
    }
    assert!(y.at(&[0, 0]) != c(0.0, 0.0));
}

#[test]
fn shape_mismatch_is_an_error() {
    assert!(forward(&random_image(4, 4, 0), &Mask::full(4, 5)).is_err());
    let y = random_image(4, 4, 0);
    assert!(data_consistency(&y, &random_image(4, 5, 0), &Mask::full(4, 4)).is_err());
}

#[test]
fn even_row_decimation_replicates_impulse() {
    // Keeping even k-space rows of an impulse at (r0, c0) gives two half
    // amplitude copies, H/2 rows apart: ½(δ[i−r0] + δ[i−r0−H/2]).
    let (h, w, r0, c0) = (8, 8, 1, 3);
    let grid = RealTensor::from_fn(&[h, w], |i| if (i / w) % 2 == 0 { 1.0 } else { 0.0 });
    let m = Mask::from_binary(grid, Scheme::Cartesian, Target::Acceleration(2.0)).unwrap();
    let x = ComplexTensor::from_fn(&[h, w], |i| if i == r0 * w + c0 { c(1.0, 0.0) } else { c(0.0, 0.0) });
    let zf = zero_fill(&forward(&x, &m).unwrap()).unwrap();
    for i in 0..h {
        for j in 0..w {
            let expect = if j == c0 && (i == r0 || i == (r0 + h / 2) % h) { 0.5 } else { 0.0 };
            assert!((zf.at(&[i, j]) - c(expect, 0.0)).norm() < 1e-12, "({i},{j})");
        }
    }
}

#[test]
fn data_consistency_limits() {
    let pred = random_image(6, 6, 4);
    let y = random_image(6, 6, 5);
    assert_eq!(data_consistency(&pred, &y, &Mask::full(6, 6)).unwrap(), y);
    let empty = Mask::from_binary(RealTensor::zeros(&[6, 6]), Scheme::Full, Target::Full).unwrap();
    assert_eq!(data_consistency(&pred, &y, &empty).unwrap(), pred);
}

#[test]
fn data_consistency_two_by_two_by_hand() {
    let grid = RealTensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let m = Mask::from_binary(grid, Scheme::Cartesian, Target::Acceleration(2.0)).unwrap();
    let pred = ComplexTensor::new(&[2, 2], vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)]).unwrap();
    let y = ComplexTensor::new(&[2, 2], vec![c(0.0, 9.0), c(0.0, 8.0), c(0.0, 7.0), c(0.0, 6.0)]).unwrap();
    let out = data_consistency(&pred, &y, &m).unwrap();
    assert_eq!(out.data(), &[c(0.0, 9.0), c(2.0, 0.0), c(3.0, 0.0), c(0.0, 6.0)]);
}

#[test]
fn double_resolution_render_agrees_after_box_downsampling() {
    let lo = shepp_logan(64, 64);
    let hi = shepp_logan(128, 128);
    let down = RealTensor::from_fn(&[64, 64], |k| {
        let (i, j) = (k / 64, k % 64);
        (hi.at(&[2 * i, 2 * j]) + hi.at(&[2 * i + 1, 2 * j]) + hi.at(&[2 * i, 2 * j + 1]) + hi.at(&[2 * i + 1, 2 * j + 1]))
            / 4.0
    });
    let mad = down.sub(&lo).unwrap().map(f64::abs).mean();
    assert!(mad < 0.02, "{mad}");
    assert_eq!(render(&SHEPP_LOGAN, 64, 64), lo);
}

#[test]
fn acq_pair_matches_definition() {
    let x = shepp_logan(32, 32).to_complex();
    let m = make_mask(Scheme::Spiral, (32, 32), Target::Rate(0.3), 0.0, 8).unwrap();
    let pair = AcqPair::new(x.clone(), m.clone()).unwrap();
    let k = fft2(&x).unwrap();
    for (idx, (&y, &full)) in pair.y_u.data().iter().zip(k.data()).enumerate() {
        if m.grid().data()[idx] == 1.0 {
            assert_eq!(y, full);
        } else {
            assert_eq!(y, c(0.0, 0.0));
        }
    }
}

#[test]
fn mask_exports() {
    let dir = tempfile::tempdir().unwrap();
    let m = make_mask(Scheme::Cartesian, (16, 16), Target::Acceleration(4.0), 0.08, 1).unwrap();
    m.save_pgm(dir.path().join("m.pgm")).unwrap();
    m.save_mbt(dir.path().join("m.mbt")).unwrap();
    let back = ganrecon::tensor::io::read_mbt(dir.path().join("m.mbt")).unwrap();
    assert_eq!(back.into_magnitude(), *m.grid());
    let bytes = std::fs::read(dir.path().join("m.pgm")).unwrap();
    assert!(bytes.starts_with(b"P5"));
}

fn scheme_and_target() -> impl Strategy<Value = (Scheme, Target)> {
    prop_oneof![
        prop::sample::select(vec![2.0, 4.0, 6.0]).prop_map(|af| (Scheme::Cartesian, Target::Acceleration(af))),
        prop::sample::select(vec![0.5, 0.3, 0.2]).prop_map(|r| (Scheme::Radial, Target::Rate(r))),
        prop::sample::select(vec![0.5, 0.3, 0.2]).prop_map(|r| (Scheme::Spiral, Target::Rate(r))),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mask_invariants(
        (scheme, target) in scheme_and_target(),
        h in 16usize..48,
        w in 16usize..48,
        seed in any::<u64>(),
    ) {
        let m = make_mask(scheme, (h, w), target, 0.08, seed).unwrap();
        prop_assert!(m.grid().data().iter().all(|&v| v == 0.0 || v == 1.0));
        prop_assert_eq!(m.achieved_rate, m.count() as f64 / (h * w) as f64);
        prop_assert!(m.is_sampled(0, 0));
        match target {
            Target::Acceleration(af) => {
                let lines = (0..h).filter(|&i| m.is_sampled(i, 0)).count();
                prop_assert_eq!(lines, (h as f64 / af).ceil() as usize);
                for i in 0..h {
                    for j in 1..w {
                        prop_assert_eq!(m.is_sampled(i, j), m.is_sampled(i, 0));
                    }
                }
            }
            Target::Rate(r) => {
                prop_assert!((m.achieved_rate - r).abs() <= 0.005 + 1.0 / (h * w) as f64,
                    "rate {} vs {}", m.achieved_rate, r);
            }
            Target::Full => unreachable!(),
        }
    }

    #[test]
    fn zero_fill_error_is_masked_out_energy(seed in any::<u64>(), (scheme, target) in scheme_and_target()) {
        let x = random_image(16, 12, seed);
        let m = make_mask(scheme, (16, 12), target, 0.08, seed).unwrap();
        let err = x.sub(&zero_fill(&forward(&x, &m).unwrap()).unwrap()).unwrap().norm_sqr();
        let k = fft2(&x).unwrap();
        let missing: f64 = k.data().iter().zip(m.grid().data()).map(|(v, &g)| (1.0 - g) * v.norm_sqr()).sum();
        prop_assert!((err - missing).abs() < 1e-10 * (1.0 + missing));
    }

    #[test]
    fn exact_prediction_is_a_fixed_point(seed in any::<u64>(), (scheme, target) in scheme_and_target()) {
        let x = random_image(12, 12, seed);
        let m = make_mask(scheme, (12, 12), target, 0.08, seed).unwrap();
        let merged = data_consistency(&fft2(&x).unwrap(), &forward(&x, &m).unwrap(), &m).unwrap();
        prop_assert!(ifft2(&merged).unwrap().max_abs_diff(&x).unwrap() < 1e-12);
    }
}
