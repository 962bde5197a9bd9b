use ganrecon::autodiff::{gradcheck, GradCheckOptions, Graph, ParamStore};
use ganrecon::losses::{
    graph as lg, l_adv_d, l_adv_g, l_fmse, l_imse, l_perceptual, l_total, Channels, FeatureExtractor, LossParts,
    LossWeights, PROB_EPS,
};
use ganrecon::models::Family;
use ganrecon::tensor::{fft2, ifft2};
use ganrecon::{ComplexTensor, RealTensor, Rng};
use num_complex::Complex64;
use proptest::prelude::*;

fn rand_real(shape: &[usize], seed: u64) -> RealTensor {
    let mut rng = Rng::new(seed);
    RealTensor::from_fn(shape, |_| rng.normal())
}

fn rand_complex(shape: &[usize], seed: u64) -> ComplexTensor {
    let mut rng = Rng::new(seed);
    ComplexTensor::from_fn(shape, |_| Complex64::new(rng.normal(), rng.normal()))
}

#[test]
fn imse_examples() {
    let z = RealTensor::zeros(&[2, 2]);
    assert_eq!(l_imse(&z, &z).unwrap(), 0.0);
    assert_eq!(l_imse(&z, &RealTensor::full(&[2, 2], 1.0)).unwrap(), 2.0);
}

#[test]
fn imse_gradient_is_the_residual() {
    let xt = rand_real(&[1, 1, 3, 3], 1);
    let xh = rand_real(&[1, 1, 3, 3], 2);
    let mut g = Graph::new();
    let t = g.input(xt.clone());
    let p = g.input(xh.clone());
    let l = lg::imse(&mut g, t, p).unwrap();
    assert!((g.scalar(l) - l_imse(&xt, &xh).unwrap()).abs() < 1e-12);
    g.backward(l, &mut ParamStore::new()).unwrap();
    let expect = xh.sub(&xt).unwrap();
    assert!(g.grad(p).unwrap().max_abs_diff(&expect).unwrap() < 1e-12);
}

#[test]
fn batch_mean_of_per_image_losses() {
    let a = rand_real(&[3, 1, 4, 4], 3);
    let b = rand_real(&[3, 1, 4, 4], 4);
    let per: f64 = (0..3)
        .map(|i| {
            let ai = a.slice_axis(0, i, 1).unwrap().reshape(&[4, 4]).unwrap();
            let bi = b.slice_axis(0, i, 1).unwrap().reshape(&[4, 4]).unwrap();
            l_imse(&ai, &bi).unwrap()
        })
        .sum::<f64>()
        / 3.0;
    assert!((l_imse(&a, &b).unwrap() - per).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn fmse_equals_imse_for_full_transforms(s in any::<u64>()) {
        let a = rand_complex(&[2, 1, 8, 6], s);
        let b = rand_complex(&[2, 1, 8, 6], s ^ 0x55);
        let (f, i) = (l_fmse(&a, &b).unwrap(), l_imse(&a, &b).unwrap());
        prop_assert!((f - i).abs() < 1e-10 * (1.0 + i));
    }

    #[test]
    fn graph_fmse_matches_tensor_fmse(s in any::<u64>()) {
        let a = rand_real(&[2, 1, 4, 4], s);
        let b = rand_real(&[2, 1, 4, 4], s ^ 0xAA);
        let mut g = Graph::new();
        let (ta, tb) = (g.input(a.clone()), g.input(b.clone()));
        let l = lg::fmse(&mut g, ta, tb, Channels::Real).unwrap();
        let expect = l_fmse(&a.to_complex(), &b.to_complex()).unwrap();
        prop_assert!((g.scalar(l) - expect).abs() < 1e-10 * (1.0 + expect));
    }
}

#[test]
fn masked_kspace_loss_differs_from_image_loss() {
    // x_t = [[1,0],[0,0]] has F x_t = ½·ones. Predicted k-space is all zero;
    // the mask samples row 0 only, so the merged estimate keeps ½ on row 0.
    let xt = ComplexTensor::from_fn(&[2, 2], |i| Complex64::new(if i == 0 { 1.0 } else { 0.0 }, 0.0));
    let yt = fft2(&xt).unwrap();
    for v in yt.data() {
        assert!((v - Complex64::new(0.5, 0.0)).norm() < 1e-15);
    }
    let merged = ComplexTensor::from_fn(&[2, 2], |i| if i < 2 { yt.data()[i] } else { Complex64::new(0.0, 0.0) });
    // Masked: only the two unsampled coefficients contribute ½·(¼ + ¼).
    let fm = l_imse(&yt, &merged).unwrap();
    assert!((fm - 0.25).abs() < 1e-15);
    // Image loss of the raw (unmerged) prediction: ½·‖x_t‖² = ½.
    let raw = ifft2(&ComplexTensor::zeros(&[2, 2])).unwrap();
    assert!((l_imse(&xt, &raw).unwrap() - 0.5).abs() < 1e-15);
    assert!((fm - l_imse(&xt, &raw).unwrap()).abs() > 0.1);
}

#[test]
fn perceptual_examples() {
    let a = rand_real(&[2, 1, 8, 8], 5);
    let b = rand_real(&[2, 1, 8, 8], 6);
    let id = FeatureExtractor::identity(1);
    assert_eq!(l_perceptual(&a, &b, &id).unwrap(), l_imse(&a, &b).unwrap());
    let fx = FeatureExtractor::random_conv(1, 42);
    assert_eq!(l_perceptual(&a, &a, &fx).unwrap(), 0.0);
    let once = l_perceptual(&a, &b, &fx).unwrap();
    assert_eq!(once, l_perceptual(&a, &b, &FeatureExtractor::random_conv(1, 42)).unwrap());
    assert!(once > 0.0);
    assert!(l_perceptual(&a, &rand_real(&[2, 2, 8, 8], 1), &fx).is_err());
}

#[test]
fn adversarial_examples() {
    let half = RealTensor::full(&[4, 1], 0.5);
    assert!((l_adv_d(&half, &half).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-12);
    let perfect = l_adv_d(&RealTensor::full(&[4, 1], 1.0), &RealTensor::zeros(&[4, 1])).unwrap();
    assert!((perfect - 2.0 * (1.0 / (1.0 - PROB_EPS)).ln()).abs() < 1e-15);
    assert!(perfect < 1e-6);
    let gl: Vec<f64> = [0.1, 0.5, 0.9]
        .iter()
        .map(|&p| l_adv_g(&RealTensor::full(&[1, 1], p), false).unwrap())
        .collect();
    assert!(gl[0] > gl[1] && gl[1] > gl[2]);
    assert!(l_adv_d(&RealTensor::full(&[1, 1], 1.5), &half).is_err());
    assert!(l_adv_g(&RealTensor::full(&[1, 1], -0.1), false).is_err());
}

#[test]
fn graph_adversarial_matches_tensor_version() {
    let mut rng = Rng::new(8);
    let real = RealTensor::from_fn(&[5, 1], |_| rng.uniform());
    let fake = RealTensor::from_fn(&[5, 1], |_| rng.uniform());
    let mut g = Graph::new();
    let (r, f) = (g.input(real.clone()), g.input(fake.clone()));
    let d = lg::adv_d(&mut g, r, f).unwrap();
    let gn = lg::adv_g(&mut g, f, false).unwrap();
    let gs = lg::adv_g(&mut g, f, true).unwrap();
    assert!((g.scalar(d) - l_adv_d(&real, &fake).unwrap()).abs() < 1e-12);
    assert!((g.scalar(gn) - l_adv_g(&fake, false).unwrap()).abs() < 1e-12);
    assert!((g.scalar(gs) - l_adv_g(&fake, true).unwrap()).abs() < 1e-12);
}

#[test]
fn weighted_totals() {
    let ones = LossParts {
        imse: 1.0,
        fmse: 1.0,
        perceptual: 1.0,
        adv: 1.0,
    };
    assert!((l_total(Family::Dagan, &LossWeights::dagan(), &ones) - 16.1025).abs() < 1e-12);
    assert!((l_total(Family::ReconRefine, &LossWeights::recon_refine(), &ones) - 11.1).abs() < 1e-12);
    assert_eq!(l_total(Family::Dagan, &LossWeights::dagan(), &LossParts::default()), 0.0);

    let mut g = Graph::new();
    let one = g.input(RealTensor::scalar(1.0));
    let t = lg::total(&mut g, Family::Dagan, &LossWeights::dagan(), Some(one), Some(one), Some(one), Some(one)).unwrap();
    assert!((g.scalar(t) - 16.1025).abs() < 1e-12);

    let zero = LossWeights {
        alpha: 0.0,
        beta: 0.0,
        gamma: 0.0,
        adversarial: 0.0,
    };
    assert!(zero.validate().is_err());
    assert!(LossWeights { alpha: -1.0, ..zero }.validate().is_err());
}

fn loss_gradcheck(build: impl Fn(&mut Graph, ganrecon::autodiff::Var) -> ganrecon::Result<ganrecon::autodiff::Var>, shape: &[usize]) -> f64 {
    let mut store = ParamStore::new();
    let id = store.add("p", rand_real(shape, 77).scale(0.5), true).unwrap();
    let report = gradcheck(
        &mut store,
        |g, s| {
            let p = g.param(s, id);
            build(g, p)
        },
        &GradCheckOptions::default(),
    )
    .unwrap();
    report.max_rel_err
}

#[test]
fn loss_gradients_pass_finite_differences() {
    let target = rand_real(&[2, 2, 6, 6], 9);
    let fx = FeatureExtractor::random_conv(2, 3);
    let t1 = target.clone();
    let e = loss_gradcheck(
        move |g, p| {
            let t = g.input(t1.clone());
            lg::imse(g, t, p)
        },
        &[2, 2, 6, 6],
    );
    assert!(e < 1e-5, "imse {e}");
    let t2 = target.clone();
    let e = loss_gradcheck(
        move |g, p| {
            let t = g.input(t2.clone());
            lg::fmse(g, t, p, Channels::Pairs)
        },
        &[2, 2, 6, 6],
    );
    assert!(e < 1e-5, "fmse {e}");
    let t3 = target.clone();
    let e = loss_gradcheck(
        move |g, p| {
            let t = g.input(t3.clone());
            lg::fmse(g, t, p, Channels::Real)
        },
        &[2, 2, 6, 6],
    );
    assert!(e < 1e-5, "fmse real {e}");
    // Leaky ReLU kinks make this piecewise smooth only.
    let t4 = target.clone();
    let e = loss_gradcheck(
        move |g, p| {
            let t = g.input(t4.clone());
            lg::perceptual(g, t, p, &fx)
        },
        &[2, 2, 6, 6],
    );
    assert!(e < 1e-4, "perceptual {e}");
    let real = RealTensor::full(&[3, 1], 0.7);
    let e = loss_gradcheck(
        move |g, p| {
            let d_fake = g.sigmoid(p);
            let r = g.input(real.clone());
            let ld = lg::adv_d(g, r, d_fake)?;
            let lg_ns = lg::adv_g(g, d_fake, false)?;
            let lg_s = lg::adv_g(g, d_fake, true)?;
            let s = g.add(ld, lg_ns)?;
            g.add(s, lg_s)
        },
        &[3, 1],
    );
    assert!(e < 1e-5, "adversarial {e}");
}
