use fedgan::autodiff::Graph;
use fedgan::gan::{sample_conditioning, GanArch};
use fedgan::metrics::{accuracy_of, classifier_accuracy, FeatureExtractor};
use fedgan::optim::{Adam, AdamConfig};
use fedgan::privacy::clip_l2;
use fedgan::rng::rng_from;
use fedgan::{ParamSet, Tensor};
use proptest::prelude::*;

/// One generator Adam step against a fixed discriminator lowers the loss on
/// the same latents for nearly every initialization.
#[test]
fn generator_step_lowers_its_loss() {
    let arch = GanArch::default();
    let adam = AdamConfig { lr: 2e-3, beta1: 0.5, beta2: 0.999, eps: 1e-8 };
    let seeds = 40;
    let mut improved = 0;
    for seed in 0..seeds {
        let models = arch.init(&mut rng_from(seed)).unwrap();
        let (z, labels) = sample_conditioning(&arch, &mut rng_from(seed + 1000), 16);
        let d = &models.discriminator;
        let (before, g) = arch.gen_loss_and_grads(&models.generator, d, &z, labels.as_deref()).unwrap();
        let stepped = Adam::new(adam, &models.generator).step(&models.generator, &g).unwrap();
        let (after, _) = arch.gen_loss_and_grads(&stepped, d, &z, labels.as_deref()).unwrap();
        improved += usize::from(after < before);
    }
    assert!(improved * 100 >= seeds as usize * 95, "{improved} of {seeds}");
}

#[test]
fn untrained_generator_images_vary() {
    for arch in [GanArch::default(), GanArch { z_dim: 16, num_classes: None }] {
        let models = arch.init(&mut rng_from(3)).unwrap();
        let (z, labels) = sample_conditioning(&arch, &mut rng_from(4), 8);
        let images = arch.generate(&models.generator, &z, labels.as_deref()).unwrap();
        assert_eq!(images.shape(), [8, 1, 28, 28]);
        for img in images.data().chunks(784) {
            let mean = img.iter().sum::<f64>() / 784.0;
            let var = img.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 784.0;
            assert!(var.sqrt() > 1e-3);
        }
    }
}

fn always_class_zero() -> FeatureExtractor {
    let t = |shape: &[usize]| Tensor::zeros(shape);
    let mut out_b = t(&[10]);
    out_b.data_mut()[0] = 1.0;
    let params = ParamSet::new(vec![
        ("cls.conv1.w".into(), t(&[16, 1, 3, 3])),
        ("cls.conv1.b".into(), t(&[16])),
        ("cls.conv2.w".into(), t(&[32, 16, 3, 3])),
        ("cls.conv2.b".into(), t(&[32])),
        ("cls.fc.w".into(), t(&[32 * 7 * 7, 8])),
        ("cls.fc.b".into(), t(&[8])),
        ("cls.out.w".into(), t(&[8, 10])),
        ("cls.out.b".into(), out_b),
    ])
    .unwrap();
    FeatureExtractor { params, feature_dim: 8, num_classes: 10, heldout_accuracy: None }
}

#[test]
fn constant_classifier_scores_chance_on_balanced_labels() {
    let ex = always_class_zero();
    let images = Tensor::from_fn(&[100, 1, 28, 28], |i| (i % 5) as f64 / 4.0);
    let predicted = ex.predict(&images).unwrap();
    assert!(predicted.iter().all(|&p| p == 0));
    let labels: Vec<usize> = (0..100).map(|i| i % 10).collect();
    assert_eq!(accuracy_of(&predicted, &labels), Some(0.1));
}

#[test]
fn classifier_accuracy_absent_cases() {
    let ex = always_class_zero();
    let arch = GanArch::default();
    let models = arch.init(&mut rng_from(0)).unwrap();
    assert_eq!(classifier_accuracy(&arch, &models.generator, &ex, 0, 1, None).unwrap(), None);
    let uncond = GanArch { num_classes: None, ..arch };
    let m = uncond.init(&mut rng_from(0)).unwrap();
    assert_eq!(classifier_accuracy(&uncond, &m.generator, &ex, 10, 1, None).unwrap(), None);
    let acc = classifier_accuracy(&arch, &models.generator, &ex, 50, 1, None).unwrap().unwrap();
    assert!((0.0..=1.0).contains(&acc));
}

fn params_from(values: &[f64]) -> ParamSet {
    let split = values.len() / 2;
    ParamSet::new(vec![
        ("a".into(), Tensor::new(vec![split], values[..split].to_vec()).unwrap()),
        ("b".into(), Tensor::new(vec![values.len() - split], values[split..].to_vec()).unwrap()),
    ])
    .unwrap()
}

proptest! {
    #[test]
    fn conv_output_shapes(
        n in 1usize..3, c_in in 1usize..3, c_out in 1usize..3,
        h in 1usize..9, w in 1usize..9, k in 1usize..4, stride in 1usize..3, padding in 0usize..2,
    ) {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[n, c_in, h, w])).unwrap();
        let kc = g.constant(Tensor::zeros(&[c_out, c_in, k, k])).unwrap();
        let result = g.conv2d(x, kc, stride, padding);
        if h + 2 * padding >= k && w + 2 * padding >= k {
            let y = result.unwrap();
            let oh = (h + 2 * padding - k) / stride + 1;
            let ow = (w + 2 * padding - k) / stride + 1;
            prop_assert_eq!(g.value(y).shape(), &[n, c_out, oh, ow]);
        } else {
            prop_assert!(result.is_err());
        }

        let kt = g.constant(Tensor::zeros(&[c_in, c_out, k, k])).unwrap();
        let full_h = (h - 1) * stride + k;
        let full_w = (w - 1) * stride + k;
        let result = g.conv_transpose2d(x, kt, stride, padding);
        if full_h > 2 * padding && full_w > 2 * padding {
            let y = result.unwrap();
            prop_assert_eq!(g.value(y).shape(), &[n, c_out, full_h - 2 * padding, full_w - 2 * padding]);
        } else {
            prop_assert!(result.is_err());
        }
    }

    #[test]
    fn clipping_bounds_norm_and_keeps_direction(
        values in prop::collection::vec(-5.0f64..5.0, 2..40),
        clip in 0.01f64..10.0,
    ) {
        let p = params_from(&values);
        let c = clip_l2(&p, clip).unwrap();
        let (norm, clipped) = (p.l2_norm(), c.l2_norm());
        prop_assert!(clipped <= clip * (1.0 + 1e-12));
        if norm <= clip {
            prop_assert_eq!(&c, &p);
        } else {
            prop_assert!((clipped - clip).abs() < 1e-9 * clip);
            let ratio = clip / norm;
            for (x, y) in p.to_flat().iter().zip(c.to_flat()) {
                prop_assert!((x * ratio - y).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }
}
