//! Analytic gradients of the decoder against central differences in f64.

use hashvocab::model::{Adapters, Model, ModelConfig, ParamGroup, Params, Trainable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config(tied: bool) -> ModelConfig {
    ModelConfig {
        layers: 2,
        heads: 2,
        dim: 8,
        ff_dim: 12,
        max_seq_len: 10,
        base_vocab: 7,
        item_count: 12,
        rate: 3.0,
        k: 2,
        tied_item_head: tied,
        ..ModelConfig::default()
    }
}

fn batch() -> Vec<(Vec<u32>, Vec<bool>)> {
    vec![
        (vec![2, 9, 4, 13, 15, 3], vec![false, false, true, true, true, true]),
        (vec![2, 18, 7, 8, 5], vec![false, true, false, true, true]),
        (vec![2, 11], vec![false, true]),
    ]
}

fn mean_loss(model: &Model<f64>, adapters: Option<&Adapters<f64>>) -> f64 {
    let b = batch();
    let refs: Vec<(&[u32], &[bool])> = b.iter().map(|(t, m)| (t.as_slice(), m.as_slice())).collect();
    model.batch_loss(adapters, &refs).unwrap().mean()
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1e-7)
}

fn check_params(tied: bool) {
    let mut model = Model::<f64>::new(small_config(tied), 11, 12).unwrap();
    // Larger weights than the default init so every path carries signal.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for t in model.params.tensors_mut() {
        for v in t.data.iter_mut() {
            *v += rng.random_range(-0.4..0.4);
        }
    }
    let b = batch();
    let refs: Vec<(&[u32], &[bool])> = b.iter().map(|(t, m)| (t.as_slice(), m.as_slice())).collect();
    let mut grads = model.params.zeros_like();
    model
        .loss_and_grad(None, &refs, &Trainable::all(), &mut grads, None)
        .unwrap();

    let names: Vec<String> = model.params.tensors().iter().map(|t| t.name.clone()).collect();
    let h = 1e-5;
    for (ti, name) in names.iter().enumerate() {
        let len = model.params.tensors()[ti].data.len();
        for j in (0..len).step_by(3) {
            let set = |m: &mut Model<f64>, delta: f64| {
                m.params.tensors_mut()[ti].data[j] += delta;
            };
            set(&mut model, h);
            let up = mean_loss(&model, None);
            set(&mut model, -2.0 * h);
            let down = mean_loss(&model, None);
            set(&mut model, h);
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.tensors()[ti].data[j];
            let e = rel_err(analytic, numeric);
            assert!(
                e < 1e-5 || (analytic - numeric).abs() < 1e-9,
                "{name}[{j}]: analytic {analytic} numeric {numeric}"
            );
        }
    }
}

#[test]
fn tied_head_gradients_match_central_differences() {
    check_params(true);
}

#[test]
fn untied_head_gradients_match_central_differences() {
    check_params(false);
}

#[test]
fn adapter_gradients_match_central_differences() {
    let model = Model::<f64>::new(small_config(true), 3, 4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut adapters = Adapters::<f64>::new(2, 8, 2, 4.0, &mut rng).unwrap();
    for t in adapters.tensors_mut() {
        for v in t.data.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    let b = batch();
    let refs: Vec<(&[u32], &[bool])> = b.iter().map(|(t, m)| (t.as_slice(), m.as_slice())).collect();
    let mut grads = model.params.zeros_like();
    let mut agrads = adapters.zeros_like();
    let tr = Trainable::none().with(ParamGroup::Lora, true);
    model
        .loss_and_grad(Some(&adapters), &refs, &tr, &mut grads, Some(&mut agrads))
        .unwrap();
    assert!(grads.tensors().iter().all(|t| t.data.iter().all(|&v| v == 0.0)));

    let count = adapters.tensors().len();
    let h = 1e-5;
    for ti in 0..count {
        let len = adapters.tensors()[ti].data.len();
        for j in 0..len {
            adapters.tensors_mut()[ti].data[j] += h;
            let up = mean_loss(&model, Some(&adapters));
            adapters.tensors_mut()[ti].data[j] -= 2.0 * h;
            let down = mean_loss(&model, Some(&adapters));
            adapters.tensors_mut()[ti].data[j] += h;
            let numeric = (up - down) / (2.0 * h);
            let analytic = agrads.tensors()[ti].data[j];
            assert!(
                rel_err(analytic, numeric) < 1e-5 || (analytic - numeric).abs() < 1e-9,
                "{}[{j}]: analytic {analytic} numeric {numeric}",
                adapters.tensors()[ti].name
            );
        }
    }
}

#[test]
fn frozen_groups_receive_no_gradient() {
    let model = Model::<f64>::new(small_config(true), 1, 2).unwrap();
    let b = batch();
    let refs: Vec<(&[u32], &[bool])> = b.iter().map(|(t, m)| (t.as_slice(), m.as_slice())).collect();
    let tr = Trainable::all()
        .with(ParamGroup::ItemTable, false)
        .with(ParamGroup::Attention, false);
    let mut grads: Params<f64> = model.params.zeros_like();
    model.loss_and_grad(None, &refs, &tr, &mut grads, None).unwrap();
    for t in grads.tensors() {
        let zero = t.data.iter().all(|&v| v == 0.0);
        let frozen = matches!(t.group, ParamGroup::ItemTable | ParamGroup::Attention);
        assert_eq!(zero, frozen, "{}", t.name);
    }
}
