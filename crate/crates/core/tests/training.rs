use dfnet::evaluation::report::{read_trace, write_trace};
use dfnet::training::{evaluate, train_resume};
use dfnet::{
    load_checkpoint, make_folds, save_checkpoint, synth_generate, train, Checkpoint, FoldSpec, Network, NetworkConfig,
    SyntheticSet, TrainConfig,
};

fn tiny() -> Network<f32> {
    Network::new(NetworkConfig::scaled(&[2, 4], 8), 3).unwrap()
}

fn data(n: usize) -> (SyntheticSet, FoldSpec) {
    let set = synth_generate(n, 8, 11).unwrap();
    let fold = make_folds(n, n, 1).unwrap().remove(0);
    (set, fold)
}

fn flat(net: &Network<f32>) -> Vec<f32> {
    net.params().entries().iter().flat_map(|p| p.value.data().to_vec()).collect()
}

#[test]
fn four_images_at_batch_two_take_two_steps_per_epoch() {
    let (set, fold) = data(2);
    let mut net = tiny();
    let cfg = TrainConfig { epochs: 3, ..Default::default() };
    let out = train(&mut net, &fold, &set, &set, &cfg).unwrap();
    assert_eq!(out.steps, 6);
    assert_eq!(out.adam.step, 6);
    assert_eq!(out.trace.len(), 3);
    assert_eq!(out.trace.iter().map(|r| r.epoch).collect::<Vec<_>>(), [1, 2, 3]);
}

#[test]
fn a_partial_final_batch_still_steps() {
    let set = synth_generate(3, 8, 11).unwrap();
    let fold = FoldSpec { index: 1, normal: 0..3, opacity: 0..2 };
    let mut net = tiny();
    let cfg = TrainConfig { epochs: 1, ..Default::default() };
    assert_eq!(train(&mut net, &fold, &set, &set, &cfg).unwrap().steps, 3);
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let (set, fold) = data(2);
    let mut net = tiny();
    let before = flat(&net);
    let cfg = TrainConfig { epochs: 2, learning_rate: 0.0, ..Default::default() };
    let out = train(&mut net, &fold, &set, &set, &cfg).unwrap();
    assert_eq!(flat(&net), before);
    assert_eq!(out.initial_loss, out.final_loss);
}

#[test]
fn training_is_deterministic_under_a_seed() {
    let (set, fold) = data(3);
    let cfg = TrainConfig { epochs: 2, seed: 9, ..Default::default() };
    let mut a = tiny();
    let mut b = tiny();
    let ra = train(&mut a, &fold, &set, &set, &cfg).unwrap();
    let rb = train(&mut b, &fold, &set, &set, &cfg).unwrap();
    assert_eq!(flat(&a), flat(&b));
    assert_eq!(ra.trace, rb.trace);
    assert_eq!(ra.final_loss.to_bits(), rb.final_loss.to_bits());
}

#[test]
fn a_step_moves_every_parameter_with_a_nonzero_gradient() {
    let (set, fold) = data(2);
    let mut net = tiny();
    let batch = dfnet::Tensor::stack(&[set.normal[0].clone(), set.opacity[0].clone()]).unwrap();
    let (_, grads) = net.loss_and_gradients(&batch, &[0.0, 1.0]).unwrap();
    let before = net.clone();
    let cfg = TrainConfig { epochs: 1, shuffle: false, batch_size: 4, ..Default::default() };
    train(&mut net, &fold, &set, &set, &cfg).unwrap();
    let mut moved = 0;
    for ((old, new), g) in before.params().entries().iter().zip(net.params().entries()).zip(&grads) {
        if g.max_abs() > 0.0 {
            assert_ne!(old.value, new.value, "{} did not move", old.name);
            moved += 1;
        }
    }
    assert!(moved > 0);
}

#[test]
fn checkpoint_round_trip_reproduces_predictions_bitwise() {
    let (set, fold) = data(2);
    let mut net = tiny();
    let cfg = TrainConfig { epochs: 1, ..Default::default() };
    let out = train(&mut net, &fold, &set, &set, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let ck = Checkpoint { network: net, adam: out.adam, train: cfg.clone(), fold: Some(fold.clone()) };
    save_checkpoint(&path, &ck).unwrap();
    let back = load_checkpoint(&path).unwrap();

    let batch = dfnet::Tensor::stack(&[set.normal[1].clone(), set.opacity[1].clone()]).unwrap();
    let p0: Vec<u32> = ck.network.predict(&batch).unwrap().iter().map(|v| v.to_bits()).collect();
    let p1: Vec<u32> = back.network.predict(&batch).unwrap().iter().map(|v| v.to_bits()).collect();
    assert_eq!(p0, p1);
    assert_eq!(back.adam.step, ck.adam.step);
    assert_eq!(back.fold, Some(fold));
    assert_eq!(back.train, cfg);
}

#[test]
fn checkpoint_files_differ_after_a_step() {
    let (set, fold) = data(2);
    let dir = tempfile::tempdir().unwrap();
    let net = tiny();
    let cfg = TrainConfig { epochs: 1, ..Default::default() };
    let before = Checkpoint::fresh(net.clone(), cfg.clone(), Some(fold.clone()));
    save_checkpoint(&dir.path().join("a"), &before).unwrap();

    let mut trained = net;
    let out = train_resume(&mut trained, before.adam.clone(), &fold, &set, &set, &cfg).unwrap();
    let after = Checkpoint { network: trained, adam: out.adam, train: cfg, fold: Some(fold) };
    save_checkpoint(&dir.path().join("b"), &after).unwrap();
    let a = std::fs::read(dir.path().join("a")).unwrap();
    let b = std::fs::read(dir.path().join("b")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn trace_csv_parses_back_identically() {
    let (set, fold) = data(2);
    let mut net = tiny();
    let cfg = TrainConfig { epochs: 3, ..Default::default() };
    let out = train(&mut net, &fold, &set, &set, &cfg).unwrap();
    let mut buf = Vec::new();
    write_trace(&mut buf, &out.trace).unwrap();
    assert_eq!(read_trace(buf.as_slice()).unwrap(), out.trace);
}

#[test]
fn evaluation_counts_every_validation_image() {
    let (set, _) = data(3);
    let eval = evaluate(&tiny(), &set).unwrap();
    assert_eq!(eval.confusion.total(), 6);
    assert_eq!(eval.labels, [0, 0, 0, 1, 1, 1]);
}

#[test]
fn mismatched_image_size_is_rejected() {
    let set = synth_generate(2, 16, 0).unwrap();
    let fold = make_folds(2, 2, 1).unwrap().remove(0);
    let mut net = tiny();
    assert!(train(&mut net, &fold, &set, &set, &TrainConfig::default()).is_err());
}
