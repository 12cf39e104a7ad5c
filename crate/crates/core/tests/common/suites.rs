use dsseg_core::eval::segment;
use dsseg_core::{
    combined_loss, cross_entropy, dice_loss, generate_phantom, preprocess, train, ConvGeometry, ConvVariant,
    DsdSchedule, Kernel, KernelKind, LossWeights, MetricsLog, Network, NetworkConfig, PhantomSpec, Shape, Tape,
    TrainConfig, Var,
};
use rand::Rng;

use super::{grad_check, network_grad_check, project, random_tensor, rng, tiny_network_config};

type Builder = Box<dyn Fn(&mut Tape, &[Var]) -> Var>;

fn labels(seed: u64, len: usize, classes: u8) -> Vec<u8> {
    let mut r = rng(seed);
    (0..len).map(|_| r.random_range(0..classes)).collect()
}

fn conv_case(kind: KernelKind, g: ConvGeometry, seed: u64) -> Builder {
    Box::new(move |t, v| {
        let k = Kernel::new(t, kind, v[1], g).unwrap();
        let y = t.conv2d(v[0], &k).unwrap();
        project(t, y, seed)
    })
}

fn unary(seed: u64, f: impl Fn(&mut Tape, Var) -> Var + 'static) -> Builder {
    Box::new(move |t, v| {
        let y = f(t, v[0]);
        project(t, y, seed)
    })
}

fn binary(seed: u64, f: impl Fn(&mut Tape, Var, Var) -> Var + 'static) -> Builder {
    Box::new(move |t, v| {
        let y = f(t, v[0], v[1]);
        project(t, y, seed)
    })
}

/// Finite-difference error of every differentiable tape operation and loss
/// on small random inputs.
pub fn op_gradient_errors() -> Vec<(String, f64)> {
    let mut r = rng(1);
    let mut t = |s: Shape| random_tensor(&mut r, s);
    let x = Shape::new(2, 2, 5, 6);
    let p = Shape::new(2, 3, 4, 4);
    let chan = Shape::new(1, 3, 1, 1);
    let pool = Shape::new(2, 2, 4, 6);
    let logits = Shape::new(2, 3, 4, 4);
    let target = labels(6, 32, 3);
    let empty = vec![0u8; 32];

    let mut cases: Vec<(String, Vec<_>, Builder)> = Vec::new();
    for (i, (kind, ws, g)) in [
        (KernelKind::Standard, Shape::new(3, 2, 3, 3), ConvGeometry::same(3)),
        (KernelKind::Standard, Shape::new(2, 2, 3, 3), ConvGeometry { stride: 2, padding: 0 }),
        (KernelKind::Depthwise, Shape::new(2, 1, 3, 3), ConvGeometry::same(3)),
        (KernelKind::Depthwise, Shape::new(2, 1, 3, 3), ConvGeometry { stride: 2, padding: 1 }),
        (KernelKind::Pointwise, Shape::new(3, 2, 1, 1), ConvGeometry::default()),
    ]
    .into_iter()
    .enumerate()
    {
        cases.push((format!("conv2d {kind:?} {g:?}"), vec![t(x), t(ws)], conv_case(kind, g, 100 + i as u64)));
    }
    cases.push((
        "depthwise_separable".into(),
        vec![t(Shape::new(1, 3, 5, 5)), t(Shape::new(3, 1, 3, 3)), t(Shape::new(4, 3, 1, 1))],
        Box::new(|tp, v| {
            let dk = Kernel::depthwise(tp, v[1]).unwrap();
            let pk = Kernel::pointwise(tp, v[2]).unwrap();
            let y = tp.depthwise_separable(v[0], &dk, &pk).unwrap();
            project(tp, y, 5)
        }),
    ));
    cases.push(("leaky_relu".into(), vec![t(p)], unary(1, |tp, a| tp.leaky_relu(a, 0.01))));
    cases.push(("add".into(), vec![t(p), t(p)], binary(2, |tp, a, b| tp.add(a, b).unwrap())));
    cases.push(("mul".into(), vec![t(p), t(p)], binary(3, |tp, a, b| tp.mul(a, b).unwrap())));
    cases.push(("mul x*x".into(), vec![t(p)], unary(4, |tp, a| tp.mul(a, a).unwrap())));
    cases.push(("scale".into(), vec![t(p)], unary(5, |tp, a| tp.scale(a, -2.5))));
    cases.push(("sum".into(), vec![t(p)], Box::new(|tp, v| tp.sum(v[0]))));
    cases.push(("instance_norm".into(), vec![t(Shape::new(2, 3, 4, 5))], unary(6, |tp, a| tp.instance_norm(a, 1e-5))));
    cases.push((
        "channel_affine".into(),
        vec![t(Shape::new(2, 3, 4, 5)), t(chan), t(chan)],
        Box::new(|tp, v| {
            let y = tp.channel_affine(v[0], v[1], v[2]).unwrap();
            project(tp, y, 7)
        }),
    ));
    cases.push(("maxpool2x2".into(), vec![t(pool)], unary(8, |tp, a| tp.maxpool2x2(a).unwrap())));
    cases.push(("upsample2x".into(), vec![t(pool)], unary(9, |tp, a| tp.upsample2x(a))));
    cases.push((
        "concat_channels".into(),
        vec![t(pool), t(Shape::new(2, 3, 4, 6))],
        binary(10, |tp, a, b| tp.concat_channels(a, b).unwrap()),
    ));
    cases.push(("concat x,x".into(), vec![t(pool)], unary(11, |tp, a| tp.concat_channels(a, a).unwrap())));
    cases.push(("softmax_channels".into(), vec![t(Shape::new(2, 3, 4, 6))], unary(12, |tp, a| tp.softmax_channels(a))));
    let sharp = t(logits).map(|v| 3.0 * v);
    let tg = target.clone();
    cases.push((
        "cross_entropy".into(),
        vec![sharp.clone()],
        Box::new(move |tp, v| cross_entropy(tp, v[0], &tg).unwrap()),
    ));
    let tg = target.clone();
    cases.push((
        "dice_loss".into(),
        vec![sharp.clone()],
        Box::new(move |tp, v| dice_loss(tp, v[0], &tg, 1e-5).unwrap()),
    ));
    cases.push((
        "dice_loss empty foreground".into(),
        vec![sharp.clone()],
        Box::new(move |tp, v| dice_loss(tp, v[0], &empty, 1e-5).unwrap()),
    ));
    cases.push((
        "combined_loss".into(),
        vec![sharp],
        Box::new(move |tp, v| combined_loss(tp, v[0], &target, &LossWeights::default()).unwrap()),
    ));

    cases.into_iter().map(|(name, inputs, f)| (name, grad_check(&inputs, f))).collect()
}

/// Finite-difference error of the depth-2, 4-channel network on a 16×16
/// input, over every weight and input voxel.
pub fn tiny_network_error(variant: ConvVariant) -> f64 {
    let net = Network::build(&tiny_network_config(variant), 21).unwrap();
    let input = random_tensor(&mut rng(22), Shape::new(1, 3, 16, 16));
    let target = labels(23, 256, 3);
    network_grad_check(&net, &input, |t, logits| combined_loss(t, logits, &target, &LossWeights::default()).unwrap())
}

pub const DESK_CLIP: (f32, f32) = (-200.0, 300.0);
pub const DESK_TRAIN: usize = 10;
pub const DESK_TEST: usize = 3;

pub struct DeskRun {
    pub log: MetricsLog,
    /// Per-test-volume Dice for the organ and lesion classes.
    pub organ: Vec<f64>,
    pub lesion: Vec<f64>,
}

pub fn desk_config(seed: u64) -> TrainConfig {
    TrainConfig {
        network: NetworkConfig { depth: 3, base_channels: 8, thickness: 3, ..NetworkConfig::default() },
        batch_size: 4,
        iterations_per_epoch: 8,
        schedule: DsdSchedule::new(40, 60),
        seed,
        validation_volumes: 1,
        validate_every: 10,
        ..TrainConfig::default()
    }
}

/// Trains on 10 jittered 16×64×64 phantoms (the last one held out for
/// validation) and scores 3 unseen phantoms.
pub fn desk_experiment(seed: u64) -> DeskRun {
    let base = PhantomSpec::default();
    let volumes: Vec<_> = (0..(DESK_TRAIN + DESK_TEST) as u64)
        .map(|i| preprocess(&generate_phantom(&base.jittered(seed * 1000 + i)).unwrap(), DESK_CLIP).unwrap())
        .collect();
    let (train_set, test_set) = volumes.split_at(DESK_TRAIN);
    let out = train(train_set, &desk_config(seed)).unwrap();
    let (mut organ, mut lesion) = (Vec::new(), Vec::new());
    for v in test_set {
        let d = segment(&out.network, v, "desk").unwrap().dice.unwrap();
        organ.push(d[0]);
        lesion.push(d[1]);
    }
    DeskRun { log: out.log, organ, lesion }
}
