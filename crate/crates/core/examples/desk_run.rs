//! Desk-scale dense-sparse-dense run on synthetic phantoms.
//!
//! `cargo run --release -p dsseg-core --example desk_run -- [seed] [iters] [batch]`

use dsseg_core::eval::segment;
use dsseg_core::{
    dice_per_case, generate_phantom, preprocess, train_with, DsdSchedule, NetworkConfig, PhantomSpec, TrainConfig,
};

fn main() {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().unwrap()).collect();
    let seed = args.first().copied().unwrap_or(0);
    let iters = args.get(1).copied().unwrap_or(4) as usize;
    let batch = args.get(2).copied().unwrap_or(4) as usize;
    let base = PhantomSpec::default();
    let vols: Vec<_> = (0..13)
        .map(|i| preprocess(&generate_phantom(&base.jittered(seed * 1000 + i)).unwrap(), (-200.0, 300.0)).unwrap())
        .collect();
    let (train_set, test_set) = vols.split_at(10);
    let cfg = TrainConfig {
        network: NetworkConfig { depth: 3, base_channels: 8, thickness: 3, ..NetworkConfig::default() },
        batch_size: batch,
        iterations_per_epoch: iters,
        schedule: DsdSchedule::new(40, 60),
        seed,
        validation_volumes: 1,
        validate_every: 10,
        ..TrainConfig::default()
    };
    let t = std::time::Instant::now();
    let out = train_with(train_set, &cfg, |r| {
        eprintln!("{:?} {} {:.4} {:?} {:.1}s", r.stage, r.epoch, r.train_loss, r.val_dice, t.elapsed().as_secs_f64())
    })
    .unwrap();
    let mut organ = vec![];
    let mut lesion = vec![];
    for v in test_set {
        let r = segment(&out.network, v, "run").unwrap();
        let d = r.dice.unwrap();
        organ.push(d[0]);
        lesion.push(d[1]);
    }
    println!(
        "seed {seed} organ {:?} lesion {:?} time {:.1}s",
        dice_per_case(&organ).unwrap(),
        dice_per_case(&lesion).unwrap(),
        t.elapsed().as_secs_f64()
    );
}
