use criterion::{black_box, criterion_group, criterion_main, Criterion};
use dvp::metrics::{backward_warp, e_warp, ConstantTranslation, FlowField};
use dvp::nn::Tensor;
use dvp::{train_dvp, ConsistencyNet, NetSpec, TrainConfig};
use dvp_bench::{identity_pair, panning};

fn network(c: &mut Criterion) {
    let net = ConsistencyNet::<f32>::build(NetSpec::default(), 0).unwrap();
    let frame = panning(1, 64).frame(0).clone();
    let x = Tensor::<f32>::from_frame(&frame);
    c.bench_function("forward 64x64", |b| b.iter(|| net.forward_tensor(black_box(x.clone())).unwrap()));

    let mut grads = net.params().zeros_like();
    c.bench_function("forward+backward 64x64", |b| {
        b.iter(|| {
            net.forward_backward(black_box(x.clone()), &mut grads, |out| out.clone())
                .unwrap()
        })
    });
}

fn training(c: &mut Criterion) {
    let pv = identity_pair(4, 32);
    let cfg = TrainConfig {
        epochs: 1,
        probe_frames: 0,
        warmup_iterations: 0,
        ..TrainConfig::default()
    };
    let spec = NetSpec::default().with_width(3, 8);
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("one epoch, 4 frames 32x32", |b| b.iter(|| train_dvp(&pv, &spec, &cfg, &mut ()).unwrap()));
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let v = panning(8, 64);
    let flow = FlowField::constant(64, 64, 1.0, 0.0).unwrap();
    c.bench_function("backward_warp 64x64", |b| {
        b.iter(|| backward_warp(black_box(v.frame(1)), &flow).unwrap())
    });
    c.bench_function("e_warp 8 frames 64x64", |b| {
        b.iter(|| {
            let mut flows = ConstantTranslation { vx: 1.0, vy: 0.0 };
            e_warp(black_box(&v), &v, &mut flows).unwrap()
        })
    });
}

criterion_group!(benches, network, training, metrics);
criterion_main!(benches);
