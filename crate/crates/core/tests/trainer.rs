use dvp::network::NetSpec;
use dvp::synth::Texture;
use dvp::trainer::{infer_video, train_dvp};
use dvp::{PairedVideo, TrainConfig, VideoSequence};

fn textured(frames: usize, size: usize) -> VideoSequence {
    let tex = Texture::random(11, 3);
    VideoSequence::new((0..frames).map(|t| tex.frame(size, size, 0.7 * t as f64, 0.3 * t as f64)).collect()).unwrap()
}

#[test]
fn identity_operator_is_learned_in_five_epochs() {
    let video = textured(50, 32);
    let pv = PairedVideo::fully_paired(video.clone(), video.clone()).unwrap();
    let cfg = TrainConfig {
        epochs: 5,
        learning_rate: 1e-3,
        probe_frames: 0,
        ..TrainConfig::default()
    };
    let state = train_dvp(&pv, &NetSpec::default(), &cfg, &mut ()).unwrap();
    let out = infer_video(&state, &video).unwrap().main;
    for (o, i) in out.iter().zip(video.iter()) {
        let l1 = o.data().iter().zip(i.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / o.data().len() as f64;
        assert!(l1 < 0.02, "mean L1 {l1}");
    }
}
