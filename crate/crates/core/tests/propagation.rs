use dvp::metrics::psnr;
use dvp::propagation::{train_reference_only, PropagationConfig};
use dvp::synth::drifting_video;
use dvp::trainer::infer_video;
use dvp::{NetSpec, PairedVideo, VideoSequence};

fn mean_psnr(references: &[usize]) -> f64 {
    let color = drifting_video(32, 32, 16, 1.5, 9).unwrap();
    let gray = VideoSequence::new(color.iter().map(|f| f.to_grayscale().unwrap()).collect()).unwrap();
    let refs = references.iter().map(|&t| (t, color.frame(t).clone())).collect();
    let pv = PairedVideo::with_references(gray.clone(), refs).unwrap();
    let cfg = PropagationConfig {
        pppl: false,
        learning_rate: 1e-3,
        ..PropagationConfig::default()
    };
    let state = train_reference_only(&pv, &NetSpec::image(1, 3).with_width(3, 16), &cfg, 450, &mut ()).unwrap();
    let out = infer_video(&state, &gray).unwrap().main;
    (0..color.len()).map(|t| psnr(color.frame(t), out.frame(t)).unwrap()).sum::<f64>() / color.len() as f64
}

#[test]
fn more_references_do_not_hurt_colorization() {
    let one = mean_psnr(&[0]);
    let three = mean_psnr(&[0, 7, 15]);
    eprintln!("mean PSNR with 1 reference {one:.2} dB, with 3 {three:.2} dB");
    assert!(three >= one, "{three} < {one}");
}
