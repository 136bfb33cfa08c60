use msgnet::image::{load_ppm, synth_texture, TextureKind};
use msgnet::network::ParamVars;
use msgnet::tape::Tape;
use msgnet::tensor::Tensor;
use msgnet::train::{train, TrainConfig};

fn main() {
    let dir = "/tmp/evo";
    let s0 = synth_texture(TextureKind::Stripes, 48, 7);
    let s1 = synth_texture(TextureKind::Checker, 48, 8);
    let config = TrainConfig { iterations: 500, ..TrainConfig::default() };
    let outcome = train(format!("{dir}/content").as_ref(), format!("{dir}/style").as_ref(), &config).unwrap();
    let gen = outcome.generator;
    let lossnet = msgnet::lossnet::LossNetwork::seeded(config.seed);
    let sg: Vec<Vec<msgnet::gram::GramMatrix>> = [&s0, &s1].iter()
        .map(|s| lossnet.style_grams(&s.resize(32,32).unwrap().to_tensor()).unwrap()).collect();
    let embs = [gen.encode_style(&s0, "a", 32).unwrap(), gen.encode_style(&s1, "b", 32).unwrap()];
    let content = load_ppm(&std::fs::read(format!("{dir}/content/c0.ppm")).unwrap()).unwrap();
    for i in 0..2 {
        let tape = Tape::new();
        let p = ParamVars::register(&tape, gen.weights(), false);
        let x = tape.constant(&content.to_tensor());
        let y = gen.forward(&tape, &p, x, &embs[i]).unwrap();
        let raw = tape.value(y);
        let outside = raw.iter().filter(|&&v| !(0.0..=1.0).contains(&v)).count() as f32 / raw.len() as f32;
        let min = raw.iter().cloned().fold(f32::INFINITY, f32::min);
        let max = raw.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let raw_t = Tensor::new(vec![1, 3, 32, 32], raw.clone()).unwrap();
        let clamped_t = Tensor::new(vec![1, 3, 32, 32], raw.iter().map(|v| v.clamp(0.0, 1.0)).collect()).unwrap();
        for (label, t) in [("raw", &raw_t), ("clamped", &clamped_t)] {
            let og = lossnet.style_grams(t).unwrap();
            let d_own: f64 = og.iter().zip(&sg[i]).map(|(a,b)| a.frobenius_distance(b).powi(2)).sum::<f64>().sqrt();
            let d_other: f64 = og.iter().zip(&sg[1-i]).map(|(a,b)| a.frobenius_distance(b).powi(2)).sum::<f64>().sqrt();
            println!("style {i} {label}: d_own {d_own:.4} d_other {d_other:.4} {}", if d_own < d_other {"OK"} else {"VIOLATION"});
        }
        println!("style {i}: range [{min:.2}, {max:.2}], outside [0,1]: {:.1}%", outside * 100.0);
    }
}
