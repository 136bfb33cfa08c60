use msgnet::image::{load_ppm, save_ppm, synth_texture, TextureKind};
use msgnet::train::{train, TrainConfig};

fn main() {
    let config = TrainConfig { iterations: 500, ..TrainConfig::default() };
    let outcome = train("/tmp/septest/content".as_ref(), "/tmp/septest/style".as_ref(), &config).unwrap();
    let gen = outcome.generator;
    let s0 = synth_texture(TextureKind::Stripes, 48, 7);
    let s1 = synth_texture(TextureKind::Checker, 48, 8);
    let e0 = gen.encode_style(&s0, "stripes", 32).unwrap();
    let e1 = gen.encode_style(&s1, "checker", 32).unwrap();
    println!("norm stripes emb: {:.4}", e0.grams()[0].1.frobenius_norm());
    println!("norm checker emb: {:.4}", e1.grams()[0].1.frobenius_norm());
    println!("d(stripes, checker): {:.4}", e0.grams()[0].1.frobenius_distance(&e1.grams()[0].1));
    let content = load_ppm(&std::fs::read("/tmp/septest/content/c0.ppm").unwrap()).unwrap();
    for (name, emb) in [("stripes", &e0), ("checker", &e1)] {
        let out = gen.generate(&content, emb).unwrap();
        std::fs::write(format!("/tmp/septest/out_{name}.ppm"), save_ppm(&out)).unwrap();
        let oe = gen.encode_style(&out, "o", 32).unwrap();
        println!("out({name}): norm {:.4}, mean px {:.4}, saturated frac {:.3}",
            oe.grams()[0].1.frobenius_norm(),
            out.pixels().iter().sum::<f32>() / out.pixels().len() as f32,
            out.pixels().iter().filter(|&&v| v == 0.0 || v == 1.0).count() as f32 / out.pixels().len() as f32);
    }
    // Also: how do the LOSS-NET grams compare? That's what training optimizes.
    let lossnet = msgnet::lossnet::LossNetwork::seeded(config.seed);
    for (name, emb) in [("stripes", &e0), ("checker", &e1)] {
        let out = gen.generate(&content, emb).unwrap();
        let og = lossnet.style_grams(&out.to_tensor()).unwrap();
        let sg0 = lossnet.style_grams(&s0.resize(32,32).unwrap().to_tensor()).unwrap();
        let sg1 = lossnet.style_grams(&s1.resize(32,32).unwrap().to_tensor()).unwrap();
        let d0: f64 = og.iter().zip(&sg0).map(|(a,b)| a.frobenius_distance(b).powi(2)).sum::<f64>().sqrt();
        let d1: f64 = og.iter().zip(&sg1).map(|(a,b)| a.frobenius_distance(b).powi(2)).sum::<f64>().sqrt();
        println!("lossnet grams: out({name}) d_stripes {:.4} d_checker {:.4}", d0, d1);
    }
}
