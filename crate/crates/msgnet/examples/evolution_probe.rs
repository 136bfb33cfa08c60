use msgnet::image::{load_ppm, save_ppm, synth_texture, TextureKind};
use msgnet::train::{train, TrainConfig};

fn main() {
    let dir = "/tmp/evo";
    std::fs::create_dir_all(format!("{dir}/content")).unwrap();
    std::fs::create_dir_all(format!("{dir}/style")).unwrap();
    for (i, kind) in [TextureKind::Blobs, TextureKind::Noise, TextureKind::Blobs, TextureKind::Checker].iter().enumerate() {
        let img = synth_texture(*kind, 32, 100 + i as u64);
        std::fs::write(format!("{dir}/content/c{i}.ppm"), save_ppm(&img)).unwrap();
    }
    let s0 = synth_texture(TextureKind::Stripes, 48, 7);
    let s1 = synth_texture(TextureKind::Checker, 48, 8);
    std::fs::write(format!("{dir}/style/a.ppm"), save_ppm(&s0)).unwrap();
    std::fs::write(format!("{dir}/style/b.ppm"), save_ppm(&s1)).unwrap();

    for iters in [500usize, 1500, 3000] {
        let config = TrainConfig { iterations: iters, ..TrainConfig::default() };
        let outcome = train(format!("{dir}/content").as_ref(), format!("{dir}/style").as_ref(), &config).unwrap();
        let gen = outcome.generator;
        let embs = [gen.encode_style(&s0, "a", 32).unwrap(), gen.encode_style(&s1, "b", 32).unwrap()];
        let lossnet = msgnet::lossnet::LossNetwork::seeded(config.seed);
        let sg: Vec<Vec<msgnet::gram::GramMatrix>> = [&s0, &s1].iter()
            .map(|s| lossnet.style_grams(&s.resize(32,32).unwrap().to_tensor()).unwrap()).collect();
        let mut siam_ok = 0;
        let mut loss_ok = 0;
        for ci in 0..4 {
            let content = load_ppm(&std::fs::read(format!("{dir}/content/c{ci}.ppm")).unwrap()).unwrap();
            for i in 0..2 {
                let out = gen.generate(&content, &embs[i]).unwrap();
                let oe = gen.encode_style(&out, "o", 32).unwrap();
                let d_own = oe.grams()[0].1.frobenius_distance(&embs[i].grams()[0].1);
                let d_other = oe.grams()[0].1.frobenius_distance(&embs[1-i].grams()[0].1);
                if d_own < d_other { siam_ok += 1; }
                let og = lossnet.style_grams(&out.to_tensor()).unwrap();
                let l_own: f64 = og.iter().zip(&sg[i]).map(|(a,b)| a.frobenius_distance(b).powi(2)).sum::<f64>().sqrt();
                let l_other: f64 = og.iter().zip(&sg[1-i]).map(|(a,b)| a.frobenius_distance(b).powi(2)).sum::<f64>().sqrt();
                if l_own < l_other { loss_ok += 1; }
            }
        }
        let tail: f32 = outcome.history[iters-20..].iter().map(|s| s.style).sum::<f32>() / 20.0;
        println!("iters {iters}: siamese {siam_ok}/8, lossnet {loss_ok}/8, tail style loss {tail:.4}");
    }
}
