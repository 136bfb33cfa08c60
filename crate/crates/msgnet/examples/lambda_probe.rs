use msgnet::image::{save_ppm, synth_texture, Image, TextureKind};
use msgnet::train::{train, TrainConfig};

fn run(name: &str, s0: &Image, s1: &Image, lambda_s: f32, lr: f32) {
    let dir = format!("/tmp/lam_{name}_{lambda_s}_{lr}");
    std::fs::create_dir_all(format!("{dir}/content")).unwrap();
    std::fs::create_dir_all(format!("{dir}/style")).unwrap();
    for (i, kind) in [TextureKind::Blobs, TextureKind::Noise, TextureKind::Blobs, TextureKind::Checker].iter().enumerate() {
        let img = synth_texture(*kind, 32, 100 + i as u64);
        std::fs::write(format!("{dir}/content/c{i}.ppm"), save_ppm(&img)).unwrap();
    }
    std::fs::write(format!("{dir}/style/a.ppm"), save_ppm(s0)).unwrap();
    std::fs::write(format!("{dir}/style/b.ppm"), save_ppm(s1)).unwrap();
    let config = TrainConfig { iterations: 500, lambda_s, lr, ..TrainConfig::default() };
    let outcome = train(format!("{dir}/content").as_ref(), format!("{dir}/style").as_ref(), &config).unwrap();
    let gen = outcome.generator;
    let embs = [gen.encode_style(s0, "a", 32).unwrap(), gen.encode_style(s1, "b", 32).unwrap()];
    let mut ok = 0;
    let mut worst = f64::INFINITY;
    let mut outside_total = 0.0f32;
    for ci in 0..4 {
        let content = msgnet::image::load_ppm(&std::fs::read(format!("{dir}/content/c{ci}.ppm")).unwrap()).unwrap();
        for i in 0..2 {
            let out = gen.generate(&content, &embs[i]).unwrap();
            outside_total += out.pixels().iter().filter(|&&v| v == 0.0 || v == 1.0).count() as f32 / out.pixels().len() as f32;
            let oe = gen.encode_style(&out, "o", 32).unwrap();
            let d_own = oe.grams()[0].1.frobenius_distance(&embs[i].grams()[0].1);
            let d_other = oe.grams()[0].1.frobenius_distance(&embs[1 - i].grams()[0].1);
            if d_own < d_other { ok += 1; }
            worst = worst.min(d_other - d_own);
        }
    }
    println!("{name} ls={lambda_s} lr={lr}: {ok}/8, worst {worst:.4}, sat {:.2}", outside_total / 8.0);
}

fn main() {
    let checker = synth_texture(TextureKind::Checker, 48, 8);
    let blobs = synth_texture(TextureKind::Blobs, 48, 9);
    let noise = synth_texture(TextureKind::Noise, 48, 10);
    for ls in [25.0f32, 100.0, 400.0] {
        run("blobs_noise", &blobs, &noise, ls, 1e-3);
        run("checker_noise", &checker, &noise, ls, 1e-3);
        run("blobs_checker", &blobs, &checker, ls, 1e-3);
    }
}
