use msgnet::image::{save_ppm, synth_texture, Image, TextureKind};
use msgnet::train::{train, TrainConfig};

fn run_pair(name: &str, s0: &Image, s1: &Image, iters: usize) {
    let dir = format!("/tmp/matrix_{name}");
    std::fs::create_dir_all(format!("{dir}/content")).unwrap();
    std::fs::create_dir_all(format!("{dir}/style")).unwrap();
    for (i, kind) in [TextureKind::Blobs, TextureKind::Noise, TextureKind::Blobs, TextureKind::Checker].iter().enumerate() {
        let img = synth_texture(*kind, 32, 100 + i as u64);
        std::fs::write(format!("{dir}/content/c{i}.ppm"), save_ppm(&img)).unwrap();
    }
    std::fs::write(format!("{dir}/style/a.ppm"), save_ppm(s0)).unwrap();
    std::fs::write(format!("{dir}/style/b.ppm"), save_ppm(s1)).unwrap();
    let config = TrainConfig { iterations: iters, ..TrainConfig::default() };
    let outcome = train(format!("{dir}/content").as_ref(), format!("{dir}/style").as_ref(), &config).unwrap();
    let gen = outcome.generator;
    let embs = [gen.encode_style(s0, "a", 32).unwrap(), gen.encode_style(s1, "b", 32).unwrap()];
    let mut ok = 0;
    let mut worst = f64::INFINITY;
    for ci in 0..4 {
        let content = msgnet::image::load_ppm(&std::fs::read(format!("{dir}/content/c{ci}.ppm")).unwrap()).unwrap();
        for i in 0..2 {
            let out = gen.generate(&content, &embs[i]).unwrap();
            let oe = gen.encode_style(&out, "o", 32).unwrap();
            let d_own = oe.grams()[0].1.frobenius_distance(&embs[i].grams()[0].1);
            let d_other = oe.grams()[0].1.frobenius_distance(&embs[1 - i].grams()[0].1);
            if d_own < d_other { ok += 1; }
            worst = worst.min(d_other - d_own);
        }
    }
    println!("{name} ({iters} it): {ok}/8, worst margin {worst:.4}");
}

fn main() {
    let stripes = synth_texture(TextureKind::Stripes, 48, 7);
    let checker = synth_texture(TextureKind::Checker, 48, 8);
    let blobs = synth_texture(TextureKind::Blobs, 48, 9);
    let noise = synth_texture(TextureKind::Noise, 48, 10);
    let blobs2 = synth_texture(TextureKind::Blobs, 48, 12);
    run_pair("blobs_noise", &blobs, &noise, 500);
    run_pair("checker_noise", &checker, &noise, 500);
    run_pair("stripes_noise", &stripes, &noise, 500);
    run_pair("blobs_checker", &blobs, &checker, 500);
    run_pair("blobs_blobs2", &blobs, &blobs2, 500);
    run_pair("stripes_blobs", &stripes, &blobs, 500);
}
