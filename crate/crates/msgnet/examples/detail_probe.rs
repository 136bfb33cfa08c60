use msgnet::image::{load_ppm, save_ppm, synth_texture, TextureKind};
use msgnet::train::{train, TrainConfig};

fn main() {
    let dir = "/tmp/detail";
    std::fs::create_dir_all(format!("{dir}/content")).unwrap();
    std::fs::create_dir_all(format!("{dir}/style")).unwrap();
    for (i, kind) in [TextureKind::Blobs, TextureKind::Noise, TextureKind::Blobs, TextureKind::Checker].iter().enumerate() {
        let img = synth_texture(*kind, 32, 100 + i as u64);
        std::fs::write(format!("{dir}/content/c{i}.ppm"), save_ppm(&img)).unwrap();
    }
    let s0 = synth_texture(TextureKind::Blobs, 48, 9);
    let s1 = synth_texture(TextureKind::Noise, 48, 10);
    std::fs::write(format!("{dir}/style/a.ppm"), save_ppm(&s0)).unwrap();
    std::fs::write(format!("{dir}/style/b.ppm"), save_ppm(&s1)).unwrap();
    let config = TrainConfig { iterations: 500, ..TrainConfig::default() };
    let outcome = train(format!("{dir}/content").as_ref(), format!("{dir}/style").as_ref(), &config).unwrap();
    let gen = outcome.generator;
    let e = [gen.encode_style(&s0, "a", 32).unwrap(), gen.encode_style(&s1, "b", 32).unwrap()];
    println!("d(s0,s1) = {:.4}, |s0| = {:.4}, |s1| = {:.4}",
        e[0].grams()[0].1.frobenius_distance(&e[1].grams()[0].1),
        e[0].grams()[0].1.frobenius_norm(), e[1].grams()[0].1.frobenius_norm());
    for ci in 0..4 {
        let content = load_ppm(&std::fs::read(format!("{dir}/content/c{ci}.ppm")).unwrap()).unwrap();
        let o0 = gen.generate(&content, &e[0]).unwrap();
        let o1 = gen.generate(&content, &e[1]).unwrap();
        let g0 = gen.encode_style(&o0, "o0", 32).unwrap();
        let g1 = gen.encode_style(&o1, "o1", 32).unwrap();
        let gc = gen.encode_style(&content.resize(32,32).unwrap(), "c", 32).unwrap();
        let gg0 = &g0.grams()[0].1;
        let gg1 = &g1.grams()[0].1;
        println!("c{ci}: d(o0,o1) {:.3} | o0: d_s0 {:.3} d_s1 {:.3} d_content {:.3} |o0| {:.3} | o1: d_s0 {:.3} d_s1 {:.3} d_content {:.3} |o1| {:.3}",
            gg0.frobenius_distance(gg1),
            gg0.frobenius_distance(&e[0].grams()[0].1), gg0.frobenius_distance(&e[1].grams()[0].1),
            gg0.frobenius_distance(&gc.grams()[0].1), gg0.frobenius_norm(),
            gg1.frobenius_distance(&e[0].grams()[0].1), gg1.frobenius_distance(&e[1].grams()[0].1),
            gg1.frobenius_distance(&gc.grams()[0].1), gg1.frobenius_norm());
    }
    for (n, img) in [("o0", gen.generate(&load_ppm(&std::fs::read(format!("{dir}/content/c0.ppm")).unwrap()).unwrap(), &e[0]).unwrap()), ("o1", gen.generate(&load_ppm(&std::fs::read(format!("{dir}/content/c0.ppm")).unwrap()).unwrap(), &e[1]).unwrap())] {
        std::fs::write(format!("/tmp/detail_{n}.ppm"), save_ppm(&img)).unwrap();
    }
}
