use msgnet::image::{save_ppm, synth_texture, TextureKind};
use msgnet::train::{train, TrainConfig};
use std::time::Instant;

fn main() {
    std::fs::create_dir_all("/tmp/septest/content").unwrap();
    std::fs::create_dir_all("/tmp/septest/style").unwrap();
    for (i, kind) in [TextureKind::Blobs, TextureKind::Noise, TextureKind::Blobs, TextureKind::Checker].iter().enumerate() {
        let img = synth_texture(*kind, 32, 100 + i as u64);
        std::fs::write(format!("/tmp/septest/content/c{i}.ppm"), save_ppm(&img)).unwrap();
    }
    let s0 = synth_texture(TextureKind::Stripes, 48, 7);
    let s1 = synth_texture(TextureKind::Checker, 48, 8);
    std::fs::write("/tmp/septest/style/a_stripes.ppm", save_ppm(&s0)).unwrap();
    std::fs::write("/tmp/septest/style/b_checker.ppm", save_ppm(&s1)).unwrap();

    let config = TrainConfig { iterations: 500, ..TrainConfig::default() };
    let start = Instant::now();
    let outcome = train("/tmp/septest/content".as_ref(), "/tmp/septest/style".as_ref(), &config).unwrap();
    println!("trained in {:?}", start.elapsed());
    let gen = outcome.generator;

    let styles = [("stripes", s0), ("checker", s1)];
    let embs: Vec<_> = styles.iter().map(|(id, img)| gen.encode_style(img, id, 32).unwrap()).collect();
    let mut all_ok = true;
    for ci in 0..4 {
        let content = msgnet::image::load_ppm(&std::fs::read(format!("/tmp/septest/content/c{ci}.ppm")).unwrap()).unwrap();
        for (i, emb_i) in embs.iter().enumerate() {
            let out = gen.generate(&content, emb_i).unwrap();
            let out_emb = gen.encode_style(&out, "out", 32).unwrap();
            for (scale_idx, (stage, g_out)) in out_emb.grams().iter().enumerate() {
                let d_own = g_out.frobenius_distance(&embs[i].grams()[scale_idx].1);
                let d_other = g_out.frobenius_distance(&embs[1 - i].grams()[scale_idx].1);
                let ok = d_own < d_other;
                all_ok &= ok;
                println!("content {ci} styled {} stage {stage}: d_own {:.6} d_other {:.6} {}", styles[i].0, d_own, d_other, if ok {"OK"} else {"VIOLATION"});
            }
        }
    }
    println!("separation: {}", if all_ok { "ALL OK" } else { "FAILED" });
}
