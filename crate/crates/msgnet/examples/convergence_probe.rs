use msgnet::image::{save_ppm, synth_texture, TextureKind};
use msgnet::train::{train, TrainConfig};
use std::time::Instant;

fn main() {
    let content = synth_texture(TextureKind::Blobs, 32, 11);
    std::fs::write("/tmp/convtest/content/c0.ppm", save_ppm(&content)).unwrap();
    let style = synth_texture(TextureKind::Stripes, 48, 21);
    std::fs::write("/tmp/convtest/style/s0.ppm", save_ppm(&style)).unwrap();
    let config = TrainConfig { iterations: 300, ..TrainConfig::default() };
    let start = Instant::now();
    let outcome = train(
        "/tmp/convtest/content".as_ref(),
        "/tmp/convtest/style".as_ref(),
        &config,
    )
    .unwrap();
    let h = &outcome.history;
    let head: f32 = h[..20].iter().map(|s| s.total).sum::<f32>() / 20.0;
    let tail: f32 = h[h.len() - 20..].iter().map(|s| s.total).sum::<f32>() / 20.0;
    println!("elapsed: {:?}", start.elapsed());
    println!("head smoothed: {head}  tail smoothed: {tail}  ratio: {}", tail / head);
    for i in [0, 50, 100, 150, 200, 250, 299] {
        let s = &h[i];
        println!("iter {:3}  total {:9.4}  content {:9.4}  style {:9.6}  tv {:8.2}  size {}", s.iteration, s.total, s.content, s.style, s.tv, s.style_size);
    }
}
