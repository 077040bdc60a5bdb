//! Builds pseudo-masks from dot annotations on a crowded synthetic patch and
//! shows how discs of nearby cells merge while the count stays per dot.
//!
//! cargo run --release --example pseudo_masks -- [out_dir]

use concorde::data::{build_pseudo_mask, DEFAULT_MASK_RADIUS};
use concorde::eval::label_components;
use concorde::synthgen::{generate, SynthConfig};

fn main() -> concorde::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "pseudo_masks_out".into());
    let cfg = SynthConfig { overlap_fraction: 0.5, seed: 4, ..SynthConfig::default() };
    let patches = generate(&cfg, 3)?;
    std::fs::create_dir_all(&out).expect("output directory");

    println!("id,dots,foreground_px,components,merged_dots");
    for p in &patches {
        let pm = build_pseudo_mask(&p.dots, p.height(), p.width(), DEFAULT_MASK_RADIUS)?;
        let on: Vec<bool> = pm.mask.data().iter().map(|&v| v == 1).collect();
        let (_, components) = label_components(&on, pm.mask.width(), pm.mask.height());
        println!("{},{},{},{},{}", p.id, pm.count, pm.mask.foreground(), components, pm.count - components);

        let pixels: Vec<u8> = pm.mask.data().iter().map(|&v| v * 255).collect();
        image::GrayImage::from_raw(pm.mask.width() as u32, pm.mask.height() as u32, pixels)
            .expect("mask size")
            .save(format!("{out}/{}_mask.png", p.id))
            .expect("write png");
    }
    // one isolated dot covers the pixels strictly inside radius 4
    let single = build_pseudo_mask(&patches[0].dots[..1], 224, 224, DEFAULT_MASK_RADIUS)?;
    println!("single dot disc: {} px", single.mask.foreground());
    println!("masks written to {out}/");
    Ok(())
}
