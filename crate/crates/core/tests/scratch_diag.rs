//! Scratch diagnostics for the learned-codec rate gap.

use pgft_core::codec::{
    code_class_map, encode, CodecState, EncodeOptions, TransformVariant,
};
use pgft_core::graphlearn::{train_model, CglLearnOptions, TrainConfig};
use pgft_core::metrics::{ms_ssim, psnr};
use pgft_core::model::TrainedModel;
use pgft_core::perceptual::{ssim_weights, SsimParams};
use pgft_core::synth::synth_image;
use pgft_core::weightvq::assign_classes;

#[test]
#[ignore]
fn diag_rate_gap() {
    let size = 256usize;
    let train: Vec<_> = (0..6).map(|i| synth_image(1000 + i, size, size)).collect();
    let img = synth_image(9000, size, size);
    let cfg = TrainConfig {
        cgl: CglLearnOptions {
            tol: 1e-7,
            max_iter: 200,
        },
        ..TrainConfig::default()
    };
    let (model, _) = train_model(&train, None, &cfg).unwrap();
    let anchor = TrainedModel::dct_anchor(8).unwrap();

    // Class map cost.
    let delta = pgft_core::codec::quant::delta_for_quality(50).unwrap();
    let wmap = ssim_weights(&img, &SsimParams::new(delta)).unwrap();
    let classes = assign_classes(&wmap, &model.codebook, 8).unwrap();
    let cm_bytes = code_class_map(&classes);
    let runs = classes
        .labels
        .windows(2)
        .filter(|w| w[0] != w[1])
        .count()
        + 1;
    eprintln!(
        "blocks {} runs {} class-map bytes {} ({:.3} bpp of {:.3} total)",
        classes.labels.len(),
        runs,
        cm_bytes.len(),
        cm_bytes.len() as f64 * 8.0 / (size * size) as f64,
        0.0
    );

    for q in [30u8, 50, 80] {
        let e_anchor = encode(&img, &anchor, q, &EncodeOptions::default()).unwrap();
        let e_learned = encode(&img, &model, q, &EncodeOptions::default()).unwrap();
        let mut opts_gft = EncodeOptions::default();
        opts_gft.variant = TransformVariant::UnitWeights;
        let e_gft = encode(&img, &model, q, &opts_gft).unwrap();
        let d_anchor = pgft_core::codec::decode(&e_anchor.bytes, &anchor).unwrap();
        let d_learned = pgft_core::codec::decode(&e_learned.bytes, &model).unwrap();
        let d_gft = pgft_core::codec::decode(&e_gft.bytes, &model).unwrap();
        eprintln!(
            "q{q}: anchor bpp {:.4} psnr {:.2} msssim {:.5} | iagft bpp {:.4} psnr {:.2} msssim {:.5} | gft bpp {:.4} psnr {:.2} msssim {:.5}",
            e_anchor.stats.bpp,
            psnr(&img, &d_anchor).unwrap(),
            ms_ssim(&img, &d_anchor).unwrap(),
            e_learned.stats.bpp,
            psnr(&img, &d_learned).unwrap(),
            ms_ssim(&img, &d_learned).unwrap(),
            e_gft.stats.bpp,
            psnr(&img, &d_gft).unwrap(),
            ms_ssim(&img, &d_gft).unwrap(),
        );
    }

    // Energy compaction check: mean absolute quantized coefficient count.
    let state_a = CodecState::prepare(&anchor, 50, TransformVariant::Standard).unwrap();
    let state_l = CodecState::prepare(&model, 50, TransformVariant::Standard).unwrap();
    let cm_a = assign_classes(&wmap, &anchor.codebook, 8).unwrap();
    let (la, _) = pgft_core::codec::quantized_blocks(&img, &state_a, &cm_a).unwrap();
    let (ll, _) = pgft_core::codec::quantized_blocks(&img, &state_l, &classes).unwrap();
    let nz = |blocks: &Vec<Vec<i32>>| -> f64 {
        blocks
            .iter()
            .map(|b| b.iter().filter(|&&v| v != 0).count())
            .sum::<usize>() as f64
            / blocks.len() as f64
    };
    eprintln!("nonzeros per block: anchor {:.2} learned {:.2}", nz(&la), nz(&ll));
}
