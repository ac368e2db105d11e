//! Scratch experiment: desk-scale BD-rate of the learned codec variants.

use pgft_core::codec::{EncodeOptions, TransformVariant};
use pgft_core::eval::{bd_summary, mean_encode_seconds, rd_sweep};
use pgft_core::graphlearn::{train_model, CglLearnOptions, TrainConfig};
use pgft_core::model::{TrainedModel, TransformMode};
use pgft_core::synth::synth_image;

#[test]
#[ignore]
fn scratch_bd_rates() {
    let size = 256usize;
    let train: Vec<_> = (0..6).map(|i| synth_image(1000 + i, size, size)).collect();
    let test: Vec<_> = (0..4).map(|i| synth_image(9000 + i, size, size)).collect();
    let qualities = [20u8, 30, 40, 50, 60, 70, 80];

    let cfg = TrainConfig {
        cgl: CglLearnOptions {
            tol: 1e-7,
            max_iter: 200,
        },
        ..TrainConfig::default()
    };
    let t0 = std::time::Instant::now();
    let (model_nonsep, report) = train_model(&train, None, &cfg).unwrap();
    eprintln!(
        "trained nonsep in {:.1}s, class counts {:?}, fallbacks {:?}",
        t0.elapsed().as_secs_f64(),
        report.class_counts,
        report.fallbacks
    );
    let cfg_sep = TrainConfig {
        mode: TransformMode::SepRank1,
        ..cfg.clone()
    };
    let (model_sep, _) = train_model(&train, None, &cfg_sep).unwrap();
    let anchor = TrainedModel::dct_anchor(8).unwrap();

    let mut records = Vec::new();
    for (i, img) in test.iter().enumerate() {
        let id = format!("img{i}");
        let opts = EncodeOptions::default();
        records.extend(
            rd_sweep(img, &id, "anchor", &anchor, TransformVariant::Standard, &qualities, &opts)
                .unwrap(),
        );
        records.extend(
            rd_sweep(img, &id, "iagft", &model_nonsep, TransformVariant::Standard, &qualities, &opts)
                .unwrap(),
        );
        records.extend(
            rd_sweep(img, &id, "gft", &model_nonsep, TransformVariant::UnitWeights, &qualities, &opts)
                .unwrap(),
        );
        records.extend(
            rd_sweep(img, &id, "iagft-sep", &model_sep, TransformVariant::Standard, &qualities, &opts)
                .unwrap(),
        );
    }
    for codec in ["iagft", "gft", "iagft-sep"] {
        let s = bd_summary(&records, "anchor", codec).unwrap();
        eprintln!(
            "{codec:10} avg {:+.3}% std {:.3} min {:+.3} max {:+.3} per-image {:?}",
            s.avg,
            s.std,
            s.min,
            s.max,
            s.per_image.iter().map(|(_, v)| (v * 100.0).round() / 100.0).collect::<Vec<_>>()
        );
    }
    eprintln!("encode seconds {:?}", mean_encode_seconds(&records));
}
