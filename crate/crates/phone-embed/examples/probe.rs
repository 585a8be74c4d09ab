use phone_embed::corpus::{synth_corpus, Split, SynthConfig, SynthSplitSizes, View, ViewPipeline};
use phone_embed::eval::{
    build_templates, compute_metrics, templates_to_references, verify_segment,
};
use phone_embed::net::{embed_batch, NetConfig};
use phone_embed::train::{
    train_multi_view, train_single_view, AdadeltaConfig, Objective, SamplingConfig, TrainSchedule,
};
use std::collections::BTreeMap;
use std::time::Instant;

fn corpus_config(sigma: f64) -> SynthConfig {
    SynthConfig {
        num_classes: 5,
        acoustic_dims: 13,
        bottleneck_dims: 20,
        min_frames: 40,
        max_frames: 70,
        segments_per_class: SynthSplitSizes { train: 10, dev: 8, test: 8 },
        noise_sigma: sigma,
        mispronunciation_rate: 0.25,
        num_speakers: 4,
        inventory: None,
    }
}

fn schedule(seed: u64, epochs: usize) -> TrainSchedule {
    TrainSchedule {
        max_epochs: epochs,
        ap_every: 20,
        batch_size: 16,
        seed,
        margin: 0.4,
        adadelta: AdadeltaConfig { lr: 1.0, ..AdadeltaConfig::default() },
        sampling: SamplingConfig { max_pairs_per_label: 20, ordered_pairs: false },
        ap_max_pairs: 2000,
        pad_frames: 58,
        pca_dims: None,
    }
}

fn main() {
    let sigma: f64 = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(0.5);
    let skip_c6 = std::env::args().nth(2).is_some();
    let net = NetConfig::toy(13);

    if skip_c6 { run_c7(sigma, &net); return; }
    // criterion 6 + 8 style: 200 epochs, then verification
    let dir = tempfile::tempdir().unwrap();
    let set = synth_corpus(&corpus_config(sigma), 101, dir.path()).unwrap();
    let t0 = Instant::now();
    let (params, history) = train_single_view(&set, &net, &schedule(11, 200)).unwrap();
    println!(
        "c6: 200 epochs in {:?}, best AP {:?} at {:?}",
        t0.elapsed(),
        history.best_dev_ap,
        history.best_epoch
    );

    let pipeline = ViewPipeline::fit(&set, View::Acoustic, 58, None).unwrap();
    let train_prepared = pipeline.prepare(&set, &[Split::Train]).unwrap();
    let train_embedded = embed_batch(&params, &train_prepared).unwrap();
    let mut by_phone: BTreeMap<String, Vec<phone_embed::net::Embedding>> = BTreeMap::new();
    for seg in set.split(Split::Train) {
        by_phone
            .entry(seg.spoken.clone())
            .or_default()
            .push(train_embedded[&seg.id].clone());
    }
    let refs = templates_to_references(&build_templates(&by_phone).unwrap());
    let test_prepared = pipeline.prepare(&set, &[Split::Test]).unwrap();
    let test_embedded = embed_batch(&params, &test_prepared).unwrap();
    let outcomes: Vec<_> = set
        .split(Split::Test)
        .map(|seg| verify_segment(seg, &test_embedded[&seg.id], &refs, 0.4).unwrap())
        .collect();
    let metrics = compute_metrics(&outcomes).unwrap();
    println!(
        "c8: DA {:?} FRR {:?} FAR {:?} counts {:?}",
        metrics.da, metrics.frr, metrics.far, metrics.counts
    );

    run_c7(sigma, &net);
}

fn run_c7(sigma: f64, net: &NetConfig) {
    for seed in [1u64, 2, 3] {
        let dir = tempfile::tempdir().unwrap();
        let set = synth_corpus(&corpus_config(sigma), 200 + seed, dir.path()).unwrap();
        let t0 = Instant::now();
        let (_, hs) = train_single_view(&set, net, &schedule(seed, 60)).unwrap();
        let (_, h0) =
            train_multi_view(&set, View::Attribute, Objective::Obj0, net, &schedule(seed, 100))
                .unwrap();
        let (_, hb) =
            train_multi_view(&set, View::Attribute, Objective::Both, net, &schedule(seed, 100))
                .unwrap();
        let (s, o0, b) = (
            hs.best_dev_ap.unwrap(),
            h0.best_dev_ap.unwrap(),
            hb.best_dev_ap.unwrap(),
        );
        println!(
            "c7 seed {seed}: single {s:.4} obj0 {o0:.4} both {b:.4} | both>=obj0: {} both>=single: {} ({:?})",
            b >= o0,
            b >= s,
            t0.elapsed()
        );
    }
}
